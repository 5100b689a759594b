#pragma once

namespace gapfuse {

/// Training enables dropout, batch statistics and noise injection.
enum class Phase { train, eval };

}  // namespace gapfuse
