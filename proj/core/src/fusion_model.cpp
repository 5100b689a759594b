#include "gapfuse/fusion_model.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "gapfuse/error.hpp"

namespace gapfuse {

namespace {
constexpr const char* kCheckpointFormat = "gapfuse-ckpt-v1";

void check_input(const Matrix& m, std::size_t expected, std::string_view modality) {
  if (m.cols() != expected) {
    throw ConfigError(std::string(modality) + " embeddings have " + std::to_string(m.cols()) +
                      " columns, model expects " + std::to_string(expected));
  }
}
}  // namespace

std::string_view to_string(FusionKind kind) {
  return kind == FusionKind::early ? "early" : "late_joint";
}

FusionKind parse_fusion_kind(std::string_view text) {
  if (text == "early") return FusionKind::early;
  if (text == "late_joint" || text == "late" || text == "late-joint") return FusionKind::late_joint;
  throw ConfigError("unknown fusion kind '" + std::string(text) + "' (expected early or late_joint)");
}

void FusionConfig::validate() const {
  if (image_dim == 0 || text_dim == 0) throw ConfigError("fusion model needs image_dim and text_dim >= 1");
  if (n_classes < 2) throw ConfigError("fusion model needs n_classes >= 2");
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw ConfigError("dropout must be in [0, 1]");
  if (hidden_early == 0 || hidden_late == 0) throw ConfigError("hidden widths must be >= 1");
}

std::size_t expected_parameter_count(const FusionConfig& cfg) {
  const std::size_t out = cfg.output_dim();
  if (cfg.kind == FusionKind::early) {
    const std::size_t h = cfg.hidden_early;
    return (cfg.image_dim + cfg.text_dim) * h + h + 2 * h + h * out + out;
  }
  const std::size_t h = cfg.hidden_late;
  return cfg.image_dim * h + h + 2 * h + cfg.text_dim * h + h + 2 * h + 2 * h * out + out;
}

FusionModel FusionModel::build(const FusionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FusionModel m;
  m.cfg_ = cfg;
  m.dropout_rng_ = Rng(derive_seed(seed, 0xd0));
  Rng init(seed);
  const auto out = cfg.output_dim();
  if (cfg.kind == FusionKind::early) {
    m.stacks_.emplace_back("block",
                           feature_block(cfg.image_dim + cfg.text_dim, cfg.hidden_early, cfg.dropout,
                                         cfg.bn_epsilon, cfg.bn_momentum),
                           m.params_, m.buffers_, init);
    m.stacks_.emplace_back("head", std::vector{LayerSpec::dense(cfg.hidden_early, out)}, m.params_,
                           m.buffers_, init);
  } else {
    m.stacks_.emplace_back("image_block",
                           feature_block(cfg.image_dim, cfg.hidden_late, cfg.dropout,
                                         cfg.bn_epsilon, cfg.bn_momentum),
                           m.params_, m.buffers_, init);
    m.stacks_.emplace_back("text_block",
                           feature_block(cfg.text_dim, cfg.hidden_late, cfg.dropout, cfg.bn_epsilon,
                                         cfg.bn_momentum),
                           m.params_, m.buffers_, init);
    m.stacks_.emplace_back("head", std::vector{LayerSpec::dense(2 * cfg.hidden_late, out)},
                           m.params_, m.buffers_, init);
  }
  return m;
}

FusionOutput FusionModel::forward(const Matrix& image, const Matrix& text, Phase phase) {
  check_input(image, cfg_.image_dim, "image");
  check_input(text, cfg_.text_dim, "text");
  if (image.rows() != text.rows()) {
    throw ConfigError("image batch has " + std::to_string(image.rows()) + " rows, text batch has " +
                      std::to_string(text.rows()));
  }
  FusionOutput out;
  if (cfg_.kind == FusionKind::early) {
    const Matrix hidden =
        stacks_[0].forward(hconcat(image, text), phase, params_, buffers_, dropout_rng_);
    out.logits = stacks_[1].forward(hidden, phase, params_, buffers_, dropout_rng_);
  } else {
    out.image_features = stacks_[0].forward(image, phase, params_, buffers_, dropout_rng_);
    out.text_features = stacks_[1].forward(text, phase, params_, buffers_, dropout_rng_);
    out.logits = stacks_[2].forward(hconcat(out.image_features, out.text_features), phase, params_,
                                    buffers_, dropout_rng_);
  }
  taped_ = true;
  return out;
}

void FusionModel::backward(const Matrix& grad_logits, const Matrix* grad_image_features,
                           const Matrix* grad_text_features) {
  if (!taped_) throw UsageError("FusionModel::backward called without a preceding forward");
  taped_ = false;
  if (cfg_.kind == FusionKind::early) {
    if (grad_image_features || grad_text_features) {
      throw UsageError("early fusion has no branch features to receive gradients");
    }
    const Matrix g = stacks_[1].backward(grad_logits, params_);
    stacks_[0].backward(g, params_);
    return;
  }
  const Matrix g = stacks_[2].backward(grad_logits, params_);
  auto [gi, gt] = hsplit(g, cfg_.hidden_late);
  auto add = [](Matrix& dst, const Matrix* extra) {
    if (!extra) return;
    if (extra->rows() != dst.rows() || extra->cols() != dst.cols()) {
      throw ConfigError("branch feature gradient " + extra->shape() + " does not match " + dst.shape());
    }
    auto d = dst.data();
    auto e = extra->data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += e[i];
  };
  add(gi, grad_image_features);
  add(gt, grad_text_features);
  stacks_[0].backward(gi, params_);
  stacks_[1].backward(gt, params_);
}

namespace {

nlohmann::json segments_json(const ParameterStore& store) {
  auto arr = nlohmann::json::array();
  for (std::size_t i = 0; i < store.segments().size(); ++i) {
    const auto& s = store.segments()[i];
    auto v = store.values(i);
    arr.push_back({{"name", s.name},
                   {"rows", s.rows},
                   {"cols", s.cols},
                   {"values", std::vector<float>(v.begin(), v.end())}});
  }
  return arr;
}

void restore_segments(ParameterStore& store, const nlohmann::json& arr, std::string_view what) {
  if (arr.size() != store.segments().size()) {
    throw ParseError("checkpoint " + std::string(what) + ": expected " +
                     std::to_string(store.segments().size()) + " segments, found " +
                     std::to_string(arr.size()));
  }
  for (const auto& seg : arr) {
    const auto name = seg.at("name").get<std::string>();
    const auto idx = store.find(name);
    if (!idx) throw ParseError("checkpoint has unknown segment '" + name + "'");
    const auto& s = store.segments()[*idx];
    const auto values = seg.at("values").get<std::vector<float>>();
    if (seg.at("rows").get<std::size_t>() != s.rows || seg.at("cols").get<std::size_t>() != s.cols ||
        values.size() != s.size()) {
      throw ParseError("checkpoint segment '" + name + "' has the wrong shape");
    }
    std::copy(values.begin(), values.end(), store.values(*idx).begin());
  }
}

}  // namespace

void FusionModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["config"] = {{"kind", std::string(to_string(cfg_.kind))},
                 {"image_dim", cfg_.image_dim},
                 {"text_dim", cfg_.text_dim},
                 {"n_classes", cfg_.n_classes},
                 {"dropout", cfg_.dropout},
                 {"hidden_early", cfg_.hidden_early},
                 {"hidden_late", cfg_.hidden_late},
                 {"bn_epsilon", cfg_.bn_epsilon},
                 {"bn_momentum", cfg_.bn_momentum}};
  j["parameters"] = segments_json(params_);
  j["buffers"] = segments_json(buffers_);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
  if (!out) throw ParseError("write failed for " + path.string());
}

FusionModel FusionModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat) {
    throw ParseError(path.string() + " is not a " + kCheckpointFormat + " checkpoint");
  }
  try {
    const auto& c = j.at("config");
    FusionConfig cfg;
    cfg.kind = parse_fusion_kind(c.at("kind").get<std::string>());
    cfg.image_dim = c.at("image_dim").get<std::size_t>();
    cfg.text_dim = c.at("text_dim").get<std::size_t>();
    cfg.n_classes = c.at("n_classes").get<std::size_t>();
    cfg.dropout = c.at("dropout").get<double>();
    cfg.hidden_early = c.at("hidden_early").get<std::size_t>();
    cfg.hidden_late = c.at("hidden_late").get<std::size_t>();
    cfg.bn_epsilon = c.at("bn_epsilon").get<double>();
    cfg.bn_momentum = c.at("bn_momentum").get<double>();
    FusionModel m = build(cfg, 0);
    restore_segments(m.params_, j.at("parameters"), "parameters");
    restore_segments(m.buffers_, j.at("buffers"), "buffers");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace gapfuse
