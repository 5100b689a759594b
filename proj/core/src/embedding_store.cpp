#include "gapfuse/embedding_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "gapfuse/error.hpp"
#include "gapfuse/key_value.hpp"

namespace gapfuse {

std::string_view to_string(Modality m) { return m == Modality::image ? "image" : "text"; }

namespace {

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_float(std::string_view cell, float& out) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc{} && ptr == cell.data() + cell.size() && !cell.empty();
}

std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

}  // namespace

EmbeddingMatrix load_csv(const std::filesystem::path& path, Modality modality,
                         std::optional<std::size_t> expected_dim) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file " + path.string());
  std::vector<float> data;
  std::size_t cols = 0, rows = 0, line_no = 0;
  bool first = true;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = trim(line);
    if (s.empty()) continue;
    auto cells = split_cells(s);
    float v = 0.0f;
    if (first) {
      first = false;
      cols = cells.size();
      if (!parse_float(cells.front(), v)) continue;  // header
    }
    if (cells.size() != cols) {
      throw ParseError(location(path, line_no) + ": row " + std::to_string(rows) + " has " +
                       std::to_string(cells.size()) + " columns, expected " + std::to_string(cols));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!parse_float(cells[c], v)) {
        throw ParseError(location(path, line_no) + ": cannot parse '" + std::string(cells[c]) +
                         "' at row " + std::to_string(rows) + ", column " + std::to_string(c));
      }
      if (!std::isfinite(v)) {
        throw ParseError(location(path, line_no) + ": non-finite value at row " +
                         std::to_string(rows) + ", column " + std::to_string(c));
      }
      data.push_back(v);
    }
    ++rows;
  }
  if (expected_dim && *expected_dim != cols) {
    throw ConfigError(path.string() + ": expected dimension " + std::to_string(*expected_dim) +
                      ", file has " + std::to_string(cols));
  }
  return EmbeddingMatrix{modality, Matrix(rows, rows ? cols : 0, std::move(data)),
                         path.filename().string()};
}

void save_csv(const std::filesystem::path& path, const EmbeddingMatrix& m, bool header) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  if (header) {
    for (std::size_t c = 0; c < m.dim(); ++c) out << (c ? "," : "") << 'e' << c;
    out << '\n';
  }
  char buf[64];
  std::string line;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    line.clear();
    auto row = m.values.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line.push_back(',');
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), row[c]);
      line.append(buf, ptr);
    }
    line.push_back('\n');
    out << line;
  }
  if (!out) throw ParseError("write failed for " + path.string());
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open label file " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = trim(line);
    if (s.empty()) continue;
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    const bool ok = ec == std::errc{} && ptr == s.data() + s.size();
    if (!ok && first) {
      first = false;
      continue;
    }
    first = false;
    if (!ok) {
      throw ParseError(location(path, line_no) + ": label '" + std::string(s) + "' is not an integer");
    }
    labels.push_back(v);
  }
  return labels;
}

void save_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (int l : labels) out << l << '\n';
  if (!out) throw ParseError("write failed for " + path.string());
}

std::vector<std::size_t> PairedDataset::indices(Split which) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) idx.push_back(i);
  }
  return idx;
}

std::vector<int> PairedDataset::labels_of(std::span<const std::size_t> idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

std::vector<double> inverse_frequency_weights(std::span<const int> labels,
                                              std::span<const std::size_t> rows,
                                              std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (auto r : rows) ++counts[static_cast<std::size_t>(labels[r])];
  std::vector<double> w(n_classes);
  double sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) {
      throw InputError("class " + std::to_string(c) +
                       " has no training samples; its class weight is undefined");
    }
    w[c] = 1.0 / static_cast<double>(counts[c]);
    sum += w[c];
  }
  for (double& x : w) x *= static_cast<double>(n_classes) / sum;
  return w;
}

PairedDataset make_paired(EmbeddingMatrix image, EmbeddingMatrix text, std::vector<int> labels,
                          std::size_t n_classes, std::uint64_t seed, SplitOptions options) {
  const std::size_t n = labels.size();
  if (image.rows() != n || text.rows() != n) {
    throw ConfigError("paired dataset row mismatch: image " + std::to_string(image.rows()) +
                      ", text " + std::to_string(text.rows()) + ", labels " + std::to_string(n));
  }
  if (n_classes < 2) throw ConfigError("a dataset needs at least 2 classes");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw InputError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must be in (0, 1)");
  }
  image.modality = Modality::image;
  text.modality = Modality::text;

  std::mt19937_64 engine(seed);
  const auto n_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * options.train_fraction + 1e-9));
  std::vector<Split> split(n, Split::test);
  if (!options.stratify) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), engine);
    for (std::size_t i = 0; i < n_train; ++i) split[order[i]] = Split::train;
  } else {
    // Per-class floor allocation, remainder handed out by largest fractional part.
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    std::vector<std::size_t> quota(n_classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double exact = static_cast<double>(by_class[c].size()) * options.train_fraction;
      quota[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      assigned += quota[c];
      remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n_train && k < remainders.size(); ++k, ++assigned) {
      ++quota[remainders[k].second];
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::shuffle(by_class[c].begin(), by_class[c].end(), engine);
      for (std::size_t i = 0; i < quota[c]; ++i) split[by_class[c][i]] = Split::train;
    }
  }

  PairedDataset ds{std::move(image), std::move(text), std::move(labels), n_classes, std::move(split), {}};
  const auto train = ds.indices(Split::train);
  ds.class_weights = inverse_frequency_weights(ds.labels, train, n_classes);
  return ds;
}

ModalityStats modality_stats(const Matrix& m) {
  ModalityStats s;
  const std::size_t n = m.rows(), d = m.cols();
  s.per_dim_variance.assign(d, 0.0);
  if (n == 0) return s;
  std::vector<double> mean(d, 0.0), sq(d, 0.0);
  std::vector<double> unit(d);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = m.row(r);
    double norm = 0.0;
    for (float v : row) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    s.mean_norm += norm;
    for (std::size_t c = 0; c < d; ++c) {
      unit[c] = norm > 0.0 ? row[c] / norm : 0.0;
      mean[c] += unit[c];
    }
  }
  for (double& v : mean) v /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = m.row(r);
    double norm = 0.0;
    for (float v : row) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < d; ++c) {
      const double u = norm > 0.0 ? row[c] / norm : 0.0;
      sq[c] += (u - mean[c]) * (u - mean[c]);
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    s.per_dim_variance[c] = sq[c] / static_cast<double>(n);
    total += s.per_dim_variance[c];
  }
  s.mean_variance = d ? total / static_cast<double>(d) : 0.0;
  s.mean_norm /= static_cast<double>(n);
  return s;
}

DatasetStats dataset_stats(const PairedDataset& ds) {
  return {modality_stats(ds.image.values), modality_stats(ds.text.values)};
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ParseError("manifest not found: " + path.string());
  const auto kv = KeyValues::load(path);
  const auto base = path.parent_path();
  auto resolve = [&](std::string_view key) {
    auto v = kv.get(key);
    if (!v || v->empty()) throw ParseError(path.string() + ": missing required key '" + std::string(key) + "'");
    std::filesystem::path p(*v);
    return p.is_absolute() ? p : base / p;
  };
  DatasetManifest m;
  m.image_csv = resolve("image_csv");
  m.text_csv = resolve("text_csv");
  m.labels_csv = resolve("labels_csv");
  m.n_classes = static_cast<std::size_t>(kv.get_int("n_classes", 0));
  m.seed = kv.get_uint64("seed", 0);
  m.train_fraction = kv.get_double("train_fraction", 0.8);
  m.stratify = kv.get_bool("stratify", false);
  if (auto unused = kv.unused_keys(); !unused.empty()) {
    throw ParseError(path.string() + ": unknown key '" + unused.front() + "'");
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "image_csv = " << m.image_csv.string() << '\n'
      << "text_csv = " << m.text_csv.string() << '\n'
      << "labels_csv = " << m.labels_csv.string() << '\n'
      << "n_classes = " << m.n_classes << '\n'
      << "seed = " << m.seed << '\n'
      << "train_fraction = " << m.train_fraction << '\n'
      << "stratify = " << (m.stratify ? "true" : "false") << '\n';
  if (!out) throw ParseError("write failed for " + path.string());
}

PairedDataset load_dataset(const DatasetManifest& m) {
  auto image = load_csv(m.image_csv, Modality::image);
  auto text = load_csv(m.text_csv, Modality::text);
  auto labels = load_labels(m.labels_csv);
  std::size_t n_classes = m.n_classes;
  if (n_classes == 0) {
    int max_label = 0;
    for (int l : labels) max_label = std::max(max_label, l);
    n_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  }
  return make_paired(std::move(image), std::move(text), std::move(labels), n_classes, m.seed,
                     {m.train_fraction, m.stratify});
}

}  // namespace gapfuse
