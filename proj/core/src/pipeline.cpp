#include "gapfuse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "gapfuse/error.hpp"
#include "gapfuse/metrics.hpp"
#include "gapfuse/ops.hpp"
#include "gapfuse/random.hpp"

namespace gapfuse {

using json = nlohmann::ordered_json;

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

std::vector<double> split_doubles(const std::string& text, std::string_view what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(parse_double(trim(item), what));
  }
  return out;
}

std::size_t get_count(const KeyValues& kv, std::string_view key, std::size_t fallback) {
  const long long v = kv.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw ConfigError(std::string(key) + " must be >= 0, got " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

}  // namespace

// ---------------------------------------------------------------- RunConfig

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys{
      "data.manifest",       "synth.regime",       "synth.n_samples",     "synth.dim",
      "synth.n_classes",     "synth.text_variance", "synth.image_variance", "synth.gap",
      "synth.class_separation", "synth.shared_fraction", "synth.label_skew", "synth.cross_modal", "synth.train_fraction",
      "synth.seed",          "model.kind",         "model.dropout",       "align.noise_std",
      "align.lambda",        "align.renormalize",  "align.reg_weight",    "align.noise_at_eval",
      "train.epochs",        "train.batch_size",   "train.seed",          "optim.lr",
      "optim.beta1",         "optim.beta2",        "optim.epsilon",       "optim.weight_decay",
      "sweep.lambda_min",    "sweep.lambda_max",   "sweep.lambda_step",   "sweep.retrain",
      "sweep.jobs",          "pca.components",     "benchmark.paper_shapes", "output.si",
      "out"};
  return keys;
}

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  RunConfig c;
  if (auto m = kv.get("data.manifest"); m && !trim(*m).empty()) c.manifest = std::string(trim(*m));

  c.seed = kv.get_uint64("train.seed", 0);
  const Regime regime = parse_regime(kv.get_string("synth.regime", "medical"));
  c.synth = regime == Regime::medical ? SynthSpec::medical() : SynthSpec::general();
  c.synth.seed = kv.get_uint64("synth.seed", c.seed);
  c.synth.n_samples = get_count(kv, "synth.n_samples", c.synth.n_samples);
  c.synth.dim = get_count(kv, "synth.dim", c.synth.dim);
  c.synth.n_classes = get_count(kv, "synth.n_classes", c.synth.n_classes);
  c.synth.text_variance = kv.get_double("synth.text_variance", c.synth.text_variance);
  c.synth.image_variance = kv.get_double("synth.image_variance", c.synth.image_variance);
  c.synth.gap_magnitude = kv.get_double("synth.gap", c.synth.gap_magnitude);
  c.synth.class_separation = kv.get_double("synth.class_separation", c.synth.class_separation);
  c.synth.shared_fraction = kv.get_double("synth.shared_fraction", c.synth.shared_fraction);
  c.synth.train_fraction = kv.get_double("synth.train_fraction", c.synth.train_fraction);
  c.synth.cross_modal = kv.get_bool("synth.cross_modal", c.synth.cross_modal);
  if (auto skew = kv.get("synth.label_skew")) c.synth.label_skew = split_doubles(*skew, "synth.label_skew");

  c.model_kind = parse_fusion_kind(kv.get_string("model.kind", std::string(to_string(c.model_kind))));
  c.dropout = kv.get_double("model.dropout", c.dropout);

  c.align.noise_std = kv.get_double("align.noise_std", c.align.noise_std);
  c.align.lambda_shift = kv.get_double("align.lambda", c.align.lambda_shift);
  c.align.renormalize = kv.get_bool("align.renormalize", c.align.renormalize);
  c.align.reg_weight = kv.get_double("align.reg_weight", c.align.reg_weight);
  c.align.noise_at_eval = kv.get_bool("align.noise_at_eval", c.align.noise_at_eval);

  c.epochs = get_count(kv, "train.epochs", c.epochs);
  c.batch_size = get_count(kv, "train.batch_size", c.batch_size);

  c.optim.lr = kv.get_double("optim.lr", c.optim.lr);
  c.optim.beta1 = kv.get_double("optim.beta1", c.optim.beta1);
  c.optim.beta2 = kv.get_double("optim.beta2", c.optim.beta2);
  c.optim.epsilon = kv.get_double("optim.epsilon", c.optim.epsilon);
  c.optim.weight_decay = kv.get_double("optim.weight_decay", c.optim.weight_decay);

  c.sweep_min = kv.get_double("sweep.lambda_min", c.sweep_min);
  c.sweep_max = kv.get_double("sweep.lambda_max", c.sweep_max);
  c.sweep_step = kv.get_double("sweep.lambda_step", c.sweep_step);
  c.sweep_retrain = kv.get_bool("sweep.retrain", c.sweep_retrain);
  c.jobs = get_count(kv, "sweep.jobs", c.jobs);

  c.pca_components = get_count(kv, "pca.components", c.pca_components);
  c.paper_shapes = kv.get_bool("benchmark.paper_shapes", c.paper_shapes);
  c.si_units = kv.get_bool("output.si", c.si_units);
  c.out = kv.get_string("out", c.out.string());

  if (const auto unknown = kv.unused_keys(); !unknown.empty()) {
    std::string msg = "unknown config key";
    msg += unknown.size() > 1 ? "s" : "";
    for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", '" : " '") + unknown[i] + "'";
    throw ConfigError(msg);
  }
  c.validate();
  return c;
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv;
  kv.set("data.manifest", manifest ? manifest->string() : "");
  kv.set("synth.regime", std::string(to_string(synth.regime)));
  kv.set("synth.n_samples", std::to_string(synth.n_samples));
  kv.set("synth.dim", std::to_string(synth.dim));
  kv.set("synth.n_classes", std::to_string(synth.n_classes));
  kv.set("synth.text_variance", format_double(synth.text_variance));
  kv.set("synth.image_variance", format_double(synth.image_variance));
  kv.set("synth.gap", format_double(synth.gap_magnitude));
  kv.set("synth.class_separation", format_double(synth.class_separation));
  kv.set("synth.shared_fraction", format_double(synth.shared_fraction));
  kv.set("synth.label_skew", join_doubles(synth.label_skew));
  kv.set("synth.cross_modal", synth.cross_modal ? "true" : "false");
  kv.set("synth.train_fraction", format_double(synth.train_fraction));
  kv.set("synth.seed", std::to_string(synth.seed));
  kv.set("model.kind", std::string(to_string(model_kind)));
  kv.set("model.dropout", format_double(dropout));
  kv.set("align.noise_std", format_double(align.noise_std));
  kv.set("align.lambda", format_double(align.lambda_shift));
  kv.set("align.renormalize", align.renormalize ? "true" : "false");
  kv.set("align.reg_weight", format_double(align.reg_weight));
  kv.set("align.noise_at_eval", align.noise_at_eval ? "true" : "false");
  kv.set("train.epochs", std::to_string(epochs));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.seed", std::to_string(seed));
  kv.set("optim.lr", format_double(optim.lr));
  kv.set("optim.beta1", format_double(optim.beta1));
  kv.set("optim.beta2", format_double(optim.beta2));
  kv.set("optim.epsilon", format_double(optim.epsilon));
  kv.set("optim.weight_decay", format_double(optim.weight_decay));
  kv.set("sweep.lambda_min", format_double(sweep_min));
  kv.set("sweep.lambda_max", format_double(sweep_max));
  kv.set("sweep.lambda_step", format_double(sweep_step));
  kv.set("sweep.retrain", sweep_retrain ? "true" : "false");
  kv.set("sweep.jobs", std::to_string(jobs));
  kv.set("pca.components", std::to_string(pca_components));
  kv.set("benchmark.paper_shapes", paper_shapes ? "true" : "false");
  kv.set("output.si", si_units ? "true" : "false");
  kv.set("out", out.string());
  return kv;
}

void RunConfig::validate() const {
  if (!manifest) synth.validate();
  align.validate();
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 2) {
    throw ConfigError("train.batch_size must be >= 2 (batch normalization needs two rows), got " +
                      std::to_string(batch_size));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must be in [0, 1)");
  if (!(sweep_step > 0.0)) throw ConfigError("sweep.lambda_step must be > 0");
  if (sweep_min > sweep_max) throw ConfigError("sweep.lambda_min must not exceed sweep.lambda_max");
  if (jobs == 0) throw ConfigError("sweep.jobs must be >= 1");
  if (pca_components == 0) throw ConfigError("pca.components must be >= 1");
  AdamW probe(0, optim);  // throws on invalid hyperparameters
}

std::vector<double> RunConfig::lambda_grid() const {
  const auto steps = static_cast<std::size_t>(std::floor((sweep_max - sweep_min) / sweep_step + 1e-9));
  std::vector<double> grid;
  for (std::size_t i = 0; i <= steps; ++i) {
    // Snap to 1e-12 so that 0 is exactly 0 and CSV values print cleanly.
    const double v = sweep_min + static_cast<double>(i) * sweep_step;
    grid.push_back(std::round(v * 1e12) / 1e12 + 0.0);
  }
  return grid;
}

// -------------------------------------------------------------- RunReport

GapSummary GapSummary::of(const GapReport& g) {
  return {g.gap_scalar, g.gap_vector_norm(), g.image_variance, g.text_variance,
          g.mean_cross_modal_cosine};
}

bool same_numerics(const RunReport& a, const RunReport& b) {
  if (a.schema != b.schema || a.config != b.config || !(a.dataset == b.dataset) ||
      a.best_epoch != b.best_epoch || a.best_accuracy != b.best_accuracy || a.best_f1 != b.best_f1 ||
      a.accuracy_at_best_epoch != b.accuracy_at_best_epoch || !(a.gap_before == b.gap_before) ||
      !(a.gap_after == b.gap_after) || a.warnings != b.warnings ||
      a.epochs.size() != b.epochs.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const auto& x = a.epochs[i];
    const auto& y = b.epochs[i];
    if (x.epoch != y.epoch || x.train_loss != y.train_loss || x.train_accuracy != y.train_accuracy ||
        x.test_accuracy != y.test_accuracy || x.test_f1 != y.test_f1) {
      return false;
    }
  }
  const auto& e = a.efficiency;
  const auto& f = b.efficiency;
  return e.model_size_bytes == f.model_size_bytes &&
         e.train_set_bytes_per_epoch == f.train_set_bytes_per_epoch &&
         e.test_set_bytes_per_epoch == f.test_set_bytes_per_epoch && e.element_size == f.element_size;
}

namespace {

json gap_summary_json(const GapSummary& g) {
  return {{"gap_scalar", g.gap_scalar},
          {"gap_vector_norm", g.gap_vector_norm},
          {"image_variance", g.image_variance},
          {"text_variance", g.text_variance},
          {"mean_cross_modal_cosine", g.mean_cross_modal_cosine}};
}

GapSummary gap_summary_from(const json& j) {
  return {j.at("gap_scalar").get<double>(), j.at("gap_vector_norm").get<double>(),
          j.at("image_variance").get<double>(), j.at("text_variance").get<double>(),
          j.at("mean_cross_modal_cosine").get<double>()};
}

json efficiency_json(const EfficiencyReport& e, bool include_timing) {
  json j{{"element_size", e.element_size},
         {"model_size_bytes", e.model_size_bytes},
         {"train_set_bytes_per_epoch", e.train_set_bytes_per_epoch},
         {"test_set_bytes_per_epoch", e.test_set_bytes_per_epoch},
         {"model_size_mb", to_mib(e.model_size_bytes)},
         {"train_set_mb_per_epoch", to_mib(e.train_set_bytes_per_epoch)},
         {"test_set_mb_per_epoch", to_mib(e.test_set_bytes_per_epoch)}};
  if (include_timing) {
    j["avg_train_seconds_per_epoch"] = e.avg_train_seconds_per_epoch;
    j["avg_inference_seconds_per_epoch"] = e.avg_inference_seconds_per_epoch;
  }
  return j;
}

EfficiencyReport efficiency_from(const json& j) {
  EfficiencyReport e;
  e.element_size = j.at("element_size").get<std::size_t>();
  e.model_size_bytes = j.at("model_size_bytes").get<std::size_t>();
  e.train_set_bytes_per_epoch = j.at("train_set_bytes_per_epoch").get<std::size_t>();
  e.test_set_bytes_per_epoch = j.at("test_set_bytes_per_epoch").get<std::size_t>();
  e.avg_train_seconds_per_epoch = j.value("avg_train_seconds_per_epoch", 0.0);
  e.avg_inference_seconds_per_epoch = j.value("avg_inference_seconds_per_epoch", 0.0);
  return e;
}

json report_json(const RunReport& r, bool include_timing) {
  json cfg = json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json row{{"epoch", e.epoch},
             {"train_loss", e.train_loss},
             {"train_accuracy", e.train_accuracy},
             {"test_accuracy", e.test_accuracy},
             {"test_f1", e.test_f1}};
    if (include_timing) {
      row["train_seconds"] = e.train_seconds;
      row["inference_seconds"] = e.inference_seconds;
    }
    epochs.push_back(std::move(row));
  }
  return {{"schema", r.schema},
          {"config", cfg},
          {"dataset",
           {{"source", r.dataset.source},
            {"n_train", r.dataset.n_train},
            {"n_test", r.dataset.n_test},
            {"n_classes", r.dataset.n_classes},
            {"image_dim", r.dataset.image_dim},
            {"text_dim", r.dataset.text_dim}}},
          {"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best_accuracy", r.best_accuracy},
          {"best_f1", r.best_f1},
          {"accuracy_at_best_epoch", r.accuracy_at_best_epoch},
          {"gap_before", gap_summary_json(r.gap_before)},
          {"gap_after", gap_summary_json(r.gap_after)},
          {"efficiency", efficiency_json(r.efficiency, include_timing)},
          {"warnings", r.warnings}};
}

RunReport report_from(const json& j) {
  RunReport r;
  r.schema = j.at("schema").get<std::string>();
  if (r.schema != kReportSchema) {
    throw ParseError("unsupported report schema '" + r.schema + "' (expected " + kReportSchema + ")");
  }
  for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
  const auto& d = j.at("dataset");
  r.dataset = {d.at("source").get<std::string>(), d.at("n_train").get<std::size_t>(),
               d.at("n_test").get<std::size_t>(), d.at("n_classes").get<std::size_t>(),
               d.at("image_dim").get<std::size_t>(), d.at("text_dim").get<std::size_t>()};
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                        e.at("train_accuracy").get<double>(), e.at("test_accuracy").get<double>(),
                        e.at("test_f1").get<double>(), e.value("train_seconds", 0.0),
                        e.value("inference_seconds", 0.0)});
  }
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.best_accuracy = j.at("best_accuracy").get<double>();
  r.best_f1 = j.at("best_f1").get<double>();
  r.accuracy_at_best_epoch = j.at("accuracy_at_best_epoch").get<double>();
  r.gap_before = gap_summary_from(j.at("gap_before"));
  r.gap_after = gap_summary_from(j.at("gap_after"));
  r.efficiency = efficiency_from(j.at("efficiency"));
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

template <typename Fn>
auto parse_json_as(const std::string& text, std::string_view what, Fn&& fn) {
  try {
    return fn(json::parse(text));
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string to_json(const RunReport& r, bool include_timing) {
  return report_json(r, include_timing).dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  return parse_json_as(text, "run report", [](const json& j) { return report_from(j); });
}

std::string to_json(const GapReport& g) {
  json j{{"gap_scalar", g.gap_scalar},
         {"gap_vector_norm", g.gap_vector_norm()},
         {"image_variance", g.image_variance},
         {"text_variance", g.text_variance},
         {"mean_cross_modal_cosine", g.mean_cross_modal_cosine},
         {"gap_vector", g.gap_vector}};
  return j.dump(2) + "\n";
}

GapReport gap_report_from_json(const std::string& text) {
  return parse_json_as(text, "gap report", [](const json& j) {
    GapReport g;
    g.gap_scalar = j.at("gap_scalar").get<double>();
    g.image_variance = j.at("image_variance").get<double>();
    g.text_variance = j.at("text_variance").get<double>();
    g.mean_cross_modal_cosine = j.at("mean_cross_modal_cosine").get<double>();
    g.gap_vector = j.at("gap_vector").get<std::vector<double>>();
    return g;
  });
}

std::string to_json(const EfficiencyReport& e) { return efficiency_json(e, true).dump(2) + "\n"; }

EfficiencyReport efficiency_from_json(const std::string& text) {
  return parse_json_as(text, "efficiency report", [](const json& j) { return efficiency_from(j); });
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw ParseError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --------------------------------------------------------------- training

namespace {

constexpr std::size_t kEvalChunk = 4096;

std::vector<int> predict(FusionModel& model, const Matrix& image, const Matrix& text) {
  std::vector<int> pred(image.rows());
  const bool binary = model.config().n_classes == 2;
  for (std::size_t start = 0; start < image.rows(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, image.rows() - start);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    const auto out = model.forward(gather_rows(image, idx), gather_rows(text, idx), Phase::eval);
    for (std::size_t r = 0; r < n; ++r) {
      auto row = out.logits.row(r);
      pred[start + r] = binary ? (row[0] > 0.0F ? 1 : 0)
                               : static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  return pred;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t s = 0; s < n; s += batch) ranges.emplace_back(s, std::min(n, s + batch));
  // Batch normalization needs two rows; a trailing single row joins the previous batch.
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first == 1) {
    ranges[ranges.size() - 2].second = ranges.back().second;
    ranges.pop_back();
  }
  return ranges;
}

}  // namespace

Evaluation evaluate(FusionModel& model, const PairedDataset& ds, std::span<const std::size_t> rows) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(ds.rows());
    std::iota(all.begin(), all.end(), 0);
    rows = all;
  }
  Evaluation ev;
  ev.predictions = predict(model, gather_rows(ds.image.values, rows), gather_rows(ds.text.values, rows));
  const auto truth = ds.labels_of(rows);
  ev.accuracy = accuracy(truth, ev.predictions);
  ev.f1 = task_f1(truth, ev.predictions, ds.n_classes);
  return ev;
}

TrainResult train_run(const PairedDataset& data, const RunConfig& cfg) {
  cfg.validate();
  const auto train_rows = data.indices(Split::train);
  const auto test_rows = data.indices(Split::test);
  if (train_rows.size() < 2) {
    throw ConfigError("training split has " + std::to_string(train_rows.size()) +
                      " rows; at least 2 are needed");
  }
  if (test_rows.empty()) throw ConfigError("test split is empty; lower the train fraction");
  if (data.class_weights.size() != data.n_classes) {
    throw ConfigError("dataset has " + std::to_string(data.class_weights.size()) +
                      " class weights for " + std::to_string(data.n_classes) + " classes");
  }

  FusionConfig fc;
  fc.kind = cfg.model_kind;
  fc.image_dim = data.image.dim();
  fc.text_dim = data.text.dim();
  fc.n_classes = data.n_classes;
  fc.dropout = cfg.dropout;
  FusionModel model = FusionModel::build(fc, derive_seed(cfg.seed, 1));
  AdamW optimizer(model.parameter_count(), cfg.optim);

  RunReport report;
  const KeyValues echo = cfg.to_key_values();
  for (const auto& [k, v] : echo.entries()) report.config.emplace_back(k, v);
  report.dataset = {data.image.source_tag, train_rows.size(), test_rows.size(), data.n_classes,
                    fc.image_dim, fc.text_dim};
  report.warnings = cfg.align.warnings();
  // Gap metrics only exist when both encoders share an embedding space.
  const bool comparable = fc.image_dim == fc.text_dim;
  if (comparable) {
    report.gap_before = GapSummary::of(measure_gap(data, true));
  } else {
    report.warnings.push_back("image and text widths differ (" + std::to_string(fc.image_dim) + " vs " +
                              std::to_string(fc.text_dim) + "); gap metrics are not reported");
  }

  const PairedDataset eval_data = apply_pipeline(data, cfg.align, Phase::eval, derive_seed(cfg.seed, 3));
  if (comparable) report.gap_after = GapSummary::of(measure_gap(eval_data, false));
  const Matrix test_image = gather_rows(eval_data.image.values, test_rows);
  const Matrix test_text = gather_rows(eval_data.text.values, test_rows);
  const Matrix clean_train_image = gather_rows(eval_data.image.values, train_rows);
  const Matrix clean_train_text = gather_rows(eval_data.text.values, train_rows);
  const auto test_truth = data.labels_of(test_rows);
  const auto train_truth = data.labels_of(train_rows);

  const bool binary = data.n_classes == 2;
  const bool regularize = cfg.align.reg_weight > 0.0 && cfg.model_kind == FusionKind::late_joint;
  if (cfg.align.reg_weight > 0.0 && !regularize) {
    report.warnings.emplace_back("align.reg_weight ignored: early fusion has no branch features");
  }
  const auto ranges = batch_ranges(train_rows.size(), cfg.batch_size);

  std::vector<std::size_t> order(train_rows.size());
  std::iota(order.begin(), order.end(), 0);
  EpochTimer train_timer, infer_timer;
  TrainResult result{report, model};

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const PairedDataset noisy_data =
        cfg.align.noise_std > 0.0 ? apply_pipeline(data, cfg.align, Phase::train, derive_seed(cfg.seed, 2000 + epoch))
                                  : PairedDataset{};
    const PairedDataset& epoch_data = cfg.align.noise_std > 0.0 ? noisy_data : eval_data;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 1000 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics m;
    m.epoch = epoch;
    double loss_sum = 0.0;
    Stopwatch watch;
    for (const auto& [begin, end] : ranges) {
      std::vector<std::size_t> idx;
      idx.reserve(end - begin);
      for (std::size_t k = begin; k < end; ++k) idx.push_back(train_rows[order[k]]);
      const Matrix image = gather_rows(epoch_data.image.values, idx);
      const Matrix text = gather_rows(epoch_data.text.values, idx);
      const auto labels = data.labels_of(idx);

      const auto out = model.forward(image, text, Phase::train);
      auto loss = binary ? ops::weighted_bce_with_logits(out.logits, labels, data.class_weights)
                         : ops::weighted_cross_entropy(out.logits, labels, data.class_weights);
      model.zero_grad();
      if (regularize) {
        auto reg = reg_loss(out.text_features, out.image_features);
        const auto w = static_cast<float>(cfg.align.reg_weight);
        for (float& g : reg.grad_text.data()) g *= w;
        for (float& g : reg.grad_image.data()) g *= w;
        loss.loss += cfg.align.reg_weight * reg.loss;
        model.backward(loss.grad, &reg.grad_image, &reg.grad_text);
      } else {
        model.backward(loss.grad);
      }
      optimizer.step(model.parameters().all_values(), model.parameters().all_grads());
      loss_sum += loss.loss * static_cast<double>(idx.size());
    }
    m.train_seconds = watch.seconds();
    m.train_loss = loss_sum / static_cast<double>(train_rows.size());
    train_timer.record(m.train_seconds);

    watch.restart();
    const auto test_pred = predict(model, test_image, test_text);
    m.inference_seconds = watch.seconds();
    infer_timer.record(m.inference_seconds);
    m.test_accuracy = accuracy(test_truth, test_pred);
    m.test_f1 = task_f1(test_truth, test_pred, data.n_classes);
    m.train_accuracy = accuracy(train_truth, predict(model, clean_train_image, clean_train_text));

    if (epoch == 1 || m.test_f1 > report.best_f1) {
      report.best_epoch = epoch;
      report.best_f1 = m.test_f1;
      report.accuracy_at_best_epoch = m.test_accuracy;
      result.best_model = model;
    }
    report.best_accuracy = std::max(report.best_accuracy, m.test_accuracy);
    report.epochs.push_back(m);
  }

  report.efficiency.model_size_bytes = model_memory(model);
  report.efficiency.train_set_bytes_per_epoch =
      epoch_memory(train_rows.size(), cfg.batch_size, fc.image_dim, fc.text_dim, label_width(fc.n_classes));
  report.efficiency.test_set_bytes_per_epoch =
      epoch_memory(test_rows.size(), cfg.batch_size, fc.image_dim, fc.text_dim, label_width(fc.n_classes));
  report.efficiency.avg_train_seconds_per_epoch = train_timer.mean();
  report.efficiency.avg_inference_seconds_per_epoch = infer_timer.mean();
  result.report = std::move(report);
  return result;
}

PairedDataset load_run_dataset(const RunConfig& cfg) {
  if (cfg.manifest) {
    auto ds = load_dataset(load_manifest(*cfg.manifest));
    ds.image.source_tag = dataset_source(cfg);
    ds.text.source_tag = ds.image.source_tag;
    return ds;
  }
  return generate(cfg.synth).dataset;
}

std::string dataset_source(const RunConfig& cfg) {
  if (cfg.manifest) return cfg.manifest->stem().string();
  return "synthetic-" + std::string(to_string(cfg.synth.regime));
}

// ------------------------------------------------------------------ sweep

SweepResult run_sweep(const PairedDataset& data, const RunConfig& cfg, const std::vector<double>& grid) {
  cfg.validate();
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  SweepResult res;
  res.points.resize(grid.size());

  if (!cfg.sweep_retrain) {
    TrainResult base = train_run(data, cfg);
    const auto test_rows = data.indices(Split::test);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      AlignmentConfig a = cfg.align;
      a.lambda_shift = grid[i];
      const auto shifted = apply_pipeline(data, a, Phase::eval, derive_seed(cfg.seed, 3));
      const auto ev = evaluate(base.best_model, shifted, test_rows);
      res.points[i] = {grid[i], ev.accuracy, ev.f1, base.report.best_epoch};
    }
    res.reports.push_back(std::move(base.report));
    return res;
  }

  res.reports.resize(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        RunConfig c = cfg;
        c.align.lambda_shift = grid[i];
        res.reports[i] = train_run(data, c).report;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.jobs, grid.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& r = res.reports[i];
    res.points[i] = {grid[i], r.best_accuracy, r.best_f1, r.best_epoch};
  }
  return res;
}

// ------------------------------------------------------------- benchmark

std::vector<Workload> reference_workloads() {
  const std::vector<std::tuple<std::string, std::size_t, std::size_t, std::size_t>> datasets{
      {"BRSET", 13012, 3254, 2}, {"HAM10000", 8012, 2003, 7}, {"SatelliteBench", 936, 312, 2}};
  std::vector<Workload> out;
  for (const auto& [name, n_train, n_test, n_classes] : datasets) {
    out.push_back({name, "Embedding DINOv2 + LLaMA-2", 768, 4096, n_train, n_test, n_classes});
    out.push_back({name, "Embedding CLIP", 512, 512, n_train, n_test, n_classes});
  }
  return out;
}

EfficiencyRow analytic_row(const Workload& w, FusionKind kind, std::size_t batch_size) {
  FusionConfig fc;
  fc.kind = kind;
  fc.image_dim = w.image_dim;
  fc.text_dim = w.text_dim;
  fc.n_classes = w.n_classes;
  const auto model = FusionModel::build(fc, 0);
  EfficiencyRow row{w.dataset, w.approach, kind == FusionKind::early ? "Early" : "Late-joint", {}};
  row.report.model_size_bytes = model_memory(model);
  row.report.train_set_bytes_per_epoch = epoch_memory(w.n_train, batch_size, w.image_dim, w.text_dim,
                                                       label_width(w.n_classes));
  row.report.test_set_bytes_per_epoch = epoch_memory(w.n_test, batch_size, w.image_dim, w.text_dim,
                                                      label_width(w.n_classes));
  return row;
}

// ------------------------------------------------------------ subcommands

namespace {

std::filesystem::path prepare_out(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  return cfg.out;
}

std::string config_text(const RunConfig& cfg) {
  std::ostringstream os;
  cfg.to_key_values().write(os);
  return os.str();
}

PcaResult export_pca(const PairedDataset& ds, std::size_t k, const std::filesystem::path& path,
                     bool normalize) {
  const std::vector<Matrix> groups{normalize ? normalize_rows(ds.image.values) : ds.image.values,
                                   normalize ? normalize_rows(ds.text.values) : ds.text.values};
  auto pca = pca_project(groups, k);
  const std::vector<std::string> names{"image", "text"};
  auto tmp = path;
  tmp += ".tmp";
  write_pca_csv(tmp, pca, names);
  std::filesystem::rename(tmp, path);
  return pca;
}

}  // namespace

GapReport cmd_gap(const RunConfig& cfg) {
  cfg.validate();
  const auto data = load_run_dataset(cfg);
  const auto dir = prepare_out(cfg);
  auto gap = measure_gap(data, true);
  write_text_file(dir / "gap_report.json", to_json(gap));
  export_pca(data, cfg.pca_components, dir / "pca_coords.csv", true);
  return gap;
}

PcaResult cmd_pca(const RunConfig& cfg) {
  cfg.validate();
  const auto data = load_run_dataset(cfg);
  const auto dir = prepare_out(cfg);
  auto pca = export_pca(data, cfg.pca_components, dir / "pca_coords.csv", true);
  if (cfg.align.lambda_shift != 0.0) {
    AlignmentConfig a = cfg.align;
    a.noise_std = 0.0;
    const auto aligned = apply_pipeline(data, a, Phase::eval, derive_seed(cfg.seed, 3));
    export_pca(aligned, cfg.pca_components, dir / "pca_aligned.csv", false);
  }
  return pca;
}

RunReport cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const auto data = load_run_dataset(cfg);
  auto result = train_run(data, cfg);
  const auto dir = prepare_out(cfg);
  write_text_file(dir / "config.txt", config_text(cfg));
  auto ckpt_tmp = dir / "checkpoint.json.tmp";
  result.best_model.save(ckpt_tmp);
  std::filesystem::rename(ckpt_tmp, dir / "checkpoint.json");
  write_text_file(dir / "report.json", to_json(result.report));
  return result.report;
}

SweepResult cmd_sweep(const RunConfig& cfg) {
  cfg.validate();
  const auto data = load_run_dataset(cfg);
  auto res = run_sweep(data, cfg, cfg.lambda_grid());
  const auto dir = prepare_out(cfg);
  std::ostringstream csv;
  csv << "lambda,accuracy,f1,best_epoch\n";
  for (const auto& p : res.points) {
    csv << format_double(p.lambda) << ',' << format_double(p.accuracy) << ',' << format_double(p.f1)
        << ',' << p.best_epoch << '\n';
  }
  json reports = json::array();
  for (const auto& r : res.reports) reports.push_back(report_json(r, true));
  write_text_file(dir / "config.txt", config_text(cfg));
  write_text_file(dir / "sweep_reports.json", reports.dump(2) + "\n");
  write_text_file(dir / "sweep.csv", csv.str());
  return res;
}

std::vector<EfficiencyRow> cmd_benchmark(const RunConfig& cfg) {
  cfg.validate();
  std::vector<EfficiencyRow> rows;
  if (cfg.paper_shapes) {
    for (const auto& w : reference_workloads()) {
      for (auto kind : {FusionKind::early, FusionKind::late_joint}) {
        rows.push_back(analytic_row(w, kind, cfg.batch_size));
      }
    }
  } else {
    const auto data = load_run_dataset(cfg);
    const std::string approach =
        "Embedding " + std::to_string(data.image.dim()) + "+" + std::to_string(data.text.dim());
    for (auto kind : {FusionKind::early, FusionKind::late_joint}) {
      RunConfig c = cfg;
      c.model_kind = kind;
      const auto r = train_run(data, c).report;
      rows.push_back({dataset_source(cfg), approach, kind == FusionKind::early ? "Early" : "Late-joint",
                      r.efficiency});
    }
  }
  const auto dir = prepare_out(cfg);
  json arr = json::array();
  for (const auto& r : rows) {
    json j{{"dataset", r.dataset}, {"approach", r.approach}, {"fusion", r.fusion}};
    j["report"] = efficiency_json(r.report, !cfg.paper_shapes);
    arr.push_back(std::move(j));
  }
  write_text_file(dir / "benchmark.json", arr.dump(2) + "\n");
  write_text_file(dir / "benchmark.txt", format_efficiency_table(rows, cfg.si_units, !cfg.paper_shapes));
  return rows;
}

SynthResult cmd_synth(const RunConfig& cfg) {
  cfg.validate();
  auto res = generate(cfg.synth);
  const auto dir = prepare_out(cfg);
  save_csv(dir / "image.csv", res.dataset.image);
  save_csv(dir / "text.csv", res.dataset.text);
  save_labels(dir / "labels.csv", res.dataset.labels);
  DatasetManifest m;
  m.image_csv = "image.csv";
  m.text_csv = "text.csv";
  m.labels_csv = "labels.csv";
  m.n_classes = res.dataset.n_classes;
  m.seed = derive_seed(cfg.synth.seed, 7);
  m.train_fraction = cfg.synth.train_fraction;
  save_manifest(dir / "manifest.txt", m);
  json summary{{"regime", std::string(to_string(cfg.synth.regime))},
               {"n_samples", cfg.synth.n_samples},
               {"dim", cfg.synth.dim},
               {"n_classes", cfg.synth.n_classes},
               {"seed", cfg.synth.seed},
               {"target_image_variance", cfg.synth.image_variance},
               {"target_text_variance", cfg.synth.text_variance},
               {"target_gap", cfg.synth.gap_magnitude},
               {"achieved_image_variance", res.achieved_image_variance},
               {"achieved_text_variance", res.achieved_text_variance},
               {"achieved_gap", res.achieved_gap}};
  write_text_file(dir / "synth_summary.json", summary.dump(2) + "\n");
  return res;
}

}  // namespace gapfuse
