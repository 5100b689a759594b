#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gapfuse/adamw.hpp"
#include "gapfuse/alignment.hpp"
#include "gapfuse/efficiency.hpp"
#include "gapfuse/embedding_store.hpp"
#include "gapfuse/fusion_model.hpp"
#include "gapfuse/geometry.hpp"
#include "gapfuse/key_value.hpp"
#include "gapfuse/synthetic.hpp"

namespace gapfuse {

inline constexpr const char* kReportSchema = "gapfuse-report-v1";

struct RunConfig {
  std::optional<std::filesystem::path> manifest;  // synthetic data when unset
  SynthSpec synth;
  FusionKind model_kind = FusionKind::early;
  double dropout = 0.0;
  AlignmentConfig align;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  AdamW::Options optim;
  std::filesystem::path out = "gapfuse_out";

  double sweep_min = -1.0;
  double sweep_max = 1.0;
  double sweep_step = 0.1;
  bool sweep_retrain = false;  // inference-only sweep unless set
  std::size_t jobs = 1;

  std::size_t pca_components = 2;
  bool paper_shapes = false;
  bool si_units = false;

  /// Reads dotted keys (data.manifest, model.kind, align.lambda, ...).
  /// Unknown keys are rejected by name.
  static RunConfig from_key_values(const KeyValues& kv);
  [[nodiscard]] KeyValues to_key_values() const;
  void validate() const;
  /// Lambda values from sweep_min to sweep_max inclusive.
  [[nodiscard]] std::vector<double> lambda_grid() const;
};

/// Every key RunConfig understands, in file order.
const std::vector<std::string>& run_config_keys();

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_f1 = 0.0;
  double train_seconds = 0.0;
  double inference_seconds = 0.0;
};

struct GapSummary {
  double gap_scalar = 0.0;
  double gap_vector_norm = 0.0;
  double image_variance = 0.0;
  double text_variance = 0.0;
  double mean_cross_modal_cosine = 0.0;

  static GapSummary of(const GapReport& g);
  friend bool operator==(const GapSummary&, const GapSummary&) = default;
};

struct DatasetSummary {
  std::string source;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_classes = 0;
  std::size_t image_dim = 0;
  std::size_t text_dim = 0;

  friend bool operator==(const DatasetSummary&, const DatasetSummary&) = default;
};

struct RunReport {
  std::string schema = kReportSchema;
  std::vector<std::pair<std::string, std::string>> config;
  DatasetSummary dataset;
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;  // first epoch with the highest test F1
  double best_accuracy = 0.0;  // max test accuracy over epochs
  double best_f1 = 0.0;        // max test F1 over epochs
  double accuracy_at_best_epoch = 0.0;
  GapSummary gap_before;
  GapSummary gap_after;
  EfficiencyReport efficiency;
  std::vector<std::string> warnings;
};

/// True when every field except wall-clock timings matches exactly.
bool same_numerics(const RunReport& a, const RunReport& b);

std::string to_json(const RunReport& r, bool include_timing = true);
RunReport report_from_json(const std::string& text);
std::string to_json(const GapReport& g);
GapReport gap_report_from_json(const std::string& text);
std::string to_json(const EfficiencyReport& e);
EfficiencyReport efficiency_from_json(const std::string& text);

/// Writes through a temporary file and renames, so a failed run never
/// leaves a truncated artifact behind.
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

struct Evaluation {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::vector<int> predictions;
};

/// Eval-mode predictions for the given rows (all rows when `rows` is empty).
Evaluation evaluate(FusionModel& model, const PairedDataset& ds, std::span<const std::size_t> rows);

struct TrainResult {
  RunReport report;
  FusionModel best_model;  // parameters at best_epoch
};

/// The training protocol on an already loaded dataset: per-epoch noisy and
/// shifted train rows, class-weighted loss, AdamW, test metrics per epoch.
TrainResult train_run(const PairedDataset& data, const RunConfig& cfg);

PairedDataset load_run_dataset(const RunConfig& cfg);
std::string dataset_source(const RunConfig& cfg);

struct SweepPoint {
  double lambda = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::size_t best_epoch = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::vector<RunReport> reports;  // one per point when retraining, else the single run
};

/// Runs every lambda of the grid; results are in grid order whatever the
/// number of jobs.
SweepResult run_sweep(const PairedDataset& data, const RunConfig& cfg,
                      const std::vector<double>& grid);

/// Analytic workload shapes for the memory table.
struct Workload {
  std::string dataset;
  std::string approach;
  std::size_t image_dim = 0;
  std::size_t text_dim = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_classes = 2;
};

/// Reference embedding workloads (CLIP 512/512, DINOv2 768 + LLaMA-2 4096 on
/// three dataset sizes).
std::vector<Workload> reference_workloads();

/// Model, train and test memory for one workload; timings left at zero.
EfficiencyRow analytic_row(const Workload& w, FusionKind kind, std::size_t batch_size = 64);

// Subcommands. Each writes its artifacts under cfg.out and returns normally
// only when they were all written.
GapReport cmd_gap(const RunConfig& cfg);
PcaResult cmd_pca(const RunConfig& cfg);
RunReport cmd_train(const RunConfig& cfg);
SweepResult cmd_sweep(const RunConfig& cfg);
std::vector<EfficiencyRow> cmd_benchmark(const RunConfig& cfg);
SynthResult cmd_synth(const RunConfig& cfg);

}  // namespace gapfuse
