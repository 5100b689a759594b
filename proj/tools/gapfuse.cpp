// gapfuse: modality-gap diagnostics, alignment and fusion training on
// precomputed embeddings.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gapfuse/error.hpp"
#include "gapfuse/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> lambda;
  bool retrain = false;
  bool si = false;
  bool paper_shapes = false;
  std::optional<std::size_t> jobs;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value run configuration file");
  cmd->add_option("--seed", f.seed, "training and data seed (train.seed)");
  cmd->add_option("--out", f.out, "output directory (out)");
  cmd->add_option("--lambda", f.lambda, "gap shift strength (align.lambda)");
  cmd->allow_extras();
  cmd->footer("Any config key can be given as --<key>=<value>, e.g. --train.epochs=10.");
}

/// Turns leftover "--a.b=v" / "--a.b v" arguments into key/value pairs.
std::vector<std::pair<std::string, std::string>> dotted_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() <= 2) {
      throw gapfuse::ConfigError("unexpected argument '" + arg + "'");
    }
    std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      throw gapfuse::ConfigError("option '" + arg + "' needs a value");
    }
  }
  return out;
}

gapfuse::RunConfig resolve_config(const CLI::App* cmd, const CommonFlags& f) {
  gapfuse::KeyValues kv;
  if (!f.config.empty()) kv = gapfuse::KeyValues::load(f.config);
  for (const auto& [k, v] : dotted_overrides(cmd->remaining())) kv.set(k, v);
  if (f.seed) kv.set("train.seed", std::to_string(*f.seed));
  if (f.out) kv.set("out", *f.out);
  if (f.lambda) kv.set("align.lambda", std::to_string(*f.lambda));
  if (f.retrain) kv.set("sweep.retrain", "true");
  if (f.si) kv.set("output.si", "true");
  if (f.paper_shapes) kv.set("benchmark.paper_shapes", "true");
  if (f.jobs) kv.set("sweep.jobs", std::to_string(*f.jobs));
  return gapfuse::RunConfig::from_key_values(kv);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gapfuse: embedding fusion with modality-gap alignment"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto* gap = app.add_subcommand("gap", "measure the modality gap and export PCA coordinates");
  auto* pca = app.add_subcommand("pca", "export 2-D PCA coordinates (and aligned ones when lambda != 0)");
  auto* train = app.add_subcommand("train", "train a fusion classifier and write report + checkpoint");
  auto* sweep = app.add_subcommand("sweep", "evaluate a lambda grid and write sweep.csv");
  auto* bench = app.add_subcommand("benchmark", "memory and timing table");
  auto* synth = app.add_subcommand("synth", "write a synthetic paired dataset with a manifest");
  for (auto* cmd : {gap, pca, train, sweep, bench, synth}) add_common(cmd, flags);
  sweep->add_flag("--retrain", flags.retrain, "retrain for every lambda instead of shifting test data");
  sweep->add_option("--jobs", flags.jobs, "parallel sweep workers");
  bench->add_flag("--si", flags.si, "decimal megabytes instead of MiB");
  bench->add_flag("--paper-shapes", flags.paper_shapes, "analytic table for the reference workloads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const CLI::App* cmd = app.get_subcommands().front();
    const auto cfg = resolve_config(cmd, flags);
    print_warnings(cfg.align.warnings());

    if (cmd == gap) {
      const auto g = gapfuse::cmd_gap(cfg);
      std::printf("gap_scalar       %.6f\n", g.gap_scalar);
      std::printf("gap_vector_norm  %.6f\n", g.gap_vector_norm());
      std::printf("image_variance   %.6g\n", g.image_variance);
      std::printf("text_variance    %.6g\n", g.text_variance);
      std::printf("cross_cosine     %.6f\n", g.mean_cross_modal_cosine);
    } else if (cmd == pca) {
      const auto p = gapfuse::cmd_pca(cfg);
      for (std::size_t k = 0; k < p.explained_variance_ratio.size(); ++k) {
        std::printf("pc%zu explained variance ratio %.4f\n", k + 1, p.explained_variance_ratio[k]);
      }
    } else if (cmd == train) {
      const auto r = gapfuse::cmd_train(cfg);
      for (const auto& e : r.epochs) {
        std::printf("epoch %3zu  loss %.5f  train_acc %.4f  test_acc %.4f  test_f1 %.4f\n", e.epoch,
                    e.train_loss, e.train_accuracy, e.test_accuracy, e.test_f1);
      }
      std::printf("best epoch %zu: f1 %.4f (accuracy %.4f), best accuracy %.4f\n", r.best_epoch,
                  r.best_f1, r.accuracy_at_best_epoch, r.best_accuracy);
    } else if (cmd == sweep) {
      const auto s = gapfuse::cmd_sweep(cfg);
      std::printf("%8s  %8s  %8s  %s\n", "lambda", "accuracy", "f1", "best_epoch");
      for (const auto& p : s.points) {
        std::printf("%8.2f  %8.4f  %8.4f  %zu\n", p.lambda, p.accuracy, p.f1, p.best_epoch);
      }
    } else if (cmd == bench) {
      const auto rows = gapfuse::cmd_benchmark(cfg);
      std::cout << gapfuse::format_efficiency_table(rows, cfg.si_units, !cfg.paper_shapes);
    } else if (cmd == synth) {
      const auto s = gapfuse::cmd_synth(cfg);
      std::printf("rows %zu  image_variance %.4g  text_variance %.4g  gap %.4f\n", s.dataset.rows(),
                  s.achieved_image_variance, s.achieved_text_variance, s.achieved_gap);
    }
    std::printf("artifacts written to %s\n", cfg.out.string().c_str());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
