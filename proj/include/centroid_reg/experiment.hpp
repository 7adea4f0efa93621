#pragma once

// Baseline (alpha = 0) versus regularised runs under one seed, and alpha
// sweeps. Both arms share initialisation and shuffles, so alpha is the only
// difference between them.

#include <cstdlib>
#include <future>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "centroid_reg/config.hpp"
#include "centroid_reg/dataset.hpp"
#include "centroid_reg/semantics.hpp"
#include "centroid_reg/trainer.hpp"

namespace centroid_reg {

/// Worker-thread cap from CENTROID_REG_THREADS; 1 when unset or invalid.
inline unsigned threads_from_env() {
  const char* raw = std::getenv("CENTROID_REG_THREADS");
  if (raw == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (end == raw || *end != '\0' || v < 1) return 1;
  return static_cast<unsigned>(std::min<long>(v, 64));
}

inline const std::set<std::string, std::less<>>& train_config_keys() {
  static const std::set<std::string, std::less<>> keys{
      "alpha",      "learning_rate", "batch_size", "epochs",   "seed",
      "optimizer",  "adam_beta1",    "adam_beta2", "adam_eps", "eval_every"};
  return keys;
}

/// Overlays the keys present in `cfg` onto `base`. Keys outside the training
/// set are ignored here so one file can also hold scenario keys.
inline TrainConfig apply_train_config(const KeyValueConfig& cfg, TrainConfig base = {}) {
  base.alpha = cfg.get_double("alpha", base.alpha);
  base.optimizer.learning_rate = cfg.get_double("learning_rate", base.optimizer.learning_rate);
  base.batch_size = cfg.get_u64("batch_size", base.batch_size);
  base.epochs = cfg.get_u64("epochs", base.epochs);
  base.seed = cfg.get_u64("seed", base.seed);
  if (auto opt = cfg.get("optimizer")) base.optimizer.kind = parse_optimizer(*opt);
  base.optimizer.beta1 = cfg.get_double("adam_beta1", base.optimizer.beta1);
  base.optimizer.beta2 = cfg.get_double("adam_beta2", base.optimizer.beta2);
  base.optimizer.eps = cfg.get_double("adam_eps", base.optimizer.eps);
  base.eval_every = cfg.get_u64("eval_every", base.eval_every);
  return base;
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"learning_rate", c.optimizer.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"optimizer", std::string(to_string(c.optimizer.kind))},
          {"adam_beta1", c.optimizer.beta1},
          {"adam_beta2", c.optimizer.beta2},
          {"adam_eps", c.optimizer.eps},
          {"eval_every", c.eval_every}};
}

struct ArmResult {
  double alpha = 0.0;
  TrainResult run;
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

struct ComparisonReport {
  TrainConfig config;
  ArmResult baseline;
  ArmResult regularized;

  double delta_final() const { return regularized.final_accuracy - baseline.final_accuracy; }
  double delta_best() const { return regularized.best_accuracy - baseline.best_accuracy; }
};

namespace detail {
inline ArmResult run_arm(const DatasetSplit& split, const ClassCentroids& centroids, TrainConfig config,
                         double alpha) {
  config.alpha = alpha;
  ArmResult arm;
  arm.alpha = alpha;
  arm.run = train(split, centroids, config);
  const auto& epochs = arm.run.history.epochs;
  bool have_best = false;
  for (const auto& e : epochs) {
    if (e.test_accuracy && (!have_best || *e.test_accuracy > arm.best_accuracy)) {
      arm.best_accuracy = *e.test_accuracy;
      arm.best_epoch = e.epoch;
      have_best = true;
    }
  }
  arm.final_accuracy = arm.run.history.final_accuracy().value_or(0.0);
  return arm;
}
}  // namespace detail

/// Runs alpha = 0 and alpha = config.alpha with everything else equal. With
/// threads >= 2 the arms train concurrently; the result does not depend on it.
inline ComparisonReport compare(const DatasetSplit& split, const ClassCentroids& centroids,
                                const TrainConfig& config, unsigned threads = 1) {
  config.validate();
  if (split.test.empty()) throw ValidationError("compare: test split is empty");
  ComparisonReport report{config, {}, {}};
  if (threads >= 2) {
    auto base = std::async(std::launch::async, [&] { return detail::run_arm(split, centroids, config, 0.0); });
    report.regularized = detail::run_arm(split, centroids, config, config.alpha);
    report.baseline = base.get();
  } else {
    report.baseline = detail::run_arm(split, centroids, config, 0.0);
    report.regularized = detail::run_arm(split, centroids, config, config.alpha);
  }
  return report;
}

struct ReportPaths {
  std::optional<std::string> baseline_history;
  std::optional<std::string> regularized_history;
  std::optional<std::string> baseline_model;
  std::optional<std::string> regularized_model;
};

inline nlohmann::json report_to_json(const ComparisonReport& r, const ReportPaths& paths = {}) {
  auto arm = [](const ArmResult& a, const std::optional<std::string>& history,
                const std::optional<std::string>& model) {
    nlohmann::json j = {{"alpha", a.alpha},
                        {"final_acc", a.final_accuracy},
                        {"best_acc", a.best_accuracy},
                        {"best_epoch", a.best_epoch},
                        {"final_mean_centroid_distance",
                         a.run.history.epochs.empty() ? 0.0 : a.run.history.epochs.back().mean_centroid_distance}};
    j["history_path"] = history ? nlohmann::json(*history) : nlohmann::json(nullptr);
    j["model_path"] = model ? nlohmann::json(*model) : nlohmann::json(nullptr);
    return j;
  };
  return {{"baseline", arm(r.baseline, paths.baseline_history, paths.baseline_model)},
          {"regularized", arm(r.regularized, paths.regularized_history, paths.regularized_model)},
          {"delta_final", r.delta_final()},
          {"delta_best", r.delta_best()},
          {"config", config_to_json(r.config)}};
}

struct SweepRow {
  double alpha = 0.0;
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  double final_mean_centroid_distance = 0.0;
};

/// One training run per alpha, all with config.seed.
inline std::vector<SweepRow> sweep_alpha(const DatasetSplit& split, const ClassCentroids& centroids,
                                         const TrainConfig& config, const std::vector<double>& alphas,
                                         unsigned threads = 1) {
  if (alphas.empty()) throw ValidationError("sweep_alpha: no alpha values given");
  for (double a : alphas) {
    if (!(a >= 0.0)) throw ValidationError("sweep_alpha: alpha values must be >= 0");
  }
  config.validate();
  auto to_row = [](const ArmResult& arm) {
    return SweepRow{arm.alpha, arm.final_accuracy, arm.best_accuracy,
                    arm.run.history.epochs.back().mean_centroid_distance};
  };
  std::vector<SweepRow> rows(alphas.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(alphas.size())));
  for (std::size_t start = 0; start < alphas.size(); start += workers) {
    std::vector<std::future<ArmResult>> jobs;
    const std::size_t stop = std::min(alphas.size(), start + workers);
    for (std::size_t i = start; i < stop; ++i) {
      jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                [&, i] { return detail::run_arm(split, centroids, config, alphas[i]); }));
    }
    for (std::size_t i = start; i < stop; ++i) rows[i] = to_row(jobs[i - start].get());
  }
  return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "alpha,final_acc,best_acc,final_mean_centroid_distance\n";
  for (const auto& r : rows) {
    out << format_double(r.alpha) << ',' << format_double(r.final_accuracy) << ','
        << format_double(r.best_accuracy) << ',' << format_double(r.final_mean_centroid_distance) << '\n';
  }
  return out.str();
}

}  // namespace centroid_reg
