// centroid_reg command-line tool.
//
// Exit codes: 0 success, 1 usage error, 2 data or validation error. Every
// failure writes exactly one JSON line to stderr:
//   {"error":"<code>","message":"...","command":"<subcommand>"}

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "centroid_reg/centroid_reg.hpp"

namespace fs = std::filesystem;
using namespace centroid_reg;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void print_error(const std::string& code, const std::string& message, const std::string& command) {
  nlohmann::json j = {{"error", code}, {"message", message}, {"command", command}};
  std::cerr << j.dump() << std::endl;
}

/// Training flags shared by train, compare and sweep. Unset flags fall back
/// to the config file, then to the built-in defaults.
struct TrainFlags {
  std::optional<std::string> config;
  std::optional<double> alpha;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> optimizer;
  std::optional<std::size_t> eval_every;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value file with training settings");
    app->add_option("--alpha", alpha, "regularization weight (default 1e-2)");
    app->add_option("--lr", lr, "learning rate (default 1e-4)");
    app->add_option("--batch", batch, "mini-batch size (default 64)");
    app->add_option("--epochs", epochs, "training epochs (default 100)");
    app->add_option("--seed", seed, "seed for initialisation and shuffling (default 0)");
    app->add_option("--optimizer", optimizer, "adam or sgd (default adam)")
        ->check(CLI::IsMember({"adam", "sgd"}));
    app->add_option("--eval-every", eval_every, "evaluate the test set every N epochs (default 1)");
  }

  TrainConfig resolve() const {
    KeyValueConfig cfg;
    if (config) {
      cfg = KeyValueConfig::load(*config);
      cfg.reject_unknown(train_config_keys());
    }
    auto c = apply_train_config(cfg);
    if (alpha) c.alpha = *alpha;
    if (lr) c.optimizer.learning_rate = *lr;
    if (batch) c.batch_size = *batch;
    if (epochs) c.epochs = *epochs;
    if (seed) c.seed = *seed;
    if (optimizer) c.optimizer.kind = parse_optimizer(*optimizer);
    if (eval_every) c.eval_every = *eval_every;
    c.validate();
    return c;
  }
};

struct Inputs {
  std::string train, test, centroids;

  void attach(CLI::App* app, bool test_required) {
    app->add_option("--train", train, "training set (EMBD or JSON lines)")->required();
    auto* t = app->add_option("--test", test, "test set (EMBD or JSON lines)");
    if (test_required) t->required();
    app->add_option("--centroids", centroids, "class centroids (EMBC)")->required();
  }

  std::pair<DatasetSplit, ClassCentroids> load() const {
    DatasetSplit split;
    split.train = load_dataset(train);
    split.test = test.empty() ? empty_like(split.train) : load_dataset(test);
    auto c = load_centroids(centroids);
    return {std::move(split), std::move(c)};
  }
};

std::string fmt(double v) { return format_double(v); }

void print_epoch(const EpochMetrics& m, std::size_t total) {
  std::printf("epoch %zu/%zu j_ce=%.6f j_reg=%.6f j_total=%.6f", m.epoch, total, m.j_ce, m.j_reg, m.j_total);
  if (m.test_accuracy) std::printf(" test_acc=%.4f", *m.test_accuracy);
  std::printf(" centroid_dist=%.6f\n", m.mean_centroid_distance);
}

fs::path sibling(const fs::path& report, const std::string& suffix) {
  auto stem = report.stem().string();
  return report.parent_path() / (stem + suffix);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Centroid-regularised classifier training over precomputed embeddings", "centroid_reg"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  // generate
  std::optional<std::string> scenario_path;
  std::optional<std::uint64_t> scenario_seed;
  std::string out_train, out_test;
  auto* generate_cmd = app.add_subcommand("generate", "write a synthetic train/test pair");
  generate_cmd->add_option("--scenario", scenario_path, "key = value scenario file (default: built-in reference scenario)");
  generate_cmd->add_option("--seed", scenario_seed, "override the scenario seed");
  generate_cmd->add_option("--out-train", out_train, "output path (.jsonl for JSON lines, EMBD otherwise)")->required();
  generate_cmd->add_option("--out-test", out_test, "output path (.jsonl for JSON lines, EMBD otherwise)")->required();

  // centroids
  std::string centroid_train, centroid_out;
  bool normalize_text = false;
  auto* centroids_cmd = app.add_subcommand("centroids", "average text embeddings per class");
  centroids_cmd->add_option("--train", centroid_train, "training set")->required();
  centroids_cmd->add_option("--out", centroid_out, "output EMBC path")->required();
  centroids_cmd->add_flag("--normalize-text", normalize_text, "scale text embeddings to unit length before averaging");

  // train
  Inputs train_inputs;
  TrainFlags train_flags;
  std::string out_model, out_history;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train one model");
  train_inputs.attach(train_cmd, false);
  train_flags.attach(train_cmd);
  train_cmd->add_option("--out-model", out_model, "output EMBM path")->required();
  train_cmd->add_option("--out-history", out_history, "output metric history CSV")->required();
  train_cmd->add_flag("--quiet", quiet, "no per-epoch progress");

  // eval
  std::string eval_model, eval_data;
  bool eval_json = false;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy of a saved model on a dataset");
  eval_cmd->add_option("--model", eval_model, "EMBM model")->required();
  eval_cmd->add_option("--data", eval_data, "dataset")->required();
  eval_cmd->add_flag("--json", eval_json, "print the result as one JSON object");

  // compare
  Inputs compare_inputs;
  TrainFlags compare_flags;
  std::string out_report;
  auto* compare_cmd = app.add_subcommand("compare", "baseline (alpha = 0) against regularised training");
  compare_inputs.attach(compare_cmd, true);
  compare_flags.attach(compare_cmd);
  compare_cmd->add_option("--out-report", out_report,
                          "report JSON; histories and models are written next to it")
      ->required();

  // sweep
  Inputs sweep_inputs;
  TrainFlags sweep_flags;
  std::vector<double> sweep_alphas;
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "train once per alpha");
  sweep_inputs.attach(sweep_cmd, true);
  sweep_flags.attach(sweep_cmd);
  sweep_cmd->add_option("--alphas", sweep_alphas, "comma-separated alpha values")->required()->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "output CSV")->required();

  // inspect
  std::string inspect_data;
  auto* inspect_cmd = app.add_subcommand("inspect", "summarise a dataset");
  inspect_cmd->add_option("--data", inspect_data, "dataset")->required();

  // plot
  std::vector<std::string> plot_histories, plot_labels;
  std::string plot_out, plot_title = "Test accuracy throughout the training epochs";
  auto* plot_cmd = app.add_subcommand("plot", "accuracy-per-epoch chart from history CSVs");
  plot_cmd->add_option("--history", plot_histories, "history CSV (repeatable)")->required();
  plot_cmd->add_option("--label", plot_labels, "curve label, one per --history");
  plot_cmd->add_option("--title", plot_title, "chart title");
  plot_cmd->add_option("--out", plot_out, "output SVG")->required();

  std::string command;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    command = subs.empty() ? "" : subs.front()->get_name();
    std::cout << (subs.empty() ? app.help() : subs.front()->help());
    print_error("usage", e.what(), command);
    return kExitUsage;
  }
  command = app.get_subcommands().front()->get_name();

  try {
    if (*generate_cmd) {
      SynthScenario s = scenario_path ? scenario_from_config(KeyValueConfig::load(*scenario_path))
                                      : reference_scenario();
      if (scenario_seed) s.seed = *scenario_seed;
      const auto split = generate(s);
      save_dataset(split.train, out_train);
      save_dataset(split.test, out_test);
      std::printf("wrote %zu train and %zu test records (%zu classes, D=%zu)\n", split.train.size(),
                  split.test.size(), split.train.num_classes, split.train.dimension);
    } else if (*centroids_cmd) {
      const auto d = load_dataset(centroid_train);
      const auto c = compute_class_centroids(d, CentroidOptions{normalize_text});
      save_centroids(c, centroid_out);
      std::printf("wrote %zu centroids of dimension %zu\n", c.num_classes(), c.dimension());
      for (std::size_t l = 0; l < c.num_classes(); ++l) {
        std::printf("  %zu %s support=%llu\n", l, d.class_names[l].c_str(),
                    static_cast<unsigned long long>(c.support_counts[l]));
      }
    } else if (*train_cmd) {
      const auto config = train_flags.resolve();
      const auto [split, c] = train_inputs.load();
      EpochCallback progress;
      if (!quiet) progress = [&](const EpochMetrics& m) { print_epoch(m, config.epochs); };
      const auto result = train(split, c, config, progress);
      save_model(result.model, out_model);
      save_history(result.history, out_history);
      const auto final_acc = result.history.final_accuracy();
      std::printf("final_test_accuracy=%s final_mean_centroid_distance=%s\n",
                  final_acc ? fmt(*final_acc).c_str() : "n/a",
                  fmt(result.history.epochs.back().mean_centroid_distance).c_str());
    } else if (*eval_cmd) {
      const auto model = load_model(eval_model);
      const auto d = load_dataset(eval_data);
      const auto r = evaluate(model, d);
      if (eval_json) {
        nlohmann::json classes = nlohmann::json::array();
        for (std::size_t l = 0; l < d.num_classes; ++l) {
          const auto acc = r.class_accuracy(l);
          classes.push_back({{"class", l},
                             {"name", d.class_names[l]},
                             {"correct", r.per_class_correct[l]},
                             {"total", r.per_class_total[l]},
                             {"accuracy", acc ? nlohmann::json(*acc) : nlohmann::json(nullptr)}});
        }
        std::cout << nlohmann::json{{"accuracy", r.accuracy}, {"records", d.size()}, {"classes", classes}}.dump()
                  << '\n';
      } else {
        std::printf("accuracy %s (%zu records)\n", fmt(r.accuracy).c_str(), d.size());
        std::printf("%-6s %-24s %8s %8s %10s\n", "class", "name", "correct", "total", "accuracy");
        for (std::size_t l = 0; l < d.num_classes; ++l) {
          const auto acc = r.class_accuracy(l);
          if (acc) {
            std::printf("%-6zu %-24s %8zu %8zu %10.4f\n", l, d.class_names[l].c_str(), r.per_class_correct[l],
                        r.per_class_total[l], *acc);
          } else {
            std::printf("%-6zu %-24s %8zu %8zu %10s\n", l, d.class_names[l].c_str(), r.per_class_correct[l],
                        r.per_class_total[l], "-");
          }
        }
      }
    } else if (*compare_cmd) {
      const auto config = compare_flags.resolve();
      const auto [split, c] = compare_inputs.load();
      const auto report = compare(split, c, config, threads_from_env());
      const fs::path report_path(out_report);
      const ReportPaths paths{sibling(report_path, ".baseline.csv").string(),
                              sibling(report_path, ".regularized.csv").string(),
                              sibling(report_path, ".baseline.embm").string(),
                              sibling(report_path, ".regularized.embm").string()};
      save_history(report.baseline.run.history, *paths.baseline_history);
      save_history(report.regularized.run.history, *paths.regularized_history);
      save_model(report.baseline.run.model, *paths.baseline_model);
      save_model(report.regularized.run.model, *paths.regularized_model);
      write_file_atomic(report_path, report_to_json(report, paths).dump(2) + "\n");
      std::printf("baseline    alpha=%s final_acc=%s best_acc=%s\n", fmt(report.baseline.alpha).c_str(),
                  fmt(report.baseline.final_accuracy).c_str(), fmt(report.baseline.best_accuracy).c_str());
      std::printf("regularized alpha=%s final_acc=%s best_acc=%s\n", fmt(report.regularized.alpha).c_str(),
                  fmt(report.regularized.final_accuracy).c_str(), fmt(report.regularized.best_accuracy).c_str());
      std::printf("delta_final=%s delta_best=%s\n", fmt(report.delta_final()).c_str(),
                  fmt(report.delta_best()).c_str());
    } else if (*sweep_cmd) {
      const auto config = sweep_flags.resolve();
      const auto [split, c] = sweep_inputs.load();
      const auto rows = sweep_alpha(split, c, config, sweep_alphas, threads_from_env());
      const auto csv = sweep_to_csv(rows);
      write_file_atomic(fs::path(sweep_out), csv);
      std::cout << csv;
    } else if (*inspect_cmd) {
      const auto d = load_dataset(inspect_data);
      const auto counts = d.class_counts();
      const auto texts = d.text_counts_per_class();
      std::printf("D=%zu\nN=%zu\nnum_classes=%zu\n", d.dimension, d.size(), d.num_classes);
      std::printf("%-6s %-24s %8s %8s\n", "class", "name", "records", "texts");
      for (std::size_t l = 0; l < d.num_classes; ++l) {
        std::printf("%-6zu %-24s %8zu %8zu\n", l, d.class_names[l].c_str(), counts[l], texts[l]);
      }
    } else if (*plot_cmd) {
      if (!plot_labels.empty() && plot_labels.size() != plot_histories.size()) {
        print_error("usage", "--label must be given once per --history", command);
        return kExitUsage;
      }
      std::vector<PlotSeries> series;
      for (std::size_t i = 0; i < plot_histories.size(); ++i) {
        const auto label = plot_labels.empty() ? fs::path(plot_histories[i]).stem().string() : plot_labels[i];
        series.push_back(series_from_history(load_history(plot_histories[i]), label));
      }
      write_file_atomic(fs::path(plot_out), accuracy_svg(series, plot_title));
      std::printf("wrote %s\n", plot_out.c_str());
    }
  } catch (const Error& e) {
    print_error(e.code(), e.what(), command);
    return kExitData;
  } catch (const std::exception& e) {
    print_error("internal", e.what(), command);
    return kExitData;
  }
  return 0;
}
