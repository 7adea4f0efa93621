#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "centroid_reg/dataset.hpp"
#include "centroid_reg/errors.hpp"
#include "centroid_reg/model.hpp"
#include "centroid_reg/numerics.hpp"
#include "centroid_reg/optimizer.hpp"
#include "centroid_reg/semantics.hpp"

namespace centroid_reg {

/// Defaults follow the reference protocol: 100 epochs, batches of 64,
/// learning rate 1e-4, alpha 1e-2. The optimizer choice (Adam) is ours.
struct TrainConfig {
  double alpha = 1e-2;
  OptimizerSettings optimizer{};
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be a finite value >= 0");
    if (!(optimizer.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
    if (epochs == 0) throw ValidationError("epochs must be at least 1");
    if (eval_every == 0) throw ValidationError("eval_every must be at least 1");
  }

  friend bool operator==(const TrainConfig& a, const TrainConfig& b) {
    return a.alpha == b.alpha && a.optimizer.kind == b.optimizer.kind &&
           a.optimizer.learning_rate == b.optimizer.learning_rate && a.optimizer.beta1 == b.optimizer.beta1 &&
           a.optimizer.beta2 == b.optimizer.beta2 && a.optimizer.eps == b.optimizer.eps &&
           a.batch_size == b.batch_size && a.epochs == b.epochs && a.seed == b.seed &&
           a.eval_every == b.eval_every;
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double j_ce = 0.0;
  double j_reg = 0.0;
  double j_total = 0.0;
  /// Absent on epochs skipped by eval_every.
  std::optional<double> test_accuracy;
  double mean_centroid_distance = 0.0;
  double wall_time_ms = 0.0;

  /// Equality that ignores wall time.
  bool same_values(const EpochMetrics& o) const {
    return epoch == o.epoch && j_ce == o.j_ce && j_reg == o.j_reg && j_total == o.j_total &&
           test_accuracy == o.test_accuracy && mean_centroid_distance == o.mean_centroid_distance;
  }
};

struct MetricHistory {
  std::vector<EpochMetrics> epochs;

  bool same_values(const MetricHistory& o) const {
    return epochs.size() == o.epochs.size() &&
           std::equal(epochs.begin(), epochs.end(), o.epochs.begin(),
                      [](const EpochMetrics& a, const EpochMetrics& b) { return a.same_values(b); });
  }

  std::optional<double> final_accuracy() const {
    for (auto it = epochs.rbegin(); it != epochs.rend(); ++it) {
      if (it->test_accuracy) return it->test_accuracy;
    }
    return std::nullopt;
  }

  std::optional<double> best_accuracy() const {
    std::optional<double> best;
    for (const auto& e : epochs) {
      if (e.test_accuracy && (!best || *e.test_accuracy > *best)) best = e.test_accuracy;
    }
    return best;
  }
};

struct EvaluationResult {
  double accuracy = 0.0;
  std::vector<std::size_t> per_class_total;
  std::vector<std::size_t> per_class_correct;

  /// Absent for classes with no records in the evaluated set.
  std::optional<double> class_accuracy(std::size_t c) const {
    if (per_class_total[c] == 0) return std::nullopt;
    return static_cast<double>(per_class_correct[c]) / static_cast<double>(per_class_total[c]);
  }
};

/// Argmax-logit accuracy; ties go to the lowest class index. Takes the model
/// by value so evaluation can never feed back into training state.
inline EvaluationResult evaluate(RegularizedHeadModel model, const EmbeddingDataset& data) {
  if (data.empty()) throw ValidationError("evaluate: dataset is empty");
  if (data.dimension != model.d_in() || data.num_classes != model.n_classes()) {
    throw ShapeError("evaluate: dataset is " + std::to_string(data.dimension) + "-dimensional with " +
                     std::to_string(data.num_classes) + " classes, model expects " +
                     std::to_string(model.d_in()) + " and " + std::to_string(model.n_classes()));
  }
  const auto pass = forward(model, data.image_matrix());
  EvaluationResult out{0.0, std::vector<std::size_t>(data.num_classes, 0),
                       std::vector<std::size_t>(data.num_classes, 0)};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto label = data.records[i].label;
    ++out.per_class_total[label];
    if (argmax(pass.logits.row(i)) == label) {
      ++correct;
      ++out.per_class_correct[label];
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return out;
}

/// Mean over records of ||x_i - C_{y_i}||_2, with x the model's embedding.
inline double mean_centroid_distance(const RegularizedHeadModel& model, const EmbeddingDataset& data,
                                     const ClassCentroids& centroids) {
  check_compatible(model, centroids);
  if (data.empty()) throw ValidationError("mean_centroid_distance: dataset is empty");
  const auto pass = forward(model, data.image_matrix());
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += std::sqrt(squared_l2_distance(pass.embeddings.row(i), centroids.centroid(data.records[i].label)));
  }
  return total / static_cast<double>(data.size());
}

struct TrainResult {
  RegularizedHeadModel model;
  MetricHistory history;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Mini-batch training of projection and head on J_ce + alpha * J_reg.
///
/// One SeededRng drives everything: model initialisation first, then one
/// full permutation of the training set per epoch. The final short batch is
/// kept. Test data is only touched through evaluate().
inline TrainResult train(const DatasetSplit& split, const ClassCentroids& centroids, const TrainConfig& config,
                         const EpochCallback& on_epoch = {}) {
  config.validate();
  validate(split);
  validate_for_training(split.train);
  validate(centroids);
  const auto& train_set = split.train;
  if (centroids.num_classes() != train_set.num_classes) {
    throw ShapeError("centroids cover " + std::to_string(centroids.num_classes()) + " classes, data has " +
                     std::to_string(train_set.num_classes));
  }

  SeededRng rng(config.seed);
  TrainResult result{RegularizedHeadModel::initialize(train_set.dimension, centroids.dimension(),
                                                      train_set.num_classes, rng),
                     {}};
  auto& model = result.model;
  ModelOptimizer optimizer(config.optimizer);

  const Matrix features = train_set.image_matrix();
  const auto labels = train_set.labels();
  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));

    double sum_ce = 0.0, sum_reg = 0.0, sum_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t b = std::min(config.batch_size, n - start);
      Matrix batch(b, features.cols());
      std::vector<ClassIndex> batch_labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        const auto src = features.row(order[start + i]);
        std::copy(src.begin(), src.end(), batch.row(i).begin());
        batch_labels[i] = labels[order[start + i]];
      }
      auto step = backward(model, batch, batch_labels, centroids, config.alpha);
      if (!std::isfinite(step.loss.j_total)) throw DivergenceError(epoch, batch_index, "non-finite loss");
      if (!step.grads.all_finite()) throw DivergenceError(epoch, batch_index, "non-finite gradient");
      optimizer.step(model, step.grads);
      if (!model.all_finite()) throw DivergenceError(epoch, batch_index, "non-finite parameter");

      const double w = static_cast<double>(b);
      sum_ce += w * step.loss.j_ce;
      sum_reg += w * step.loss.j_reg;
      sum_total += w * step.loss.j_total;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.j_ce = sum_ce / static_cast<double>(n);
    m.j_reg = sum_reg / static_cast<double>(n);
    m.j_total = sum_total / static_cast<double>(n);
    m.mean_centroid_distance = mean_centroid_distance(model, train_set, centroids);
    if (!split.test.empty() && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      m.test_accuracy = evaluate(model, split.test).accuracy;
    }
    m.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    result.history.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

// ---------------------------------------------------------------------------
// History CSV: epoch,j_ce,j_reg,j_total,test_accuracy,mean_centroid_distance,wall_time_ms
// Values are printed with 17 significant digits so they read back exactly.
// An empty test_accuracy field marks an epoch without evaluation.

inline constexpr std::string_view kHistoryCsvHeader =
    "epoch,j_ce,j_reg,j_total,test_accuracy,mean_centroid_distance,wall_time_ms";

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string history_to_csv(const MetricHistory& h) {
  std::ostringstream out;
  out << kHistoryCsvHeader << '\n';
  for (const auto& e : h.epochs) {
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.3f", e.wall_time_ms);
    out << e.epoch << ',' << format_double(e.j_ce) << ',' << format_double(e.j_reg) << ','
        << format_double(e.j_total) << ',' << (e.test_accuracy ? format_double(*e.test_accuracy) : "") << ','
        << format_double(e.mean_centroid_distance) << ',' << wall << '\n';
  }
  return out.str();
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(FormatError::Kind::malformed_text,
                      "cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
  }
  return v;
}

inline MetricHistory history_from_csv(std::string_view text) {
  MetricHistory h;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kHistoryCsvHeader) {
        throw FormatError(FormatError::Kind::malformed_text, "history CSV has an unexpected header");
      }
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 7) {
      throw FormatError(FormatError::Kind::malformed_text,
                        "history CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, expected 7");
    }
    EpochMetrics e;
    e.epoch = static_cast<std::size_t>(parse_double(fields[0], "epoch"));
    e.j_ce = parse_double(fields[1], "j_ce");
    e.j_reg = parse_double(fields[2], "j_reg");
    e.j_total = parse_double(fields[3], "j_total");
    if (!fields[4].empty()) e.test_accuracy = parse_double(fields[4], "test_accuracy");
    e.mean_centroid_distance = parse_double(fields[5], "mean_centroid_distance");
    e.wall_time_ms = parse_double(fields[6], "wall_time_ms");
    h.epochs.push_back(e);
  }
  return h;
}

inline void save_history(const MetricHistory& h, const std::filesystem::path& path) {
  write_file_atomic(path, history_to_csv(h));
}

inline MetricHistory load_history(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return history_from_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace centroid_reg
