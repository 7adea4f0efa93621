#pragma once

// Frozen features h -> trainable projection x = W1 h + b1 -> head
// logits = W2 x + b2. The projection output x is what the centroid
// regulariser acts on; the head is trained with softmax cross-entropy.
//
//   J_ce    = mean_i  -log softmax(logits_i)[y_i]
//   J_reg   = mean_i  ||x_i - C_{y_i}||^2
//   J_total = J_ce + alpha * J_reg
//
// J_reg is averaged over the batch rather than summed so that alpha keeps the
// same meaning for any batch size.
//
// EMBM checkpoint v1 (little-endian):
//   "EMBM" | version u16 = 1 | d_in u32 | d_emb u32 | n_classes u32 | payload_crc32 u32
//   | W1 (d_emb x d_in) | b1 (d_emb) | W2 (n_classes x d_emb) | b2 (n_classes), all f64 row-major

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "centroid_reg/binary_io.hpp"
#include "centroid_reg/dataset.hpp"
#include "centroid_reg/errors.hpp"
#include "centroid_reg/numerics.hpp"
#include "centroid_reg/semantics.hpp"

namespace centroid_reg {

inline constexpr std::uint16_t kEmbmVersion = 1;
inline constexpr std::size_t kEmbmHeaderSize = 4 + 2 + 4 + 4 + 4 + 4;

struct RegularizedHeadModel {
  Matrix w1;               // d_emb x d_in
  std::vector<double> b1;  // d_emb
  Matrix w2;               // n_classes x d_emb
  std::vector<double> b2;  // n_classes

  RegularizedHeadModel() = default;
  RegularizedHeadModel(std::size_t d_in, std::size_t d_emb, std::size_t n_classes)
      : w1(d_emb, d_in), b1(d_emb, 0.0), w2(n_classes, d_emb), b2(n_classes, 0.0) {}

  std::size_t d_in() const noexcept { return w1.cols(); }
  std::size_t d_emb() const noexcept { return w1.rows(); }
  std::size_t n_classes() const noexcept { return w2.rows(); }

  /// W1 starts as an identity block plus N(0, 1e-3) noise so training begins
  /// close to passing the frozen features through unchanged. W2 is
  /// N(0, 1/sqrt(d_emb)); biases are zero. Draw order: W1 then W2, row-major.
  static RegularizedHeadModel initialize(std::size_t d_in, std::size_t d_emb, std::size_t n_classes,
                                         SeededRng& rng) {
    if (d_in == 0 || d_emb == 0 || n_classes == 0) {
      throw ValidationError("model dimensions must be positive");
    }
    RegularizedHeadModel m(d_in, d_emb, n_classes);
    for (std::size_t r = 0; r < d_emb; ++r) {
      for (std::size_t c = 0; c < d_in; ++c) {
        m.w1(r, c) = (r == c ? 1.0 : 0.0) + rng.gaussian(1e-3);
      }
    }
    const double head_scale = 1.0 / std::sqrt(static_cast<double>(d_emb));
    for (double& v : m.w2.values()) v = rng.gaussian(head_scale);
    return m;
  }

  std::array<std::span<double>, 4> blocks() { return {w1.values(), b1, w2.values(), b2}; }
  std::array<std::span<const double>, 4> blocks() const { return {w1.values(), b1, w2.values(), b2}; }

  bool all_finite() const {
    for (auto block : blocks()) {
      for (double v : block) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const RegularizedHeadModel&, const RegularizedHeadModel&) = default;
};

struct Gradients {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;

  std::array<std::span<const double>, 4> blocks() const { return {w1.values(), b1, w2.values(), b2}; }

  bool all_finite() const {
    for (auto block : blocks()) {
      for (double v : block) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }
};

struct LossBreakdown {
  double j_ce = 0.0;
  double j_reg = 0.0;
  double j_total = 0.0;
  double alpha = 0.0;
};

struct ForwardPass {
  Matrix embeddings;  // B x d_emb
  Matrix logits;      // B x n_classes
};

inline ForwardPass forward(const RegularizedHeadModel& model, const Matrix& features) {
  if (features.cols() != model.d_in()) {
    throw ShapeError("forward: features are " + features.shape() + " but the model expects " +
                     std::to_string(model.d_in()) + " columns");
  }
  ForwardPass out{matmul_transposed(features, model.w1), Matrix()};
  for (std::size_t i = 0; i < out.embeddings.rows(); ++i) {
    auto row = out.embeddings.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] += model.b1[k];
  }
  out.logits = matmul_transposed(out.embeddings, model.w2);
  for (std::size_t i = 0; i < out.logits.rows(); ++i) {
    auto row = out.logits.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] += model.b2[k];
  }
  return out;
}

namespace detail {
inline void check_labels(std::span<const ClassIndex> labels, std::size_t batch, std::size_t n_classes,
                         const char* who) {
  if (labels.size() != batch) {
    throw ShapeError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(batch));
  }
  if (batch == 0) throw ValidationError(std::string(who) + ": empty batch");
  for (auto l : labels) {
    if (l >= n_classes) {
      throw ValidationError(std::string(who) + ": label " + std::to_string(l) + " out of range for " +
                            std::to_string(n_classes) + " classes");
    }
  }
}
}  // namespace detail

/// Mean softmax cross-entropy, via log-sum-exp.
inline double cross_entropy(const Matrix& logits, std::span<const ClassIndex> labels) {
  detail::check_labels(labels, logits.rows(), logits.cols(), "cross_entropy");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    total += log_sum_exp(row) - row[labels[i]];
  }
  return total / static_cast<double>(logits.rows());
}

/// Mean squared distance between each embedding and its class centroid.
inline double reg_loss(const Matrix& embeddings, std::span<const ClassIndex> labels,
                       const ClassCentroids& centroids) {
  if (centroids.dimension() != embeddings.cols()) {
    throw ShapeError("reg_loss: embeddings have " + std::to_string(embeddings.cols()) +
                     " columns but centroids have dimension " + std::to_string(centroids.dimension()));
  }
  detail::check_labels(labels, embeddings.rows(), centroids.num_classes(), "reg_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    total += squared_l2_distance(embeddings.row(i), centroids.centroid(labels[i]));
  }
  return total / static_cast<double>(embeddings.rows());
}

inline LossBreakdown total_loss(double j_ce, double j_reg, double alpha) {
  if (!(alpha >= 0.0)) throw ValidationError("alpha must be non-negative, got " + std::to_string(alpha));
  return {j_ce, j_reg, j_ce + alpha * j_reg, alpha};
}

inline void check_compatible(const RegularizedHeadModel& model, const ClassCentroids& centroids) {
  if (centroids.dimension() != model.d_emb() || centroids.num_classes() != model.n_classes()) {
    throw ShapeError("centroids are " + centroids.centroids.shape() + " but the model needs " +
                     Matrix::shape_string(model.n_classes(), model.d_emb()));
  }
}

/// Loss only, no gradients.
inline LossBreakdown evaluate_loss(const RegularizedHeadModel& model, const Matrix& features,
                                   std::span<const ClassIndex> labels, const ClassCentroids& centroids,
                                   double alpha) {
  check_compatible(model, centroids);
  const auto pass = forward(model, features);
  return total_loss(cross_entropy(pass.logits, labels), reg_loss(pass.embeddings, labels, centroids), alpha);
}

struct BackwardResult {
  LossBreakdown loss;
  Gradients grads;
};

/// Loss and its exact gradient with respect to W1, b1, W2, b2. The centroids
/// are constants, so the regulariser reaches only W1 and b1:
///
///   G     = softmax(logits) - onehot(y)             (B x n_classes)
///   dW2   = G^T E / B,  db2 = colmean(G)
///   dE    = G W2 / B + 2 alpha (E - C_y) / B
///   dW1   = dE^T X,     db1 = colsum(dE)
inline BackwardResult backward(const RegularizedHeadModel& model, const Matrix& features,
                               std::span<const ClassIndex> labels, const ClassCentroids& centroids,
                               double alpha) {
  check_compatible(model, centroids);
  const auto pass = forward(model, features);
  BackwardResult out;
  out.loss = total_loss(cross_entropy(pass.logits, labels), reg_loss(pass.embeddings, labels, centroids), alpha);

  const std::size_t batch = features.rows();
  const double inv_b = 1.0 / static_cast<double>(batch);

  Matrix g = softmax_rows(pass.logits);
  for (std::size_t i = 0; i < batch; ++i) g(i, labels[i]) -= 1.0;

  out.grads.w2 = transposed_matmul(g, pass.embeddings);
  for (double& v : out.grads.w2.values()) v *= inv_b;
  out.grads.b2.assign(model.n_classes(), 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < model.n_classes(); ++k) out.grads.b2[k] += g(i, k);
  }
  for (double& v : out.grads.b2) v *= inv_b;

  Matrix delta = matmul(g, model.w2);
  const double reg_scale = 2.0 * alpha;
  for (std::size_t i = 0; i < batch; ++i) {
    auto d = delta.row(i);
    const auto e = pass.embeddings.row(i);
    const auto c = centroids.centroid(labels[i]);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = (d[k] + reg_scale * (e[k] - c[k])) * inv_b;
  }

  out.grads.w1 = transposed_matmul(delta, features);
  out.grads.b1.assign(model.d_emb(), 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto d = delta.row(i);
    for (std::size_t k = 0; k < d.size(); ++k) out.grads.b1[k] += d[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline Bytes encode_embm(const RegularizedHeadModel& m) {
  if (!m.all_finite()) throw ValidationError("refusing to save a model with non-finite parameters");
  ByteWriter w;
  w.raw(std::string_view("EMBM"));
  w.u16(kEmbmVersion);
  w.u32(static_cast<std::uint32_t>(m.d_in()));
  w.u32(static_cast<std::uint32_t>(m.d_emb()));
  w.u32(static_cast<std::uint32_t>(m.n_classes()));
  const auto crc_at = w.size();
  w.u32(0);
  for (auto block : m.blocks()) {
    for (double v : block) w.f64(v);
  }
  auto bytes = w.take();
  const auto crc = crc32_of(std::span<const std::uint8_t>(bytes).subspan(kEmbmHeaderSize));
  for (int i = 0; i < 4; ++i) bytes[crc_at + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  return bytes;
}

inline RegularizedHeadModel decode_embm(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  ByteReader r(bytes);
  expect_magic_and_version(r, "EMBM", kEmbmVersion);
  const std::uint64_t d_in = r.u32("d_in");
  const std::uint64_t d_emb = r.u32("d_emb");
  const std::uint64_t n_classes = r.u32("n_classes");
  const auto crc_field = r.offset();
  const auto stored_crc = r.u32("payload_crc32");
  const auto payload_start = r.offset();
  if (d_in == 0 || d_emb == 0 || n_classes == 0) {
    throw FormatError(Kind::invariant_violation, "model dimensions must be positive", 6);
  }
  const std::uint64_t count = d_emb * d_in + d_emb + n_classes * d_emb + n_classes;
  r.require(count * 8, "parameters");
  if (r.remaining() != count * 8) {
    throw FormatError(Kind::trailing_bytes, "unexpected bytes after the parameters", payload_start + count * 8);
  }
  RegularizedHeadModel m(d_in, d_emb, n_classes);
  for (auto block : m.blocks()) {
    for (double& v : block) v = r.f64("parameter");
  }
  expect_crc(bytes, payload_start, stored_crc, crc_field);
  if (!m.all_finite()) throw FormatError(Kind::invariant_violation, "non-finite parameter");
  return m;
}

inline void save_model(const RegularizedHeadModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, encode_embm(m));
}

inline RegularizedHeadModel load_model(const std::filesystem::path& path) {
  return decode_embm(read_file_bytes(path));
}

}  // namespace centroid_reg
