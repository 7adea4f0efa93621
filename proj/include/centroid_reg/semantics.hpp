#pragma once

// Mean text embedding per class ("class centroids"), the targets the
// regulariser pulls image embeddings towards.
//
// EMBC v1 (little-endian):
//
//   header   "EMBC" | version u16 = 1 | dimension u32 | num_classes u32 | payload_crc32 u32
//   payload  num_classes x (support_count u64 | dimension x f64)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "centroid_reg/binary_io.hpp"
#include "centroid_reg/dataset.hpp"
#include "centroid_reg/errors.hpp"
#include "centroid_reg/numerics.hpp"

namespace centroid_reg {

inline constexpr std::uint16_t kEmbcVersion = 1;
inline constexpr std::size_t kEmbcHeaderSize = 4 + 2 + 4 + 4 + 4;

struct ClassCentroids {
  /// num_classes x dimension; row l is the centroid of class l.
  Matrix centroids;
  /// Number of text embeddings averaged into each row.
  std::vector<std::uint64_t> support_counts;

  std::size_t num_classes() const noexcept { return centroids.rows(); }
  std::size_t dimension() const noexcept { return centroids.cols(); }
  std::span<const double> centroid(std::size_t label) const { return centroids.row(label); }

  friend bool operator==(const ClassCentroids&, const ClassCentroids&) = default;
};

inline void validate(const ClassCentroids& c) {
  if (c.num_classes() == 0 || c.dimension() == 0) throw ValidationError("centroids are empty");
  if (c.support_counts.size() != c.num_classes()) {
    throw ValidationError("support_counts has " + std::to_string(c.support_counts.size()) +
                          " entries for " + std::to_string(c.num_classes()) + " classes");
  }
  for (std::size_t l = 0; l < c.num_classes(); ++l) {
    if (c.support_counts[l] == 0) {
      throw ValidationError("class " + std::to_string(l) + " has no supporting text embeddings");
    }
  }
  if (!c.centroids.all_finite()) throw ValidationError("centroids contain non-finite values");
}

struct CentroidOptions {
  /// Scale every text embedding to unit L2 norm before averaging. Off by
  /// default; zero vectors are left as they are.
  bool normalize_text = false;
};

/// C_l = mean of every text embedding of every record labelled l. Samples
/// with more descriptions carry proportionally more weight. Contributions are
/// summed in (sample_id, description index) order so the result does not
/// depend on record order.
inline ClassCentroids compute_class_centroids(const EmbeddingDataset& train,
                                              const CentroidOptions& options = {}) {
  validate(train);
  std::vector<std::vector<const EmbeddingRecord*>> members(train.num_classes);
  for (const auto& r : train.records) members[r.label].push_back(&r);

  ClassCentroids out{Matrix(train.num_classes, train.dimension),
                     std::vector<std::uint64_t>(train.num_classes, 0)};
  std::vector<double> unit(train.dimension);
  // Extended-precision sums: n copies of one vector (n < 2^11) add exactly,
  // so identical contributions average back to themselves.
  std::vector<long double> sum(train.dimension);
  for (std::size_t l = 0; l < train.num_classes; ++l) {
    auto& list = members[l];
    std::sort(list.begin(), list.end(),
              [](const EmbeddingRecord* a, const EmbeddingRecord* b) { return a->sample_id < b->sample_id; });
    std::fill(sum.begin(), sum.end(), 0.0L);
    std::uint64_t count = 0;
    for (const auto* rec : list) {
      for (const auto& t : rec->text_embeddings) {
        std::span<const double> v = t;
        if (options.normalize_text) {
          double norm2 = 0.0;
          for (double x : t) norm2 += x * x;
          const double scale = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 1.0;
          for (std::size_t k = 0; k < t.size(); ++k) unit[k] = t[k] * scale;
          v = unit;
        }
        for (std::size_t k = 0; k < v.size(); ++k) sum[k] += v[k];
        ++count;
      }
    }
    if (count == 0) {
      throw ValidationError("class " + std::to_string(l) + " ('" + train.class_names[l] +
                            "') has no text embeddings in the training set");
    }
    auto centroid = out.centroids.row(l);
    for (std::size_t k = 0; k < centroid.size(); ++k) {
      centroid[k] = static_cast<double>(sum[k] / static_cast<long double>(count));
    }
    out.support_counts[l] = count;
  }
  return out;
}

inline Bytes encode_embc(const ClassCentroids& c) {
  validate(c);
  ByteWriter w;
  w.raw(std::string_view("EMBC"));
  w.u16(kEmbcVersion);
  w.u32(static_cast<std::uint32_t>(c.dimension()));
  w.u32(static_cast<std::uint32_t>(c.num_classes()));
  const auto crc_at = w.size();
  w.u32(0);
  for (std::size_t l = 0; l < c.num_classes(); ++l) {
    w.u64(c.support_counts[l]);
    for (double x : c.centroid(l)) w.f64(x);
  }
  auto bytes = w.take();
  const auto crc = crc32_of(std::span<const std::uint8_t>(bytes).subspan(kEmbcHeaderSize));
  for (int i = 0; i < 4; ++i) bytes[crc_at + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  return bytes;
}

inline ClassCentroids decode_embc(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  ByteReader r(bytes);
  expect_magic_and_version(r, "EMBC", kEmbcVersion);
  const std::size_t dimension = r.u32("dimension");
  const std::size_t num_classes = r.u32("num_classes");
  const auto crc_field = r.offset();
  const auto stored_crc = r.u32("payload_crc32");
  const auto payload_start = r.offset();
  if (dimension == 0 || num_classes == 0) {
    throw FormatError(Kind::invariant_violation, "dimension and num_classes must be positive", 6);
  }
  const std::uint64_t expected = static_cast<std::uint64_t>(num_classes) * (8 + 8 * static_cast<std::uint64_t>(dimension));
  r.require(expected, "centroid table");
  if (r.remaining() != expected) {
    throw FormatError(Kind::trailing_bytes,
                      std::to_string(r.remaining() - expected) + " unexpected bytes after the centroid table",
                      payload_start + expected);
  }
  ClassCentroids c{Matrix(num_classes, dimension), std::vector<std::uint64_t>(num_classes)};
  for (std::size_t l = 0; l < num_classes; ++l) {
    c.support_counts[l] = r.u64("support_count");
    for (double& x : c.centroids.row(l)) x = r.f64("centroid");
  }
  expect_crc(bytes, payload_start, stored_crc, crc_field);
  try {
    validate(c);
  } catch (const ValidationError& e) {
    throw FormatError(Kind::invariant_violation, e.what());
  }
  return c;
}

inline void save_centroids(const ClassCentroids& c, const std::filesystem::path& path) {
  write_file_atomic(path, encode_embc(c));
}

inline ClassCentroids load_centroids(const std::filesystem::path& path) {
  return decode_embc(read_file_bytes(path));
}

}  // namespace centroid_reg
