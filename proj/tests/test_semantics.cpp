#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "centroid_reg/semantics.hpp"
#include "test_support.hpp"

using namespace centroid_reg;
namespace t = centroid_reg::testing;

namespace {

EmbeddingDataset two_class() {
  EmbeddingDataset d;
  d.dimension = 2;
  d.num_classes = 2;
  d.class_names = {"a", "b"};
  d.records.push_back({"s1", 0, {0, 0}, {{1, 0}, {3, 0}}});
  d.records.push_back({"s2", 0, {0, 0}, {{2, 6}}});
  d.records.push_back({"s3", 1, {0, 0}, {{-1, -1}}});
  d.records.push_back({"s4", 1, {0, 0}, {}});
  return d;
}

}  // namespace

TEST(Centroids, HandExamplePoolsAllDescriptions) {
  const auto c = compute_class_centroids(two_class());
  // Class 0 pools three vectors: (1,0), (3,0), (2,6).
  EXPECT_EQ(c.centroids, (Matrix{{2, 2}, {-1, -1}}));
  EXPECT_EQ(c.support_counts, (std::vector<std::uint64_t>{3, 1}));
}

TEST(Centroids, NormalizeTextOption) {
  auto d = two_class();
  d.records[2].text_embeddings = {{3, 4}};
  const auto c = compute_class_centroids(d, CentroidOptions{true});
  EXPECT_NEAR(c.centroids(1, 0), 0.6, 1e-15);
  EXPECT_NEAR(c.centroids(1, 1), 0.8, 1e-15);
  // (1,0), (1,0), (2,6)/|(2,6)|
  const double n = std::sqrt(40.0);
  EXPECT_NEAR(c.centroids(0, 0), (2.0 + 2.0 / n) / 3.0, 1e-15);
  EXPECT_NEAR(c.centroids(0, 1), (6.0 / n) / 3.0, 1e-15);
}

TEST(Centroids, ClassWithoutTextIsAnError) {
  auto d = two_class();
  d.records[2].text_embeddings.clear();
  EXPECT_THROW(compute_class_centroids(d), ValidationError);
}

TEST(Centroids, MatchFlatLoopOracle) {
  std::mt19937_64 gen(31);
  for (int i = 0; i < 50; ++i) {
    const auto d = t::random_dataset(gen, 30, 8, 5, 6, true);
    const auto got = compute_class_centroids(d);
    const auto want = t::flat_loop_centroids(d);
    for (std::size_t l = 0; l < d.num_classes; ++l) {
      for (std::size_t k = 0; k < d.dimension; ++k) {
        EXPECT_NEAR(got.centroids(l, k), static_cast<double>(want[l][k]), 1e-12);
      }
    }
    const auto texts = d.text_counts_per_class();
    EXPECT_EQ(got.support_counts, std::vector<std::uint64_t>(texts.begin(), texts.end()));
  }
}

TEST(Centroids, InvariantToRecordPermutation) {
  std::mt19937_64 gen(32);
  for (int i = 0; i < 20; ++i) {
    auto d = t::random_dataset(gen, 30, 8, 5, 6, true);
    const auto before = compute_class_centroids(d);
    std::shuffle(d.records.begin(), d.records.end(), gen);
    EXPECT_EQ(compute_class_centroids(d), before);
  }
}

TEST(Centroids, InsideBoundingBoxOfContributions) {
  std::mt19937_64 gen(33);
  for (int i = 0; i < 20; ++i) {
    const auto d = t::random_dataset(gen, 30, 8, 5, 6, true);
    const auto c = compute_class_centroids(d);
    for (std::size_t l = 0; l < d.num_classes; ++l) {
      for (std::size_t k = 0; k < d.dimension; ++k) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& r : d.records) {
          if (r.label != l) continue;
          for (const auto& v : r.text_embeddings) {
            lo = std::min(lo, v[k]);
            hi = std::max(hi, v[k]);
          }
        }
        EXPECT_GE(c.centroids(l, k), lo);
        EXPECT_LE(c.centroids(l, k), hi);
      }
    }
  }
}

TEST(Centroids, IdenticalContributionsAverageToThemselves) {
  EmbeddingDataset d;
  d.dimension = 3;
  d.num_classes = 1;
  d.class_names = {"only"};
  const std::vector<double> v{0.1, -0.7, 1.0 / 3.0};
  for (int i = 0; i < 37; ++i) d.records.push_back({"s" + std::to_string(i), 0, {0, 0, 0}, {v, v, v}});
  const auto c = compute_class_centroids(d);
  EXPECT_EQ(c.centroids.row(0)[0], v[0]);
  EXPECT_EQ(c.centroids.row(0)[1], v[1]);
  EXPECT_EQ(c.centroids.row(0)[2], v[2]);
  EXPECT_EQ(c.support_counts[0], 111u);
}

TEST(Centroids, DuplicatingEveryRecordLeavesCentroidsUnchanged) {
  std::mt19937_64 gen(34);
  for (int i = 0; i < 10; ++i) {
    const auto d = t::random_dataset(gen, 20, 6, 4, 4, true);
    auto doubled = d;
    for (const auto& r : d.records) {
      auto copy = r;
      copy.sample_id += "_dup";
      doubled.records.push_back(copy);
    }
    const auto a = compute_class_centroids(d);
    const auto b = compute_class_centroids(doubled);
    for (std::size_t j = 0; j < a.centroids.size(); ++j) {
      EXPECT_NEAR(a.centroids.values()[j], b.centroids.values()[j], 1e-15);
    }
  }
}

TEST(Embc, RoundTripAndErrors) {
  std::mt19937_64 gen(35);
  t::TempDir dir;
  for (int i = 0; i < 20; ++i) {
    const auto c = compute_class_centroids(t::random_dataset(gen, 20, 6, 4, 4, true));
    EXPECT_EQ(decode_embc(encode_embc(c)), c);
    save_centroids(c, dir / "c.embc");
    EXPECT_EQ(load_centroids(dir / "c.embc"), c);
  }
  const auto c = compute_class_centroids(two_class());
  const auto good = encode_embc(c);
  EXPECT_EQ(good.size(), kEmbcHeaderSize + 2 * (8 + 16));
  auto kind_of = [](const Bytes& b) {
    try {
      decode_embc(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    return FormatError::Kind::io;
  };
  auto b = good;
  b.pop_back();
  EXPECT_EQ(kind_of(b), FormatError::Kind::truncated);
  b = good;
  b.push_back(1);
  EXPECT_EQ(kind_of(b), FormatError::Kind::trailing_bytes);
  b = good;
  b[kEmbcHeaderSize + 9] ^= 4;
  EXPECT_EQ(kind_of(b), FormatError::Kind::checksum_mismatch);
  b = good;
  b[1] = 'X';
  EXPECT_EQ(kind_of(b), FormatError::Kind::bad_magic);
}

TEST(Embc, ZeroSupportIsInvariantViolation) {
  ClassCentroids c{Matrix{{1, 2}}, {0}};
  EXPECT_THROW(encode_embc(c), ValidationError);
  c.support_counts = {1};
  auto b = encode_embc(c);
  for (int i = 0; i < 8; ++i) b[kEmbcHeaderSize + i] = 0;
  const auto crc = crc32_of(std::span<const std::uint8_t>(b).subspan(kEmbcHeaderSize));
  for (int i = 0; i < 4; ++i) b[14 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  try {
    decode_embc(b);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::invariant_violation);
  }
}
