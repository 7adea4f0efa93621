#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "centroid_reg/model.hpp"
#include "test_support.hpp"

using namespace centroid_reg;
namespace t = centroid_reg::testing;

namespace {

RegularizedHeadModel small_model() {
  RegularizedHeadModel m(2, 2, 3);
  m.w1 = Matrix{{1, 2}, {0, -1}};
  m.b1 = {0.5, 0};
  m.w2 = Matrix{{1, 0}, {0, 1}, {1, 1}};
  m.b2 = {0, 0, -1};
  return m;
}

ClassCentroids centroids_of(Matrix m) {
  const auto k = m.rows();
  return ClassCentroids{std::move(m), std::vector<std::uint64_t>(k, 1)};
}

}  // namespace

TEST(Forward, HandExample) {
  const auto m = small_model();
  const auto pass = forward(m, Matrix{{1, 1}, {2, 0}});
  EXPECT_EQ(pass.embeddings, (Matrix{{3.5, -1}, {2.5, 0}}));
  EXPECT_EQ(pass.logits, (Matrix{{3.5, -1, 1.5}, {2.5, 0, 1.5}}));
  EXPECT_THROW(forward(m, Matrix(1, 3)), ShapeError);
}

TEST(Forward, ZeroFeaturesAndBiasesGiveZeroLogits) {
  SeededRng rng(3);
  const auto m = RegularizedHeadModel::initialize(5, 4, 3, rng);
  EXPECT_EQ(forward(m, Matrix(2, 5)).logits, Matrix(2, 3));
}

TEST(Initialize, IdentityBlockAndScales) {
  SeededRng rng(1);
  const auto m = RegularizedHeadModel::initialize(6, 4, 3, rng);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(m.w1(r, c), r == c ? 1.0 : 0.0, 6e-3);
  }
  EXPECT_EQ(m.b1, std::vector<double>(4, 0.0));
  EXPECT_EQ(m.b2, std::vector<double>(3, 0.0));
  SeededRng again(1);
  EXPECT_EQ(RegularizedHeadModel::initialize(6, 4, 3, again), m);
  EXPECT_THROW(RegularizedHeadModel::initialize(0, 4, 3, again), ValidationError);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  for (std::size_t k : {2u, 3u, 7u, 50u}) {
    const Matrix logits(4, k, 0.37);
    const std::vector<ClassIndex> labels{0, 1, 0, static_cast<ClassIndex>(k - 1)};
    EXPECT_NEAR(cross_entropy(logits, labels), std::log(static_cast<double>(k)), 1e-12);
  }
}

TEST(CrossEntropy, SaturatedLogits) {
  const Matrix right{{1e6, -1e6}};
  const Matrix wrong{{-1e6, 1e6}};
  const std::vector<ClassIndex> label{0};
  EXPECT_EQ(cross_entropy(right, label), 0.0);
  EXPECT_DOUBLE_EQ(cross_entropy(wrong, label), 2e6);
}

TEST(CrossEntropy, MatchesLongDoubleOracle) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    Matrix logits(5, 4);
    for (double& v : logits.values()) v = n(gen);
    std::vector<ClassIndex> labels;
    long double want = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      labels.push_back(static_cast<ClassIndex>(gen() % 4));
      long double denom = 0;
      for (std::size_t c = 0; c < 4; ++c) denom += std::exp(static_cast<long double>(logits(i, c)));
      want += std::log(denom) - logits(i, labels.back());
    }
    EXPECT_NEAR(cross_entropy(logits, labels), static_cast<double>(want / 5), 1e-13);
  }
}

TEST(CrossEntropy, RejectsBadLabels) {
  const Matrix logits(2, 3);
  const std::vector<ClassIndex> out_of_range{0, 3};
  const std::vector<ClassIndex> too_few{0};
  EXPECT_THROW(cross_entropy(logits, out_of_range), ValidationError);
  EXPECT_THROW(cross_entropy(logits, too_few), ShapeError);
}

TEST(RegLoss, ExamplesAndZeroAtCentroids) {
  const auto c = centroids_of(Matrix{{0, 0}, {1, 1}});
  const std::vector<ClassIndex> labels{0, 1};
  EXPECT_EQ(reg_loss(Matrix{{3, 4}, {1, 1}}, labels, c), 12.5);
  EXPECT_EQ(reg_loss(Matrix{{0, 0}, {1, 1}}, labels, c), 0.0);
  EXPECT_THROW(reg_loss(Matrix(2, 3), labels, c), ShapeError);
}

TEST(TotalLoss, CombinesTermsAndRejectsNegativeAlpha) {
  const auto l = total_loss(0.7, 2.5, 0.1);
  EXPECT_EQ(l.j_total, 0.7 + 0.1 * 2.5);
  EXPECT_EQ(total_loss(0.7, 2.5, 0.0).j_total, 0.7);
  EXPECT_THROW(total_loss(1, 1, -1e-9), ValidationError);
  EXPECT_THROW(total_loss(1, 1, std::nan("")), ValidationError);
}

TEST(Backward, LossAgreesWithOracle) {
  std::mt19937_64 gen(40);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = t::random_instance(gen, 6, 5, 4, 3);
    const auto res = backward(inst.model, inst.features, inst.labels, inst.centroids, 0.3);
    const auto want =
        t::oracle_loss(t::LossOracleParams::from(inst.model), inst.features, inst.labels, inst.centroids, 0.3L);
    EXPECT_NEAR(res.loss.j_ce, static_cast<double>(want.ce), 1e-12);
    EXPECT_NEAR(res.loss.j_reg, static_cast<double>(want.reg), 1e-12 * (1 + static_cast<double>(want.reg)));
    EXPECT_NEAR(res.loss.j_total, static_cast<double>(want.total), 1e-12 * (1 + static_cast<double>(want.total)));
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 gen(41);
  for (double alpha : {0.0, 1e-2, 1.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t b = 1 + gen() % 8, din = 1 + gen() % 8, demb = 1 + gen() % 8, k = 2 + gen() % 4;
      auto inst = t::random_instance(gen, b, din, demb, k);
      const auto got = t::flatten(backward(inst.model, inst.features, inst.labels, inst.centroids, alpha).grads);
      const auto want = t::finite_difference_gradient(inst.model, inst.features, inst.labels, inst.centroids, alpha);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_LT(t::relative_error(got[i], static_cast<double>(want[i])), 1e-5)
            << "param " << i << " got " << got[i] << " want " << static_cast<double>(want[i]);
      }
    }
  }
}

TEST(Backward, RegularizerDoesNotTouchClassifierHead) {
  std::mt19937_64 gen(42);
  auto inst = t::random_instance(gen, 5, 4, 3, 3);
  const auto a = backward(inst.model, inst.features, inst.labels, inst.centroids, 0.0).grads;
  const auto b = backward(inst.model, inst.features, inst.labels, inst.centroids, 2.0).grads;
  EXPECT_EQ(a.w2, b.w2);
  EXPECT_EQ(a.b2, b.b2);
  EXPECT_NE(a.w1, b.w1);
}

TEST(Backward, SmallStepAlongNegativeGradientDescends) {
  std::mt19937_64 gen(43);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = t::random_instance(gen, 8, 6, 5, 4);
    const auto res = backward(inst.model, inst.features, inst.labels, inst.centroids, 0.1);
    auto stepped = inst.model;
    auto params = stepped.blocks();
    const auto grads = res.grads.blocks();
    for (std::size_t blk = 0; blk < 4; ++blk) {
      for (std::size_t i = 0; i < params[blk].size(); ++i) params[blk][i] -= 1e-4 * grads[blk][i];
    }
    const auto after = evaluate_loss(stepped, inst.features, inst.labels, inst.centroids, 0.1);
    EXPECT_LT(after.j_total, res.loss.j_total);
  }
}

TEST(Backward, LossMonotoneInAlpha) {
  std::mt19937_64 gen(44);
  auto inst = t::random_instance(gen, 8, 6, 5, 4);
  double prev = -INFINITY;
  for (double alpha : {0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0}) {
    const auto l = evaluate_loss(inst.model, inst.features, inst.labels, inst.centroids, alpha);
    EXPECT_GE(l.j_total, prev);
    prev = l.j_total;
  }
}

TEST(Backward, IncompatibleCentroidsRejected) {
  std::mt19937_64 gen(45);
  auto inst = t::random_instance(gen, 3, 4, 3, 2);
  const auto wrong = centroids_of(Matrix(2, 4));
  EXPECT_THROW(backward(inst.model, inst.features, inst.labels, wrong, 0.1), ShapeError);
}

TEST(Embm, RoundTripAndCorruption) {
  SeededRng rng(3);
  const auto m = RegularizedHeadModel::initialize(5, 4, 3, rng);
  const auto bytes = encode_embm(m);
  EXPECT_EQ(bytes.size(), kEmbmHeaderSize + 8 * (20 + 4 + 12 + 3));
  EXPECT_EQ(decode_embm(bytes), m);
  t::TempDir dir;
  save_model(m, dir / "m.embm");
  EXPECT_EQ(load_model(dir / "m.embm"), m);

  auto kind_of = [](const Bytes& b) {
    try {
      decode_embm(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    return FormatError::Kind::io;
  };
  auto b = bytes;
  b.resize(b.size() - 3);
  EXPECT_EQ(kind_of(b), FormatError::Kind::truncated);
  b = bytes;
  b.push_back(0);
  EXPECT_EQ(kind_of(b), FormatError::Kind::trailing_bytes);
  b = bytes;
  b[kEmbmHeaderSize + 5] ^= 0x10;
  EXPECT_EQ(kind_of(b), FormatError::Kind::checksum_mismatch);
  b = bytes;
  b[4] = 9;
  EXPECT_EQ(kind_of(b), FormatError::Kind::version_mismatch);

  auto bad = m;
  bad.b2[0] = INFINITY;
  EXPECT_THROW(encode_embm(bad), ValidationError);
}
