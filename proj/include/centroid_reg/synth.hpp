#pragma once

// Synthetic embedding sets with known ground truth.
//
// Each class l has a true anchor A_l ~ N(0, anchor_spread^2 I). A sample of
// class l gets
//   image embedding  A_l + N(0, image_noise^2 I), or, for a corrupted sample,
//                    (A_l + A_m)/2 + N(0, image_noise^2 I) with m != l uniform
//   text embeddings  descriptions_per_sample draws of A_l + N(0, text_noise^2 I)
// Corruption applies with probability image_corruption to train and test
// samples alike.
//
// Draw order, all from one SeededRng(seed): anchors row-major; then the train
// samples class by class, then the test samples class by class. Per sample:
// corruption coin, partner class (only if corrupted), image noise, text noise.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "centroid_reg/config.hpp"
#include "centroid_reg/dataset.hpp"
#include "centroid_reg/errors.hpp"
#include "centroid_reg/numerics.hpp"

namespace centroid_reg {

struct SynthScenario {
  std::size_t n_classes = 6;
  std::size_t d_emb = 64;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  // Per-coordinate scales. A spread of 1/sqrt(64) gives anchors of roughly
  // unit norm, like normalised CLIP embeddings.
  double class_anchor_spread = 0.125;
  double image_noise = 0.1875;
  double image_corruption = 0.15;
  double text_noise = 0.125 / 6.0;
  std::size_t descriptions_per_sample = 10;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_classes == 0 || d_emb == 0) throw ValidationError("scenario needs at least one class and dimension");
    if (train_per_class == 0) throw ValidationError("train_per_class must be at least 1");
    if (!(class_anchor_spread >= 0.0) || !(image_noise >= 0.0) || !(text_noise >= 0.0)) {
      throw ValidationError("scenario noise scales must be >= 0");
    }
    if (!(image_corruption >= 0.0 && image_corruption < 1.0)) {
      throw ValidationError("image_corruption must lie in [0, 1)");
    }
    if (image_corruption > 0.0 && n_classes < 2) {
      throw ValidationError("image_corruption needs at least two classes");
    }
    if (descriptions_per_sample == 0 || descriptions_per_sample > kMaxTextEmbeddings) {
      throw ValidationError("descriptions_per_sample must lie in [1, 255]");
    }
  }
};

/// Shipped default: 6 classes, 64 dimensions, 200 train and 100 test samples
/// per class, roughly unit-norm anchors, image noise 1.5x the anchor spread,
/// text noise 1/6 of it, 15% of images replaced by a two-class midpoint.
inline SynthScenario reference_scenario(std::uint64_t seed = 7) {
  SynthScenario s;
  s.seed = seed;
  return s;
}

inline const std::set<std::string, std::less<>>& scenario_keys() {
  static const std::set<std::string, std::less<>> keys{
      "n_classes",   "d_emb",         "train_per_class", "test_per_class",          "class_anchor_spread",
      "image_noise", "image_corruption", "text_noise",   "descriptions_per_sample", "seed"};
  return keys;
}

inline SynthScenario scenario_from_config(const KeyValueConfig& cfg) {
  cfg.reject_unknown(scenario_keys());
  SynthScenario s;
  s.n_classes = cfg.get_u64("n_classes", s.n_classes);
  s.d_emb = cfg.get_u64("d_emb", s.d_emb);
  s.train_per_class = cfg.get_u64("train_per_class", s.train_per_class);
  s.test_per_class = cfg.get_u64("test_per_class", s.test_per_class);
  s.class_anchor_spread = cfg.get_double("class_anchor_spread", s.class_anchor_spread);
  s.image_noise = cfg.get_double("image_noise", s.image_noise);
  s.image_corruption = cfg.get_double("image_corruption", s.image_corruption);
  s.text_noise = cfg.get_double("text_noise", s.text_noise);
  s.descriptions_per_sample = cfg.get_u64("descriptions_per_sample", s.descriptions_per_sample);
  s.seed = cfg.get_u64("seed", s.seed);
  s.validate();
  return s;
}

struct SynthData {
  DatasetSplit split;
  /// n_classes x d_emb ground-truth anchors.
  Matrix anchors;
};

inline SynthData generate_with_anchors(const SynthScenario& s) {
  s.validate();
  SeededRng rng(s.seed);
  SynthData out;
  out.anchors = Matrix(s.n_classes, s.d_emb);
  for (double& v : out.anchors.values()) v = rng.gaussian(s.class_anchor_spread);

  EmbeddingDataset base;
  base.dimension = s.d_emb;
  base.num_classes = s.n_classes;
  for (std::size_t c = 0; c < s.n_classes; ++c) base.class_names.push_back("class_" + std::to_string(c));
  out.split = DatasetSplit{base, base};

  auto fill = [&](EmbeddingDataset& target, std::size_t per_class, const char* prefix) {
    target.records.reserve(per_class * s.n_classes);
    for (std::size_t l = 0; l < s.n_classes; ++l) {
      const auto anchor = out.anchors.row(l);
      for (std::size_t i = 0; i < per_class; ++i) {
        EmbeddingRecord rec;
        rec.sample_id = std::string(prefix) + "_c" + std::to_string(l) + "_" + std::to_string(i);
        rec.label = static_cast<ClassIndex>(l);
        rec.image_embedding.assign(anchor.begin(), anchor.end());
        if (rng.uniform() < s.image_corruption) {
          auto other = static_cast<std::size_t>(rng.uniform_index(s.n_classes - 1));
          if (other >= l) ++other;
          const auto partner = out.anchors.row(other);
          for (std::size_t k = 0; k < s.d_emb; ++k) rec.image_embedding[k] = 0.5 * (anchor[k] + partner[k]);
        }
        for (double& v : rec.image_embedding) v += rng.gaussian(s.image_noise);
        rec.text_embeddings.resize(s.descriptions_per_sample);
        for (auto& t : rec.text_embeddings) {
          t.assign(anchor.begin(), anchor.end());
          for (double& v : t) v += rng.gaussian(s.text_noise);
        }
        target.records.push_back(std::move(rec));
      }
    }
  };
  fill(out.split.train, s.train_per_class, "train");
  fill(out.split.test, s.test_per_class, "test");
  return out;
}

inline DatasetSplit generate(const SynthScenario& s) { return generate_with_anchors(s).split; }

}  // namespace centroid_reg
