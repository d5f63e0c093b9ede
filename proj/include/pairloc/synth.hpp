#pragma once

#include <cstdint>

#include "pairloc/data.hpp"

namespace pairloc {

/// Planted-truth benchmark.
///
/// Features are laid out as [objectness | code | context]. Every class owns a
/// distinct binary code pattern; its objects carry that code and a random
/// context pattern. Distractors, present in a `distractor_overlap` fraction
/// of the classes, have the same objectness as objects and a random code but
/// a context pattern that is shared by all distractors of the class. So
/// objectness cannot separate objects from distractors and a class-specific
/// unary fit on mixed pseudo labels sees two equally consistent clusters,
/// while a relation that compares codes picks the object cluster.
struct SynthConfig {
  int num_classes = 17;
  int bags_per_class = 50;
  int proposals_per_bag = 10;
  int feature_dim = 16;
  double cluster_separation = 1.0;  // value of an active pattern entry
  double distractor_overlap = 0.5;
  double noise_sigma = 0.15;
  std::uint64_t seed = 0;
  // Fully labeled source set, classes disjoint from the target classes.
  int source_classes = 8;
  int source_bags_per_class = 50;

  void validate() const;
};

/// Where the feature blocks live: objectness at index 0, then the code and
/// context blocks, each with `*_active` entries set per pattern.
struct SynthLayout {
  int code_begin, code_dims, code_active;
  int context_begin, context_dims, context_active;
};

SynthLayout synth_layout(int feature_dim);

struct SynthData {
  Dataset source;
  Dataset target;
  /// Planted object index of every target bag.
  Selections truth;
};

/// Bit-reproducible for a fixed config.
SynthData generate(const SynthConfig& config);

}  // namespace pairloc
