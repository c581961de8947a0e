#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ppn/dataset.hpp"
#include "ppn/taxonomy.hpp"

namespace ppn {

/// Parameters of the synthetic hierarchical Gaussian mixture.
struct GenSpec {
  int depth = 5;
  int branching = 3;
  /// Chance that a node below level 2 gets one extra parent from the level above.
  double multi_parent_prob = 0.1;
  std::size_t input_dim = 32;
  /// Std-dev of the offset of a child center from the mean of its parents' centers.
  double sigma_level = 1.0;
  double sigma_sample = 0.5;
  std::size_t samples_per_leaf = 40;
  /// Weakly-labeled candidates drawn for every internal class.
  std::size_t weak_candidates = 200;
  /// A candidate of a level-j class is kept with probability weak_keep_base^j.
  double weak_keep_base = 0.6;
  double test_fraction = 0.2;
  /// Fraction of kept weak samples drawn instead around an unrelated leaf
  /// center (the "mix" variant of the weak data).
  double mix_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GeneratedData {
  CategoryGraph graph;
  Dataset data;
  /// Latent class centers, indexed by ClassId.
  std::vector<std::vector<double>> centers;
  /// Weak candidates drawn and kept, per level (index 0 is level 1).
  std::vector<std::pair<std::size_t, std::size_t>> weak_drawn_kept;
};

GeneratedData generate(const GenSpec& spec);

struct LevelSummary {
  int level = 0;
  std::size_t train_classes = 0;
  std::size_t test_classes = 0;
  std::size_t weak_classes = 0;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  std::size_t weak_samples = 0;
};

/// Class and sample counts per level, coarse to fine.
std::vector<LevelSummary> summarize_levels(const CategoryGraph& graph, const Dataset& data);

}  // namespace ppn
