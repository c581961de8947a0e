#include "ppn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

namespace ppn {

void GenSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  };
  if (depth < 2) throw std::invalid_argument("depth must be at least 2, got " + std::to_string(depth));
  if (branching < 1) {
    throw std::invalid_argument("branching " + std::to_string(branching) + " leaves level 2 without classes");
  }
  prob(multi_parent_prob, "multi_parent_prob");
  prob(weak_keep_base, "weak_keep_base");
  prob(test_fraction, "test_fraction");
  prob(mix_fraction, "mix_fraction");
  if (input_dim == 0) throw std::invalid_argument("input_dim must be positive");
  if (!(sigma_level > 0.0)) throw std::invalid_argument("sigma_level must be positive");
  if (!(sigma_sample > 0.0)) throw std::invalid_argument("sigma_sample must be positive");
  if (samples_per_leaf == 0) throw std::invalid_argument("samples_per_leaf must be positive");
}

GeneratedData generate(const GenSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Structure: a complete tree, level by level.
  std::vector<std::vector<ClassId>> by_level(spec.depth);
  std::vector<ClassNode> nodes;
  std::vector<Edge> edges;
  nodes.push_back({0, "c0", 1, Split::Weak});
  by_level[0].push_back(0);
  for (int j = 1; j < spec.depth; ++j) {
    for (ClassId parent : by_level[j - 1]) {
      for (int b = 0; b < spec.branching; ++b) {
        const ClassId id = nodes.size();
        nodes.push_back({id, "c" + std::to_string(id), j + 1, Split::Weak});
        edges.push_back({parent, id});
        by_level[j].push_back(id);
      }
    }
  }
  for (int j = 0; j < spec.depth; ++j) {
    if (by_level[j].empty()) throw std::invalid_argument("level " + std::to_string(j + 1) + " has no classes");
  }

  // Extra parents make the taxonomy a DAG.
  std::vector<std::vector<ClassId>> parents(nodes.size());
  for (const Edge& e : edges) parents[e.child].push_back(e.parent);
  for (int j = 2; j < spec.depth; ++j) {
    const auto& above = by_level[j - 1];
    for (ClassId c : by_level[j]) {
      if (unit(rng) >= spec.multi_parent_prob) continue;
      std::vector<ClassId> options;
      for (ClassId p : above) {
        if (std::find(parents[c].begin(), parents[c].end(), p) == parents[c].end()) options.push_back(p);
      }
      if (options.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
      const ClassId extra = options[pick(rng)];
      parents[c].push_back(extra);
      edges.push_back({extra, c});
    }
  }

  // Leaf split.
  std::vector<ClassId> leaves = by_level.back();
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(leaves.size())));
  std::shuffle(leaves.begin(), leaves.end(), rng);
  for (std::size_t i = 0; i < leaves.size(); ++i) nodes[leaves[i]].split = i < n_test ? Split::Test : Split::Train;

  // Centers, top-down.
  const std::size_t dim = spec.input_dim;
  std::vector<std::vector<double>> centers(nodes.size(), std::vector<double>(dim, 0.0));
  for (int j = 0; j < spec.depth; ++j) {
    for (ClassId c : by_level[j]) {
      auto& ctr = centers[c];
      if (j == 0) {
        for (double& x : ctr) x = gauss(rng);
        continue;
      }
      for (ClassId p : parents[c]) {
        for (std::size_t k = 0; k < dim; ++k) ctr[k] += centers[p][k];
      }
      const double inv = 1.0 / static_cast<double>(parents[c].size());
      for (double& x : ctr) x = x * inv + spec.sigma_level * gauss(rng);
    }
  }

  GeneratedData out;
  out.graph = CategoryGraph::build(nodes, edges);
  out.weak_drawn_kept.assign(spec.depth, {0, 0});

  auto sample_around = [&](const std::vector<double>& ctr) {
    std::vector<double> f(dim);
    for (std::size_t k = 0; k < dim; ++k) f[k] = ctr[k] + spec.sigma_sample * gauss(rng);
    return f;
  };

  const std::vector<ClassId> all_leaves = by_level.back();
  for (const auto& n : nodes) {
    if (out.graph.is_leaf(n.id)) {
      for (std::size_t s = 0; s < spec.samples_per_leaf; ++s) out.data.add({sample_around(centers[n.id]), n.id});
      continue;
    }
    const double keep = std::pow(spec.weak_keep_base, n.level);
    std::vector<ClassId> unrelated;
    if (spec.mix_fraction > 0.0) {
      for (ClassId leaf : all_leaves) {
        const auto anc = out.graph.ancestors(leaf);
        if (!std::binary_search(anc.begin(), anc.end(), n.id)) unrelated.push_back(leaf);
      }
    }
    auto& [drawn, kept] = out.weak_drawn_kept[n.level - 1];
    for (std::size_t s = 0; s < spec.weak_candidates; ++s) {
      ++drawn;
      if (unit(rng) >= keep) continue;
      ++kept;
      const std::vector<double>* ctr = &centers[n.id];
      if (!unrelated.empty() && unit(rng) < spec.mix_fraction) {
        std::uniform_int_distribution<std::size_t> pick(0, unrelated.size() - 1);
        ctr = &centers[unrelated[pick(rng)]];
      }
      out.data.add({sample_around(*ctr), n.id});
    }
  }
  out.centers = std::move(centers);
  return out;
}

std::vector<LevelSummary> summarize_levels(const CategoryGraph& graph, const Dataset& data) {
  std::map<int, LevelSummary> rows;
  for (const auto& n : graph.nodes()) {
    auto& row = rows[n.level];
    row.level = n.level;
    const std::size_t count = data.count(n.id);
    switch (n.split) {
      case Split::Train: ++row.train_classes; row.train_samples += count; break;
      case Split::Test: ++row.test_classes; row.test_samples += count; break;
      case Split::Weak: ++row.weak_classes; row.weak_samples += count; break;
    }
  }
  std::vector<LevelSummary> out;
  for (auto& [level, row] : rows) out.push_back(row);
  return out;
}

}  // namespace ppn
