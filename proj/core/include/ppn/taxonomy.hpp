#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ppn {

using ClassId = std::size_t;
using Rng = std::mt19937_64;

enum class Split { Train, Test, Weak };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ClassNode {
  ClassId id = 0;
  std::string name;
  int level = 1;
  Split split = Split::Weak;
};

struct Edge {
  ClassId parent = 0;
  ClassId child = 0;
};

/// Leveled category DAG. Leaves are the few-shot classes (train or test);
/// every internal node is a weakly-labeled class. Immutable once built.
class CategoryGraph {
 public:
  CategoryGraph() = default;

  /// Validates and indexes the records. Throws std::invalid_argument on
  /// duplicate or non-dense ids, unknown endpoints, duplicate edges,
  /// level(parent) >= level(child), cycles, and split/leaf inconsistencies.
  static CategoryGraph build(std::vector<ClassNode> nodes, std::vector<Edge> edges);

  std::size_t size() const { return nodes_.size(); }
  const ClassNode& node(ClassId id) const { return nodes_.at(id); }
  const std::vector<ClassNode>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Sorted ascending.
  const std::vector<ClassId>& parents(ClassId id) const { return parents_.at(id); }
  const std::vector<ClassId>& children(ClassId id) const { return children_.at(id); }

  bool is_leaf(ClassId id) const { return children_.at(id).empty(); }
  int level(ClassId id) const { return nodes_.at(id).level; }

  std::vector<ClassId> leaves(Split split) const;
  /// All strict ancestors, ascending.
  std::vector<ClassId> ancestors(ClassId id) const;
  /// Train leaves and all of their ancestors, ascending: the classes that can
  /// appear in a training subgraph.
  std::vector<ClassId> training_classes() const;

  nlohmann::json to_json() const;
  static CategoryGraph from_json(const nlohmann::json& doc);

 private:
  std::vector<ClassNode> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<ClassId>> parents_;
  std::vector<std::vector<ClassId>> children_;
};

/// Node-induced subgraph closed under the parent relation.
struct Subgraph {
  /// Ascending.
  std::vector<ClassId> nodes;
  std::vector<Edge> edges;
  /// Node sets per level, coarse to fine; each ascending.
  std::vector<std::pair<int, std::vector<ClassId>>> levels;

  bool contains(ClassId id) const;
};

/// The node-induced subgraph on `seeds` and all of their ancestors.
Subgraph upward_closure(const CategoryGraph& graph, std::span<const ClassId> seeds);

/// Draws `n_leaves` classes from `leaf_pool` uniformly without replacement
/// and returns their upward closure. Throws std::invalid_argument if the pool
/// is too small.
Subgraph sample_subgraph(const CategoryGraph& graph, std::span<const ClassId> leaf_pool,
                         std::size_t n_leaves, Rng& rng);

/// Per-level class sets of the subgraph with at least `min_classes` members,
/// ordered coarse to fine.
std::vector<std::vector<ClassId>> level_tasks(const Subgraph& subgraph, std::size_t min_classes);

/// Uniform sample of k distinct elements of `pool` (partial Fisher-Yates),
/// in draw order.
template <typename T>
std::vector<T> sample_without_replacement(std::span<const T> pool, std::size_t k, Rng& rng) {
  std::vector<T> items(pool.begin(), pool.end());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(k);
  return items;
}

CategoryGraph load_graph(const std::filesystem::path& path);
void save_graph(const CategoryGraph& graph, const std::filesystem::path& path);

}  // namespace ppn
