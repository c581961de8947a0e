#include "ppn/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "ppn/io.hpp"

namespace ppn {

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Weak: return "weak";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "weak") return Split::Weak;
  throw std::invalid_argument("unknown split '" + s + "' (expected train, test or weak)");
}

CategoryGraph CategoryGraph::build(std::vector<ClassNode> nodes, std::vector<Edge> edges) {
  const std::size_t n = nodes.size();
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && nodes[i].id == nodes[i - 1].id) {
      throw std::invalid_argument("duplicate class id " + std::to_string(nodes[i].id));
    }
    if (nodes[i].id != i) {
      throw std::invalid_argument("class ids must be dense in [0, " + std::to_string(n) +
                                  "), found " + std::to_string(nodes[i].id));
    }
    if (nodes[i].level < 1) {
      throw std::invalid_argument("class " + std::to_string(i) + " has level " +
                                  std::to_string(nodes[i].level) + " (levels start at 1)");
    }
  }

  CategoryGraph g;
  g.parents_.resize(n);
  g.children_.resize(n);
  std::set<std::pair<ClassId, ClassId>> seen;
  for (const Edge& e : edges) {
    if (e.parent >= n || e.child >= n) {
      throw std::invalid_argument("edge " + std::to_string(e.parent) + "->" + std::to_string(e.child) +
                                  " references an unknown class");
    }
    if (!seen.emplace(e.parent, e.child).second) {
      throw std::invalid_argument("duplicate edge " + std::to_string(e.parent) + "->" +
                                  std::to_string(e.child));
    }
    g.parents_[e.child].push_back(e.parent);
    g.children_[e.parent].push_back(e.child);
  }

  // Kahn's algorithm; leftovers sit on a cycle.
  std::vector<std::size_t> indegree(n);
  for (std::size_t i = 0; i < n; ++i) indegree[i] = g.parents_[i].size();
  std::vector<ClassId> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    const ClassId u = ready.back();
    ready.pop_back();
    ++visited;
    for (ClassId c : g.children_[u]) {
      if (--indegree[c] == 0) ready.push_back(c);
    }
  }
  if (visited != n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (indegree[i] > 0) {
        throw std::invalid_argument("category graph has a cycle through class " + std::to_string(i));
      }
    }
  }

  for (const Edge& e : edges) {
    if (nodes[e.parent].level >= nodes[e.child].level) {
      throw std::invalid_argument("edge " + std::to_string(e.parent) + "->" + std::to_string(e.child) +
                                  " goes from level " + std::to_string(nodes[e.parent].level) +
                                  " to level " + std::to_string(nodes[e.child].level));
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    std::sort(g.parents_[i].begin(), g.parents_[i].end());
    std::sort(g.children_[i].begin(), g.children_[i].end());
    const bool leaf = g.children_[i].empty();
    if (leaf && nodes[i].split == Split::Weak) {
      throw std::invalid_argument("leaf class " + std::to_string(i) + " is marked weak");
    }
    if (!leaf && nodes[i].split != Split::Weak) {
      throw std::invalid_argument("internal class " + std::to_string(i) + " is marked " +
                                  split_name(nodes[i].split));
    }
  }

  g.nodes_ = std::move(nodes);
  g.edges_ = std::move(edges);
  return g;
}

std::vector<ClassId> CategoryGraph::leaves(Split split) const {
  std::vector<ClassId> out;
  for (const auto& n : nodes_) {
    if (is_leaf(n.id) && n.split == split) out.push_back(n.id);
  }
  return out;
}

std::vector<ClassId> CategoryGraph::ancestors(ClassId id) const {
  std::vector<bool> mark(nodes_.size(), false);
  std::vector<ClassId> stack(parents(id).begin(), parents(id).end());
  while (!stack.empty()) {
    const ClassId u = stack.back();
    stack.pop_back();
    if (mark[u]) continue;
    mark[u] = true;
    for (ClassId p : parents_[u]) stack.push_back(p);
  }
  std::vector<ClassId> out;
  for (std::size_t i = 0; i < mark.size(); ++i) {
    if (mark[i]) out.push_back(i);
  }
  return out;
}

std::vector<ClassId> CategoryGraph::training_classes() const {
  const auto train = leaves(Split::Train);
  return upward_closure(*this, train).nodes;
}

nlohmann::json CategoryGraph::to_json() const {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes_) {
    doc["nodes"].push_back({{"id", n.id}, {"name", n.name}, {"level", n.level}, {"split", split_name(n.split)}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : edges_) doc["edges"].push_back({e.parent, e.child});
  return doc;
}

CategoryGraph CategoryGraph::from_json(const nlohmann::json& doc) {
  std::vector<ClassNode> nodes;
  std::vector<Edge> edges;
  try {
    for (const auto& item : doc.at("nodes")) {
      ClassNode n;
      n.id = item.at("id").get<ClassId>();
      n.name = item.value("name", std::string{});
      n.level = item.at("level").get<int>();
      n.split = parse_split(item.at("split").get<std::string>());
      nodes.push_back(std::move(n));
    }
    for (const auto& item : doc.at("edges")) {
      if (!item.is_array() || item.size() != 2) {
        throw std::invalid_argument("edge entries must be [parent_id, child_id]");
      }
      edges.push_back({item[0].get<ClassId>(), item[1].get<ClassId>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed graph document: ") + e.what());
  }
  return build(std::move(nodes), std::move(edges));
}

bool Subgraph::contains(ClassId id) const { return std::binary_search(nodes.begin(), nodes.end(), id); }

Subgraph upward_closure(const CategoryGraph& graph, std::span<const ClassId> seeds) {
  std::vector<bool> mark(graph.size(), false);
  std::vector<ClassId> stack(seeds.begin(), seeds.end());
  while (!stack.empty()) {
    const ClassId u = stack.back();
    stack.pop_back();
    if (u >= graph.size()) throw std::invalid_argument("unknown class " + std::to_string(u));
    if (mark[u]) continue;
    mark[u] = true;
    for (ClassId p : graph.parents(u)) stack.push_back(p);
  }

  Subgraph sub;
  for (std::size_t i = 0; i < mark.size(); ++i) {
    if (mark[i]) sub.nodes.push_back(i);
  }
  for (ClassId c : sub.nodes) {
    for (ClassId p : graph.parents(c)) sub.edges.push_back({p, c});
  }
  for (ClassId c : sub.nodes) {
    const int lvl = graph.level(c);
    auto it = std::find_if(sub.levels.begin(), sub.levels.end(), [&](const auto& l) { return l.first == lvl; });
    if (it == sub.levels.end()) {
      sub.levels.push_back({lvl, {c}});
    } else {
      it->second.push_back(c);
    }
  }
  std::sort(sub.levels.begin(), sub.levels.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return sub;
}

Subgraph sample_subgraph(const CategoryGraph& graph, std::span<const ClassId> leaf_pool,
                         std::size_t n_leaves, Rng& rng) {
  if (n_leaves == 0) throw std::invalid_argument("sample_subgraph: n_leaves must be positive");
  if (n_leaves > leaf_pool.size()) {
    throw std::invalid_argument("sample_subgraph: cannot draw " + std::to_string(n_leaves) +
                                " leaves from a pool of " + std::to_string(leaf_pool.size()));
  }
  const auto seeds = sample_without_replacement(leaf_pool, n_leaves, rng);
  return upward_closure(graph, seeds);
}

std::vector<std::vector<ClassId>> level_tasks(const Subgraph& subgraph, std::size_t min_classes) {
  std::vector<std::vector<ClassId>> tasks;
  for (const auto& [level, classes] : subgraph.levels) {
    if (classes.size() >= min_classes) tasks.push_back(classes);
  }
  return tasks;
}

CategoryGraph load_graph(const std::filesystem::path& path) {
  return CategoryGraph::from_json(read_json_file(path));
}

void save_graph(const CategoryGraph& graph, const std::filesystem::path& path) {
  write_file_atomic(path, graph.to_json().dump(1) + "\n");
}

}  // namespace ppn
