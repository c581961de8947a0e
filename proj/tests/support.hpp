// Fixtures and oracles shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "ppn/ppn.hpp"

namespace ppn::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = n(rng);
  return t;
}

inline std::vector<double> random_vector(std::size_t d, Rng& rng, double scale = 1.0) {
  const Tensor t = random_tensor({d}, rng, scale);
  return t.values();
}

/// A(level 1) -> B(2) -> C(3), with C a train leaf.
inline CategoryGraph chain_graph() {
  return CategoryGraph::build({{0, "A", 1, Split::Weak}, {1, "B", 2, Split::Weak}, {2, "C", 3, Split::Train}},
                              {{0, 1}, {1, 2}});
}

/// A, B on level 1, both parents of the train leaf C on level 2.
inline CategoryGraph diamond_graph() {
  return CategoryGraph::build({{0, "A", 1, Split::Weak}, {1, "B", 1, Split::Weak}, {2, "C", 2, Split::Train}},
                              {{0, 2}, {1, 2}});
}

/// Complete tree with ids in breadth-first order. Leaves alternate between
/// train and test when `with_test` is set, otherwise all are train.
inline CategoryGraph tree_graph(int depth, int branching, bool with_test = false) {
  std::vector<ClassNode> nodes{{0, "n0", 1, Split::Weak}};
  std::vector<Edge> edges;
  std::vector<ClassId> frontier{0};
  for (int level = 2; level <= depth; ++level) {
    std::vector<ClassId> next;
    for (ClassId p : frontier) {
      for (int b = 0; b < branching; ++b) {
        const ClassId id = nodes.size();
        Split split = Split::Weak;
        if (level == depth) split = (with_test && id % 2 == 1) ? Split::Test : Split::Train;
        nodes.push_back({id, "n" + std::to_string(id), level, split});
        edges.push_back({p, id});
        next.push_back(id);
      }
    }
    frontier = std::move(next);
  }
  return CategoryGraph::build(std::move(nodes), std::move(edges));
}

/// Relative error between two gradients, measured on whole tensors so that
/// tiny individual entries do not dominate.
inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0.0, a = 0.0, n = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    a += analytic[i] * analytic[i];
    n += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(a), std::sqrt(n), 1e-7});
  return std::sqrt(diff) / denom;
}

/// Central differences of the scalar output of `expr` with respect to `name`.
inline Tensor numeric_gradient(const ad::Expression& expr, TensorMap bindings, const std::string& name,
                               double h = 1e-5) {
  Tensor& x = bindings.at(name);
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = ad::evaluate(expr, bindings).output().item();
    x[i] = saved - h;
    const double down = ad::evaluate(expr, bindings).output().item();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Worst relative error over every bound input of `expr`.
inline double max_gradient_error(const ad::Expression& expr, const TensorMap& bindings) {
  std::vector<std::string> names;
  for (const auto& [name, t] : bindings) names.push_back(name);
  const TensorMap grads = ad::gradient(expr, names, bindings);
  double worst = 0.0;
  for (const auto& name : names) {
    worst = std::max(worst, relative_error(grads.at(name), numeric_gradient(expr, bindings, name)));
  }
  return worst;
}

/// Fresh empty directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("ppn_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---- straight-line oracles ------------------------------------------------

inline std::vector<double> oracle_matvec(const Tensor& w, std::span<const double> v) {
  // w is (d x d); returns w v.
  std::vector<double> out(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) out[r] += w(r, c) * v[c];
  }
  return out;
}

inline double oracle_cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (std::sqrt(na) < ad::kNormGuard || std::sqrt(nb) < ad::kNormGuard) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Propagation into one class, term by term: attention score per parent,
/// the weighted parent sum, then the lambda blend. Roots keep P0.
inline std::vector<double> oracle_propagate(std::span<const double> p0, const std::vector<std::vector<double>>& parents,
                                            const Tensor& wg, const Tensor& wh, double lambda) {
  std::vector<double> out(p0.begin(), p0.end());
  if (parents.empty()) return out;
  const std::vector<double> g = oracle_matvec(wg, p0);
  std::vector<double> plus(p0.size(), 0.0);
  for (const auto& q : parents) {
    const double a = oracle_cosine(g, oracle_matvec(wh, q));
    for (std::size_t i = 0; i < plus.size(); ++i) plus[i] += a * q[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lambda * p0[i] + (1.0 - lambda) * plus[i];
  return out;
}

/// Relu MLP forward pass written out with loops.
inline std::vector<double> oracle_embed(const TensorMap& params, const BackboneConfig& cfg, std::vector<double> x) {
  for (int i = 0; i <= cfg.layers && cfg.layers > 0; ++i) {
    const Tensor& w = params.at(backbone_weight(i));
    const Tensor& b = params.at(backbone_bias(i));
    std::vector<double> y(w.cols(), 0.0);
    for (std::size_t c = 0; c < w.cols(); ++c) {
      double s = b[c];
      for (std::size_t r = 0; r < w.rows(); ++r) s += x[r] * w(r, c);
      y[c] = (i < cfg.layers) ? std::max(0.0, s) : s;
    }
    x = std::move(y);
  }
  return x;
}

inline std::vector<double> oracle_mean(const std::vector<std::vector<double>>& rows) {
  std::vector<double> sum(rows.front().size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) sum[i] += r[i];
  }
  for (double& s : sum) s /= static_cast<double>(rows.size());
  return sum;
}

}  // namespace ppn::test
