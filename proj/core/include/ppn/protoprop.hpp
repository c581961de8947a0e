#pragma once

// Prototype propagation on a category DAG.
//
// A class prototype starts as the mean embedding of the class samples (P0).
// Each parent z sends its P0 scaled by the attention score a(P0_y, P0_z),
// the cosine between W_g P0_y and W_h P0_z. The summed messages P+ are
// blended with P0 as  lambda * P0 + (1 - lambda) * P+.  A class without
// parents keeps its P0.

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppn/autodiff.hpp"
#include "ppn/dataset.hpp"
#include "ppn/embedding.hpp"
#include "ppn/taxonomy.hpp"
#include "ppn/tensor.hpp"

namespace ppn {

inline constexpr const char* kAttentionG = "att.Wg";
inline constexpr const char* kAttentionH = "att.Wh";

/// Identity plus uniform noise in [-noise, noise], for both W_g and W_h.
TensorMap init_attention(std::size_t dim, Rng& rng, double noise = 0.01);

struct PropagationOptions {
  double lambda = 0.0;
  /// Normalize scores across a class's parents with a softmax instead of
  /// summing raw cosines.
  bool softmax_parents = false;

  void validate() const;
};

/// Arithmetic mean of the rows of an (n x d) matrix. Throws on n == 0.
std::vector<double> init_prototype(const Tensor& embeddings);

/// Cosine between W_g p and W_h q; 0 when either transformed norm is below
/// ad::kNormGuard.
double attention(std::span<const double> p, std::span<const double> q, const TensorMap& att);

/// Propagation over a batch of classes inside an expression. Row i of `p0`
/// is the initial prototype of class i; `parent_rows[i]` lists the rows of its
/// parents. When `scores` is given it receives the (n x n) matrix of
/// per-edge weights actually used (zero off the edges).
ad::Var propagate_rows(ad::Expression& expr, ad::Var p0, const std::vector<std::vector<std::size_t>>& parent_rows,
                       const PropagationOptions& options, ad::Var* scores = nullptr);

struct Propagated {
  std::vector<double> prototype;
  /// One weight per supplied parent, in order.
  std::vector<double> scores;
};

/// Propagates into a single class from the given parent prototypes.
Propagated propagate(std::span<const double> p0, const std::vector<std::pair<ClassId, std::vector<double>>>& parents,
                     const TensorMap& att, const PropagationOptions& options);

/// Cached initial prototypes, recomputed lazily during training.
class PrototypeBuffer {
 public:
  bool contains(ClassId id) const { return entries_.contains(id); }
  const std::vector<double>& at(ClassId id) const;
  void set(ClassId id, std::vector<double> prototype);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<ClassId, std::vector<double>>& entries() const { return entries_; }

  /// Training iteration of the last refresh; -1 before the first.
  long long last_refresh = -1;

  nlohmann::json to_json() const;

 private:
  std::map<ClassId, std::vector<double>> entries_;
};

/// Initial prototypes of `classes` over all of their samples, embedded with
/// the current backbone. Throws std::invalid_argument naming any class
/// without samples.
PrototypeBuffer refresh_buffer(const Dataset& data, const TensorMap& params, const BackboneConfig& backbone,
                               std::span<const ClassId> classes);

}  // namespace ppn
