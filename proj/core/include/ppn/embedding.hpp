#pragma once

#include <cstddef>
#include <string>

#include "ppn/autodiff.hpp"
#include "ppn/taxonomy.hpp"
#include "ppn/tensor.hpp"

namespace ppn {

/// Multilayer perceptron input_dim -> hidden_dim (relu) x layers -> output_dim.
/// With zero hidden layers the backbone is the identity and requires
/// input_dim == output_dim.
struct BackboneConfig {
  std::size_t input_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t output_dim = 32;
  int layers = 1;

  void validate() const;
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

std::string backbone_weight(int i);
std::string backbone_bias(int i);

/// Glorot-uniform weights, zero biases, stored as "emb.W<i>" (fan_in x fan_out)
/// and "emb.b<i>".
TensorMap init_backbone(const BackboneConfig& config, Rng& rng);

/// Recovers the configuration from the "emb.*" entries of a parameter map.
/// `output_dim` is needed only for the identity backbone.
BackboneConfig infer_backbone(const TensorMap& params, std::size_t input_dim, std::size_t output_dim);

/// Embeds the rows of `x` (n x input_dim) inside `expr`; the weights enter
/// as named inputs so gradients reach them.
ad::Var embed(ad::Expression& expr, const BackboneConfig& config, ad::Var x);

/// Plain forward pass. Accepts a single vector or an (n x input_dim) matrix
/// and returns the same rank.
Tensor embed(const TensorMap& params, const BackboneConfig& config, const Tensor& x);

}  // namespace ppn
