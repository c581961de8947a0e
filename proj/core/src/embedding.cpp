#include "ppn/embedding.hpp"

#include <cmath>
#include <stdexcept>

namespace ppn {

void BackboneConfig::validate() const {
  if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("backbone dimensions must be positive");
  if (layers < 0 || layers > 2) throw std::invalid_argument("backbone layers must be 0, 1 or 2");
  if (layers > 0 && hidden_dim == 0) throw std::invalid_argument("hidden_dim must be positive");
  if (layers == 0 && input_dim != output_dim) {
    throw std::invalid_argument("identity backbone needs input_dim == output_dim (" + std::to_string(input_dim) +
                                " vs " + std::to_string(output_dim) + ")");
  }
}

std::string backbone_weight(int i) { return "emb.W" + std::to_string(i); }
std::string backbone_bias(int i) { return "emb.b" + std::to_string(i); }

namespace {

std::vector<std::pair<std::size_t, std::size_t>> layer_dims(const BackboneConfig& c) {
  if (c.layers == 0) return {};
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  dims.emplace_back(c.input_dim, c.hidden_dim);
  for (int i = 1; i < c.layers; ++i) dims.emplace_back(c.hidden_dim, c.hidden_dim);
  dims.emplace_back(c.hidden_dim, c.output_dim);
  return dims;
}

}  // namespace

TensorMap init_backbone(const BackboneConfig& config, Rng& rng) {
  config.validate();
  TensorMap params;
  const auto dims = layer_dims(config);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto [fan_in, fan_out] = dims[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor w(Shape{fan_in, fan_out});
    for (double& x : w.data()) x = u(rng);
    params[backbone_weight(static_cast<int>(i))] = std::move(w);
    params[backbone_bias(static_cast<int>(i))] = Tensor(Shape{fan_out});
  }
  return params;
}

BackboneConfig infer_backbone(const TensorMap& params, std::size_t input_dim, std::size_t output_dim) {
  BackboneConfig c;
  c.input_dim = input_dim;
  c.output_dim = output_dim;
  int n = 0;
  while (params.contains(backbone_weight(n))) ++n;
  if (n == 0) {
    c.layers = 0;
    c.validate();
    return c;
  }
  if (n < 2 || n > 3) throw std::invalid_argument("backbone must have 2 or 3 affine layers, found " + std::to_string(n));
  c.layers = n - 1;
  const Tensor& first = params.at(backbone_weight(0));
  const Tensor& last = params.at(backbone_weight(n - 1));
  if (first.rank() != 2 || first.shape()[0] != input_dim) {
    throw std::invalid_argument("backbone expects input dimension " +
                                std::to_string(first.rank() == 2 ? first.shape()[0] : 0) + ", data has " +
                                std::to_string(input_dim));
  }
  c.hidden_dim = first.shape()[1];
  c.output_dim = last.shape()[1];
  for (int i = 0; i < n; ++i) {
    const auto [fi, fo] = layer_dims(c)[i];
    if (params.at(backbone_weight(i)).shape() != Shape{fi, fo} || !params.contains(backbone_bias(i)) ||
        params.at(backbone_bias(i)).shape() != Shape{fo}) {
      throw std::invalid_argument("backbone layer " + std::to_string(i) + " has inconsistent shapes");
    }
  }
  return c;
}

ad::Var embed(ad::Expression& expr, const BackboneConfig& config, ad::Var x) {
  ad::Var h = x;
  const int n = config.layers == 0 ? 0 : config.layers + 1;
  for (int i = 0; i < n; ++i) {
    h = ad::add_rowvec(ad::matmul(h, expr.input(backbone_weight(i))), expr.input(backbone_bias(i)));
    if (i + 1 < n) h = ad::relu(h);
  }
  return h;
}

Tensor embed(const TensorMap& params, const BackboneConfig& config, const Tensor& x) {
  const bool single = x.rank() == 1;
  if (x.rank() != 1 && x.rank() != 2) {
    throw std::invalid_argument("embed expects a vector or matrix, got shape " + shape_string(x.shape()));
  }
  if (x.cols() != config.input_dim) {
    throw std::invalid_argument("embed: input has dimension " + std::to_string(x.cols()) + ", backbone expects " +
                                std::to_string(config.input_dim));
  }
  if (config.layers == 0) return x;
  ad::Expression expr;
  ad::Var in = expr.constant(single ? x.reshaped(Shape{1, x.size()}) : x);
  expr.set_output(embed(expr, config, in));
  Tensor out = ad::evaluate(expr, params).output();
  return single ? out.reshaped(Shape{out.size()}) : out;
}

}  // namespace ppn
