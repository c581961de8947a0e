#include "ppn/protoprop.hpp"

#include <stdexcept>

namespace ppn {

TensorMap init_attention(std::size_t dim, Rng& rng, double noise) {
  std::uniform_real_distribution<double> u(-noise, noise);
  TensorMap att;
  for (const char* name : {kAttentionG, kAttentionH}) {
    Tensor w(Shape{dim, dim});
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) w(i, j) = (i == j ? 1.0 : 0.0) + u(rng);
    }
    att[name] = std::move(w);
  }
  return att;
}

void PropagationOptions::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
}

std::vector<double> init_prototype(const Tensor& embeddings) {
  if (embeddings.rank() != 2 || embeddings.rows() == 0) {
    throw std::invalid_argument("init_prototype needs at least one sample embedding");
  }
  std::vector<double> mean(embeddings.cols(), 0.0);
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    auto r = embeddings.row(i);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += r[k];
  }
  const double n = static_cast<double>(embeddings.rows());
  for (double& x : mean) x /= n;
  return mean;
}

namespace {

Tensor as_row(std::span<const double> v) { return Tensor(Shape{1, v.size()}, std::vector<double>(v.begin(), v.end())); }

}  // namespace

double attention(std::span<const double> p, std::span<const double> q, const TensorMap& att) {
  ad::Expression expr;
  ad::Var g = ad::matmul_nt(expr.constant(as_row(p)), expr.input(kAttentionG));
  ad::Var h = ad::matmul_nt(expr.constant(as_row(q)), expr.input(kAttentionH));
  expr.set_output(ad::matmul_nt(ad::row_normalize(g), ad::row_normalize(h)));
  return ad::evaluate(expr, att).output().item();
}

ad::Var propagate_rows(ad::Expression& expr, ad::Var p0, const std::vector<std::vector<std::size_t>>& parent_rows,
                       const PropagationOptions& options, ad::Var* scores) {
  options.validate();
  const std::size_t n = parent_rows.size();
  Tensor mask(Shape{n, n});
  std::vector<double> keep(n), mix(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : parent_rows[i]) {
      if (j >= n) throw std::invalid_argument("parent row out of range");
      if (j == i) throw std::invalid_argument("a class cannot be its own parent");
      mask(i, j) = 1.0;
    }
    const bool root = parent_rows[i].empty();
    keep[i] = root ? 1.0 : options.lambda;
    mix[i] = root ? 0.0 : 1.0 - options.lambda;
  }

  ad::Var g = ad::row_normalize(ad::matmul_nt(p0, expr.input(kAttentionG)));
  ad::Var h = ad::row_normalize(ad::matmul_nt(p0, expr.input(kAttentionH)));
  ad::Var cos = ad::matmul_nt(g, h);
  ad::Var weights = options.softmax_parents ? ad::masked_softmax_rows(cos, mask) : cos * expr.constant(mask);
  if (scores) *scores = weights;
  ad::Var messages = ad::matmul(weights, p0);
  return ad::scale_rows(p0, keep) + ad::scale_rows(messages, mix);
}

Propagated propagate(std::span<const double> p0, const std::vector<std::pair<ClassId, std::vector<double>>>& parents,
                     const TensorMap& att, const PropagationOptions& options) {
  const std::size_t d = p0.size();
  Tensor rows(Shape{parents.size() + 1, d});
  std::copy(p0.begin(), p0.end(), rows.row(0).begin());
  std::vector<std::vector<std::size_t>> parent_rows(parents.size() + 1);
  for (std::size_t i = 0; i < parents.size(); ++i) {
    if (parents[i].second.size() != d) {
      throw std::invalid_argument("parent " + std::to_string(parents[i].first) + " prototype has dimension " +
                                  std::to_string(parents[i].second.size()) + ", expected " + std::to_string(d));
    }
    std::copy(parents[i].second.begin(), parents[i].second.end(), rows.row(i + 1).begin());
    parent_rows[0].push_back(i + 1);
  }

  ad::Expression expr;
  ad::Var weights;
  ad::Var out = propagate_rows(expr, expr.constant(std::move(rows)), parent_rows, options, &weights);
  expr.set_output(out);
  const ad::Evaluation eval = ad::evaluate(expr, att);

  Propagated result;
  auto first = eval.output().row(0);
  result.prototype.assign(first.begin(), first.end());
  const Tensor& w = eval.value(weights);
  for (std::size_t i = 0; i < parents.size(); ++i) result.scores.push_back(w(0, i + 1));
  return result;
}

const std::vector<double>& PrototypeBuffer::at(ClassId id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw std::out_of_range("no buffered prototype for class " + std::to_string(id));
  return it->second;
}

void PrototypeBuffer::set(ClassId id, std::vector<double> prototype) { entries_[id] = std::move(prototype); }

nlohmann::json PrototypeBuffer::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [id, v] : entries_) doc[std::to_string(id)] = v;
  return doc;
}

PrototypeBuffer refresh_buffer(const Dataset& data, const TensorMap& params, const BackboneConfig& backbone,
                               std::span<const ClassId> classes) {
  PrototypeBuffer buffer;
  for (ClassId c : classes) {
    if (data.count(c) == 0) {
      throw std::invalid_argument("class " + std::to_string(c) + " has no samples to build a prototype from");
    }
  }
  // One forward pass over every selected record, then per-class means.
  std::vector<std::size_t> all;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (ClassId c : classes) {
    const auto idx = data.indices_of(c);
    spans.emplace_back(all.size(), idx.size());
    all.insert(all.end(), idx.begin(), idx.end());
  }
  if (all.empty()) return buffer;
  const Tensor emb = embed(params, backbone, data.stack(all));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto [start, count] = spans[i];
    std::vector<double> mean(emb.cols(), 0.0);
    for (std::size_t r = start; r < start + count; ++r) {
      auto row = emb.row(r);
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += row[k];
    }
    for (double& x : mean) x /= static_cast<double>(count);
    buffer.set(classes[i], std::move(mean));
  }
  return buffer;
}

}  // namespace ppn
