#include "ppn/trainer.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace ppn {

const char* buffer_mode_name(BufferMode m) { return m == BufferMode::Detached ? "detached" : "fresh"; }

BufferMode parse_buffer_mode(const std::string& s) {
  if (s == "detached") return BufferMode::Detached;
  if (s == "fresh") return BufferMode::Fresh;
  throw std::invalid_argument("unknown buffer mode '" + s + "' (expected detached or fresh)");
}

double TrainConfig::effective_lambda() const {
  if (lambda) return *lambda;
  auto it = lambda_by_shot.find(shot);
  if (it == lambda_by_shot.end()) {
    throw std::invalid_argument("no lambda configured for " + std::to_string(shot) + "-shot training");
  }
  return it->second;
}

void TrainConfig::validate() const {
  if (refresh_every == 0) throw std::invalid_argument("refresh_every must be positive");
  if (n_leaves == 0) throw std::invalid_argument("n_leaves must be positive");
  if (batch_per_class == 0) throw std::invalid_argument("batch_per_class must be positive");
  if (min_classes < 2) throw std::invalid_argument("min_classes must be at least 2");
  if (shot < 1) throw std::invalid_argument("shot must be positive");
  for (const auto& [s, l] : lambda_by_shot) {
    if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("lambda for " + std::to_string(s) + "-shot outside [0, 1]");
  }
  PropagationOptions{effective_lambda(), softmax_parents}.validate();
  schedule.validate();
  backbone.validate();
}

TrainState init_training(const TrainConfig& config) {
  config.validate();
  Rng rng(config.seed);
  TrainState state;
  state.model.backbone = config.backbone;
  state.model.params = init_backbone(config.backbone, rng);
  state.model.params.merge(init_attention(config.backbone.output_dim, rng));
  state.model.propagation = {config.effective_lambda(), config.softmax_parents};
  state.adam.config = config.adam;
  return state;
}

namespace {

constexpr const char* kIteration = "train.iteration";
constexpr const char* kLambda = "train.lambda";
constexpr const char* kSoftmax = "train.softmax_parents";
constexpr const char* kAdamStep = "adam.step";
const std::string kAdamFirst = "adam.m.";
const std::string kAdamSecond = "adam.v.";

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed ^ (salt + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

TensorMap to_checkpoint(const TrainState& state) {
  TensorMap out = state.model.params;
  out[kIteration] = Tensor::scalar(static_cast<double>(state.iteration));
  out[kLambda] = Tensor::scalar(state.model.propagation.lambda);
  out[kSoftmax] = Tensor::scalar(state.model.propagation.softmax_parents ? 1.0 : 0.0);
  out[kAdamStep] = Tensor::scalar(static_cast<double>(state.adam.step));
  for (const auto& [name, t] : state.adam.first_moment) out[kAdamFirst + name] = t;
  for (const auto& [name, t] : state.adam.second_moment) out[kAdamSecond + name] = t;
  return out;
}

TrainState from_checkpoint(const TensorMap& tensors, std::size_t input_dim) {
  TrainState state;
  for (const auto& [name, t] : tensors) {
    if (name.starts_with("emb.") || name.starts_with("att.")) {
      state.model.params[name] = t;
    } else if (name.starts_with(kAdamFirst)) {
      state.adam.first_moment[name.substr(kAdamFirst.size())] = t;
    } else if (name.starts_with(kAdamSecond)) {
      state.adam.second_moment[name.substr(kAdamSecond.size())] = t;
    }
  }
  if (!state.model.params.contains(kAttentionG) || !state.model.params.contains(kAttentionH)) {
    throw std::invalid_argument("checkpoint lacks attention parameters");
  }
  const Tensor& wg = state.model.params.at(kAttentionG);
  if (wg.rank() != 2 || wg.shape()[0] != wg.shape()[1] || state.model.params.at(kAttentionH).shape() != wg.shape()) {
    throw std::invalid_argument("attention parameters must be square matrices of equal size");
  }
  state.model.backbone = infer_backbone(state.model.params, input_dim, wg.shape()[0]);
  if (state.model.backbone.output_dim != wg.shape()[0]) {
    throw std::invalid_argument("backbone output dimension " + std::to_string(state.model.backbone.output_dim) +
                                " differs from attention dimension " + std::to_string(wg.shape()[0]));
  }
  auto scalar = [&](const char* key, double fallback) {
    auto it = tensors.find(key);
    return it == tensors.end() ? fallback : it->second.item();
  };
  state.iteration = static_cast<std::uint64_t>(scalar(kIteration, 0.0));
  state.model.propagation.lambda = scalar(kLambda, 0.0);
  state.model.propagation.softmax_parents = scalar(kSoftmax, 0.0) != 0.0;
  state.adam.step = static_cast<std::uint64_t>(scalar(kAdamStep, 0.0));
  return state;
}

ad::Var classification_loss(ad::Var query_embeddings, ad::Var prototypes, const std::vector<std::size_t>& labels) {
  if (labels.empty()) throw std::invalid_argument("classification loss needs at least one query");
  ad::Var logp = ad::log_softmax_rows(-1.0 * ad::sq_dist(query_embeddings, prototypes));
  return (-1.0 / static_cast<double>(labels.size())) * ad::sum(ad::pick(logp, labels));
}

std::size_t PropagationBatch::row_of(ClassId id) const {
  auto it = std::lower_bound(classes.begin(), classes.end(), id);
  if (it == classes.end() || *it != id) throw std::invalid_argument("class " + std::to_string(id) + " not in batch");
  return static_cast<std::size_t>(it - classes.begin());
}

PropagationBatch make_batch(const CategoryGraph& graph, std::vector<ClassId> classes) {
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  PropagationBatch batch;
  batch.classes = std::move(classes);
  batch.parent_rows.resize(batch.classes.size());
  for (std::size_t i = 0; i < batch.classes.size(); ++i) {
    for (ClassId p : graph.parents(batch.classes[i])) {
      if (std::binary_search(batch.classes.begin(), batch.classes.end(), p)) {
        batch.parent_rows[i].push_back(batch.row_of(p));
      }
    }
  }
  return batch;
}

ad::Var subgraph_loss(ad::Expression& expr, const Model& model, const PropagationBatch& batch, ad::Var p0,
                      const std::vector<Episode>& episodes) {
  if (episodes.empty()) return expr.constant(Tensor::scalar(0.0));
  ad::Var prototypes = propagate_rows(expr, p0, batch.parent_rows, model.propagation);

  std::size_t total = 0;
  for (const auto& ep : episodes) {
    if (ep.queries.rank() != 2 || ep.queries.rows() == 0) throw std::invalid_argument("episode has no queries");
    if (ep.labels.size() != ep.queries.rows()) throw std::invalid_argument("episode labels do not match queries");
    total += ep.queries.rows();
  }
  const std::size_t dim = episodes.front().queries.cols();
  Tensor all(Shape{total, dim});
  std::size_t at = 0;
  for (const auto& ep : episodes) {
    if (ep.queries.cols() != dim) throw std::invalid_argument("episodes disagree on feature dimension");
    std::copy(ep.queries.data().begin(), ep.queries.data().end(), all.data().begin() + at * dim);
    at += ep.queries.rows();
  }
  ad::Var embedded = embed(expr, model.backbone, expr.constant(std::move(all)));

  std::optional<ad::Var> loss;
  at = 0;
  for (const auto& ep : episodes) {
    std::vector<std::size_t> proto_rows;
    for (ClassId c : ep.classes) proto_rows.push_back(batch.row_of(c));
    std::vector<std::size_t> query_rows(ep.queries.rows());
    for (std::size_t i = 0; i < query_rows.size(); ++i) query_rows[i] = at + i;
    at += query_rows.size();
    ad::Var term = classification_loss(ad::select_rows(embedded, std::move(query_rows)),
                                       ad::select_rows(prototypes, std::move(proto_rows)), ep.labels);
    loss = loss ? *loss + term : term;
  }
  return *loss;
}

namespace {

Tensor buffer_rows(const PrototypeBuffer& buffer, const std::vector<ClassId>& classes) {
  const std::size_t d = buffer.at(classes.front()).size();
  Tensor out(Shape{classes.size(), d});
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& v = buffer.at(classes[i]);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

ad::Expression episode_loss(const Episode& episode, const CategoryGraph& graph, const PrototypeBuffer& buffer,
                            const Model& model) {
  if (episode.labels.empty()) throw std::invalid_argument("episode has no queries");
  std::vector<ClassId> classes;
  for (ClassId c : episode.classes) {
    if (!buffer.contains(c)) throw std::invalid_argument("class " + std::to_string(c) + " has no buffered prototype");
    classes.push_back(c);
    for (ClassId p : graph.parents(c)) {
      if (buffer.contains(p)) classes.push_back(p);
    }
  }
  const PropagationBatch batch = make_batch(graph, std::move(classes));
  ad::Expression expr;
  ad::Var p0 = expr.constant(buffer_rows(buffer, batch.classes));
  expr.set_output(subgraph_loss(expr, model, batch, p0, {episode}));
  return expr;
}

namespace {

std::vector<std::size_t> draw_indices(std::span<const std::size_t> pool, std::size_t count, Rng& rng) {
  if (pool.size() >= count) return sample_without_replacement(pool, count, rng);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<std::size_t> out(count);
  for (auto& x : out) x = pool[pick(rng)];
  return out;
}

std::vector<std::string> names_of(const TensorMap& params) {
  std::vector<std::string> names;
  for (const auto& [name, t] : params) names.push_back(name);
  return names;
}

std::string describe(const std::vector<ClassId>& nodes) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < nodes.size(); ++i) os << (i ? "," : "") << nodes[i];
  os << '}';
  return os.str();
}

}  // namespace

PrototypeBuffer training_buffer(const Model& model, const Dataset& data, const CategoryGraph& graph) {
  std::vector<ClassId> classes;
  for (ClassId c : graph.training_classes()) {
    if (data.count(c) > 0) classes.push_back(c);
  }
  return refresh_buffer(data, model.params, model.backbone, classes);
}

TrainResult train(const TrainConfig& config, const Dataset& data, const CategoryGraph& graph, TrainState state,
                  const TrainHooks& hooks) {
  config.validate();
  const auto train_leaves = graph.leaves(Split::Train);
  for (ClassId c : train_leaves) {
    if (data.count(c) == 0) throw std::invalid_argument("training class " + std::to_string(c) + " has no samples");
  }
  if (config.n_leaves > train_leaves.size()) {
    throw std::invalid_argument("n_leaves " + std::to_string(config.n_leaves) + " exceeds the " +
                                std::to_string(train_leaves.size()) + " training leaves");
  }
  if (data.input_dim() != state.model.backbone.input_dim) {
    throw std::invalid_argument("data has dimension " + std::to_string(data.input_dim()) + ", backbone expects " +
                                std::to_string(state.model.backbone.input_dim));
  }

  TrainResult result;
  const std::vector<std::string> param_names = names_of(state.model.params);
  Rng rng(mix_seed(config.seed, state.iteration));
  PrototypeBuffer buffer;

  for (std::uint64_t tau = state.iteration; tau < config.iterations; ++tau) {
    std::vector<ClassId> nodes;
    try {
      if (tau % config.refresh_every == 0 || (config.buffer_mode == BufferMode::Detached && buffer.empty())) {
        buffer = training_buffer(state.model, data, graph);
        buffer.last_refresh = static_cast<long long>(tau);
        if (hooks.on_refresh) hooks.on_refresh(tau, buffer);
      }

      const Subgraph sub = sample_subgraph(graph, train_leaves, config.n_leaves, rng);
      for (ClassId c : sub.nodes) {
        if (data.count(c) > 0) nodes.push_back(c);
      }
      const PropagationBatch batch = make_batch(graph, nodes);

      std::map<int, std::vector<ClassId>> by_level;
      for (ClassId c : batch.classes) by_level[graph.level(c)].push_back(c);

      std::vector<Episode> episodes;
      for (const auto& [level, classes] : by_level) {
        if (classes.size() < config.min_classes) continue;
        Episode ep;
        ep.classes = classes;
        std::vector<std::size_t> picked;
        for (std::size_t k = 0; k < classes.size(); ++k) {
          for (std::size_t idx : draw_indices(data.indices_of(classes[k]), config.batch_per_class, rng)) {
            picked.push_back(idx);
            ep.labels.push_back(k);
          }
        }
        ep.queries = data.stack(picked);
        episodes.push_back(std::move(ep));
      }

      ad::Expression expr;
      ad::Var p0;
      if (config.buffer_mode == BufferMode::Detached) {
        p0 = expr.constant(buffer_rows(buffer, batch.classes));
      } else {
        std::vector<std::size_t> support;
        Tensor averaging(Shape{batch.classes.size(), batch.classes.size() * config.batch_per_class});
        for (std::size_t i = 0; i < batch.classes.size(); ++i) {
          for (std::size_t idx : draw_indices(data.indices_of(batch.classes[i]), config.batch_per_class, rng)) {
            averaging(i, support.size()) = 1.0 / static_cast<double>(config.batch_per_class);
            support.push_back(idx);
          }
        }
        ad::Var emb = embed(expr, state.model.backbone, expr.constant(data.stack(support)));
        p0 = ad::matmul(expr.constant(std::move(averaging)), emb);
      }
      expr.set_output(subgraph_loss(expr, state.model, batch, p0, episodes));

      const ad::Evaluation eval = ad::evaluate(expr, state.model.params);
      const auto inputs = expr.input_names();
      std::vector<std::string> used;
      for (const auto& name : param_names) {
        if (std::binary_search(inputs.begin(), inputs.end(), name)) used.push_back(name);
      }
      TensorMap grads = ad::gradient(expr, eval, used);
      for (const auto& name : param_names) grads.try_emplace(name, state.model.params.at(name).shape());
      if (hooks.on_gradients) hooks.on_gradients(tau, grads);

      const double lr = learning_rate(tau, config.schedule);
      adam_step(state.model.params, grads, state.adam, lr);

      IterationLog entry{tau, eval.output().item(), lr, episodes.size(), batch.classes.size()};
      result.log.push_back(entry);
      if (hooks.on_iteration) hooks.on_iteration(entry);
    } catch (const std::exception& e) {
      throw std::runtime_error("training iteration " + std::to_string(tau) + " (subgraph " + describe(nodes) +
                               "): " + e.what());
    }
    state.iteration = tau + 1;
    if (config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(state);
    }
  }
  result.state = std::move(state);
  return result;
}

}  // namespace ppn
