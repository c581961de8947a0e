#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "ppn/autodiff.hpp"
#include "ppn/dataset.hpp"
#include "ppn/embedding.hpp"
#include "ppn/optim.hpp"
#include "ppn/protoprop.hpp"
#include "ppn/taxonomy.hpp"

namespace ppn {

/// How training obtains the initial prototypes P0.
enum class BufferMode {
  /// Read from the lazily refreshed buffer as constants.
  Detached,
  /// Recomputed every iteration from a support batch inside the expression,
  /// so the loss also reaches the backbone through the prototypes.
  Fresh,
};

const char* buffer_mode_name(BufferMode m);
BufferMode parse_buffer_mode(const std::string& s);

struct TrainConfig {
  std::uint64_t iterations = 2000;
  /// Buffer refresh period m, in iterations.
  std::uint64_t refresh_every = 5;
  std::map<int, double> lambda_by_shot = {{1, 0.0}, {5, 0.5}};
  /// Shot count of the evaluation this model is trained for; selects lambda.
  int shot = 1;
  /// Overrides lambda_by_shot when set.
  std::optional<double> lambda;
  std::size_t n_leaves = 5;
  std::size_t batch_per_class = 8;
  std::size_t min_classes = 2;
  LrSchedule schedule;
  AdamConfig adam{0.9, 0.999, 1e-8, 1e-4};
  std::uint64_t seed = 0;
  BufferMode buffer_mode = BufferMode::Detached;
  bool softmax_parents = false;
  BackboneConfig backbone;
  /// Write a checkpoint every this many iterations; 0 disables.
  std::uint64_t checkpoint_every = 0;

  double effective_lambda() const;
  void validate() const;
};

struct Model {
  BackboneConfig backbone;
  /// "emb.*" and "att.*" tensors.
  TensorMap params;
  PropagationOptions propagation;
};

/// Everything needed to continue a run.
struct TrainState {
  Model model;
  AdamState adam;
  /// Next iteration to run (tau).
  std::uint64_t iteration = 0;
};

TrainState init_training(const TrainConfig& config);

/// Checkpoint tensors: model parameters plus "train.*" and "adam.*" state.
TensorMap to_checkpoint(const TrainState& state);
TrainState from_checkpoint(const TensorMap& tensors, std::size_t input_dim);

/// One level-wise classification task.
struct Episode {
  std::vector<ClassId> classes;
  /// Query features (n x input_dim).
  Tensor queries;
  /// Position of each query's class within `classes`.
  std::vector<std::size_t> labels;
};

/// Mean negative log-likelihood of the queries under the soft nearest
/// prototype rule: softmax over negative squared distances.
ad::Var classification_loss(ad::Var query_embeddings, ad::Var prototypes, const std::vector<std::size_t>& labels);

/// Classes of a propagation batch together with the parent links between them.
struct PropagationBatch {
  std::vector<ClassId> classes;
  std::vector<std::vector<std::size_t>> parent_rows;

  std::size_t row_of(ClassId id) const;
};

/// Rows for the given classes, with parents taken from `graph` and restricted
/// to classes present in the batch.
PropagationBatch make_batch(const CategoryGraph& graph, std::vector<ClassId> classes);

/// Summed loss of several episodes over one propagation batch whose initial
/// prototypes are `p0` (a row per batch class). Each episode contributes its
/// mean per-query loss.
ad::Var subgraph_loss(ad::Expression& expr, const Model& model, const PropagationBatch& batch, ad::Var p0,
                      const std::vector<Episode>& episodes);

/// Loss expression of a single episode: its classes and their graph parents
/// are propagated from buffered prototypes. Throws std::invalid_argument if
/// a class lacks a buffer entry or the episode has no queries.
ad::Expression episode_loss(const Episode& episode, const CategoryGraph& graph, const PrototypeBuffer& buffer,
                            const Model& model);

struct IterationLog {
  std::uint64_t iteration = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::size_t n_levels = 0;
  std::size_t subgraph_nodes = 0;
};

struct TrainHooks {
  std::function<void(std::uint64_t iteration, const PrototypeBuffer&)> on_refresh;
  std::function<void(std::uint64_t iteration, const TensorMap& grads)> on_gradients;
  std::function<void(const IterationLog&)> on_iteration;
  std::function<void(const TrainState&)> on_checkpoint;
};

struct TrainResult {
  TrainState state;
  std::vector<IterationLog> log;
};

/// Level-wise training from `state.iteration` up to `config.iterations`.
/// Every iteration refreshes the buffer when tau mod m == 0, samples a
/// subgraph from the training leaves, sums the per-level losses and applies
/// one Adam step.
TrainResult train(const TrainConfig& config, const Dataset& data, const CategoryGraph& graph, TrainState state,
                  const TrainHooks& hooks = {});

/// Buffered prototypes of every training class that has samples.
PrototypeBuffer training_buffer(const Model& model, const Dataset& data, const CategoryGraph& graph);

}  // namespace ppn
