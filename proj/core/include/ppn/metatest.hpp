#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppn/dataset.hpp"
#include "ppn/protoprop.hpp"
#include "ppn/taxonomy.hpp"
#include "ppn/trainer.hpp"

namespace ppn {

enum class TestSetting {
  /// Graph edges of test classes and weakly-labeled test data are known.
  PpnPlus,
  /// Parents are predicted as the nearest buffered training prototypes.
  Ppn,
};

const char* setting_name(TestSetting s);
TestSetting parse_setting(const std::string& s);

/// The `k` buffered classes whose prototypes are nearest (Euclidean) to
/// `prototype`, nearest first; ties go to the smaller ClassId. Returns every
/// class when the buffer holds fewer than `k`.
std::vector<ClassId> predict_parents(std::span<const double> prototype, const PrototypeBuffer& buffer,
                                     std::size_t k);

/// Weakly-labeled prototypes of classes outside the training buffer, for the
/// PPN+ setting: the mean embedding of each such internal class's samples.
PrototypeBuffer weak_test_prototypes(const Model& model, const Dataset& data, const CategoryGraph& graph,
                                     const PrototypeBuffer& training);

struct TestContext {
  const Model* model = nullptr;
  const CategoryGraph* graph = nullptr;
  const PrototypeBuffer* buffer = nullptr;
  /// Used by PPN+ for parents that are not training classes.
  const PrototypeBuffer* weak = nullptr;
  TestSetting setting = TestSetting::PpnPlus;
  std::size_t k_parents = 3;
};

/// Final prototype of test class `id` from its support embeddings
/// (rows of an (n x d) matrix).
std::vector<double> build_test_prototype(ClassId id, const Tensor& support_embeddings, const TestContext& ctx);

struct Classification {
  /// Probabilities aligned with the input prototypes.
  std::vector<double> probabilities;
  /// Index into the input prototypes.
  std::size_t predicted = 0;
};

/// Softmax over negative squared distances; the arg-max breaks ties by the
/// smaller ClassId. Needs at least two prototypes.
Classification classify(std::span<const double> query,
                        const std::vector<std::pair<ClassId, std::vector<double>>>& prototypes);

struct AccuracySummary {
  double mean = 0.0;
  /// 1.96 * sample standard deviation / sqrt(n).
  double ci95 = 0.0;
};

AccuracySummary summarize_accuracies(std::span<const double> accuracies);

/// Per-task rng seed: the run seed xor the task index, passed through a
/// mixing function.
std::uint64_t task_seed(std::uint64_t seed, std::size_t task_index);

/// Runs `task(index, rng)` for every index on `workers` threads. Results
/// are returned in index order and do not depend on the worker count.
std::vector<double> run_tasks(std::size_t n_tasks, std::uint64_t seed, std::size_t workers,
                              const std::function<double(std::size_t, Rng&)>& task);

struct EvalConfig {
  TestSetting setting = TestSetting::PpnPlus;
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t q_query = 15;
  std::size_t n_tasks = 600;
  std::size_t k_parents = 3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct EvalReport {
  EvalConfig config;
  double lambda = 0.0;
  AccuracySummary summary;
  std::vector<double> per_task;

  nlohmann::json to_json() const;
};

/// N-way k-shot accuracy over freshly sampled test tasks.
EvalReport evaluate(const Model& model, const CategoryGraph& graph, const Dataset& data, const EvalConfig& config);

}  // namespace ppn
