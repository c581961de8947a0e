#include "ppn/metatest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace ppn {

const char* setting_name(TestSetting s) { return s == TestSetting::PpnPlus ? "ppn+" : "ppn"; }

TestSetting parse_setting(const std::string& s) {
  if (s == "ppn+" || s == "ppn_plus") return TestSetting::PpnPlus;
  if (s == "ppn") return TestSetting::Ppn;
  throw std::invalid_argument("unknown test setting '" + s + "' (expected ppn or ppn+)");
}

std::vector<ClassId> predict_parents(std::span<const double> prototype, const PrototypeBuffer& buffer,
                                     std::size_t k) {
  if (buffer.empty()) throw std::invalid_argument("cannot predict parents from an empty buffer");
  if (k == 0) throw std::invalid_argument("K must be at least 1");
  std::vector<std::pair<double, ClassId>> ranked;
  for (const auto& [id, p] : buffer.entries()) ranked.emplace_back(squared_distance(prototype, p), id);
  const std::size_t n = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end());
  std::vector<ClassId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(ranked[i].second);
  return out;
}

PrototypeBuffer weak_test_prototypes(const Model& model, const Dataset& data, const CategoryGraph& graph,
                                     const PrototypeBuffer& training) {
  std::vector<ClassId> classes;
  for (const auto& n : graph.nodes()) {
    if (!graph.is_leaf(n.id) && !training.contains(n.id) && data.count(n.id) > 0) classes.push_back(n.id);
  }
  return refresh_buffer(data, model.params, model.backbone, classes);
}

std::vector<double> build_test_prototype(ClassId id, const Tensor& support_embeddings, const TestContext& ctx) {
  const std::vector<double> p0 = init_prototype(support_embeddings);
  std::vector<std::pair<ClassId, std::vector<double>>> parents;
  if (ctx.setting == TestSetting::Ppn) {
    for (ClassId p : predict_parents(p0, *ctx.buffer, ctx.k_parents)) parents.emplace_back(p, ctx.buffer->at(p));
  } else {
    for (ClassId p : ctx.graph->parents(id)) {
      if (ctx.buffer->contains(p)) {
        parents.emplace_back(p, ctx.buffer->at(p));
      } else if (ctx.weak && ctx.weak->contains(p)) {
        parents.emplace_back(p, ctx.weak->at(p));
      }
      // A parent with no samples at all is dropped.
    }
  }
  return propagate(p0, parents, ctx.model->params, ctx.model->propagation).prototype;
}

Classification classify(std::span<const double> query,
                        const std::vector<std::pair<ClassId, std::vector<double>>>& prototypes) {
  if (prototypes.size() < 2) throw std::invalid_argument("classification needs at least two prototypes");
  std::vector<double> logits;
  logits.reserve(prototypes.size());
  for (const auto& [id, p] : prototypes) logits.push_back(-squared_distance(query, p));
  const double mx = *std::max_element(logits.begin(), logits.end());
  Classification out;
  double total = 0.0;
  for (double l : logits) {
    out.probabilities.push_back(std::exp(l - mx));
    total += out.probabilities.back();
  }
  for (double& p : out.probabilities) p /= total;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    const std::size_t best = out.predicted;
    if (logits[i] > logits[best] || (logits[i] == logits[best] && prototypes[i].first < prototypes[best].first)) {
      out.predicted = i;
    }
  }
  return out;
}

AccuracySummary summarize_accuracies(std::span<const double> accuracies) {
  AccuracySummary s;
  const auto n = static_cast<double>(accuracies.size());
  if (accuracies.empty()) return s;
  for (double a : accuracies) s.mean += a;
  s.mean /= n;
  if (accuracies.size() < 2) return s;
  double ss = 0.0;
  for (double a : accuracies) ss += (a - s.mean) * (a - s.mean);
  s.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return s;
}

std::uint64_t task_seed(std::uint64_t seed, std::size_t task_index) {
  std::uint64_t z = seed ^ static_cast<std::uint64_t>(task_index);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<double> run_tasks(std::size_t n_tasks, std::uint64_t seed, std::size_t workers,
                              const std::function<double(std::size_t, Rng&)>& task) {
  std::vector<double> results(n_tasks, 0.0);
  auto run_one = [&](std::size_t i) {
    Rng rng(task_seed(seed, i));
    results[i] = task(i, rng);
  };
  workers = std::max<std::size_t>(1, std::min(workers, n_tasks));
  if (workers == 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n_tasks; i = next++) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

nlohmann::json EvalReport::to_json() const {
  return {
      {"setting", setting_name(config.setting)},
      {"N", config.n_way},
      {"k", config.k_shot},
      {"q", config.q_query},
      {"n_tasks", config.n_tasks},
      {"K", config.k_parents},
      {"lambda", lambda},
      {"mean_acc", summary.mean},
      {"ci95", summary.ci95},
      {"seed", config.seed},
      {"per_task_acc", per_task},
  };
}

EvalReport evaluate(const Model& model, const CategoryGraph& graph, const Dataset& data, const EvalConfig& config) {
  if (config.n_way < 2) throw std::invalid_argument("N must be at least 2");
  if (config.k_shot == 0 || config.q_query == 0) throw std::invalid_argument("k and q must be positive");
  if (data.input_dim() != model.backbone.input_dim) {
    throw std::invalid_argument("data has dimension " + std::to_string(data.input_dim()) +
                                ", checkpoint backbone expects " + std::to_string(model.backbone.input_dim));
  }
  const auto test_classes = graph.leaves(Split::Test);
  if (test_classes.size() < config.n_way) {
    throw std::invalid_argument("test split has " + std::to_string(test_classes.size()) + " classes, " +
                                std::to_string(config.n_way) + "-way tasks need more");
  }
  for (ClassId c : test_classes) {
    if (data.count(c) < config.k_shot + config.q_query) {
      throw std::invalid_argument("test class " + std::to_string(c) + " has " + std::to_string(data.count(c)) +
                                  " samples, fewer than k + q = " + std::to_string(config.k_shot + config.q_query));
    }
  }

  const PrototypeBuffer buffer = training_buffer(model, data, graph);
  const PrototypeBuffer weak = config.setting == TestSetting::PpnPlus ? weak_test_prototypes(model, data, graph, buffer)
                                                                       : PrototypeBuffer{};
  TestContext ctx{&model, &graph, &buffer, &weak, config.setting, config.k_parents};

  auto one_task = [&](std::size_t, Rng& rng) {
    const auto classes = sample_without_replacement<ClassId>(test_classes, config.n_way, rng);
    std::vector<std::size_t> support, query;
    for (ClassId c : classes) {
      const auto picked = sample_without_replacement(data.indices_of(c), config.k_shot + config.q_query, rng);
      support.insert(support.end(), picked.begin(), picked.begin() + static_cast<std::ptrdiff_t>(config.k_shot));
      query.insert(query.end(), picked.begin() + static_cast<std::ptrdiff_t>(config.k_shot), picked.end());
    }
    const Tensor support_emb = embed(model.params, model.backbone, data.stack(support));
    const Tensor query_emb = embed(model.params, model.backbone, data.stack(query));

    std::vector<std::pair<ClassId, std::vector<double>>> prototypes;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      Tensor rows(Shape{config.k_shot, support_emb.cols()});
      for (std::size_t s = 0; s < config.k_shot; ++s) {
        auto src = support_emb.row(i * config.k_shot + s);
        std::copy(src.begin(), src.end(), rows.row(s).begin());
      }
      prototypes.emplace_back(classes[i], build_test_prototype(classes[i], rows, ctx));
    }

    std::size_t correct = 0;
    for (std::size_t r = 0; r < query_emb.rows(); ++r) {
      const std::size_t truth = r / config.q_query;
      if (classify(query_emb.row(r), prototypes).predicted == truth) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(query_emb.rows());
  };

  EvalReport report;
  report.config = config;
  report.lambda = model.propagation.lambda;
  report.per_task = run_tasks(config.n_tasks, config.seed, config.workers, one_task);
  report.summary = summarize_accuracies(report.per_task);
  return report;
}

}  // namespace ppn
