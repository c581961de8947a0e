// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass --quick to shrink the two training experiments for
// a smoke run (their verdicts are then not meaningful).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

namespace ppn {
namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

bool g_quick = false;

// ---- gradient suite ----------------------------------------------------

// Contracts an output against fixed random weights so every entry matters.
ad::Var contract(ad::Expression& e, ad::Var out, const Shape& shape, Rng& rng) {
  return sum(out * e.constant(test::random_tensor(shape, rng)));
}

double embed_instance(Rng& rng) {
  std::uniform_int_distribution<int> layers(1, 2), dim(2, 6);
  const BackboneConfig cfg{static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng)),
                           static_cast<std::size_t>(dim(rng)), layers(rng)};
  TensorMap b = init_backbone(cfg, rng);
  for (auto& [name, t] : b) t = test::random_tensor(t.shape(), rng);
  const std::size_t n = 3;
  b["x"] = test::random_tensor({n, cfg.input_dim}, rng);
  ad::Expression e;
  contract(e, embed(e, cfg, e.input("x")), {n, cfg.output_dim}, rng);
  return test::max_gradient_error(e, b);
}

// Random parent lists over n rows where parents always come earlier.
std::vector<std::vector<std::size_t>> random_parents(std::size_t n, Rng& rng, double p = 0.5) {
  std::bernoulli_distribution edge(p);
  std::vector<std::vector<std::size_t>> parents(n);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (edge(rng)) parents[i].push_back(j);
    }
  }
  return parents;
}

double propagation_instance(Rng& rng, bool scores_only) {
  std::uniform_int_distribution<std::size_t> dim(2, 5), count(2, 6);
  std::uniform_real_distribution<double> lam(0.0, 0.9);
  const std::size_t d = dim(rng), n = count(rng);
  TensorMap b = init_attention(d, rng, 0.5);
  b["p0"] = test::random_tensor({n, d}, rng);
  auto parents = random_parents(n, rng);
  if (parents[n - 1].empty()) parents[n - 1].push_back(0);
  const PropagationOptions opts{lam(rng), std::bernoulli_distribution(0.3)(rng)};
  ad::Expression e;
  ad::Var scores;
  ad::Var out = propagate_rows(e, e.input("p0"), parents, opts, &scores);
  if (scores_only) {
    contract(e, scores, {n, n}, rng);
  } else {
    contract(e, out, {n, d}, rng);
  }
  return test::max_gradient_error(e, b);
}

double episode_instance(Rng& rng, const GeneratedData& gen) {
  std::uniform_real_distribution<double> lam(0.0, 0.9);
  TrainConfig tc;
  tc.lambda = lam(rng);
  tc.seed = rng();
  tc.backbone = {gen.data.input_dim(), 6, 4, 1};
  const Model model = init_training(tc).model;
  const PrototypeBuffer buf = training_buffer(model, gen.data, gen.graph);
  // A level-wise episode: a few classes of one level with two queries each.
  const auto train_leaves = gen.graph.leaves(Split::Train);
  const auto classes = sample_without_replacement<ClassId>(train_leaves, 3, rng);
  std::vector<std::size_t> rows, labels;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    for (std::size_t r : sample_without_replacement(gen.data.indices_of(classes[i]), 2, rng)) {
      rows.push_back(r);
      labels.push_back(i);
    }
  }
  const Episode ep{classes, gen.data.stack(rows), labels};
  return test::max_gradient_error(episode_loss(ep, gen.graph, buf, model), model.params);
}

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  GenSpec spec;
  spec.depth = 3;
  spec.branching = 3;
  spec.input_dim = 5;
  spec.samples_per_leaf = 4;
  const GeneratedData gen = generate(spec);
  const std::vector<std::pair<const char*, std::function<double()>>> families{
      {"embed", [&] { return embed_instance(rng); }},
      {"attention", [&] { return propagation_instance(rng, true); }},
      {"propagate", [&] { return propagation_instance(rng, false); }},
      {"episode_loss", [&] { return episode_instance(rng, gen); }},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, run] : families) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, run());
    ok &= worst < 1e-3;
    detail += std::string(name) + " max rel err " + fmt(worst, 2) + "; ";
  }
  const double secs = seconds_since(t0);
  ok &= secs < 30.0;
  return {ok, detail + fmt(secs, 3) + " s (limit 30 s)"};
}

// ---- propagation oracle ------------------------------------------------

Verdict propagation_oracle() {
  Rng rng(77);
  double worst = 0.0;
  for (int g = 0; g < 50; ++g) {
    std::uniform_int_distribution<std::size_t> count(1, 10), dim(2, 6);
    const std::size_t n = count(rng), d = dim(rng);
    const auto parents = random_parents(n, rng, 0.4);
    const TensorMap att = init_attention(d, rng, 0.5);
    const Tensor p0 = test::random_tensor({n, d}, rng);
    const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    ad::Expression e;
    propagate_rows(e, e.input("p0"), parents, {lambda, false});
    TensorMap b = att;
    b["p0"] = p0;
    const Tensor out = ad::evaluate(e, b).output();
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<std::vector<double>> ps;
      for (std::size_t p : parents[r]) ps.emplace_back(p0.row(p).begin(), p0.row(p).end());
      const auto expect = test::oracle_propagate(p0.row(r), ps, att.at(kAttentionG), att.at(kAttentionH), lambda);
      for (std::size_t c = 0; c < d; ++c) worst = std::max(worst, std::abs(out(r, c) - expect[c]));
    }
  }
  return {worst <= 1e-12, "50 graphs, max abs deviation " + fmt(worst, 3) + " (limit 1e-12)"};
}

// ---- algebraic invariants ----------------------------------------------

Verdict algebraic_invariants() {
  Rng rng(31);
  double scale_dev = 0.0, sum_dev = 0.0, identity_dev = 0.0, root_dev = 0.0;
  bool argmax_ok = true;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 2 + t % 7;
    const TensorMap att = init_attention(d, rng, 0.5);
    const auto p = test::random_vector(d, rng);
    const auto q = test::random_vector(d, rng);
    const double base = attention(p, q, att);
    for (double c : {0.5, 2.0, 10.0}) {
      auto ps = p, qs = q;
      for (double& x : ps) x *= c;
      for (double& x : qs) x *= c;
      scale_dev = std::max({scale_dev, std::abs(attention(ps, q, att) - base), std::abs(attention(p, qs, att) - base),
                            std::abs(attention(ps, qs, att) - base)});
    }

    std::vector<std::pair<ClassId, std::vector<double>>> protos;
    for (ClassId c = 0; c < 5; ++c) protos.emplace_back(c, test::random_vector(d, rng));
    const auto cls = classify(q, protos);
    double total = 0.0;
    for (double x : cls.probabilities) total += x;
    sum_dev = std::max(sum_dev, std::abs(total - 1.0));
    std::size_t nearest = 0;
    for (std::size_t i = 1; i < protos.size(); ++i) {
      if (squared_distance(q, protos[i].second) < squared_distance(q, protos[nearest].second)) nearest = i;
    }
    argmax_ok &= cls.predicted == nearest;

    const auto one = propagate(p, {{1, q}, {2, test::random_vector(d, rng)}}, att, {1.0, t % 2 == 0});
    for (std::size_t i = 0; i < d; ++i) identity_dev = std::max(identity_dev, std::abs(one.prototype[i] - p[i]));
    const auto root = propagate(p, {}, att, {0.0, false});
    for (std::size_t i = 0; i < d; ++i) root_dev = std::max(root_dev, std::abs(root.prototype[i] - p[i]));
  }
  const bool ok = scale_dev <= 1e-9 && sum_dev <= 1e-9 && identity_dev == 0.0 && root_dev == 0.0 && argmax_ok;
  return {ok, "scale dev " + fmt(scale_dev, 2) + ", prob-sum dev " + fmt(sum_dev, 2) + ", lambda=1 dev " +
                  fmt(identity_dev, 2) + ", root dev " + fmt(root_dev, 2) +
                  (argmax_ok ? ", argmax = nearest" : ", argmax mismatch")};
}

// ---- refresh schedule ------------------------------------------------

Verdict training_schedule() {
  GenSpec spec;
  spec.depth = 4;
  const GeneratedData gen = generate(spec);
  TrainConfig tc;
  tc.iterations = 50;
  tc.refresh_every = 5;

  std::vector<std::uint64_t> refreshed;
  TrainHooks hooks;
  hooks.on_refresh = [&](std::uint64_t tau, const PrototypeBuffer&) { refreshed.push_back(tau); };
  train(tc, gen.data, gen.graph, init_training(tc), hooks);
  std::vector<std::uint64_t> expect;
  for (std::uint64_t t = 0; t < 50; t += 5) expect.push_back(t);
  const bool schedule_ok = refreshed == expect;

  tc.lambda = 1.0;
  tc.buffer_mode = BufferMode::Detached;
  double max_norm = 0.0;
  int steps = 0;
  TrainHooks grads;
  grads.on_gradients = [&](std::uint64_t, const TensorMap& g) {
    ++steps;
    for (const char* name : {kAttentionG, kAttentionH}) max_norm = std::max(max_norm, l2_norm(g.at(name).data()));
  };
  train(tc, gen.data, gen.graph, init_training(tc), grads);

  std::string got;
  for (auto t : refreshed) got += (got.empty() ? "" : ",") + std::to_string(t);
  return {schedule_ok && max_norm == 0.0 && steps == 50,
          "refreshes at {" + got + "}; lambda=1 max |grad W_g|,|grad W_h| = " + fmt(max_norm, 2) + " over " +
              std::to_string(steps) + " steps"};
}

// ---- training experiments ----------------------------------------------

struct Accuracies {
  double ppn = 0.0;
  double ppn_plus = 0.0;
};

Accuracies train_and_evaluate(const GeneratedData& gen, double lambda, std::uint64_t seed, std::size_t n_tasks) {
  TrainConfig tc;
  tc.lambda = lambda;
  tc.seed = seed;
  if (g_quick) tc.iterations = 200;
  const Model model = train(tc, gen.data, gen.graph, init_training(tc)).state.model;
  EvalConfig ec;
  ec.n_tasks = n_tasks;
  ec.seed = seed;
  ec.workers = 1;
  Accuracies a;
  ec.setting = TestSetting::PpnPlus;
  a.ppn_plus = evaluate(model, gen.graph, gen.data, ec).summary.mean;
  ec.setting = TestSetting::Ppn;
  a.ppn = evaluate(model, gen.graph, gen.data, ec).summary.mean;
  return a;
}

struct Ordering {
  Accuracies propagated;  // lambda = 0
  Accuracies baseline;    // lambda = 1
  bool plus_at_least_ppn = true;
  double seconds = 0.0;
};

Ordering ordering_runs(const GenSpec& base, std::size_t n_seeds, std::size_t n_tasks) {
  const auto t0 = Clock::now();
  Ordering o;
  for (std::uint64_t seed = 0; seed < n_seeds; ++seed) {
    GenSpec spec = base;
    spec.seed = seed;
    const GeneratedData gen = generate(spec);
    const Accuracies zero = train_and_evaluate(gen, 0.0, seed, n_tasks);
    const Accuracies one = train_and_evaluate(gen, 1.0, seed, n_tasks);
    o.plus_at_least_ppn &= zero.ppn_plus >= zero.ppn;
    o.propagated.ppn += zero.ppn / static_cast<double>(n_seeds);
    o.propagated.ppn_plus += zero.ppn_plus / static_cast<double>(n_seeds);
    o.baseline.ppn += one.ppn / static_cast<double>(n_seeds);
    o.baseline.ppn_plus += one.ppn_plus / static_cast<double>(n_seeds);
  }
  o.seconds = seconds_since(t0);
  return o;
}

std::string describe(const Ordering& o) {
  return "lambda=0: PPN+ " + fmt(100 * o.propagated.ppn_plus) + "%, PPN " + fmt(100 * o.propagated.ppn) +
         "%; lambda=1: " + fmt(100 * o.baseline.ppn_plus) + "%; gap " +
         fmt(100 * (o.propagated.ppn_plus - o.baseline.ppn_plus)) + " pp (need >= 3); PPN+ >= PPN on every seed: " +
         (o.plus_at_least_ppn ? "yes" : "no") + "; " + fmt(o.seconds, 4) + " s (limit 900 s)";
}

Verdict ordering_experiment() {
  const Ordering o = ordering_runs(GenSpec{}, g_quick ? 1 : 5, g_quick ? 50 : 600);
  const double gap = o.propagated.ppn_plus - o.baseline.ppn_plus;
  return {gap >= 0.03 && o.plus_at_least_ppn && o.seconds < 900.0, describe(o)};
}

/// The sweep fixture: the default hierarchy with sample noise large enough
/// that one support sample is a poor prototype, which puts 1-shot accuracy
/// of the plain prototype rule near 45%.
GenSpec sweep_fixture() {
  GenSpec spec;
  spec.sigma_sample = 3.0;
  return spec;
}

Verdict lambda_sweep() {
  const std::vector<double> weights{0.0, 0.3, 0.6, 0.9};
  const std::size_t n_seeds = g_quick ? 1 : 5;
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < n_seeds; ++seed) {
    GenSpec spec = sweep_fixture();
    spec.seed = seed;
    const GeneratedData gen = generate(spec);
    std::vector<double> acc;
    for (double w : weights) acc.push_back(train_and_evaluate(gen, 1.0 - w, seed, g_quick ? 50 : 600).ppn_plus);
    wins += acc.back() > acc.front() ? 1 : 0;
    detail += "seed " + std::to_string(seed) + " [";
    for (std::size_t i = 0; i < acc.size(); ++i) detail += (i ? " " : "") + fmt(100 * acc[i], 3);
    detail += "] ";
  }
  return {wins >= 4, "1-lambda in {0, 0.3, 0.6, 0.9}, PPN+ accuracy %: " + detail + "; 0.9 beats 0 on " +
                         std::to_string(wins) + "/" + std::to_string(n_seeds) + " seeds (need 4)"};
}

// ---- evaluation statistics ---------------------------------------------

Verdict evaluation_statistics() {
  const std::vector<double> acc{0.6, 0.8};
  const AccuracySummary s = summarize_accuracies(acc);
  const double hand = 1.96 * std::sqrt(((0.6 - 0.7) * (0.6 - 0.7) + (0.8 - 0.7) * (0.8 - 0.7)) / 1.0) / std::sqrt(2.0);
  const bool ci_ok = std::abs(s.mean - 0.7) < 1e-12 && std::abs(s.ci95 - hand) < 1e-12 && std::abs(s.ci95 - 0.196) < 1e-3;
  const bool default_ok = EvalConfig{}.n_tasks == 600;

  GenSpec spec;
  spec.depth = 4;
  const GeneratedData gen = generate(spec);
  TrainConfig tc;
  tc.iterations = 100;
  const Model model = train(tc, gen.data, gen.graph, init_training(tc)).state.model;
  EvalConfig ec;
  ec.n_tasks = 200;
  ec.seed = 9;
  const std::string first = evaluate(model, gen.graph, gen.data, ec).to_json().dump();
  const std::string again = evaluate(model, gen.graph, gen.data, ec).to_json().dump();
  ec.workers = 4;
  const std::string four = evaluate(model, gen.graph, gen.data, ec).to_json().dump();
  const bool repro = first == again && first == four;
  return {ci_ok && default_ok && repro, std::string("ci95{0.6,0.8} = ") + fmt(s.ci95, 6) + " vs hand " +
                                            fmt(hand, 6) + "; default n_tasks " + std::to_string(EvalConfig{}.n_tasks) +
                                            "; reports identical across runs and workers {1,4}: " +
                                            (repro ? "yes" : "no")};
}

// ---- data pipeline -----------------------------------------------------

Verdict data_pipeline() {
  const auto dir = test::scratch_dir("acceptance_data");
  const GeneratedData gen = generate(GenSpec{});
  save_graph(gen.graph, dir / "graph.json");
  save_dataset(gen.data, dir / "data.jsonl");
  const CategoryGraph graph = load_graph(dir / "graph.json");
  const Dataset data = load_dataset(dir / "data.jsonl", graph);
  std::filesystem::remove_all(dir);
  const bool round_trip = graph.to_json() == gen.graph.to_json() && data == gen.data;

  bool thinning = true;
  std::string detail;
  const double p = GenSpec{}.weak_keep_base;
  for (std::size_t j = 0; j < gen.weak_drawn_kept.size(); ++j) {
    const auto [drawn, kept] = gen.weak_drawn_kept[j];
    if (drawn == 0) continue;
    const double q = std::pow(p, static_cast<double>(j + 1));
    const double mean = static_cast<double>(drawn) * q;
    const double sigma = std::sqrt(static_cast<double>(drawn) * q * (1 - q));
    const double z = (static_cast<double>(kept) - mean) / sigma;
    thinning &= std::abs(z) <= 3.0;
    detail += "L" + std::to_string(j + 1) + " " + std::to_string(kept) + "/" + std::to_string(drawn) + " z=" +
              fmt(z, 2) + "; ";
  }
  return {round_trip && thinning, std::string("round trip ") + (round_trip ? "identical" : "differs") + "; " + detail};
}

}  // namespace
}  // namespace ppn

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) ppn::g_quick |= std::strcmp(argv[i], "--quick") == 0;
  const std::vector<std::pair<const char*, ppn::Verdict (*)()>> criteria{
      {"gradient suite", ppn::gradient_suite},
      {"propagation oracle", ppn::propagation_oracle},
      {"algebraic invariants", ppn::algebraic_invariants},
      {"training schedule", ppn::training_schedule},
      {"ordering experiment", ppn::ordering_experiment},
      {"lambda sweep trend", ppn::lambda_sweep},
      {"evaluation statistics", ppn::evaluation_statistics},
      {"data pipeline", ppn::data_pipeline},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    ppn::Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << name << ": " << v.detail << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
