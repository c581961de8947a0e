#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "support.hpp"

namespace ppn {
namespace {

TEST(Generate, BinaryTreeWithoutExtraParents) {
  GenSpec spec;
  spec.depth = 3;
  spec.branching = 2;
  spec.multi_parent_prob = 0.0;
  spec.test_fraction = 0.25;
  const GeneratedData gen = generate(spec);
  EXPECT_EQ(gen.graph.size(), 7u);
  EXPECT_EQ(gen.graph.edges().size(), 6u);
  const auto train = gen.graph.leaves(Split::Train);
  const auto test = gen.graph.leaves(Split::Test);
  EXPECT_EQ(train.size(), 3u);
  EXPECT_EQ(test.size(), 1u);
  for (ClassId t : test) EXPECT_EQ(std::count(train.begin(), train.end(), t), 0);
}

TEST(Generate, RecordsRespectTheGraph) {
  GenSpec spec;
  spec.depth = 4;
  spec.multi_parent_prob = 0.3;
  const GeneratedData gen = generate(spec);
  EXPECT_NO_THROW(gen.data.check_against(gen.graph));
  for (const Record& r : gen.data.records()) {
    EXPECT_EQ(r.features.size(), spec.input_dim);
    if (gen.graph.is_leaf(r.label)) continue;
    EXPECT_EQ(gen.graph.node(r.label).split, Split::Weak);
  }
  for (ClassId leaf : gen.graph.leaves(Split::Train)) EXPECT_EQ(gen.data.count(leaf), spec.samples_per_leaf);
  bool multi = false;
  for (const auto& n : gen.graph.nodes()) multi |= gen.graph.parents(n.id).size() > 1;
  EXPECT_TRUE(multi);
}

TEST(Generate, SameSeedSameData) {
  GenSpec spec;
  spec.depth = 3;
  const GeneratedData a = generate(spec);
  const GeneratedData b = generate(spec);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.graph.to_json(), b.graph.to_json());
  spec.seed = 1;
  EXPECT_FALSE(generate(spec).data == a.data);
}

TEST(Generate, WeakThinningAtLevelThree) {
  // One class per level, so level 3 draws exactly 1000 candidates.
  GenSpec spec;
  spec.depth = 4;
  spec.branching = 1;
  spec.test_fraction = 0.0;
  spec.weak_candidates = 1000;
  const GeneratedData gen = generate(spec);
  const auto [drawn, kept] = gen.weak_drawn_kept.at(2);
  ASSERT_EQ(drawn, 1000u);
  const double p = std::pow(0.6, 3);
  const double sigma = std::sqrt(1000 * p * (1 - p));
  EXPECT_LE(std::abs(static_cast<double>(kept) - 1000 * p), 3 * sigma);
  EXPECT_EQ(gen.data.count(2), kept);
}

TEST(Generate, InvalidSpecs) {
  GenSpec spec;
  spec.depth = 1;
  EXPECT_THROW(generate(spec), std::invalid_argument);
  spec = GenSpec{};
  spec.weak_keep_base = 1.2;
  EXPECT_THROW(generate(spec), std::invalid_argument);
  spec = GenSpec{};
  spec.sigma_sample = 0.0;
  EXPECT_THROW(generate(spec), std::invalid_argument);
}

TEST(Summary, LevelsCountClassesAndSamples) {
  GenSpec spec;
  spec.depth = 3;
  spec.branching = 2;
  const GeneratedData gen = generate(spec);
  const auto rows = summarize_levels(gen.graph, gen.data);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].weak_classes, 1u);
  EXPECT_EQ(rows[2].train_classes + rows[2].test_classes, 4u);
  std::size_t total = 0;
  for (const auto& r : rows) total += r.train_samples + r.test_samples + r.weak_samples;
  EXPECT_EQ(total, gen.data.size());
}

TEST(DatasetIo, RoundTrip) {
  const auto dir = test::scratch_dir("data_io");
  GenSpec spec;
  spec.depth = 3;
  const GeneratedData gen = generate(spec);
  save_graph(gen.graph, dir / "graph.json");
  save_dataset(gen.data, dir / "data.jsonl");
  const CategoryGraph graph = load_graph(dir / "graph.json");
  const Dataset data = load_dataset(dir / "data.jsonl", graph);
  EXPECT_EQ(graph.to_json(), gen.graph.to_json());
  ASSERT_EQ(data.size(), gen.data.size());
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(data.record(i), gen.data.record(i));
  std::filesystem::remove_all(dir);
}

TEST(DatasetIo, UnknownClassAndEmptyFile) {
  const auto dir = test::scratch_dir("data_bad");
  const CategoryGraph graph = test::chain_graph();
  std::ofstream(dir / "bad.jsonl") << R"({"features": [1, 2], "class": 2})" << '\n'
                                   << R"({"features": [1, 2], "class": 999})" << '\n';
  try {
    load_dataset(dir / "bad.jsonl", graph);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  std::ofstream(dir / "empty.jsonl").close();
  const Dataset empty = load_dataset(dir / "empty.jsonl", graph);
  EXPECT_TRUE(empty.empty());
  EXPECT_EQ(empty.input_dim(), 0u);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, StackAndDimensionCheck) {
  Dataset d;
  d.add({{1, 2}, 0});
  d.add({{3, 4}, 1});
  d.add({{5, 6}, 0});
  EXPECT_EQ(d.count(0), 2u);
  EXPECT_EQ(d.features_of(0), Tensor::matrix({{1, 2}, {5, 6}}));
  EXPECT_THROW(d.add({{1, 2, 3}, 0}), std::invalid_argument);
  EXPECT_EQ(d.count(7), 0u);
}

}  // namespace
}  // namespace ppn
