#include <gtest/gtest.h>

#include <climits>
#include <random>
#include <set>

#include "fligan/augmentation.hpp"
#include "test_util.hpp"

using namespace fligan;
using fligan::testing::make_schema;
using fligan::testing::metadata_of;

namespace {

ClassDistribution dist(int node, std::map<std::string, std::size_t> counts) { return {node, std::move(counts)}; }

NodePartition node_with(int id, const std::map<std::string, std::size_t>& counts) {
  NodePartition p{id, {make_schema({"x"}, {}), {}}};
  for (const auto& [label, n] : counts)
    for (std::size_t i = 0; i < n; ++i) p.data.rows.push_back({0.0, label});
  return p;
}

/// Emits rows with x = -1 tagged with the requested label; refuses labels in `missing`.
class StubSource final : public SyntheticSource {
 public:
  explicit StubSource(std::set<std::string> missing = {}) : missing_(std::move(missing)) {}
  bool covers(const std::string& label) const override { return !missing_.count(label); }
  Dataset draw(const std::string& label, std::size_t n, std::uint64_t) const override {
    Dataset d{make_schema({"x"}, {}), {}};
    for (std::size_t i = 0; i < n; ++i) d.rows.push_back({-1.0, label});
    return d;
  }

 private:
  std::set<std::string> missing_;
};

/// Replays a fixed accuracy sequence; the "model" records the step index.
StepTrainer replay(std::vector<double> accs, std::vector<std::vector<Dataset>>* seen = nullptr) {
  return [accs, seen](const std::vector<Dataset>& data, int step) {
    if (seen) seen->push_back(data);
    WeightSet w{{{"step", {1}, {static_cast<double>(step)}}}};
    return std::make_pair(w, accs.at(static_cast<std::size_t>(step)));
  };
}

std::size_t spread(const ClassDistribution& d, const std::vector<std::string>& labels) {
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& l : labels) {
    lo = std::min(lo, d.count(l));
    hi = std::max(hi, d.count(l));
  }
  return hi - lo;
}

}  // namespace

TEST(StepQuota, BalancedNodeGetsNothing) {
  auto q = compute_step_quota({dist(0, {{"a", 100}, {"b", 100}})}, 0.01);
  EXPECT_EQ(q.total(), 0u);
  EXPECT_EQ(q.step_size, 1u);
}

TEST(StepQuota, HandEvaluatedExample) {
  auto q = compute_step_quota({dist(0, {{"a", 100}, {"b", 0}}), dist(1, {{"a", 0}, {"b", 50}})}, 0.01);
  EXPECT_EQ(q.step_size, 1u);
  EXPECT_EQ(q.at(0, "b"), 1u);
  EXPECT_EQ(q.at(1, "a"), 1u);
  EXPECT_EQ(q.at(0, "a"), 0u);
  EXPECT_EQ(q.at(1, "b"), 0u);
}

TEST(StepQuota, CappedByDeficitAndCoversUnseenClasses) {
  // N_max = 200 -> step 20; node 1 only needs 3 more "a"
  auto q = compute_step_quota({dist(0, {{"a", 200}}), dist(1, {{"a", 7}, {"b", 10}})}, 0.1, {"a", "b", "c"});
  EXPECT_EQ(q.step_size, 20u);
  EXPECT_EQ(q.at(0, "b"), 20u);
  EXPECT_EQ(q.at(0, "c"), 20u);
  EXPECT_EQ(q.at(1, "a"), 3u);
  EXPECT_EQ(q.at(1, "b"), 0u);
  EXPECT_EQ(q.at(1, "c"), 10u);
}

TEST(StepQuota, RejectsBadInput) {
  EXPECT_THROW(compute_step_quota({dist(0, {{"a", 0}})}, 0.5), ContractError);
  EXPECT_THROW(compute_step_quota({dist(0, {{"a", 3}})}, 0.0), ContractError);
  EXPECT_THROW(compute_step_quota({dist(0, {{"a", 3}})}, 1.5), ContractError);
}

TEST(StepQuota, RepeatedApplicationBalancesWithoutOvershoot) {
  std::mt19937_64 rng(8);
  const std::vector<std::string> labels{"a", "b", "c", "d"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ClassDistribution> dists;
    const int nodes = 1 + static_cast<int>(rng() % 5);
    for (int k = 0; k < nodes; ++k) {
      ClassDistribution d{k, {}};
      for (const auto& l : labels)
        if (rng() % 3) d.counts[l] = rng() % 300;
      dists.push_back(d);
    }
    dists[0].counts["a"] += 1;  // at least one nonzero count
    const double fraction = 0.01 + 0.3 * std::uniform_real_distribution<double>()(rng);
    for (int step = 0; step < 40; ++step) {
      auto q = compute_step_quota(dists, fraction, labels);
      for (auto& d : dists) {
        std::size_t local_max = 0;
        for (const auto& [_, c] : d.counts) local_max = std::max(local_max, c);
        const auto before = spread(d, labels);
        for (const auto& l : labels) {
          ASSERT_LE(d.count(l) + q.at(d.node_id, l), std::max(local_max, d.count(l)));
          d.counts[l] += q.at(d.node_id, l);
        }
        ASSERT_LE(spread(d, labels), before);
      }
    }
  }
}

TEST(Augmentation, PatienceStopsAfterTwoStaleSteps) {
  auto parts = std::vector<NodePartition>{node_with(0, {{"a", 100}, {"b", 20}})};
  AugmentationParams p;
  auto res = run_augmentation(parts, {"a", "b"}, StubSource{}, replay({0.70, 0.75, 0.74, 0.73, 0.99}), p, 1);
  ASSERT_EQ(res.history.steps.size(), 4u);
  EXPECT_EQ(res.history.best_step, 1);
  EXPECT_DOUBLE_EQ(res.history.best_accuracy, 0.75);
  EXPECT_EQ(res.best_model.at("step").values[0], 1.0);
}

TEST(Augmentation, TiesResolveToEarliestStep) {
  auto parts = std::vector<NodePartition>{node_with(0, {{"a", 100}, {"b", 20}})};
  auto res = run_augmentation(parts, {"a", "b"}, StubSource{}, replay({0.7, 0.8, 0.8, 0.6}), {}, 1);
  EXPECT_EQ(res.history.best_step, 1);
  EXPECT_EQ(res.best_model.at("step").values[0], 1.0);
}

TEST(Augmentation, BalancedFederationRetrainsOnIdenticalData) {
  auto parts = std::vector<NodePartition>{node_with(0, {{"a", 10}, {"b", 10}})};
  AugmentationParams p;
  p.delta = 1;
  std::vector<std::vector<Dataset>> seen;
  auto res = run_augmentation(parts, {"a", "b"}, StubSource{}, replay({0.5, 0.5}, &seen), p, 1);
  ASSERT_EQ(res.history.steps.size(), 2u);
  EXPECT_EQ(res.history.steps[1].synthetic_rows, 0u);
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0][0].rows, seen[1][0].rows);
  EXPECT_EQ(res.history.best_step, 0);
}

TEST(Augmentation, MonotoneSequenceRunsToCap) {
  auto parts = std::vector<NodePartition>{node_with(0, {{"a", 1000}, {"b", 1}})};
  AugmentationParams p;
  p.max_steps = 5;
  auto res = run_augmentation(parts, {"a", "b"}, StubSource{}, replay({0.1, 0.2, 0.3, 0.4, 0.5, 0.6}), p, 1);
  ASSERT_EQ(res.history.steps.size(), 6u);
  EXPECT_EQ(res.history.best_step, 5);
  EXPECT_EQ(res.history.best_synthetic_rows(), 50u);
}

TEST(Augmentation, SyntheticRowsAccumulateAndSpreadShrinks) {
  auto parts = std::vector<NodePartition>{node_with(0, {{"a", 300}, {"b", 40}}), node_with(3, {{"b", 90}}),
                                          node_with(5, {{"a", 5}, {"b", 6}, {"c", 1}})};
  const std::vector<std::string> labels{"a", "b", "c"};
  AugmentationParams p;
  p.step_fraction = 0.05;
  p.max_steps = 12;
  std::vector<double> accs(13);
  for (std::size_t i = 0; i < accs.size(); ++i) accs[i] = 0.5 + 0.01 * static_cast<double>(i);
  std::vector<std::vector<Dataset>> seen;
  auto res = run_augmentation(parts, labels, StubSource{}, replay(accs, &seen), p, 1);
  ASSERT_EQ(res.history.steps.size(), 13u);
  for (std::size_t s = 1; s < res.history.steps.size(); ++s) {
    const auto& prev = res.history.steps[s - 1];
    const auto& cur = res.history.steps[s];
    EXPECT_GE(cur.synthetic_rows, prev.synthetic_rows);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      EXPECT_LE(spread(cur.node_counts[k], labels), spread(prev.node_counts[k], labels));
      // the trainer saw exactly the recorded counts; real rows are never dropped
      EXPECT_EQ(seen[s][k].size(), cur.node_counts[k].total());
      EXPECT_GE(seen[s][k].size(), seen[s - 1][k].size());
    }
  }
  // a class absent from a node receives rows
  EXPECT_GT(res.history.steps.back().node_counts[1].count("a"), 0u);
}

TEST(Augmentation, UncoveredLabelWarnsAndGetsNoRows) {
  auto parts = std::vector<NodePartition>{node_with(0, {{"a", 50}, {"b", 10}, {"c", 10}})};
  Diagnostics diag;
  AugmentationParams p;
  p.max_steps = 2;
  p.step_fraction = 0.1;
  auto res = run_augmentation(parts, {"a", "b", "c"}, StubSource{{"c"}}, replay({0.1, 0.2, 0.3}), p, 1, &diag);
  EXPECT_EQ(res.history.steps.back().node_counts[0].count("c"), 10u);
  EXPECT_EQ(res.history.steps.back().node_counts[0].count("b"), 20u);
  ASSERT_FALSE(diag.warnings.empty());
  EXPECT_NE(diag.warnings[0].find("'c'"), std::string::npos);
}

TEST(Augmentation, HistoryJsonRoundTrip) {
  auto parts = std::vector<NodePartition>{node_with(0, {{"a", 100}, {"b", 20}})};
  auto res = run_augmentation(parts, {"a", "b"}, StubSource{}, replay({0.70, 0.75, 0.74, 0.73}), {}, 1);
  auto back = history_from_json(to_json(res.history));
  ASSERT_EQ(back.steps.size(), res.history.steps.size());
  for (std::size_t i = 0; i < back.steps.size(); ++i) {
    EXPECT_EQ(back.steps[i].synthetic_rows, res.history.steps[i].synthetic_rows);
    EXPECT_EQ(back.steps[i].accuracy, res.history.steps[i].accuracy);
  }
  EXPECT_EQ(back.best_step, 1);
}

TEST(Sources, BankAndRejectionSourcesEmitOnlyTheRequestedLabel) {
  std::vector<NodePartition> parts{node_with(0, {{"a", 40}, {"b", 40}})};
  for (std::size_t i = 0; i < parts[0].data.size(); ++i)
    parts[0].data.rows[i][0] = parts[0].data.label(i) == "a" ? -0.5 : 0.5;
  const auto gm = metadata_of(parts, parts[0].data.schema);
  GanConfig cfg;
  cfg.noise_dim = 2;
  cfg.gen_hidden = cfg.disc_hidden = {8};

  GeneratorBank bank;
  bank.generators["a"] = init_gan(cfg, gm.feature_width(), 1).generator;
  BankSource bs(bank, gm);
  EXPECT_TRUE(bs.covers("a"));
  EXPECT_FALSE(bs.covers("b"));
  auto rows = bs.draw("a", 17, 3);
  EXPECT_EQ(rows.size(), 17u);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows.label(i), "a");
  EXPECT_EQ(fligan::testing::row_keys(bs.draw("a", 17, 3)), fligan::testing::row_keys(rows));

  LabeledGeneratorSource ls(init_gan(cfg, layout_width(gm.labeled_layout()), 2).generator, gm, 4);
  EXPECT_TRUE(ls.covers("b"));
  EXPECT_FALSE(ls.covers("zzz"));
  for (const std::string label : {"a", "b"}) {
    auto drawn = ls.draw(label, 25, 5);
    EXPECT_LE(drawn.size(), 25u);
    for (std::size_t i = 0; i < drawn.size(); ++i) EXPECT_EQ(drawn.label(i), label);
  }
}
