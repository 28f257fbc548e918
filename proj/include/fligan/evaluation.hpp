#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include "fligan/augmentation.hpp"
#include "fligan/classifier.hpp"
#include "fligan/errors.hpp"
#include "fligan/metadata.hpp"
#include "fligan/orchestration.hpp"
#include "fligan/random.hpp"
#include "fligan/tabular.hpp"
#include "fligan/wgan_gp.hpp"

namespace fligan {

// ---------------------------------------------------------------------------
// Decision forest (Gini CART trees, bootstrap rows, sqrt(d) features per split)

struct ForestParams {
  int n_trees = 100;
  int max_depth = 0;          // 0: grow until pure
  int min_samples_split = 2;
  bool bootstrap = true;
  int max_features = 0;       // 0: floor(sqrt(d)), at least 1

  std::string describe() const {
    return "decision forest: " + std::to_string(n_trees) + " trees, max_depth=" +
           (max_depth > 0 ? std::to_string(max_depth) : std::string("unlimited")) +
           ", bootstrap=" + (bootstrap ? "yes" : "no") + ", max_features=" +
           (max_features > 0 ? std::to_string(max_features) : std::string("sqrt(d)")) + ", gini";
  }
};

class DecisionForest {
 public:
  explicit DecisionForest(ForestParams params = {}) : params_(params) {}

  void fit(const Eigen::MatrixXd& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) {
    require(x.rows() > 0 && static_cast<std::size_t>(x.rows()) == y.size(), "DecisionForest::fit: bad training set");
    require(n_classes > 0, "DecisionForest::fit: need at least one class");
    n_classes_ = n_classes;
    trees_.clear();
    const auto n = static_cast<std::size_t>(x.rows());
    const auto d = static_cast<int>(x.cols());
    const int mtry = params_.max_features > 0
                         ? std::min(params_.max_features, d)
                         : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
    Rng rng(derive_seed(seed, {0xf0e57}));
    for (int t = 0; t < params_.n_trees; ++t) {
      std::vector<std::size_t> rows(n);
      if (params_.bootstrap) {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (auto& r : rows) r = pick(rng);
      } else {
        std::iota(rows.begin(), rows.end(), 0);
      }
      Tree tree;
      grow(tree, x, y, rows, 0, mtry, rng);
      trees_.push_back(std::move(tree));
    }
  }

  /// Majority vote across trees; ties go to the lowest class index.
  std::vector<int> predict(const Eigen::MatrixXd& x) const {
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    std::vector<int> votes(static_cast<std::size_t>(n_classes_));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      std::fill(votes.begin(), votes.end(), 0);
      for (const auto& t : trees_) ++votes[static_cast<std::size_t>(t.classify(x.row(i)))];
      out[static_cast<std::size_t>(i)] =
          static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
    return out;
  }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    int label = 0;
  };

  struct Tree {
    std::vector<Node> nodes;

    int classify(const Eigen::RowVectorXd& row) const {
      int at = 0;
      while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
        const auto& nd = nodes[static_cast<std::size_t>(at)];
        at = row(nd.feature) <= nd.threshold ? nd.left : nd.right;
      }
      return nodes[static_cast<std::size_t>(at)].label;
    }
  };

  static double gini(const std::vector<std::size_t>& counts, std::size_t total) {
    if (total == 0) return 0.0;
    double s = 0.0;
    for (auto c : counts) {
      double p = static_cast<double>(c) / static_cast<double>(total);
      s += p * p;
    }
    return 1.0 - s;
  }

  int grow(Tree& tree, const Eigen::MatrixXd& x, const std::vector<int>& y, std::vector<std::size_t>& rows,
           int depth, int mtry, Rng& rng) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes_), 0);
    for (auto r : rows) ++counts[static_cast<std::size_t>(y[r])];
    const int majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    tree.nodes[static_cast<std::size_t>(id)].label = majority;
    const bool pure = counts[static_cast<std::size_t>(majority)] == rows.size();
    if (pure || static_cast<int>(rows.size()) < params_.min_samples_split ||
        (params_.max_depth > 0 && depth >= params_.max_depth))
      return id;

    const double parent = gini(counts, rows.size());
    std::vector<int> features(static_cast<std::size_t>(x.cols()));
    std::iota(features.begin(), features.end(), 0);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> sorted = rows;
    for (int f = 0; f < mtry; ++f) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(f), features.size() - 1);
      std::swap(features[static_cast<std::size_t>(f)], features[pick(rng)]);
      const int feat = features[static_cast<std::size_t>(f)];
      std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
        return x(static_cast<Eigen::Index>(a), feat) < x(static_cast<Eigen::Index>(b), feat);
      });
      std::vector<std::size_t> left(counts.size(), 0), right = counts;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const auto c = static_cast<std::size_t>(y[sorted[i]]);
        ++left[c];
        --right[c];
        const double v = x(static_cast<Eigen::Index>(sorted[i]), feat);
        const double next = x(static_cast<Eigen::Index>(sorted[i + 1]), feat);
        if (v == next) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = static_cast<double>(sorted.size() - i - 1);
        const double child = (nl * gini(left, i + 1) + nr * gini(right, sorted.size() - i - 1)) /
                             static_cast<double>(sorted.size());
        const double gain = parent - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = feat;
          best_threshold = 0.5 * (v + next);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> lrows, rrows;
    for (auto r : rows)
      (x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? lrows : rrows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(tree, x, y, lrows, depth + 1, mtry, rng);
    const int r = grow(tree, x, y, rrows, depth + 1, mtry, rng);
    auto& nd = tree.nodes[static_cast<std::size_t>(id)];
    nd.feature = best_feature;
    nd.threshold = best_threshold;
    nd.left = l;
    nd.right = r;
    return id;
  }

  ForestParams params_;
  int n_classes_ = 0;
  std::vector<Tree> trees_;
};

// ---------------------------------------------------------------------------
// ML efficacy: train on real vs. synthetic, test on real

struct EfficacyReport {
  double real_data_accuracy = 0.0;
  double synthetic_data_accuracy = 0.0;
  double gap = 0.0;  // real - synthetic
  std::string classifier_descriptor;
  std::string dataset_descriptor;
  bool degenerate = false;  // synthetic training set held a single class
};

inline nlohmann::json to_json(const EfficacyReport& r) {
  return {{"real_data_accuracy", r.real_data_accuracy},
          {"synthetic_data_accuracy", r.synthetic_data_accuracy},
          {"gap", r.gap},
          {"classifier", r.classifier_descriptor},
          {"dataset", r.dataset_descriptor},
          {"degenerate", r.degenerate}};
}

inline double forest_accuracy(const Dataset& train, const Dataset& test, const GlobalMetadata& gm,
                              const ForestParams& params, std::uint64_t seed) {
  auto tr = encode_for_evaluation(train, gm);
  auto te = encode_for_evaluation(test, gm);
  DecisionForest forest(params);
  forest.fit(tr.rows, tr.labels, static_cast<int>(gm.class_labels.size()), seed);
  auto pred = forest.predict(te.rows);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == te.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// Fits the same forest (same hyperparameters, same seed) on the real and the
/// synthetic training sets and scores both on the real test set.
inline EfficacyReport ml_efficacy(const Dataset& real_train, const Dataset& real_test, const Dataset& synth_train,
                                  const GlobalMetadata& gm, std::uint64_t seed, const ForestParams& params = {},
                                  std::string dataset_descriptor = {}) {
  require(!synth_train.empty(), "ml_efficacy: synthetic training set is empty");
  require(!real_train.empty() && !real_test.empty(), "ml_efficacy: real train/test sets must be non-empty");
  require(real_train.schema == synth_train.schema && real_test.schema == real_train.schema,
          "ml_efficacy: schemas differ");
  EfficacyReport rep;
  rep.real_data_accuracy = forest_accuracy(real_train, real_test, gm, params, seed);
  rep.synthetic_data_accuracy = forest_accuracy(synth_train, real_test, gm, params, seed);
  rep.gap = rep.real_data_accuracy - rep.synthetic_data_accuracy;
  rep.classifier_descriptor = params.describe();
  rep.dataset_descriptor = std::move(dataset_descriptor);
  std::set<std::string> labels;
  for (std::size_t i = 0; i < synth_train.size(); ++i) labels.insert(synth_train.label(i));
  rep.degenerate = labels.size() < 2;
  return rep;
}

/// A synthetic training set the size of `reference`, with classes in the same
/// proportions (largest-remainder rounding), drawn from `source`.
inline Dataset synthesize_like(const Dataset& reference, const SyntheticSource& source, std::uint64_t seed) {
  auto by = rows_by_label(reference);
  std::vector<std::string> labels;
  std::vector<double> share;
  for (const auto& [label, idx] : by) {
    labels.push_back(label);
    share.push_back(static_cast<double>(idx.size()) / static_cast<double>(reference.size()));
  }
  auto counts = largest_remainder(reference.size(), share);
  Dataset out = reference.like();
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (counts[i] > 0 && source.covers(labels[i])) out.append(source.draw(labels[i], counts[i], derive_seed(seed, {i})));
  return out;
}

// ---------------------------------------------------------------------------
// Timing and metrics

template <typename Work>
auto timed(Work&& work) {
  const auto t0 = std::chrono::steady_clock::now();
  auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  if constexpr (std::is_void_v<std::invoke_result_t<Work>>) {
    std::forward<Work>(work)();
    return seconds();
  } else {
    auto result = std::forward<Work>(work)();
    return std::make_pair(std::move(result), seconds());
  }
}

struct MetricsRecord {
  std::string strategy;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double wall_clock_seconds = 0.0;
  std::size_t synthetic_rows_added = 0;
  int steps_taken = 0;

  /// Equality ignoring wall-clock time.
  bool same_outcome(const MetricsRecord& o) const {
    return strategy == o.strategy && alpha == o.alpha && seed == o.seed && accuracy == o.accuracy &&
           synthetic_rows_added == o.synthetic_rows_added && steps_taken == o.steps_taken;
  }
};

inline nlohmann::json to_json(const MetricsRecord& r) {
  return {{"strategy", r.strategy},
          {"alpha", r.alpha},
          {"seed", r.seed},
          {"accuracy", r.accuracy},
          {"wall_clock_seconds", r.wall_clock_seconds},
          {"synthetic_rows_added", r.synthetic_rows_added},
          {"steps_taken", r.steps_taken}};
}

}  // namespace fligan
