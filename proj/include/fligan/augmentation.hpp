#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fligan/classifier.hpp"
#include "fligan/errors.hpp"
#include "fligan/metadata.hpp"
#include "fligan/orchestration.hpp"
#include "fligan/tabular.hpp"
#include "fligan/wgan_gp.hpp"

namespace fligan {

/// Rows to synthesize per (node id, class label) in one step.
struct StepQuota {
  std::map<std::pair<int, std::string>, std::size_t> rows;
  std::size_t step_size = 0;

  std::size_t at(int node, const std::string& label) const {
    auto it = rows.find({node, label});
    return it == rows.end() ? 0 : it->second;
  }
  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& [_, n] : rows) t += n;
    return t;
  }
};

/// step_size = ceil(step_fraction * N_max) with N_max the largest local class
/// count anywhere. Every class below its node's own largest class receives
/// min(step_size, deficit). `labels` widens the class set beyond the labels
/// present in `dists` (a node may lack a class entirely).
inline StepQuota compute_step_quota(const std::vector<ClassDistribution>& dists, double step_fraction,
                                    const std::vector<std::string>& labels = {}) {
  require(step_fraction > 0.0 && step_fraction <= 1.0,
          "compute_step_quota: step_fraction must lie in (0, 1]");
  std::set<std::string> classes(labels.begin(), labels.end());
  std::size_t n_max = 0;
  for (const auto& d : dists)
    for (const auto& [label, c] : d.counts) {
      if (c > 0) classes.insert(label);
      n_max = std::max(n_max, c);
    }
  require(n_max > 0, "compute_step_quota: every count is zero");
  StepQuota q;
  q.step_size = static_cast<std::size_t>(std::ceil(step_fraction * static_cast<double>(n_max) - 1e-9));
  q.step_size = std::max<std::size_t>(q.step_size, 1);
  for (const auto& d : dists) {
    std::size_t local_max = 0;
    for (const auto& [_, c] : d.counts) local_max = std::max(local_max, c);
    for (const auto& label : classes) {
      const std::size_t have = d.count(label);
      q.rows[{d.node_id, label}] = have < local_max ? std::min(q.step_size, local_max - have) : 0;
    }
  }
  return q;
}

// ---------------------------------------------------------------------------
// Sources of synthetic rows

class SyntheticSource {
 public:
  virtual ~SyntheticSource() = default;
  virtual bool covers(const std::string& label) const = 0;
  /// n rows whose target equals `label`; may return fewer if the source
  /// cannot produce that label often enough.
  virtual Dataset draw(const std::string& label, std::size_t n, std::uint64_t seed) const = 0;
};

/// Per-label generators (federated GAN with classwise sampling).
class BankSource final : public SyntheticSource {
 public:
  BankSource(const GeneratorBank& bank, const GlobalMetadata& gm) : bank_(bank), gm_(gm) {}

  bool covers(const std::string& label) const override { return bank_.covers(label); }

  Dataset draw(const std::string& label, std::size_t n, std::uint64_t seed) const override {
    return sample(bank_.generators.at(label), n, label, gm_, seed);
  }

 private:
  const GeneratorBank& bank_;
  const GlobalMetadata& gm_;
};

/// A single generator that emits its own label block. Rows of a requested
/// class are obtained by rejection: draw batches, keep matching rows.
class LabeledGeneratorSource final : public SyntheticSource {
 public:
  LabeledGeneratorSource(WeightSet generator, const GlobalMetadata& gm, std::size_t max_batches = 50)
      : gen_(std::move(generator)), gm_(gm), max_batches_(max_batches) {}

  bool covers(const std::string& label) const override {
    return std::binary_search(gm_.class_labels.begin(), gm_.class_labels.end(), label);
  }

  Dataset draw(const std::string& label, std::size_t n, std::uint64_t seed) const override {
    Dataset out{gm_.schema, {}};
    const std::size_t batch = std::max<std::size_t>(2 * n, 64);
    for (std::size_t b = 0; b < max_batches_ && out.size() < n; ++b) {
      auto drawn = sample_labeled(gen_, batch, gm_, derive_seed(seed, {b}));
      for (std::size_t i = 0; i < drawn.size() && out.size() < n; ++i)
        if (drawn.label(i) == label) out.rows.push_back(std::move(drawn.rows[i]));
    }
    return out;
  }

 private:
  WeightSet gen_;
  const GlobalMetadata& gm_;
  std::size_t max_batches_;
};

// ---------------------------------------------------------------------------
// Step-by-step addition

struct AugmentationStep {
  int step = 0;
  std::size_t synthetic_rows = 0;  // cumulative
  double accuracy = 0.0;
  std::vector<ClassDistribution> node_counts;  // real + synthetic after this step's merge
};

struct AugmentationHistory {
  std::vector<AugmentationStep> steps;
  int best_step = 0;
  double best_accuracy = 0.0;

  std::size_t best_synthetic_rows() const {
    return steps.at(static_cast<std::size_t>(best_step)).synthetic_rows;
  }
};

struct AugmentationParams {
  int delta = 2;               // patience in steps
  double step_fraction = 0.01;
  int max_steps = 30;          // synthetic-addition steps after the step-0 baseline
};

struct AugmentationResult {
  WeightSet best_model;
  AugmentationHistory history;
};

/// Trains a model on the given per-node datasets and reports (weights, accuracy).
using StepTrainer = std::function<std::pair<WeightSet, double>(const std::vector<Dataset>&, int step)>;

inline nlohmann::json to_json(const AugmentationHistory& h) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : h.steps)
    steps.push_back({{"step", s.step}, {"synthetic_rows", s.synthetic_rows}, {"accuracy", s.accuracy}});
  return {{"steps", steps}, {"best_step", h.best_step}, {"best_accuracy", h.best_accuracy}};
}

inline AugmentationHistory history_from_json(const nlohmann::json& j) {
  AugmentationHistory h;
  for (const auto& s : j.at("steps"))
    h.steps.push_back({s.at("step").get<int>(), s.at("synthetic_rows").get<std::size_t>(),
                       s.at("accuracy").get<double>(), {}});
  h.best_step = j.at("best_step").get<int>();
  h.best_accuracy = j.at("best_accuracy").get<double>();
  return h;
}

/// Step 0 trains on real data. Every later step tops up under-represented
/// classes on each node, merges the synthetic rows into that node's data
/// (they accumulate), retrains from scratch and records accuracy. Stops once
/// `delta` consecutive steps fail to beat the best accuracy, or after
/// max_steps additions. The model of the earliest best step is returned.
inline AugmentationResult run_augmentation(const std::vector<NodePartition>& partitions,
                                           const std::vector<std::string>& class_labels,
                                           const SyntheticSource& source, const StepTrainer& trainer,
                                           const AugmentationParams& params, std::uint64_t seed,
                                           Diagnostics* diag = nullptr) {
  require(params.delta >= 1, "run_augmentation: delta must be >= 1");
  require(params.max_steps >= 0, "run_augmentation: max_steps must be >= 0");
  std::vector<Dataset> node_data;
  std::vector<ClassDistribution> counts;
  for (const auto& p : partitions) {
    node_data.push_back(p.data);
    counts.push_back(class_distribution(p));
  }
  for (const auto& label : class_labels)
    if (!source.covers(label)) warn_to(diag, "no generator for label '" + label + "'; it receives no synthetic rows");

  AugmentationResult result;
  auto& hist = result.history;
  std::size_t synthetic_total = 0;
  {
    auto [model, acc] = trainer(node_data, 0);
    hist.steps.push_back({0, 0, acc, counts});
    hist.best_accuracy = acc;
    result.best_model = std::move(model);
  }
  int stale = 0;
  for (int step = 1; step <= params.max_steps && stale < params.delta; ++step) {
    auto quota = compute_step_quota(counts, params.step_fraction, class_labels);
    for (std::size_t k = 0; k < partitions.size(); ++k) {
      const int node = partitions[k].node_id;
      for (std::size_t li = 0; li < class_labels.size(); ++li) {
        const auto& label = class_labels[li];
        const std::size_t want = quota.at(node, label);
        if (want == 0 || !source.covers(label)) continue;
        auto rows = source.draw(label, want, derive_seed(seed, {static_cast<std::uint64_t>(step),
                                                                static_cast<std::uint64_t>(node), li}));
        if (rows.size() < want)
          warn_to(diag, "step " + std::to_string(step) + ", node " + std::to_string(node) + ": drew " +
                            std::to_string(rows.size()) + " of " + std::to_string(want) +
                            " rows for label '" + label + "'");
        synthetic_total += rows.size();
        counts[k].counts[label] += rows.size();
        node_data[k].append(rows);
      }
    }
    auto [model, acc] = trainer(node_data, step);
    hist.steps.push_back({step, synthetic_total, acc, counts});
    if (acc > hist.best_accuracy) {
      hist.best_accuracy = acc;
      hist.best_step = step;
      result.best_model = std::move(model);
      stale = 0;
    } else {
      ++stale;
    }
  }
  return result;
}

/// Step-by-step augmentation with the per-label generator bank and the
/// federated classifier retrained from fresh initialization at each step.
inline AugmentationResult run_fligan(const std::vector<NodePartition>& partitions, const GlobalMetadata& gm,
                                     const GeneratorBank& bank, const ClassifierConfig& ccfg,
                                     const AugmentationParams& params, const Dataset& test,
                                     std::uint64_t seed, Diagnostics* diag = nullptr) {
  BankSource source(bank, gm);
  StepTrainer trainer = [&](const std::vector<Dataset>& data, int) {
    auto r = train_federated_classifier(data, gm, ccfg, test, seed);
    return std::make_pair(std::move(r.model), r.accuracy);
  };
  return run_augmentation(partitions, gm.class_labels, source, trainer, params, seed, diag);
}

}  // namespace fligan
