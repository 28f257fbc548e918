#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fligan/classifier.hpp"
#include "fligan/errors.hpp"
#include "fligan/grouping.hpp"
#include "fligan/metadata.hpp"
#include "fligan/tabular.hpp"
#include "fligan/wgan_gp.hpp"
#include "fligan/weights.hpp"

namespace fligan {

/// Count-weighted mean of identically shaped WeightSets: sum_k (n_k / N) w_k.
inline WeightSet fedavg_aggregate(const std::vector<WeightSet>& weights,
                                  const std::vector<std::size_t>& counts) {
  require(!weights.empty(), "fedavg_aggregate: no client weights");
  require(weights.size() == counts.size(), "fedavg_aggregate: one count per client required");
  double total = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    require(counts[k] > 0, "fedavg_aggregate: client counts must be positive");
    require(weights[k].same_structure(weights.front()),
            "fedavg_aggregate: client " + std::to_string(k) + " has mismatched tensor names or shapes");
    total += static_cast<double>(counts[k]);
  }
  WeightSet out = weights.front();
  for (std::size_t t = 0; t < out.tensors.size(); ++t) {
    auto& dst = out.tensors[t].values;
    require(dst.size() == out.tensors[t].numel(), "fedavg_aggregate: payload does not match shape");
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const double p = static_cast<double>(counts[k]) / total;
      const auto& src = weights[k].tensors[t].values;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += p * src[i];
    }
  }
  return out;
}

inline WeightSet concat_weights(const WeightSet& a, const WeightSet& b) {
  WeightSet out = a;
  out.tensors.insert(out.tensors.end(), b.tensors.begin(), b.tensors.end());
  return out;
}

inline WeightSet select_prefix(const WeightSet& ws, const std::string& prefix) {
  WeightSet out;
  for (const auto& t : ws.tensors)
    if (t.name.rfind(prefix + ".", 0) == 0) out.tensors.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Transport seam between node and server roles

struct WeightMessage {
  int node_id = 0;
  std::size_t sample_count = 0;
  double loss = 0.0;
  WeightSet weights;
};

/// Node -> server uploads and server -> node broadcasts. The simulator uses
/// the in-process queue below; a networked deployment swaps the implementation.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void upload(WeightMessage msg) = 0;
  /// All pending uploads, ordered by node id so reductions are schedule independent.
  virtual std::vector<WeightMessage> drain_uploads() = 0;
  virtual void broadcast(const WeightSet& global) = 0;
  virtual WeightSet fetch_global() const = 0;
};

class InProcessTransport final : public Transport {
 public:
  void upload(WeightMessage msg) override {
    std::lock_guard lock(mu_);
    inbox_.push_back(std::move(msg));
  }

  std::vector<WeightMessage> drain_uploads() override {
    std::lock_guard lock(mu_);
    std::vector<WeightMessage> out(std::make_move_iterator(inbox_.begin()),
                                   std::make_move_iterator(inbox_.end()));
    inbox_.clear();
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.node_id < b.node_id; });
    return out;
  }

  void broadcast(const WeightSet& global) override {
    std::lock_guard lock(mu_);
    global_ = global;
  }

  WeightSet fetch_global() const override {
    std::lock_guard lock(mu_);
    return global_;
  }

 private:
  mutable std::mutex mu_;
  std::deque<WeightMessage> inbox_;
  WeightSet global_;
};

struct RoundLog {
  std::string phase;  // "gan", "fedgan" or "classifier"
  std::string label;  // GAN label, empty otherwise
  int group_index = -1;
  int round = 0;
  std::vector<int> participants;
  std::vector<std::size_t> sample_counts;
  double aggregate_loss = 0.0;
  double seconds = 0.0;
};

inline nlohmann::json to_json(const RoundLog& r) {
  return {{"phase", r.phase},           {"label", r.label},
          {"group_index", r.group_index}, {"round", r.round},
          {"participants", r.participants}, {"sample_counts", r.sample_counts},
          {"aggregate_loss", r.aggregate_loss}, {"seconds", r.seconds}};
}

namespace detail {

/// One server round: drain uploads, aggregate count-weighted, broadcast.
inline WeightSet server_round(Transport& transport, RoundLog& log) {
  auto msgs = transport.drain_uploads();
  std::vector<WeightSet> ws;
  std::vector<std::size_t> counts;
  double loss = 0.0, total = 0.0;
  for (auto& m : msgs) {
    log.participants.push_back(m.node_id);
    log.sample_counts.push_back(m.sample_count);
    loss += m.loss * static_cast<double>(m.sample_count);
    total += static_cast<double>(m.sample_count);
    counts.push_back(m.sample_count);
    ws.push_back(std::move(m.weights));
  }
  log.aggregate_loss = total > 0.0 ? loss / total : 0.0;
  auto global = fedavg_aggregate(ws, counts);
  transport.broadcast(global);
  return global;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Rows of `m` whose label equals `label_index`.
inline EncodedMatrix rows_with_label(const EncodedMatrix& m, int label_index) {
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < m.labels.size(); ++i)
    if (m.labels[i] == label_index) keep.push_back(static_cast<Eigen::Index>(i));
  EncodedMatrix out;
  out.layout = m.layout;
  out.rows.resize(static_cast<Eigen::Index>(keep.size()), m.rows.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.rows.row(static_cast<Eigen::Index>(i)) = m.rows.row(keep[i]);
  out.labels.assign(keep.size(), label_index);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Federated GAN with classwise sampling and node grouping

struct GeneratorBank {
  std::map<std::string, WeightSet> generators;  // class label -> generator

  bool covers(const std::string& label) const { return generators.count(label) > 0; }
};

/// One file per label plus a manifest mapping labels to files.
inline void save_bank(const GeneratorBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::object();
  std::size_t i = 0;
  for (const auto& [label, gen] : bank.generators) {
    std::string file = "generator_" + std::to_string(i++) + ".flws";
    save_weights((dir / file).string(), gen);
    manifest[label] = file;
  }
  std::ofstream((dir / "bank.json").string()) << manifest.dump(2) << '\n';
}

inline GeneratorBank load_bank(const std::filesystem::path& dir) {
  std::ifstream in((dir / "bank.json").string());
  if (!in) throw IoError("no generator bank manifest in '" + dir.string() + "'");
  auto manifest = nlohmann::json::parse(in);
  GeneratorBank bank;
  for (const auto& [label, file] : manifest.items())
    bank.generators[label] = load_weights((dir / file.get<std::string>()).string());
  return bank;
}

struct FederatedGanParams {
  int r_init = 3;
  int e_init = 60;
  double alpha_r = 0.5;
  double alpha_e = 0.5;
  GroupingParams grouping{};
};

struct LabelPlan {
  std::string label;
  std::vector<NodeGroup> groups;
  std::vector<TrainingSchedule> schedules;
};

struct FederatedGanResult {
  GeneratorBank bank;
  std::vector<LabelPlan> plans;
  std::vector<RoundLog> rounds;  // one entry per aggregation event
};

/// Per-label federated WGAN-GP. For every label the nodes holding it are
/// grouped by volume; groups train richest first on a shared global pair,
/// each with its decayed round/epoch budget, and the server aggregates
/// generator and critic after every round.
inline FederatedGanResult train_federated_gan(const std::vector<NodePartition>& partitions,
                                              const GlobalMetadata& gm,
                                              const FederatedGanParams& params,
                                              const GanConfig& cfg, std::uint64_t seed,
                                              Diagnostics* diag = nullptr,
                                              Transport* transport = nullptr) {
  cfg.validate();
  InProcessTransport local_transport;
  Transport& link = transport ? *transport : local_transport;

  std::map<int, EncodedMatrix> encoded;
  for (const auto& p : partitions)
    if (!p.data.empty()) encoded.emplace(p.node_id, encode(p.data, gm));

  FederatedGanResult result;
  const std::size_t width = gm.feature_width();
  for (std::size_t li = 0; li < gm.class_labels.size(); ++li) {
    const auto& label = gm.class_labels[li];
    const int label_index = static_cast<int>(li);
    LabelPlan plan{label, group_nodes(label, gm.per_node_class_dist, params.grouping), {}};
    if (plan.groups.empty()) {
      warn_to(diag, "label '" + label + "' has no data-holding node; no generator trained");
      result.plans.push_back(std::move(plan));
      continue;
    }
    GanPair pair = init_gan(cfg, width, derive_seed(seed, {li}));
    link.broadcast(concat_weights(pair.generator, pair.discriminator));

    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
      const auto sched = schedule(params.r_init, params.e_init, params.alpha_r, params.alpha_e, g);
      plan.schedules.push_back(sched);
      for (int r = 0; r < sched.rounds; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const WeightSet global = link.fetch_global();
        const GanPair start{select_prefix(global, kGeneratorPrefix), select_prefix(global, kCriticPrefix)};
        for (int node : plan.groups[g].member_node_ids) {
          auto it = encoded.find(node);
          if (it == encoded.end()) continue;
          auto rows = detail::rows_with_label(it->second, label_index);
          if (rows.size() == 0) continue;
          auto [trained, stats] = train_local(
              start, rows, sched.epochs, cfg,
              derive_seed(seed, {li, g, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(node)}));
          link.upload({node, rows.size(), stats.critic_loss,
                       concat_weights(trained.generator, trained.discriminator)});
        }
        RoundLog log{"gan", label, static_cast<int>(g), r, {}, {}, 0.0, 0.0};
        detail::server_round(link, log);
        log.seconds = detail::seconds_since(t0);
        result.rounds.push_back(std::move(log));
      }
    }
    result.bank.generators[label] = select_prefix(link.fetch_global(), kGeneratorPrefix);
    result.plans.push_back(std::move(plan));
  }
  return result;
}

struct FedGanParams {
  int rounds = 5;
  int epochs = 60;
};

struct FedGanResult {
  GanPair pair;  // generator output = feature layout + label block
  std::vector<RoundLog> rounds;
};

/// Baseline: one GAN over every node's full data, label appended as a
/// one-hot block so the generator produces labelled rows.
inline FedGanResult train_fedgan_baseline(const std::vector<NodePartition>& partitions,
                                          const GlobalMetadata& gm, const FedGanParams& params,
                                          const GanConfig& cfg, std::uint64_t seed,
                                          Transport* transport = nullptr) {
  cfg.validate();
  require(params.rounds >= 0 && params.epochs >= 0, "train_fedgan_baseline: negative rounds/epochs");
  std::vector<std::pair<int, EncodedMatrix>> encoded;
  for (const auto& p : partitions)
    if (!p.data.empty()) encoded.emplace_back(p.node_id, encode_labeled(p.data, gm));
  require(!encoded.empty(), "train_fedgan_baseline: every partition is empty");

  InProcessTransport local_transport;
  Transport& link = transport ? *transport : local_transport;
  FedGanResult result;
  result.pair = init_gan(cfg, layout_width(gm.labeled_layout()), derive_seed(seed, {0xfed6a4}));
  link.broadcast(concat_weights(result.pair.generator, result.pair.discriminator));
  for (int r = 0; r < params.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const WeightSet global = link.fetch_global();
    const GanPair start{select_prefix(global, kGeneratorPrefix), select_prefix(global, kCriticPrefix)};
    for (const auto& [node, rows] : encoded) {
      auto [trained, stats] = train_local(
          start, rows, params.epochs, cfg,
          derive_seed(seed, {0xfed6a4, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(node)}));
      link.upload({node, rows.size(), stats.critic_loss,
                   concat_weights(trained.generator, trained.discriminator)});
    }
    RoundLog log{"fedgan", "", -1, r, {}, {}, 0.0, 0.0};
    detail::server_round(link, log);
    log.seconds = detail::seconds_since(t0);
    result.rounds.push_back(std::move(log));
  }
  const WeightSet global = link.fetch_global();
  result.pair = {select_prefix(global, kGeneratorPrefix), select_prefix(global, kCriticPrefix)};
  return result;
}

// ---------------------------------------------------------------------------
// Federated classifier

struct ClassifierResult {
  WeightSet model;
  double accuracy = 0.0;
  std::vector<RoundLog> rounds;
};

/// FedAvg over the non-empty nodes; every round starts from the current
/// global weights and aggregates by node row count.
inline ClassifierResult train_federated_classifier(const std::vector<Dataset>& node_datasets,
                                                   const GlobalMetadata& gm,
                                                   const ClassifierConfig& ccfg, const Dataset& test,
                                                   std::uint64_t seed, Transport* transport = nullptr) {
  ccfg.validate();
  std::vector<std::pair<int, EncodedMatrix>> encoded;
  for (std::size_t k = 0; k < node_datasets.size(); ++k)
    if (!node_datasets[k].empty()) encoded.emplace_back(static_cast<int>(k), encode(node_datasets[k], gm));
  require(!encoded.empty(), "train_federated_classifier: no node holds training rows");

  InProcessTransport local_transport;
  Transport& link = transport ? *transport : local_transport;
  ClassifierResult result;
  link.broadcast(init_classifier(ccfg, gm.feature_width(), gm.class_labels.size(), seed));
  for (int r = 0; r < ccfg.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const WeightSet global = link.fetch_global();
    for (const auto& [node, rows] : encoded) {
      const auto node_key = ccfg.same_seed_per_node ? 0u : static_cast<std::uint64_t>(node);
      auto [w, loss] = train_classifier_local(
          global, rows, ccfg, derive_seed(seed, {0xc1a55, static_cast<std::uint64_t>(r), node_key}));
      link.upload({node, rows.size(), loss, std::move(w)});
    }
    RoundLog log{"classifier", "", -1, r, {}, {}, 0.0, 0.0};
    detail::server_round(link, log);
    log.seconds = detail::seconds_since(t0);
    result.rounds.push_back(std::move(log));
  }
  result.model = link.fetch_global();
  result.accuracy = accuracy(result.model, encode_for_evaluation(test, gm));
  return result;
}

}  // namespace fligan
