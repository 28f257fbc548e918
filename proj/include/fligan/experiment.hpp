#pragma once

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fligan/augmentation.hpp"
#include "fligan/classifier.hpp"
#include "fligan/datasets.hpp"
#include "fligan/errors.hpp"
#include "fligan/evaluation.hpp"
#include "fligan/metadata.hpp"
#include "fligan/orchestration.hpp"
#include "fligan/tabular.hpp"
#include "fligan/toy_data.hpp"
#include "fligan/wgan_gp.hpp"

namespace fligan {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Strategy { fedavg, fedgan, fligan };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::fedavg: return "fedavg";
    case Strategy::fedgan: return "fedgan";
    case Strategy::fligan: return "fligan";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& name) {
  if (name == "fedavg") return Strategy::fedavg;
  if (name == "fedgan") return Strategy::fedgan;
  if (name == "fligan") return Strategy::fligan;
  throw ConfigError("unknown strategy '" + name + "' (expected fedavg, fedgan or fligan)");
}

// ---------------------------------------------------------------------------
// Configuration

struct DatasetSource {
  std::string name = "mixture";
  std::string path;                   // comma-separated file; empty selects the built-in mixture
  std::optional<TableSchema> schema;  // defaults to the registry schema for `name`
  MixtureSpec mixture{};
  std::uint64_t mixture_seed = 42;
};

struct ExperimentConfig {
  DatasetSource dataset;
  double test_fraction = 0.2;
  int n_nodes = 8;
  std::vector<double> alphas{0.05, 1.0, 1.5, 2.0};
  int repeats = 3;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> seeds;  // overrides base_seed/repeats when non-empty
  std::vector<Strategy> strategies{Strategy::fedavg, Strategy::fedgan, Strategy::fligan};
  GanConfig gan{};
  ClassifierConfig classifier{};
  FederatedGanParams fligan{};
  FedGanParams fedgan{};
  AugmentationParams augmentation{};
  bool efficacy = true;
  ForestParams forest{};
  std::string output_dir = "runs";
  bool save_models = true;

  std::vector<std::uint64_t> seed_list() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> out;
    for (int i = 0; i < repeats; ++i) out.push_back(base_seed + static_cast<std::uint64_t>(i));
    return out;
  }

  TableSchema resolved_schema() const {
    if (dataset.path.empty()) return mixture_schema(dataset.mixture);
    if (dataset.schema) return *dataset.schema;
    const auto& desc = find_dataset(dataset.name);
    if (!desc.schema) throw ConfigError("dataset '" + dataset.name + "' needs an explicit schema in the config");
    return *desc.schema;
  }

  void validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    if (n_nodes < 1) throw ConfigError("n_nodes must be >= 1");
    if (alphas.empty()) throw ConfigError("alphas must not be empty");
    for (double a : alphas)
      if (!(a > 0.0)) throw ConfigError("every Dirichlet alpha must be positive");
    if (seeds.empty() && repeats < 1) throw ConfigError("repeats must be >= 1");
    if (strategies.empty()) throw ConfigError("no strategy selected");
    gan.validate();
    classifier.validate();
    if (fligan.r_init < 1 || fligan.e_init < 1) throw ConfigError("r_init and e_init must be >= 1");
    if (!(fligan.alpha_r > 0.0 && fligan.alpha_r <= 1.0 && fligan.alpha_e > 0.0 && fligan.alpha_e <= 1.0))
      throw ConfigError("alpha_r and alpha_e must lie in (0, 1]");
    if (!(fligan.grouping.eps > 0.0) || fligan.grouping.min_pts < 1)
      throw ConfigError("dbscan eps must be positive and min_pts >= 1");
    if (fedgan.rounds < 0 || fedgan.epochs < 0) throw ConfigError("fedgan rounds/epochs must be >= 0");
    if (augmentation.delta < 1 || augmentation.max_steps < 0 ||
        !(augmentation.step_fraction > 0.0 && augmentation.step_fraction <= 1.0))
      throw ConfigError("augmentation needs delta >= 1, max_steps >= 0, step_fraction in (0, 1]");
    if (forest.n_trees < 1) throw ConfigError("forest n_trees must be >= 1");
    if (!dataset.path.empty() && dataset.schema) {
      dataset.schema->validate();
      for (const auto& d : dataset_registry())
        if (d.name == dataset.name) d.check(*dataset.schema);
    }
  }
};

namespace detail {

/// Rejects keys outside `allowed` so that typos fail loudly.
inline void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::check_keys(j, "config",
                     {"dataset", "test_fraction", "n_nodes", "alphas", "repeats", "base_seed", "seeds",
                      "strategies", "gan", "classifier", "fligan", "fedgan", "augmentation", "efficacy",
                      "output_dir", "save_models"});
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::check_keys(d, "dataset", {"name", "path", "schema", "mixture", "mixture_seed"});
    read(d, "name", c.dataset.name);
    read(d, "path", c.dataset.path);
    read(d, "mixture_seed", c.dataset.mixture_seed);
    if (d.contains("schema")) {
      try {
        c.dataset.schema = schema_from_json(d.at("schema"));
      } catch (const json::exception& e) {
        throw ConfigError(std::string("bad dataset schema: ") + e.what());
      }
    }
    if (d.contains("mixture")) {
      const auto& m = d.at("mixture");
      detail::check_keys(m, "dataset.mixture",
                         {"rows", "classes", "continuous", "categorical", "categories_per_column",
                          "components_per_class", "separation", "noise", "categorical_signal"});
      auto& s = c.dataset.mixture;
      read(m, "rows", s.n_rows);
      read(m, "classes", s.n_classes);
      read(m, "continuous", s.n_continuous);
      read(m, "categorical", s.n_categorical);
      read(m, "categories_per_column", s.categories_per_column);
      read(m, "components_per_class", s.components_per_class);
      read(m, "separation", s.separation);
      read(m, "noise", s.noise);
      read(m, "categorical_signal", s.categorical_signal);
    }
  }
  read(j, "test_fraction", c.test_fraction);
  read(j, "n_nodes", c.n_nodes);
  read(j, "alphas", c.alphas);
  read(j, "repeats", c.repeats);
  read(j, "base_seed", c.base_seed);
  read(j, "seeds", c.seeds);
  if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : j.at("strategies")) c.strategies.push_back(parse_strategy(s.get<std::string>()));
  }
  if (j.contains("gan")) {
    const auto& g = j.at("gan");
    detail::check_keys(g, "gan",
                       {"noise_dim", "gen_hidden", "disc_hidden", "lambda_gp", "n_critic", "batch_size",
                        "learning_rate", "adam_beta1", "adam_beta2"});
    read(g, "noise_dim", c.gan.noise_dim);
    read(g, "gen_hidden", c.gan.gen_hidden);
    read(g, "disc_hidden", c.gan.disc_hidden);
    read(g, "lambda_gp", c.gan.lambda_gp);
    read(g, "n_critic", c.gan.n_critic);
    read(g, "batch_size", c.gan.batch_size);
    read(g, "learning_rate", c.gan.learning_rate);
    read(g, "adam_beta1", c.gan.adam_beta1);
    read(g, "adam_beta2", c.gan.adam_beta2);
  }
  if (j.contains("classifier")) {
    const auto& k = j.at("classifier");
    detail::check_keys(k, "classifier", {"hidden", "rounds", "local_epochs", "batch_size", "learning_rate"});
    read(k, "hidden", c.classifier.hidden);
    read(k, "rounds", c.classifier.rounds);
    read(k, "local_epochs", c.classifier.local_epochs);
    read(k, "batch_size", c.classifier.batch_size);
    read(k, "learning_rate", c.classifier.learning_rate);
  }
  if (j.contains("fligan")) {
    const auto& f = j.at("fligan");
    detail::check_keys(f, "fligan", {"r_init", "e_init", "alpha_r", "alpha_e", "dbscan_eps", "dbscan_min_pts"});
    read(f, "r_init", c.fligan.r_init);
    read(f, "e_init", c.fligan.e_init);
    read(f, "alpha_r", c.fligan.alpha_r);
    read(f, "alpha_e", c.fligan.alpha_e);
    read(f, "dbscan_eps", c.fligan.grouping.eps);
    read(f, "dbscan_min_pts", c.fligan.grouping.min_pts);
  }
  if (j.contains("fedgan")) {
    const auto& f = j.at("fedgan");
    detail::check_keys(f, "fedgan", {"rounds", "epochs"});
    read(f, "rounds", c.fedgan.rounds);
    read(f, "epochs", c.fedgan.epochs);
  }
  if (j.contains("augmentation")) {
    const auto& a = j.at("augmentation");
    detail::check_keys(a, "augmentation", {"delta", "step_fraction", "max_steps"});
    read(a, "delta", c.augmentation.delta);
    read(a, "step_fraction", c.augmentation.step_fraction);
    read(a, "max_steps", c.augmentation.max_steps);
  }
  if (j.contains("efficacy")) {
    const auto& e = j.at("efficacy");
    if (e.is_boolean()) {
      c.efficacy = e.get<bool>();
    } else {
      detail::check_keys(e, "efficacy", {"enabled", "n_trees", "max_depth", "bootstrap", "max_features"});
      read(e, "enabled", c.efficacy);
      read(e, "n_trees", c.forest.n_trees);
      read(e, "max_depth", c.forest.max_depth);
      read(e, "bootstrap", c.forest.bootstrap);
      read(e, "max_features", c.forest.max_features);
    }
  }
  read(j, "output_dir", c.output_dir);
  read(j, "save_models", c.save_models);
  c.validate();
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json strategies = json::array();
  for (auto s : c.strategies) strategies.push_back(to_string(s));
  json dataset{{"name", c.dataset.name},
               {"path", c.dataset.path},
               {"mixture_seed", c.dataset.mixture_seed},
               {"mixture",
                {{"rows", c.dataset.mixture.n_rows},
                 {"classes", c.dataset.mixture.n_classes},
                 {"continuous", c.dataset.mixture.n_continuous},
                 {"categorical", c.dataset.mixture.n_categorical},
                 {"categories_per_column", c.dataset.mixture.categories_per_column},
                 {"components_per_class", c.dataset.mixture.components_per_class},
                 {"separation", c.dataset.mixture.separation},
                 {"noise", c.dataset.mixture.noise},
                 {"categorical_signal", c.dataset.mixture.categorical_signal}}}};
  if (c.dataset.schema) dataset["schema"] = to_json(*c.dataset.schema);
  return {{"dataset", dataset},
          {"test_fraction", c.test_fraction},
          {"n_nodes", c.n_nodes},
          {"alphas", c.alphas},
          {"repeats", c.repeats},
          {"base_seed", c.base_seed},
          {"seeds", c.seeds},
          {"strategies", strategies},
          {"gan",
           {{"noise_dim", c.gan.noise_dim},
            {"gen_hidden", c.gan.gen_hidden},
            {"disc_hidden", c.gan.disc_hidden},
            {"lambda_gp", c.gan.lambda_gp},
            {"n_critic", c.gan.n_critic},
            {"batch_size", c.gan.batch_size},
            {"learning_rate", c.gan.learning_rate},
            {"adam_beta1", c.gan.adam_beta1},
            {"adam_beta2", c.gan.adam_beta2}}},
          {"classifier",
           {{"hidden", c.classifier.hidden},
            {"rounds", c.classifier.rounds},
            {"local_epochs", c.classifier.local_epochs},
            {"batch_size", c.classifier.batch_size},
            {"learning_rate", c.classifier.learning_rate}}},
          {"fligan",
           {{"r_init", c.fligan.r_init},
            {"e_init", c.fligan.e_init},
            {"alpha_r", c.fligan.alpha_r},
            {"alpha_e", c.fligan.alpha_e},
            {"dbscan_eps", c.fligan.grouping.eps},
            {"dbscan_min_pts", c.fligan.grouping.min_pts}}},
          {"fedgan", {{"rounds", c.fedgan.rounds}, {"epochs", c.fedgan.epochs}}},
          {"augmentation",
           {{"delta", c.augmentation.delta},
            {"step_fraction", c.augmentation.step_fraction},
            {"max_steps", c.augmentation.max_steps}}},
          {"efficacy",
           {{"enabled", c.efficacy},
            {"n_trees", c.forest.n_trees},
            {"max_depth", c.forest.max_depth},
            {"bootstrap", c.forest.bootstrap},
            {"max_features", c.forest.max_features}}},
          {"output_dir", c.output_dir},
          {"save_models", c.save_models}};
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Run log

/// Append-only JSON-lines event log; warnings are also echoed to stderr
/// unless quiet.
class RunLog {
 public:
  RunLog() = default;
  explicit RunLog(const fs::path& file, bool quiet = true) : out_(file, std::ios::app), quiet_(quiet) {
    if (!out_) throw IoError("cannot open run log '" + file.string() + "'");
  }

  void event(const std::string& kind, json payload = json::object()) {
    payload["event"] = kind;
    if (out_.is_open()) out_ << payload.dump() << '\n' << std::flush;
  }

  void warn(const std::string& message) {
    warnings_.push_back(message);
    event("warning", {{"message", message}});
    if (!quiet_) std::cerr << "warning: " << message << '\n';
  }

  void absorb(Diagnostics& diag) {
    for (auto& w : diag.warnings) warn(w);
    diag.warnings.clear();
  }

  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::ofstream out_;
  bool quiet_ = true;
  std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// Scenario preparation: split, partition, federated encoding round

struct Scenario {
  Dataset train;
  Dataset test;
  std::vector<NodePartition> partitions;
  GlobalMetadata gm;
};

inline Dataset load_experiment_dataset(const ExperimentConfig& cfg, RunLog& log) {
  if (cfg.dataset.path.empty()) return make_mixture_dataset(cfg.dataset.mixture, cfg.dataset.mixture_seed);
  auto loaded = load_dataset(cfg.dataset.path, cfg.resolved_schema());
  if (loaded.dropped_rows > 0)
    log.warn(std::to_string(loaded.dropped_rows) + " rows with missing cells dropped while loading '" +
             cfg.dataset.path + "'");
  if (loaded.data.empty()) throw SchemaError("dataset '" + cfg.dataset.path + "' has no complete rows");
  return std::move(loaded.data);
}

/// The test split depends only on the seed, so every alpha and strategy is
/// scored on the same held-out rows.
inline Scenario prepare_scenario(const Dataset& full, const ExperimentConfig& cfg, double alpha,
                                 std::uint64_t seed, Diagnostics* diag = nullptr) {
  Scenario sc;
  std::tie(sc.train, sc.test) = split_train_test(full, cfg.test_fraction, seed, diag);
  sc.partitions = dirichlet_partition(sc.train, cfg.n_nodes, alpha, seed);
  std::vector<LocalMetadata> locals;
  for (const auto& p : sc.partitions) locals.push_back(collect_local_metadata(p, sc.train.schema));
  sc.gm = merge_metadata(locals);
  for (const auto& col : sc.gm.degenerate_cols)
    warn_to(diag, "continuous column '" + col + "' is constant across the federation; it encodes to 0");
  return sc;
}

inline std::vector<Dataset> node_datasets(const std::vector<NodePartition>& parts) {
  std::vector<Dataset> out;
  for (const auto& p : parts) out.push_back(p.data);
  return out;
}

// ---------------------------------------------------------------------------
// One matrix cell

struct CellResult {
  MetricsRecord record;
  std::string dataset;
  std::size_t real_rows = 0;
  std::optional<AugmentationHistory> history;
  std::optional<EfficacyReport> efficacy;
};

inline json to_json(const CellResult& c) {
  json j{{"record", to_json(c.record)}, {"dataset", c.dataset}, {"real_rows", c.real_rows}};
  if (c.history) j["history"] = to_json(*c.history);
  if (c.efficacy) j["efficacy"] = to_json(*c.efficacy);
  return j;
}

inline CellResult cell_from_json(const json& j) {
  CellResult c;
  const auto& r = j.at("record");
  c.record = {r.at("strategy").get<std::string>(),         r.at("alpha").get<double>(),
              r.at("seed").get<std::uint64_t>(),            r.at("accuracy").get<double>(),
              r.at("wall_clock_seconds").get<double>(),     r.at("synthetic_rows_added").get<std::size_t>(),
              r.at("steps_taken").get<int>()};
  c.dataset = j.value("dataset", "");
  c.real_rows = j.value("real_rows", std::size_t{0});
  if (j.contains("history")) c.history = history_from_json(j.at("history"));
  if (j.contains("efficacy")) {
    const auto& e = j.at("efficacy");
    c.efficacy = EfficacyReport{e.at("real_data_accuracy").get<double>(),
                                e.at("synthetic_data_accuracy").get<double>(),
                                e.at("gap").get<double>(),
                                e.value("classifier", ""),
                                e.value("dataset", ""),
                                e.value("degenerate", false)};
  }
  return c;
}

inline std::string cell_tag(const std::string& strategy, double alpha, std::uint64_t seed) {
  std::ostringstream s;
  s << strategy << "_alpha" << alpha << "_seed" << seed;
  return s.str();
}

/// Runs one strategy on a prepared scenario. `artifacts`, when set, receives
/// the trained models.
inline CellResult run_cell(Strategy strategy, const Scenario& sc, const ExperimentConfig& cfg, double alpha,
                           std::uint64_t seed, RunLog& log, const std::optional<fs::path>& artifacts = {}) {
  CellResult cell;
  cell.dataset = cfg.dataset.name;
  cell.real_rows = sc.train.size();
  cell.record.strategy = to_string(strategy);
  cell.record.alpha = alpha;
  cell.record.seed = seed;
  Diagnostics diag;
  const std::string tag = cell_tag(cell.record.strategy, alpha, seed);
  if (artifacts) fs::create_directories(*artifacts);

  auto efficacy_of = [&](const SyntheticSource& source) {
    auto synth = synthesize_like(sc.train, source, derive_seed(seed, {0xeff}));
    if (synth.empty()) {
      log.warn(tag + ": synthetic efficacy set is empty; efficacy skipped");
      return std::optional<EfficacyReport>{};
    }
    return std::optional<EfficacyReport>{ml_efficacy(sc.train, sc.test, synth, sc.gm, seed, cfg.forest,
                                                     cfg.dataset.name + " " + tag)};
  };
  StepTrainer trainer = [&](const std::vector<Dataset>& data, int step) {
    auto r = train_federated_classifier(data, sc.gm, cfg.classifier, sc.test, seed);
    for (const auto& rl : r.rounds) {
      auto j = to_json(rl);
      j["cell"] = tag;
      j["step"] = step;
      log.event("round", j);
    }
    return std::make_pair(std::move(r.model), r.accuracy);
  };

  switch (strategy) {
    case Strategy::fedavg: {
      auto [res, secs] = timed([&] { return trainer(node_datasets(sc.partitions), 0); });
      cell.record.accuracy = res.second;
      cell.record.wall_clock_seconds = secs;
      if (artifacts) save_weights((*artifacts / "classifier.flws").string(), res.first);
      break;
    }
    case Strategy::fligan: {
      const auto t0 = std::chrono::steady_clock::now();
      auto gan = train_federated_gan(sc.partitions, sc.gm, cfg.fligan, cfg.gan, seed, &diag);
      for (const auto& plan : gan.plans) {
        json groups = json::array();
        for (std::size_t g = 0; g < plan.groups.size(); ++g)
          groups.push_back({{"members", plan.groups[g].member_node_ids},
                            {"volume", plan.groups[g].volume},
                            {"rounds", plan.schedules.at(g).rounds},
                            {"epochs", plan.schedules.at(g).epochs}});
        log.event("grouping", {{"cell", tag}, {"label", plan.label}, {"groups", groups}});
      }
      for (const auto& rl : gan.rounds) {
        auto j = to_json(rl);
        j["cell"] = tag;
        log.event("round", j);
      }
      BankSource source(gan.bank, sc.gm);
      auto aug = run_augmentation(sc.partitions, sc.gm.class_labels, source, trainer, cfg.augmentation, seed, &diag);
      cell.record.wall_clock_seconds = detail::seconds_since(t0);
      cell.record.accuracy = aug.history.best_accuracy;
      cell.record.synthetic_rows_added = aug.history.best_synthetic_rows();
      cell.record.steps_taken = aug.history.best_step;
      cell.history = aug.history;
      if (artifacts) {
        save_bank(gan.bank, *artifacts / "generators");
        save_weights((*artifacts / "classifier.flws").string(), aug.best_model);
      }
      if (cfg.efficacy) cell.efficacy = efficacy_of(source);
      break;
    }
    case Strategy::fedgan: {
      const auto t0 = std::chrono::steady_clock::now();
      auto fg = train_fedgan_baseline(sc.partitions, sc.gm, cfg.fedgan, cfg.gan, seed);
      for (const auto& rl : fg.rounds) {
        auto j = to_json(rl);
        j["cell"] = tag;
        log.event("round", j);
      }
      LabeledGeneratorSource source(fg.pair.generator, sc.gm);
      auto aug = run_augmentation(sc.partitions, sc.gm.class_labels, source, trainer, cfg.augmentation, seed, &diag);
      cell.record.wall_clock_seconds = detail::seconds_since(t0);
      cell.record.accuracy = aug.history.best_accuracy;
      cell.record.synthetic_rows_added = aug.history.best_synthetic_rows();
      cell.record.steps_taken = aug.history.best_step;
      cell.history = aug.history;
      if (artifacts) {
        save_weights((*artifacts / "fedgan_generator.flws").string(), fg.pair.generator);
        save_weights((*artifacts / "classifier.flws").string(), aug.best_model);
      }
      if (cfg.efficacy) cell.efficacy = efficacy_of(source);
      break;
    }
  }
  for (auto& w : diag.warnings) w = tag + ": " + w;
  log.absorb(diag);
  return cell;
}

// ---------------------------------------------------------------------------
// Matrix

struct AveragedRecord {
  std::string strategy;
  double alpha = 0.0;
  std::size_t n_seeds = 0;
  double accuracy = 0.0;
  double wall_clock_seconds = 0.0;
  double synthetic_rows_added = 0.0;
  double steps_taken = 0.0;
};

/// Arithmetic means per (strategy, alpha), in first-appearance order.
inline std::vector<AveragedRecord> average_records(const std::vector<MetricsRecord>& records) {
  std::vector<AveragedRecord> out;
  for (const auto& r : records) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const auto& a) { return a.strategy == r.strategy && a.alpha == r.alpha; });
    if (it == out.end()) {
      out.push_back({r.strategy, r.alpha, 0, 0, 0, 0, 0});
      it = out.end() - 1;
    }
    ++it->n_seeds;
    it->accuracy += r.accuracy;
    it->wall_clock_seconds += r.wall_clock_seconds;
    it->synthetic_rows_added += static_cast<double>(r.synthetic_rows_added);
    it->steps_taken += r.steps_taken;
  }
  for (auto& a : out) {
    const auto n = static_cast<double>(a.n_seeds);
    a.accuracy /= n;
    a.wall_clock_seconds /= n;
    a.synthetic_rows_added /= n;
    a.steps_taken /= n;
  }
  return out;
}

inline constexpr const char* kResultsHeader =
    "strategy,alpha,seed,accuracy,wall_clock_seconds,synthetic_rows_added,steps_taken";

namespace detail {

/// Shortest text that parses back to exactly `v`.
inline std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace detail

inline std::string csv_row(const MetricsRecord& r) {
  using detail::num;
  return r.strategy + ',' + num(r.alpha) + ',' + std::to_string(r.seed) + ',' + num(r.accuracy) + ',' +
         num(r.wall_clock_seconds) + ',' + std::to_string(r.synthetic_rows_added) + ',' +
         std::to_string(r.steps_taken);
}

inline std::string csv_row(const AveragedRecord& a) {
  using detail::num;
  return a.strategy + ',' + num(a.alpha) + ",mean," + num(a.accuracy) + ',' + num(a.wall_clock_seconds) + ',' +
         num(a.synthetic_rows_added) + ',' + num(a.steps_taken);
}

/// A new directory under `root` named after the current time; never reuses
/// an existing one.
inline fs::path fresh_run_dir(const fs::path& root) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream name;
  name << "run-" << std::put_time(&tm, "%Y%m%d-%H%M%S");
  fs::path dir = root / name.str();
  for (int k = 1; fs::exists(dir); ++k) dir = root / (name.str() + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

struct MatrixOptions {
  bool persist = true;
  bool quiet = true;
};

struct MatrixResult {
  std::vector<CellResult> cells;
  std::vector<AveragedRecord> averages;
  fs::path run_dir;  // empty when not persisted
  std::vector<std::string> warnings;

  std::vector<MetricsRecord> records() const {
    std::vector<MetricsRecord> out;
    for (const auto& c : cells) out.push_back(c.record);
    return out;
  }
};

/// Runs every (alpha, seed, strategy) cell. When persisting, each cell is
/// written as soon as it finishes, so an interrupted run keeps all completed
/// cells.
inline MatrixResult run_matrix(const ExperimentConfig& cfg, const MatrixOptions& opts = {}) {
  cfg.validate();
  MatrixResult result;
  RunLog log;
  std::ofstream csv;
  if (opts.persist) {
    result.run_dir = fresh_run_dir(cfg.output_dir);
    fs::create_directories(result.run_dir / "cells");
    fs::create_directories(result.run_dir / "metadata");
    std::ofstream(result.run_dir / "config.json") << to_json(cfg).dump(2) << '\n';
    log = RunLog(result.run_dir / "run_log.jsonl", opts.quiet);
    csv.open(result.run_dir / "results.csv");
    csv << kResultsHeader << '\n' << std::flush;
  }
  log.event("start", {{"config", to_json(cfg)}});
  const Dataset full = load_experiment_dataset(cfg, log);
  for (double alpha : cfg.alphas) {
    for (auto seed : cfg.seed_list()) {
      Diagnostics diag;
      Scenario sc = prepare_scenario(full, cfg, alpha, seed, &diag);
      log.absorb(diag);
      std::ostringstream scenario_tag;
      scenario_tag << "alpha" << alpha << "_seed" << seed;
      json dists = json::array();
      for (const auto& d : sc.gm.per_node_class_dist) dists.push_back(to_json(d));
      log.event("scenario", {{"alpha", alpha}, {"seed", seed}, {"train_rows", sc.train.size()},
                             {"test_rows", sc.test.size()}, {"class_distribution", dists}});
      if (opts.persist)
        std::ofstream(result.run_dir / "metadata" / (scenario_tag.str() + ".json")) << to_json(sc.gm).dump(2) << '\n';
      for (auto strategy : cfg.strategies) {
        std::optional<fs::path> artifacts;
        const auto tag = cell_tag(to_string(strategy), alpha, seed);
        if (opts.persist && cfg.save_models) artifacts = result.run_dir / "models" / tag;
        auto cell = run_cell(strategy, sc, cfg, alpha, seed, log, artifacts);
        log.event("cell", to_json(cell));
        if (opts.persist) {
          std::ofstream(result.run_dir / "cells" / (tag + ".json")) << to_json(cell).dump(2) << '\n';
          csv << csv_row(cell.record) << '\n' << std::flush;
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }
  result.averages = average_records(result.records());
  if (opts.persist) {
    for (const auto& a : result.averages) csv << csv_row(a) << '\n';
    json summary{{"records", json::array()}, {"averages", json::array()}};
    for (const auto& c : result.cells) summary["records"].push_back(to_json(c.record));
    for (const auto& a : result.averages)
      summary["averages"].push_back({{"strategy", a.strategy},
                                     {"alpha", a.alpha},
                                     {"n_seeds", a.n_seeds},
                                     {"accuracy", a.accuracy},
                                     {"wall_clock_seconds", a.wall_clock_seconds},
                                     {"synthetic_rows_added", a.synthetic_rows_added},
                                     {"steps_taken", a.steps_taken}});
    std::ofstream(result.run_dir / "summary.json") << summary.dump(2) << '\n';
  }
  log.event("finish");
  result.warnings = log.warnings();
  return result;
}

/// Reads back the per-cell files of a persisted run, ordered by file name.
inline std::vector<CellResult> load_cells(const fs::path& run_dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(run_dir / "cells"))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<CellResult> cells;
  for (const auto& f : files) {
    std::ifstream in(f);
    cells.push_back(cell_from_json(json::parse(in)));
  }
  return cells;
}

}  // namespace fligan
