// Command-line driver for the federated augmentation experiments.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fligan/experiment.hpp"
#include "fligan/report.hpp"

namespace fs = std::filesystem;
using namespace fligan;

namespace {

struct Overrides {
  std::string config_path;
  std::vector<std::string> strategies;
  std::vector<double> alphas;
  std::optional<int> nodes;
  std::vector<std::uint64_t> seeds;
  std::optional<int> repeats;
  std::string out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--strategy", o.strategies, "fedavg, fedgan and/or fligan")->delimiter(',');
  cmd->add_option("--alpha", o.alphas, "Dirichlet concentration(s)")->delimiter(',');
  cmd->add_option("--nodes", o.nodes, "number of federated nodes");
  cmd->add_option("--seed", o.seeds, "explicit seed(s)")->delimiter(',');
  cmd->add_option("--repeats", o.repeats, "seeds base_seed .. base_seed+repeats-1");
  cmd->add_option("--out", o.out, "output directory");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (!o.strategies.empty()) {
    cfg.strategies.clear();
    for (const auto& s : o.strategies) cfg.strategies.push_back(parse_strategy(s));
  }
  if (!o.alphas.empty()) cfg.alphas = o.alphas;
  if (o.nodes) cfg.n_nodes = *o.nodes;
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.repeats) {
    cfg.repeats = *o.repeats;
    if (o.seeds.empty()) cfg.seeds.clear();
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

/// Single-scenario commands use the first alpha and first seed.
Scenario single_scenario(const ExperimentConfig& cfg, RunLog& log, double& alpha, std::uint64_t& seed) {
  alpha = cfg.alphas.front();
  seed = cfg.seed_list().front();
  const Dataset full = load_experiment_dataset(cfg, log);
  Diagnostics diag;
  auto sc = prepare_scenario(full, cfg, alpha, seed, &diag);
  log.absorb(diag);
  return sc;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

int cmd_run(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto result = run_matrix(cfg, {true, false});
  const auto files = emit_reports(result.cells, result.run_dir / "reports");
  for (const auto& n : files.notices) std::cerr << "notice: " << n << '\n';
  std::cout << kResultsHeader << '\n';
  for (const auto& c : result.cells) std::cout << csv_row(c.record) << '\n';
  for (const auto& a : result.averages) std::cout << csv_row(a) << '\n';
  std::cout << "run directory: " << result.run_dir.string() << '\n';
  return 0;
}

int cmd_gan(const Overrides& o) {
  const auto cfg = resolve(o);
  const fs::path dir = fresh_run_dir(cfg.output_dir);
  RunLog log(dir / "run_log.jsonl", false);
  double alpha;
  std::uint64_t seed;
  auto sc = single_scenario(cfg, log, alpha, seed);
  Diagnostics diag;
  auto [gan, secs] = timed([&] { return train_federated_gan(sc.partitions, sc.gm, cfg.fligan, cfg.gan, seed, &diag); });
  log.absorb(diag);
  for (const auto& rl : gan.rounds) log.event("round", to_json(rl));
  save_bank(gan.bank, dir / "generators");
  write_json(dir / "config.json", to_json(cfg));
  write_json(dir / "metadata.json", to_json(sc.gm));
  std::cout << "trained " << gan.bank.generators.size() << " generators in " << secs << " s\n"
            << "bank: " << (dir / "generators").string() << '\n';
  return 0;
}

int cmd_augment(const Overrides& o, const std::string& bank_dir) {
  const auto cfg = resolve(o);
  const fs::path dir = fresh_run_dir(cfg.output_dir);
  RunLog log(dir / "run_log.jsonl", false);
  double alpha;
  std::uint64_t seed;
  auto sc = single_scenario(cfg, log, alpha, seed);
  const auto bank = load_bank(bank_dir);
  Diagnostics diag;
  auto [aug, secs] = timed(
      [&] { return run_fligan(sc.partitions, sc.gm, bank, cfg.classifier, cfg.augmentation, sc.test, seed, &diag); });
  log.absorb(diag);
  save_weights((dir / "classifier.flws").string(), aug.best_model);
  write_json(dir / "history.json", to_json(aug.history));
  for (const auto& s : aug.history.steps)
    std::cout << "step " << s.step << ": synthetic rows " << s.synthetic_rows << ", accuracy " << s.accuracy << '\n';
  std::cout << "best step " << aug.history.best_step << " (accuracy " << aug.history.best_accuracy << ") in "
            << secs << " s\n";
  return 0;
}

int cmd_efficacy(const Overrides& o, const std::string& bank_dir) {
  const auto cfg = resolve(o);
  const fs::path dir = fresh_run_dir(cfg.output_dir);
  RunLog log(dir / "run_log.jsonl", false);
  double alpha;
  std::uint64_t seed;
  auto sc = single_scenario(cfg, log, alpha, seed);
  const auto bank = load_bank(bank_dir);
  BankSource source(bank, sc.gm);
  const auto synth = synthesize_like(sc.train, source, derive_seed(seed, {0xeff}));
  const auto rep = ml_efficacy(sc.train, sc.test, synth, sc.gm, seed, cfg.forest, cfg.dataset.name);
  write_json(dir / "efficacy.json", to_json(rep));
  std::cout << "real " << rep.real_data_accuracy << ", synthetic " << rep.synthetic_data_accuracy << ", gap "
            << rep.gap << '\n';
  return 0;
}

int cmd_report(const std::string& from, const std::string& out) {
  const auto cells = load_cells(from);
  const fs::path dir = out.empty() ? fs::path(from) / "reports" : fs::path(out);
  const auto files = emit_reports(cells, dir);
  for (const auto& n : files.notices) std::cerr << "notice: " << n << '\n';
  for (const auto& f : files.written) std::cout << f.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated GAN augmentation for incomplete tabular data"};
  app.require_subcommand(1);
  Overrides o;
  std::string bank_dir, from_dir;

  auto* run = app.add_subcommand("run", "run the strategy x alpha x seed matrix");
  add_common(run, o);
  auto* gan = app.add_subcommand("gan", "train the per-label generator bank only");
  add_common(gan, o);
  auto* augment = app.add_subcommand("augment", "run the augmentation loop from a saved bank");
  add_common(augment, o);
  augment->add_option("--bank", bank_dir, "generator bank directory")->required()->check(CLI::ExistingDirectory);
  auto* efficacy = app.add_subcommand("efficacy", "train-on-synthetic, test-on-real evaluation of a saved bank");
  add_common(efficacy, o);
  efficacy->add_option("--bank", bank_dir, "generator bank directory")->required()->check(CLI::ExistingDirectory);
  auto* report = app.add_subcommand("report", "regenerate charts and tables from a run directory");
  report->add_option("--from", from_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", o.out, "report directory (default: <run>/reports)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(o);
    if (*gan) return cmd_gan(o);
    if (*augment) return cmd_augment(o, bank_dir);
    if (*efficacy) return cmd_efficacy(o, bank_dir);
    if (*report) return cmd_report(from_dir, o.out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
