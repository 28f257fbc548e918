// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include "fligan/augmentation.hpp"
#include "fligan/experiment.hpp"
#include "fligan/grouping.hpp"
#include "fligan/metadata.hpp"
#include "fligan/orchestration.hpp"
#include "fligan/wgan_gp.hpp"
#include "oracles.hpp"

using namespace fligan;
using namespace fligan::testing;

namespace {

/// Collects sub-check failures for one criterion.
struct Verdict {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

int g_failed = 0;

void report(int id, const std::string& title, const Verdict& v, double seconds) {
  const bool ok = v.failures.empty();
  g_failed += !ok;
  std::printf("Criterion %d: %s - %s (%.1f s)\n", id, ok ? "PASS" : "FAIL", title.c_str(), seconds);
  for (const auto& f : v.failures) std::printf("    failed: %s\n", f.c_str());
  for (const auto& n : v.notes) std::printf("    %s\n", n.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---- 1: exact oracles --------------------------------------------------------

Verdict exact_oracles() {
  Verdict v;
  std::mt19937_64 rng(1);

  int bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto ws = random_clients(rng, 1 + rng() % 6, 1 + rng() % 9);
    std::vector<std::size_t> counts;
    for (std::size_t k = 0; k < ws.size(); ++k) counts.push_back(1 + rng() % 500);
    bad += max_abs_diff(fedavg_aggregate(ws, counts), brute_weighted_mean(ws, counts)) > 1e-12;
  }
  v.check(bad == 0, std::to_string(bad) + "/100 fedavg cases off the brute-force mean");

  const std::vector<TrainingSchedule> expect{{0, 3, 60}, {1, 2, 30}, {2, 1, 15}};
  for (std::size_t g = 0; g < expect.size(); ++g)
    v.check(schedule(3, 60, 0.5, 0.5, g) == expect[g], "schedule group " + std::to_string(g));

  bad = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = random_dbscan_case(rng);
    const auto a = dbscan_1d(c.x, c.eps, c.min_pts);
    bad += a.size() != c.x.size() || core_partition(a, c.x, c.eps, c.min_pts) != dbscan_oracle(c.x, c.eps, c.min_pts) ||
           !borders_attach(a, c.x, c.eps, c.min_pts);
  }
  v.check(bad == 0, std::to_string(bad) + "/500 dbscan cases disagree with the closure oracle");

  bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_dataset(rng);
    const auto gm = metadata_of(d);
    bad += !same_dataset(d, decode(encode(d, gm), gm), 1e-9);
  }
  v.check(bad == 0, std::to_string(bad) + "/100 encode/decode round trips differ");

  // replayed accuracies; the step index is the "model"
  const std::vector<double> accs{0.70, 0.75, 0.74, 0.73, 0.99};
  StepTrainer replay = [&](const std::vector<Dataset>&, int step) {
    return std::make_pair(WeightSet{{{"step", {1}, {static_cast<double>(step)}}}}, accs.at(static_cast<std::size_t>(step)));
  };
  struct Constant final : SyntheticSource {
    bool covers(const std::string&) const override { return true; }
    Dataset draw(const std::string& label, std::size_t n, std::uint64_t) const override {
      Dataset d{make_schema({"x"}, {}), {}};
      for (std::size_t i = 0; i < n; ++i) d.rows.push_back({0.0, label});
      return d;
    }
  };
  Dataset node{make_schema({"x"}, {}), {}};
  for (int i = 0; i < 100; ++i) node.rows.push_back({1.0, std::string("a")});
  for (int i = 0; i < 20; ++i) node.rows.push_back({1.0, std::string("b")});
  AugmentationParams p;
  p.delta = 2;
  const auto res = run_augmentation({{0, node}}, {"a", "b"}, Constant{}, replay, p, 1);
  v.check(res.history.steps.size() == 4 && res.history.steps.back().step == 3, "patience did not stop at step 3");
  v.check(res.history.best_step == 1 && res.best_model.at("step").values[0] == 1.0, "best_step is not 1");
  return v;
}

// ---- 2: numerical checks ---------------------------------------------------------

Verdict numerical_checks() {
  Verdict v;
  std::mt19937_64 rng(2);
  int checked = 0, bad = 0;
  double worst = 0.0;
  for (int t = 0; checked < 60 && t < 2000; ++t) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 3);
    const auto critic = random_critic(rng, static_cast<std::size_t>(d));
    const auto real = random_matrix(rng, 4, d), fake = random_matrix(rng, 4, d);
    const auto mix = random_mix(rng, 4);
    const nn::Matrix xhat = interpolate(real, fake, mix);
    if (!away_from_kinks(critic, xhat, 1e-3)) continue;
    const auto res = gradient_penalty(critic, real, fake, mix, false);
    const nn::Matrix fd = fd_input_gradient(critic, xhat);
    double e = 0.0;
    for (Eigen::Index i = 0; i < fd.rows(); ++i)
      for (Eigen::Index j = 0; j < fd.cols(); ++j) e = std::max(e, relative_error(res.input_gradient(i, j), fd(i, j)));
    worst = std::max(worst, e);
    bad += e >= 1e-4 || std::abs(res.value - penalty_from_gradient(fd)) > 1e-6;
    ++checked;
  }
  v.check(checked >= 50, "only " + std::to_string(checked) + " critics checked");
  v.check(bad == 0, std::to_string(bad) + " critics with gradient error >= 1e-4");
  v.note(fmt("input-gradient check: %.0f critics, worst relative error %.2e", checked, worst));

  for (int t = 0; t < 20; ++t) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 6);
    nn::Mlp linear;
    nn::Matrix w = random_matrix(rng, d, 1);
    linear.layers.push_back({w / w.norm(), nn::RowVector::Constant(1, 0.3)});
    const double pen = gradient_penalty(linear, random_matrix(rng, 8, d), random_matrix(rng, 8, d), random_mix(rng, 8), false).value;
    v.check(std::abs(pen) <= 1e-10, fmt("unit-norm linear critic penalty %.3e", pen));
  }
  nn::Mlp constant;
  constant.layers.push_back({nn::Matrix::Zero(3, 4), nn::RowVector::Zero(4)});
  constant.layers.push_back({nn::Matrix::Zero(4, 1), nn::RowVector::Constant(1, 2.0)});
  const double one = gradient_penalty(constant, random_matrix(rng, 5, 3), random_matrix(rng, 5, 3), random_mix(rng, 5), false).value;
  v.check(std::abs(one - 1.0) <= 1e-10, fmt("constant critic penalty %.12f", one));

  // library defaults: lambda 10, five critic steps, Adam(1e-4, 0, 0.9)
  const GanConfig cfg;
  const auto data = point_mass(64, 0.5);
  const auto trained = train_local(init_gan(cfg, 1, 11), data, 200, cfg, 12).first;
  Rng z(13);
  const double mean = generate(trained.generator, detail::normal_matrix(1000, cfg.noise_dim, z), data.layout).mean();
  v.check(std::abs(mean - 0.5) <= 0.15, fmt("point-mass generated mean %.4f, target 0.5 +/- 0.15", mean));
  v.note(fmt("point-mass generated mean after 200 epochs: %.4f", mean));
  return v;
}

// ---- 3-7: toy federation -----------------------------------------------------

/// 6,000-row 3-class mixture (6 continuous, 2 categorical), 8 nodes, alpha 0.05,
/// 3 seeds, all three strategies, library-default models.
ExperimentConfig toy_config() {
  ExperimentConfig c;
  c.alphas = {0.05};
  c.output_dir = (fs::temp_directory_path() / "fligan_acceptance").string();
  c.save_models = false;
  return c;
}

struct Toy {
  MatrixResult result;
  double seconds = 0.0;
};

Toy run_toy() {
  MatrixOptions opts;
  opts.persist = false;
  const auto t0 = std::chrono::steady_clock::now();
  Toy toy{run_matrix(toy_config(), opts), 0.0};
  toy.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return toy;
}

std::map<std::string, double> mean_of(const MatrixResult& r, double MetricsRecord::*field) {
  std::map<std::string, double> sum, n;
  for (const auto& c : r.cells) {
    sum[c.record.strategy] += c.record.*field;
    n[c.record.strategy] += 1;
  }
  for (auto& [k, s] : sum) s /= n[k];
  return sum;
}

Verdict headline(const Toy& toy) {
  Verdict v;
  auto acc = mean_of(toy.result, &MetricsRecord::accuracy);
  const double avg = acc["fedavg"], fl = acc["fligan"], fg = acc["fedgan"];
  v.check(fl >= avg + 0.05, fmt("FLIGAN %.4f < FedAvg %.4f + 0.05", fl, avg));
  v.check(fl >= fg - 0.02, fmt("FLIGAN %.4f < FedGAN %.4f - 0.02", fl, fg));
  v.check(toy.seconds < 15 * 60, fmt("runtime %.0f s exceeds 900 s", toy.seconds));
  v.note(fmt("mean accuracy: FedAvg %.4f, FLIGAN %.4f, FedGAN %.4f", avg, fl, fg));
  for (const auto& c : toy.result.cells)
    v.note(c.record.strategy + " seed " + std::to_string(c.record.seed) + fmt(": accuracy %.4f", c.record.accuracy));
  return v;
}

Verdict timing(const Toy& toy) {
  Verdict v;
  auto t = mean_of(toy.result, &MetricsRecord::wall_clock_seconds);
  v.check(t["fedavg"] < t["fligan"], "FedAvg not faster than FLIGAN");
  v.check(t["fedavg"] < t["fedgan"], "FedAvg not faster than FedGAN");
  v.note(fmt("mean wall-clock s: FedAvg %.1f, FLIGAN %.1f, FedGAN %.1f", t["fedavg"], t["fligan"], t["fedgan"]));
  return v;
}

std::size_t spread(const ClassDistribution& d, const std::vector<std::string>& labels) {
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& l : labels) {
    lo = std::min(lo, d.count(l));
    hi = std::max(hi, d.count(l));
  }
  return hi - lo;
}

Verdict step_curve(const Toy& toy) {
  Verdict v;
  double gain = 0.0;
  int n = 0;
  for (const auto& c : toy.result.cells) {
    if (!c.history) continue;
    const auto& steps = c.history->steps;
    const std::string who = c.record.strategy + " seed " + std::to_string(c.record.seed);
    std::vector<std::string> labels;
    for (const auto& s : steps)
      for (const auto& nc : s.node_counts)
        for (const auto& [l, _] : nc.counts) labels.push_back(l);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    for (std::size_t s = 1; s < steps.size(); ++s) {
      v.check(steps[s].synthetic_rows >= steps[s - 1].synthetic_rows, who + ": synthetic rows decreased at step " + std::to_string(s));
      for (std::size_t k = 0; k < steps[s].node_counts.size(); ++k)
        v.check(spread(steps[s].node_counts[k], labels) <= spread(steps[s - 1].node_counts[k], labels),
                who + ": class spread grew on node " + std::to_string(k) + " at step " + std::to_string(s));
    }
    if (c.record.strategy != "fligan") continue;
    const double g = c.history->best_accuracy - steps.front().accuracy;
    gain += g;
    ++n;
    v.note(who + fmt(": step-0 %.4f, best %.4f at step %.0f", steps.front().accuracy, c.history->best_accuracy,
                     c.history->best_step));
  }
  v.check(n > 0, "no FLIGAN histories recorded");
  if (n > 0) {
    gain /= n;
    v.check(gain >= 0.03, fmt("mean best-step gain %.4f < 0.03", gain));
    v.note(fmt("mean best-step gain over step 0: %.4f", gain));
  }
  return v;
}

Verdict efficacy(const Toy& toy) {
  Verdict v;
  const auto cfg = toy_config();
  RunLog log;
  const auto full = load_experiment_dataset(cfg, log);
  for (std::uint64_t seed : cfg.seed_list()) {
    const auto sc = prepare_scenario(full, cfg, 0.05, seed);
    const auto rep = ml_efficacy(sc.train, sc.test, sc.train, sc.gm, seed, cfg.forest);
    v.check(rep.gap == 0.0, fmt("identical-set gap %.3e for seed %.0f", rep.gap, static_cast<double>(seed)));
  }
  std::map<std::string, double> gap, n;
  for (const auto& c : toy.result.cells)
    if (c.efficacy) {
      gap[c.record.strategy] += c.efficacy->gap;
      n[c.record.strategy] += 1;
    }
  v.check(n["fligan"] == 3 && n["fedgan"] == 3, "efficacy missing for some augmenting cells");
  const double fl = gap["fligan"] / std::max(1.0, n["fligan"]), fg = gap["fedgan"] / std::max(1.0, n["fedgan"]);
  v.check(fl <= fg, fmt("FLIGAN gap %.4f > FedGAN gap %.4f", fl, fg));
  v.note(fmt("mean efficacy gap: FLIGAN %.4f, FedGAN %.4f", fl, fg));
  return v;
}

Verdict determinism(const Toy& first, const Toy& second) {
  Verdict v;
  const auto a = first.result.records(), b = second.result.records();
  v.check(a.size() == b.size() && !a.empty(), "record counts differ");
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    v.check(a[i].same_outcome(b[i]), a[i].strategy + " seed " + std::to_string(a[i].seed) + " differs between runs");
  v.note(fmt("%.0f records compared; second run took %.0f s", static_cast<double>(a.size()), second.seconds));
  return v;
}

template <class F>
void criterion(int id, const std::string& title, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = f();
  } catch (const std::exception& e) {
    v.failures.push_back(std::string("exception: ") + e.what());
  }
  report(id, title, v, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

}  // namespace

int main() {
  criterion(1, "exact oracles", exact_oracles);
  criterion(2, "gradient penalty and point-mass convergence", numerical_checks);

  std::printf("running toy federation (alpha 0.05, 3 seeds, 3 strategies)...\n");
  std::fflush(stdout);
  Toy toy;
  std::string toy_error;
  try {
    toy = run_toy();
  } catch (const std::exception& e) {
    toy_error = e.what();
  }
  auto on_toy = [&](auto check) {
    return [&, check] {
      if (!toy_error.empty()) throw std::runtime_error("toy run failed: " + toy_error);
      return check(toy);
    };
  };
  criterion(3, "toy headline: FLIGAN vs FedAvg and FedGAN", on_toy(headline));
  criterion(4, "timing order", on_toy(timing));
  criterion(5, "step curve shape", on_toy(step_curve));
  criterion(6, "ML efficacy", on_toy(efficacy));
  criterion(7, "end-to-end determinism", on_toy([](const Toy& t) { return determinism(t, run_toy()); }));

  std::printf("%d of 7 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
