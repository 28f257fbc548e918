// Small end-to-end walk-through: build a skewed federation over a synthetic
// mixture, train the per-label generator bank, and augment the nodes.
//
//   ./fligan_demo [seed]

#include <iostream>
#include <string>

#include "fligan/augmentation.hpp"
#include "fligan/evaluation.hpp"
#include "fligan/grouping.hpp"
#include "fligan/orchestration.hpp"
#include "fligan/toy_data.hpp"

int main(int argc, char** argv) {
  using namespace fligan;
  const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 1;

  MixtureSpec spec;
  spec.n_rows = 2400;
  const Dataset data = make_mixture_dataset(spec, 42);
  auto [train, test] = split_train_test(data, 0.2, seed);
  auto parts = dirichlet_partition(train, 6, 0.1, seed);

  // Federated encoding round: nodes report vocabularies, ranges and class counts.
  std::vector<LocalMetadata> locals;
  for (const auto& p : parts) locals.push_back(collect_local_metadata(p, train.schema));
  const GlobalMetadata gm = merge_metadata(locals);

  std::cout << "class counts per node\n";
  for (const auto& d : gm.per_node_class_dist) {
    std::cout << "  node " << d.node_id << ':';
    for (const auto& label : gm.class_labels) std::cout << ' ' << d.count(label);
    std::cout << '\n';
  }
  for (const auto& label : gm.class_labels) {
    std::cout << "groups for " << label << ':';
    for (const auto& g : group_nodes(label, gm.per_node_class_dist)) {
      std::cout << " {";
      for (int m : g.member_node_ids) std::cout << ' ' << m;
      std::cout << " }";
    }
    std::cout << '\n';
  }

  GanConfig gan;
  gan.noise_dim = 16;
  gan.gen_hidden = gan.disc_hidden = {32, 32};
  FederatedGanParams fp;
  fp.e_init = 30;
  auto [bank, gan_seconds] = timed([&] { return train_federated_gan(parts, gm, fp, gan, seed); });
  std::cout << "generator bank trained in " << gan_seconds << " s\n";

  ClassifierConfig clf;
  AugmentationParams aug;
  aug.max_steps = 6;
  auto result = run_fligan(parts, gm, bank.bank, clf, aug, test, seed);
  for (const auto& s : result.history.steps)
    std::cout << "step " << s.step << "  synthetic rows " << s.synthetic_rows << "  accuracy " << s.accuracy
              << '\n';
  std::cout << "best step " << result.history.best_step << " with accuracy " << result.history.best_accuracy
            << '\n';

  BankSource source(bank.bank, gm);
  auto eff = ml_efficacy(train, test, synthesize_like(train, source, seed), gm, seed);
  std::cout << "forest accuracy: real " << eff.real_data_accuracy << ", synthetic " << eff.synthetic_data_accuracy
            << '\n';
}
