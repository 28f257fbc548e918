#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "fligan/errors.hpp"
#include "fligan/metadata.hpp"
#include "fligan/nn.hpp"
#include "fligan/random.hpp"
#include "fligan/weights.hpp"

namespace fligan {

inline const std::string kClassifierPrefix = "clf";

struct ClassifierConfig {
  std::vector<int> hidden{64, 64};
  int rounds = 10;
  int local_epochs = 2;
  int batch_size = 64;
  double learning_rate = 1e-3;
  // Gives every node the same local RNG stream in a round. Only useful to
  // check aggregation algebra; leave off for experiments.
  bool same_seed_per_node = false;

  void validate() const {
    if (rounds < 0 || local_epochs <= 0 || batch_size <= 0 || !(learning_rate > 0.0))
      throw ConfigError("ClassifierConfig: rounds >= 0, other sizes and learning rate > 0 required");
    for (int h : hidden)
      if (h <= 0) throw ConfigError("ClassifierConfig: hidden widths must be positive");
  }
};

inline WeightSet init_classifier(const ClassifierConfig& cfg, std::size_t feature_width,
                                 std::size_t n_classes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0xc1f}));
  return nn::Mlp::init(feature_width, cfg.hidden, n_classes, rng).to_weights(kClassifierPrefix);
}

/// Minibatch Adam on softmax cross-entropy, starting from `start`. Returns the
/// updated weights and the mean loss over the final epoch.
inline std::pair<WeightSet, double> train_classifier_local(const WeightSet& start,
                                                           const EncodedMatrix& data,
                                                           const ClassifierConfig& cfg,
                                                           std::uint64_t seed) {
  require(data.size() > 0, "train_classifier_local: no rows");
  auto net = nn::Mlp::from_weights(start, kClassifierPrefix);
  nn::Adam opt(net, {cfg.learning_rate, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(seed, {0x10ca1}));
  const std::size_t n = data.size();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  nn::Mlp::Cache cache;
  double epoch_loss = 0.0;
  for (int e = 0; e < cfg.local_epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start_row = 0; start_row < n; start_row += batch) {
      const std::size_t m = std::min(batch, n - start_row);
      nn::Matrix x(static_cast<Eigen::Index>(m), data.rows.cols());
      std::vector<int> y(m);
      for (std::size_t i = 0; i < m; ++i) {
        x.row(static_cast<Eigen::Index>(i)) = data.rows.row(order[start_row + i]);
        y[i] = data.labels[static_cast<std::size_t>(order[start_row + i])];
      }
      nn::Matrix dlogits;
      epoch_loss += nn::softmax_cross_entropy(net.forward(x, &cache), y, &dlogits) * static_cast<double>(m);
      auto grad = net.zero_grad();
      net.backward(cache, dlogits, grad);
      opt.step(net, grad);
    }
    epoch_loss /= static_cast<double>(n);
  }
  return {net.to_weights(kClassifierPrefix), epoch_loss};
}

/// Argmax class per row; ties resolve to the lowest class index.
inline std::vector<int> predict(const WeightSet& model, const nn::Matrix& features) {
  auto logits = nn::Mlp::from_weights(model, kClassifierPrefix).forward(features);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<int>(detail::argmax(logits.row(i)));
  return out;
}

/// Fraction of test rows whose argmax logit equals the true label.
inline double accuracy(const WeightSet& model, const EncodedMatrix& test) {
  require(test.size() > 0, "accuracy: empty test set");
  auto net = nn::Mlp::from_weights(model, kClassifierPrefix);
  require(net.input_width() == static_cast<std::size_t>(test.rows.cols()),
          "accuracy: model input width does not match the test features");
  auto pred = predict(model, test.rows);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == test.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace fligan
