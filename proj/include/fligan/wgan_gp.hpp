#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fligan/errors.hpp"
#include "fligan/metadata.hpp"
#include "fligan/nn.hpp"
#include "fligan/random.hpp"
#include "fligan/weights.hpp"

namespace fligan {

inline const std::string kGeneratorPrefix = "gen";
inline const std::string kCriticPrefix = "disc";

struct GanConfig {
  int noise_dim = 64;
  std::vector<int> gen_hidden{128, 128};
  std::vector<int> disc_hidden{128, 128};
  double lambda_gp = 10.0;
  int n_critic = 5;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;

  void validate() const {
    if (noise_dim <= 0 || n_critic <= 0 || batch_size <= 0)
      throw ConfigError("GanConfig: noise_dim, n_critic and batch_size must be positive");
    for (int h : gen_hidden)
      if (h <= 0) throw ConfigError("GanConfig: gen_hidden widths must be positive");
    for (int h : disc_hidden)
      if (h <= 0) throw ConfigError("GanConfig: disc_hidden widths must be positive");
    if (!(lambda_gp > 0.0) || !(learning_rate > 0.0))
      throw ConfigError("GanConfig: lambda_gp and learning_rate must be positive");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
      throw ConfigError("GanConfig: Adam betas must lie in [0, 1)");
  }
};

struct GanPair {
  WeightSet generator;
  WeightSet discriminator;
  bool operator==(const GanPair&) const = default;
};

struct GanStats {
  double critic_loss = 0.0;
  double generator_loss = 0.0;
  std::size_t critic_steps = 0;
  std::size_t generator_steps = 0;
};

inline GanPair init_gan(const GanConfig& cfg, std::size_t feature_width, std::uint64_t seed) {
  cfg.validate();
  require(feature_width > 0, "init_gan: feature width must be positive");
  Rng rng(derive_seed(seed, {0x9a4}));
  auto gen = nn::Mlp::init(static_cast<std::size_t>(cfg.noise_dim), cfg.gen_hidden, feature_width, rng);
  auto disc = nn::Mlp::init(feature_width, cfg.disc_hidden, 1, rng);
  return {gen.to_weights(kGeneratorPrefix), disc.to_weights(kCriticPrefix)};
}

/// Generator output activation: tanh on continuous slots, softmax inside each
/// categorical block, following the encoded layout.
struct OutputHead {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> softmax_blocks;  // offset, width
  std::vector<Eigen::Index> tanh_slots;

  static OutputHead from_layout(const Layout& layout) {
    OutputHead h;
    for (const auto& b : layout) {
      if (b.categorical) {
        if (b.width > 0)
          h.softmax_blocks.emplace_back(static_cast<Eigen::Index>(b.offset),
                                        static_cast<Eigen::Index>(b.width));
      } else {
        h.tanh_slots.push_back(static_cast<Eigen::Index>(b.offset));
      }
    }
    return h;
  }

  nn::Matrix apply(const nn::Matrix& pre) const {
    nn::Matrix out = pre;
    for (auto c : tanh_slots) out.col(c) = pre.col(c).array().tanh();
    for (auto [off, w] : softmax_blocks) {
      for (Eigen::Index i = 0; i < pre.rows(); ++i) {
        auto seg = pre.row(i).segment(off, w);
        Eigen::RowVectorXd e = (seg.array() - seg.maxCoeff()).exp();
        out.row(i).segment(off, w) = e / e.sum();
      }
    }
    return out;
  }

  /// Gradient w.r.t. pre-activations given the activated output and dL/dout.
  nn::Matrix backward(const nn::Matrix& out, const nn::Matrix& dout) const {
    nn::Matrix dpre = dout;
    for (auto c : tanh_slots) dpre.col(c) = dout.col(c).array() * (1.0 - out.col(c).array().square());
    for (auto [off, w] : softmax_blocks) {
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        auto y = out.row(i).segment(off, w);
        auto g = dout.row(i).segment(off, w);
        const double dot = y.dot(g);
        dpre.row(i).segment(off, w) = y.array() * (g.array() - dot);
      }
    }
    return dpre;
  }
};

/// Forward pass of a generator WeightSet on a noise batch, head applied.
inline nn::Matrix generate(const WeightSet& gen, const nn::Matrix& noise, const Layout& layout) {
  auto net = nn::Mlp::from_weights(gen, kGeneratorPrefix);
  require(net.output_width() == layout_width(layout), "generate: layout width does not match generator");
  return OutputHead::from_layout(layout).apply(net.forward(noise));
}

inline nn::Matrix critic_scores(const WeightSet& disc, const nn::Matrix& x) {
  return nn::Mlp::from_weights(disc, kCriticPrefix).forward(x);
}

// ---------------------------------------------------------------------------
// Gradient penalty

struct PenaltyResult {
  double value = 0.0;
  nn::Matrix input_gradient;  // dD/dx at each interpolated row
  nn::Mlp::Grad weight_grad;  // d(value)/d(critic params), filled when requested
};

/// Penalty mean_i (||grad_x D(xhat_i)||_2 - 1)^2 at xhat = eps*real + (1-eps)*fake.
///
/// The input gradient is obtained by reverse-mode propagation of a unit
/// output seed. For leaky-rectifier critics that gradient is
///   g = 1 * W_L^T, then g <- (g .* s_l) W_l^T down to the input,
/// with s_l the piecewise-constant activation slopes. It is linear in each
/// weight matrix, so differentiating the penalty w.r.t. the critic weights is
/// a second reverse sweep over that chain; biases only enter through s_l and
/// receive zero gradient almost everywhere.
inline PenaltyResult gradient_penalty(const nn::Mlp& critic, const nn::Matrix& real,
                                      const nn::Matrix& fake, const Eigen::VectorXd& mix,
                                      bool want_weight_grad) {
  require(real.rows() == fake.rows() && real.cols() == fake.cols(),
          "gradient_penalty: real and fake batches differ in shape");
  require(mix.size() == real.rows(), "gradient_penalty: need one mix draw per row");
  require(real.rows() > 0, "gradient_penalty: empty batch");
  require(critic.output_width() == 1, "gradient_penalty: critic must have a single output");
  const Eigen::Index batch = real.rows();
  const std::size_t n_layers = critic.layers.size();

  nn::Matrix xhat = mix.asDiagonal() * real + (Eigen::VectorXd::Ones(batch) - mix).asDiagonal() * fake;
  nn::Mlp::Cache cache;
  critic.forward(xhat, &cache);

  // Chain u_{L-1} = 1 W_L^T; v_l = u_l .* s_l; u_{l-1} = v_l W_l^T.
  std::vector<nn::Matrix> slopes(n_layers);
  std::vector<nn::Matrix> v(n_layers);
  nn::Matrix u = nn::Matrix::Ones(batch, 1) * critic.layers.back().weight.transpose();
  for (std::size_t l = n_layers - 1; l-- > 0;) {
    slopes[l] = cache.pre[l].unaryExpr([&](double z) { return critic.slope(z); });
    v[l] = u.cwiseProduct(slopes[l]);
    u = v[l] * critic.layers[l].weight.transpose();
  }

  PenaltyResult res;
  res.input_gradient = u;
  Eigen::VectorXd norms = u.rowwise().norm();
  res.value = (norms.array() - 1.0).square().mean();
  if (!want_weight_grad) return res;

  res.weight_grad = critic.zero_grad();
  // adjoint of u_0
  nn::Matrix adj(batch, u.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double nrm = norms(i);
    if (nrm > 0.0)
      adj.row(i) = (2.0 / static_cast<double>(batch)) * (nrm - 1.0) / nrm * u.row(i);
    else
      adj.row(i).setZero();
  }
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    res.weight_grad.weight[l].noalias() += adj.transpose() * v[l];
    adj = (adj * critic.layers[l].weight).cwiseProduct(slopes[l]);
  }
  res.weight_grad.weight.back().noalias() += adj.colwise().sum().transpose();
  return res;
}

/// WeightSet-level entry point; returns the penalty value (before lambda).
inline double gradient_penalty(const WeightSet& disc, const nn::Matrix& real, const nn::Matrix& fake,
                               const Eigen::VectorXd& mix) {
  return gradient_penalty(nn::Mlp::from_weights(disc, kCriticPrefix), real, fake, mix, false).value;
}

// ---------------------------------------------------------------------------
// Local training

namespace detail {

inline nn::Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n01(rng);
  return m;
}

/// Draws `k` distinct row indices via a partial Fisher-Yates shuffle of `pool`.
inline nn::Matrix draw_rows(const nn::Matrix& data, std::vector<Eigen::Index>& pool, std::size_t k,
                            Rng& rng) {
  nn::Matrix out(static_cast<Eigen::Index>(k), data.cols());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    out.row(static_cast<Eigen::Index>(i)) = data.row(pool[i]);
  }
  return out;
}

}  // namespace detail

/// Runs `epochs` passes of WGAN-GP over `local_rows`. One pass is
/// ceil(n / batch) generator steps, each preceded by n_critic critic steps;
/// the batch is clamped to the number of local rows.
inline std::pair<GanPair, GanStats> train_local(const GanPair& pair, const EncodedMatrix& local_rows,
                                                int epochs, const GanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  require(epochs >= 0, "train_local: negative epoch count");
  GanStats stats;
  if (epochs == 0) return {pair, stats};
  require(local_rows.size() > 0, "train_local: no local rows");

  auto gen = nn::Mlp::from_weights(pair.generator, kGeneratorPrefix);
  auto critic = nn::Mlp::from_weights(pair.discriminator, kCriticPrefix);
  const auto width = static_cast<std::size_t>(local_rows.rows.cols());
  require(gen.output_width() == width && critic.input_width() == width,
          "train_local: GAN shapes do not match the encoded feature width");
  require(gen.input_width() == static_cast<std::size_t>(cfg.noise_dim),
          "train_local: generator input width differs from noise_dim");

  const OutputHead head = OutputHead::from_layout(local_rows.layout);
  const nn::AdamParams adam{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8};
  nn::Adam gen_opt(gen, adam);
  nn::Adam critic_opt(critic, adam);

  Rng rng(derive_seed(seed, {0x7a1}));
  const std::size_t n = local_rows.size();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  const auto b = static_cast<Eigen::Index>(batch);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const auto noise_dim = static_cast<Eigen::Index>(cfg.noise_dim);
  std::vector<Eigen::Index> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  const nn::Matrix seed_fake = nn::Matrix::Constant(b, 1, 1.0 / static_cast<double>(batch));

  nn::Mlp::Cache gcache, ccache;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      for (int k = 0; k < cfg.n_critic; ++k) {
        nn::Matrix real = detail::draw_rows(local_rows.rows, pool, batch, rng);
        nn::Matrix fake = head.apply(gen.forward(detail::normal_matrix(b, noise_dim, rng)));
        Eigen::VectorXd mix(b);
        for (auto& e : mix) e = uniform01(rng);

        auto grad = critic.zero_grad();
        // mean D(fake) - mean D(real)
        const double d_fake = critic.forward(fake, &ccache).mean();
        critic.backward(ccache, seed_fake, grad);
        const double d_real = critic.forward(real, &ccache).mean();
        critic.backward(ccache, -seed_fake, grad);
        auto gp = gradient_penalty(critic, real, fake, mix, true);
        for (std::size_t l = 0; l < grad.weight.size(); ++l)
          grad.weight[l] += cfg.lambda_gp * gp.weight_grad.weight[l];
        critic_opt.step(critic, grad);
        stats.critic_loss = d_fake - d_real + cfg.lambda_gp * gp.value;
        ++stats.critic_steps;
      }
      nn::Matrix pre = gen.forward(detail::normal_matrix(b, noise_dim, rng), &gcache);
      nn::Matrix fake = head.apply(pre);
      stats.generator_loss = -critic.forward(fake, &ccache).mean();
      nn::Matrix dfake = critic.input_gradient(ccache, -seed_fake);
      auto ggrad = gen.zero_grad();
      gen.backward(gcache, head.backward(fake, dfake), ggrad);
      gen_opt.step(gen, ggrad);
      ++stats.generator_steps;
    }
  }
  return {GanPair{gen.to_weights(kGeneratorPrefix), critic.to_weights(kCriticPrefix)}, stats};
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

inline EncodedMatrix generate_encoded(const WeightSet& gen, std::size_t n, Layout layout,
                                      std::uint64_t seed) {
  auto net = nn::Mlp::from_weights(gen, kGeneratorPrefix);
  require(net.output_width() == layout_width(layout),
          "sample: generator output width does not match the metadata layout");
  Rng rng(derive_seed(seed, {0x5a3}));
  EncodedMatrix m;
  m.rows = OutputHead::from_layout(layout).apply(net.forward(
      normal_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(net.input_width()), rng)));
  m.layout = std::move(layout);
  return m;
}

}  // namespace detail

/// Draws n rows from a per-label generator and attaches `label` as target.
inline Dataset sample(const WeightSet& gen, std::size_t n, const std::string& label,
                      const GlobalMetadata& gm, std::uint64_t seed) {
  if (n == 0) return Dataset{gm.schema, {}};
  auto m = detail::generate_encoded(gen, n, gm.feature_layout(), seed);
  m.labels.assign(n, gm.class_index(label));
  return decode(m, gm);
}

/// Draws n rows from a generator whose output carries its own label block
/// (see GlobalMetadata::labeled_layout).
inline Dataset sample_labeled(const WeightSet& gen, std::size_t n, const GlobalMetadata& gm,
                              std::uint64_t seed) {
  if (n == 0) return Dataset{gm.schema, {}};
  return decode(detail::generate_encoded(gen, n, gm.labeled_layout(), seed), gm);
}

}  // namespace fligan
