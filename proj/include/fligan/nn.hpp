#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fligan/errors.hpp"
#include "fligan/random.hpp"
#include "fligan/weights.hpp"

namespace fligan::nn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Dense {
  Matrix weight;  // fan_in x fan_out; rows of the input batch multiply from the left
  RowVector bias;
};

/// Fully connected network: leaky-rectifier hidden layers, linear output.
struct Mlp {
  std::vector<Dense> layers;
  double leak = 0.2;

  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  struct Grad {
    std::vector<Matrix> weight;
    std::vector<RowVector> bias;
  };

  /// Scaled-uniform initialization: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)),
  /// zero biases.
  static Mlp init(std::size_t in, const std::vector<int>& hidden, std::size_t out, Rng& rng,
                  double leak = 0.2) {
    Mlp net;
    net.leak = leak;
    std::vector<std::size_t> widths{in};
    for (int h : hidden) {
      require(h > 0, "Mlp::init: hidden widths must be positive");
      widths.push_back(static_cast<std::size_t>(h));
    }
    widths.push_back(out);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const auto fi = static_cast<Eigen::Index>(widths[l]);
      const auto fo = static_cast<Eigen::Index>(widths[l + 1]);
      const double bound = std::sqrt(6.0 / static_cast<double>(fi + fo));
      std::uniform_real_distribution<double> u(-bound, bound);
      Dense d{Matrix(fi, fo), RowVector::Zero(fo)};
      // fill row-major so the draw order matches the serialized layout
      for (Eigen::Index i = 0; i < fi; ++i)
        for (Eigen::Index j = 0; j < fo; ++j) d.weight(i, j) = u(rng);
      net.layers.push_back(std::move(d));
    }
    return net;
  }

  std::size_t input_width() const { return static_cast<std::size_t>(layers.front().weight.rows()); }
  std::size_t output_width() const { return static_cast<std::size_t>(layers.back().weight.cols()); }

  double slope(double z) const { return z > 0.0 ? 1.0 : leak; }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    require(static_cast<std::size_t>(x.cols()) == input_width(), "Mlp::forward: input width mismatch");
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    Matrix h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Matrix z = h * layers[l].weight;
      z.rowwise() += layers[l].bias;
      if (cache) {
        cache->inputs.push_back(std::move(h));
        cache->pre.push_back(z);
      }
      if (l + 1 < layers.size()) {
        h = z.unaryExpr([this](double v) { return v > 0.0 ? v : leak * v; });
      } else {
        h = std::move(z);
      }
    }
    return h;
  }

  Grad zero_grad() const {
    Grad g;
    for (const auto& d : layers) {
      g.weight.push_back(Matrix::Zero(d.weight.rows(), d.weight.cols()));
      g.bias.push_back(RowVector::Zero(d.bias.size()));
    }
    return g;
  }

  /// Accumulates parameter gradients of sum(dout .* output) into `grad` and
  /// returns the gradient with respect to the input batch.
  Matrix backward(const Cache& cache, const Matrix& dout, Grad& grad) const {
    Matrix delta = dout;
    for (std::size_t l = layers.size(); l-- > 0;) {
      if (l + 1 < layers.size())
        delta = delta.cwiseProduct(cache.pre[l].unaryExpr([this](double z) { return slope(z); }));
      grad.weight[l].noalias() += cache.inputs[l].transpose() * delta;
      grad.bias[l] += delta.colwise().sum();
      delta = (delta * layers[l].weight.transpose()).eval();
    }
    return delta;
  }

  /// Input gradient only (no parameter gradients).
  Matrix input_gradient(const Cache& cache, const Matrix& dout) const {
    Matrix delta = dout;
    for (std::size_t l = layers.size(); l-- > 0;) {
      if (l + 1 < layers.size())
        delta = delta.cwiseProduct(cache.pre[l].unaryExpr([this](double z) { return slope(z); }));
      delta = (delta * layers[l].weight.transpose()).eval();
    }
    return delta;
  }

  WeightSet to_weights(const std::string& prefix) const {
    WeightSet ws;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& w = layers[l].weight;
      NamedTensor tw{prefix + "." + std::to_string(l) + ".weight",
                     {static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols())},
                     {}};
      tw.values.reserve(static_cast<std::size_t>(w.size()));
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) tw.values.push_back(w(i, j));
      const auto& b = layers[l].bias;
      NamedTensor tb{prefix + "." + std::to_string(l) + ".bias", {static_cast<std::size_t>(b.size())},
                     std::vector<double>(b.data(), b.data() + b.size())};
      ws.tensors.push_back(std::move(tw));
      ws.tensors.push_back(std::move(tb));
    }
    return ws;
  }

  static Mlp from_weights(const WeightSet& ws, const std::string& prefix, double leak = 0.2) {
    Mlp net;
    net.leak = leak;
    for (std::size_t l = 0;; ++l) {
      const std::string base = prefix + "." + std::to_string(l);
      if (!ws.has(base + ".weight")) break;
      const auto& tw = ws.at(base + ".weight");
      const auto& tb = ws.at(base + ".bias");
      require(tw.shape.size() == 2 && tb.shape.size() == 1 && tb.shape[0] == tw.shape[1],
              "Mlp::from_weights: malformed layer '" + base + "'");
      const auto rows = static_cast<Eigen::Index>(tw.shape[0]);
      const auto cols = static_cast<Eigen::Index>(tw.shape[1]);
      Dense d{Matrix(rows, cols), RowVector(cols)};
      std::size_t k = 0;
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) d.weight(i, j) = tw.values[k++];
      for (Eigen::Index j = 0; j < cols; ++j) d.bias(j) = tb.values[static_cast<std::size_t>(j)];
      if (!net.layers.empty())
        require(net.layers.back().weight.cols() == rows,
                "Mlp::from_weights: layer widths do not chain at '" + base + "'");
      net.layers.push_back(std::move(d));
    }
    require(!net.layers.empty(), "Mlp::from_weights: no layers under prefix '" + prefix + "'");
    return net;
  }
};

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const Mlp& net, AdamParams params) : params_(params), m_(net.zero_grad()), v_(net.zero_grad()) {}

  void step(Mlp& net, const Mlp::Grad& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(params_.beta1, t_);
    const double c2 = 1.0 - std::pow(params_.beta2, t_);
    const double lr = params_.learning_rate * std::sqrt(c2) / c1;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      update(net.layers[l].weight, g.weight[l], m_.weight[l], v_.weight[l], lr);
      update(net.layers[l].bias, g.bias[l], m_.bias[l], v_.bias[l], lr);
    }
  }

 private:
  template <typename P, typename G>
  void update(P& p, const G& g, G& m, G& v, double lr) const {
    m = params_.beta1 * m + (1.0 - params_.beta1) * g;
    v = params_.beta2 * v + (1.0 - params_.beta2) * g.cwiseProduct(g);
    p.array() -= lr * m.array() / (v.array().sqrt() + params_.epsilon);
  }

  AdamParams params_;
  Mlp::Grad m_;
  Mlp::Grad v_;
  int t_ = 0;
};

/// Row-wise softmax cross-entropy. Returns the mean loss and writes the
/// gradient of that mean with respect to the logits.
inline double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                                    Matrix* dlogits) {
  const Eigen::Index n = logits.rows();
  double loss = 0.0;
  if (dlogits) dlogits->resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    RowVector e = (logits.row(i).array() - mx).exp();
    const double s = e.sum();
    const auto y = labels[static_cast<std::size_t>(i)];
    loss += std::log(s) - (logits(i, y) - mx);
    if (dlogits) {
      dlogits->row(i) = e / s;
      (*dlogits)(i, y) -= 1.0;
    }
  }
  if (dlogits) *dlogits /= static_cast<double>(n);
  return loss / static_cast<double>(n);
}

}  // namespace fligan::nn
