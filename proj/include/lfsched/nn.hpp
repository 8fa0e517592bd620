#pragma once

// Fully connected ReLU networks with manual backpropagation and Adam.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "lfsched/random.hpp"

namespace lfsched {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
};

using Parameters = std::vector<DenseLayer>;

inline std::size_t parameter_count(const Parameters& p) {
  std::size_t n = 0;
  for (const auto& l : p) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

inline Parameters zeros_like(const Parameters& p) {
  Parameters z;
  for (const auto& l : p) z.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())});
  return z;
}

// Calls f(double&) for each scalar, weights before biases, layer by layer.
template <typename P, typename F>
void for_each_scalar(P& params, F&& f) {
  for (auto& l : params) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) f(l.weight.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias.data()[i]);
  }
}

inline Mat orthogonal(int rows, int cols, double gain, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = std::max(rows, cols), m = std::min(rows, cols);
  Mat a(n, m);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(n, m);
  const Mat r = qr.matrixQR().topLeftCorner(m, m);
  for (int i = 0; i < m; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  Mat w = rows >= cols ? q : Mat(q.transpose());
  return gain * w;
}

class Mlp {
 public:
  struct Cache {
    std::vector<Mat> inputs;  // input to each layer, column per sample
  };

  Mlp() = default;

  // sizes = {in, hidden..., out}. Hidden layers use `hidden_gain`, the
  // output layer `output_gain`; biases start at zero.
  Mlp(const std::vector<int>& sizes, Rng& rng, double hidden_gain = std::sqrt(2.0), double output_gain = 0.01) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const bool last = i + 2 == sizes.size();
      params_.push_back({orthogonal(sizes[i + 1], sizes[i], last ? output_gain : hidden_gain, rng),
                         Vec::Zero(sizes[i + 1])});
    }
  }

  explicit Mlp(Parameters params) : params_(std::move(params)) {}

  int input_dim() const { return params_.empty() ? 0 : static_cast<int>(params_.front().weight.cols()); }
  int output_dim() const { return params_.empty() ? 0 : static_cast<int>(params_.back().weight.rows()); }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  Vec forward(const Vec& x) const {
    if (x.size() != input_dim()) throw std::invalid_argument("Mlp input dimension mismatch");
    Vec h = x;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Vec z = params_[i].weight * h + params_[i].bias;
      h = i + 1 < params_.size() ? Vec(z.cwiseMax(0.0)) : z;
    }
    return h;
  }

  // X is in x batch.
  Mat forward(const Mat& x, Cache* cache) const {
    if (x.rows() != input_dim()) throw std::invalid_argument("Mlp input dimension mismatch");
    Mat h = x;
    if (cache) cache->inputs.clear();
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (cache) cache->inputs.push_back(h);
      Mat z = (params_[i].weight * h).colwise() + params_[i].bias;
      h = i + 1 < params_.size() ? Mat(z.cwiseMax(0.0)) : z;
    }
    return h;
  }

  // Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
  void backward(const Cache& cache, const Mat& d_out, Parameters& grads) const {
    Mat delta = d_out;
    for (std::size_t i = params_.size(); i-- > 0;) {
      const Mat& in = cache.inputs[i];
      grads[i].weight.noalias() += delta * in.transpose();
      grads[i].bias += delta.rowwise().sum();
      if (i == 0) break;
      Mat back = params_[i].weight.transpose() * delta;
      delta = back.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
    }
  }

 private:
  Parameters params_;
};

// Adaptive moment estimation with the usual defaults.
class Adam {
 public:
  Adam() = default;
  explicit Adam(const Parameters& like, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(zeros_like(like)), v_(zeros_like(like)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Parameters& params, const Parameters& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      update(params[i].weight, grads[i].weight, m_[i].weight, v_[i].weight, lr, c1, c2);
      update(params[i].bias, grads[i].bias, m_[i].bias, v_[i].bias, lr, c1, c2);
    }
  }

  long steps() const { return t_; }

 private:
  template <typename T>
  void update(T& p, const T& g, T& m, T& v, double lr, double c1, double c2) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  Parameters m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace lfsched
