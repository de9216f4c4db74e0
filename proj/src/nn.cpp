#include "orca/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace orca {

Linear::Linear(const std::string& name, int in, int out, bool bias)
    : weight_(name + ".weight", out, in), has_bias_(bias) {
  if (in < 1 || out < 1) throw std::invalid_argument("layer '" + name + "' has zero width");
  if (has_bias_) bias_ = Param(name + ".bias", out, 1);
}

void Linear::init(Rng& rng, bool zero_weights) {
  if (has_bias_) bias_.value.setZero();
  if (zero_weights) {
    weight_.value.setZero();
    return;
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index c = 0; c < weight_.value.cols(); ++c) {
    for (Eigen::Index r = 0; r < weight_.value.rows(); ++r) weight_.value(r, c) = dist(rng);
  }
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = weight_.value * x;
  if (has_bias_) y.colwise() += bias_.value.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  weight_.grad.noalias() += dy * x.transpose();
  if (has_bias_) bias_.grad.col(0) += dy.rowwise().sum();
  return weight_.value.transpose() * dy;
}

void Linear::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

Mlp::Mlp(const std::string& name, int in, const std::vector<int>& hidden, int out,
         bool relu_output)
    : relu_output_(relu_output) {
  int prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers_.emplace_back(name + ".layer" + std::to_string(i), prev, hidden[i]);
    prev = hidden[i];
  }
  layers_.emplace_back(name + ".layer" + std::to_string(hidden.size()), prev, out);
}

void Mlp::init(Rng& rng, bool zero_output_layer) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].init(rng, zero_output_layer && i + 1 == layers_.size());
  }
}

Matrix Mlp::forward(const Matrix& x, MlpCache* cache) const {
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->activations.clear();
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (cache != nullptr) cache->inputs.push_back(h);
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size() || relu_output_) h = h.cwiseMax(0.0);
    if (cache != nullptr) cache->activations.push_back(h);
  }
  return h;
}

Matrix Mlp::backward(const MlpCache& cache, const Matrix& dy) {
  Matrix d = dy;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    if (k + 1 < layers_.size() || relu_output_) {
      d = d.cwiseProduct((cache.activations[k].array() > 0.0).cast<double>().matrix());
    }
    d = layers_[k].backward(cache.inputs[k], d);
  }
  return d;
}

void Mlp::collect(std::vector<Param*>& out) {
  for (auto& l : layers_) l.collect(out);
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    const double m = p.col(c).maxCoeff();
    p.col(c) = (p.col(c).array() - m).exp();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

Matrix softmax_backward(const Matrix& p, const Matrix& dp) {
  const RowVector dot = p.cwiseProduct(dp).colwise().sum();
  return p.cwiseProduct(dp - dot.replicate(p.rows(), 1));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace orca
