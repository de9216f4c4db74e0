#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "orca/rng.hpp"

namespace orca {

// Column-major batches: one column per instance.
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

// A named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}
  void zero_grad() { grad.setZero(); }
};

// y = W x (+ b)
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, bool bias = true);

  int in_dim() const { return static_cast<int>(weight_.value.cols()); }
  int out_dim() const { return static_cast<int>(weight_.value.rows()); }

  // Uniform Glorot init; zero_weights leaves the layer at exactly zero.
  void init(Rng& rng, bool zero_weights = false);

  Matrix forward(const Matrix& x) const;
  // Accumulates parameter gradients; returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);

  Param& weight() { return weight_; }
  const Param& weight() const { return weight_; }
  bool has_bias() const { return has_bias_; }
  Param& bias() { return bias_; }
  const Param& bias() const { return bias_; }

  void collect(std::vector<Param*>& out);

 private:
  Param weight_;
  Param bias_;
  bool has_bias_ = true;
};

struct MlpCache {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> activations;  // post-ReLU (or raw for a linear output)
};

// Stack of Linear layers with ReLU between them. The output layer is linear
// unless relu_output is set.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, int in, const std::vector<int>& hidden, int out,
      bool relu_output);

  int in_dim() const { return layers_.front().in_dim(); }
  int out_dim() const { return layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }

  void init(Rng& rng, bool zero_output_layer = false);

  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const;
  Matrix backward(const MlpCache& cache, const Matrix& dy);

  Linear& layer(std::size_t i) { return layers_.at(i); }
  const Linear& layer(std::size_t i) const { return layers_.at(i); }
  void collect(std::vector<Param*>& out);

 private:
  std::vector<Linear> layers_;
  bool relu_output_ = false;
};

// Column-wise softmax, numerically stabilised.
Matrix softmax_columns(const Matrix& logits);
// dL/dlogits given probabilities p and dL/dp, column-wise.
Matrix softmax_backward(const Matrix& p, const Matrix& dp);

double sigmoid(double x);

}  // namespace orca
