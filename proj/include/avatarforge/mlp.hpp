#pragma once

#include "avatarforge/common.hpp"

#include <vector>

namespace avatarforge {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DenseLayer {
  RowMatrix weight;  // out x in
  Eigen::VectorXd bias;
};

// Fully connected network with ReLU between layers and a linear output.
// Batches are column-per-sample.
class Mlp {
 public:
  Mlp() = default;
  // dims = {in, hidden..., out}; all parameters start at zero.
  explicit Mlp(const std::vector<int>& dims);

  std::vector<DenseLayer> layers;

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
  std::vector<int> dims() const;

  // Inputs of every layer, kept for the backward pass.
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;
  };
  Eigen::MatrixXd forward(Eigen::MatrixXd x, Cache* cache = nullptr) const;
  // Accumulates parameter gradients into `grad` (same shapes, may be null)
  // and returns dL/dx when `want_input_grad` is set.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy, Mlp* grad, bool want_input_grad) const;
};

}  // namespace avatarforge
