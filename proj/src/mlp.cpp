#include "avatarforge/mlp.hpp"

namespace avatarforge {

Mlp::Mlp(const std::vector<int>& dims) {
  if (dims.size() < 2) throw InputError("an MLP needs at least input and output dimensions");
  for (size_t i = 0; i + 1 < dims.size(); ++i)
    layers.push_back({RowMatrix::Zero(dims[i + 1], dims[i]), Eigen::VectorXd::Zero(dims[i + 1])});
}

std::vector<int> Mlp::dims() const {
  std::vector<int> d{input_dim()};
  for (const auto& l : layers) d.push_back(static_cast<int>(l.weight.rows()));
  return d;
}

Eigen::MatrixXd Mlp::forward(Eigen::MatrixXd x, Cache* cache) const {
  if (cache) cache->inputs.resize(layers.size());
  Eigen::MatrixXd h = std::move(x);
  for (size_t i = 0; i < layers.size(); ++i) {
    Eigen::MatrixXd z(layers[i].weight.rows(), h.cols());
    z.noalias() = layers[i].weight * h;
    z.colwise() += layers[i].bias;
    if (i + 1 < layers.size()) z.array() = z.array().max(0.0);
    if (cache) cache->inputs[i] = std::move(h);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dy, Mlp* grad, bool want_input_grad) const {
  Eigen::MatrixXd delta = dy, prev;
  for (size_t i = layers.size(); i-- > 0;) {
    const Eigen::MatrixXd& in = cache.inputs[i];
    if (grad) {
      grad->layers[i].weight.noalias() += delta * in.transpose();
      grad->layers[i].bias.noalias() += delta.rowwise().sum();
    }
    if (i == 0 && !want_input_grad) return {};
    prev.resize(layers[i].weight.cols(), delta.cols());
    prev.noalias() = layers[i].weight.transpose() * delta;
    // ReLU mask: the layer input is the previous layer's activated output.
    if (i > 0) {
      double* p = prev.data();
      const double* a = in.data();
      for (Eigen::Index k = 0; k < prev.size(); ++k)
        if (!(a[k] > 0.0)) p[k] = 0.0;
    }
    delta.swap(prev);
  }
  return delta;
}

}  // namespace avatarforge
