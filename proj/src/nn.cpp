#include "coadapt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/QR>

namespace coadapt::nn {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2 pi)

void check_shapes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}
}  // namespace

DenseNet::DenseNet(std::span<const int> sizes, Activation hidden, Activation output) {
  if (sizes.size() < 2) throw std::invalid_argument("DenseNet needs at least input and output sizes");
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] < 1 || sizes[l + 1] < 1) throw std::invalid_argument("DenseNet layer sizes must be >= 1");
    LayerShape s;
    s.in = sizes[l];
    s.out = sizes[l + 1];
    s.activation = (l + 2 == sizes.size()) ? output : hidden;
    s.weight_offset = offset;
    offset += static_cast<std::size_t>(s.in) * s.out;
    s.bias_offset = offset;
    offset += s.out;
    layers_.push_back(s);
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

Eigen::Map<Eigen::MatrixXd> DenseNet::weight(int layer) {
  const auto& s = layers_.at(layer);
  return {params_.data() + s.weight_offset, s.out, s.in};
}

Eigen::Map<const Eigen::MatrixXd> DenseNet::weight(int layer) const {
  const auto& s = layers_.at(layer);
  return {params_.data() + s.weight_offset, s.out, s.in};
}

Eigen::Map<Eigen::VectorXd> DenseNet::bias(int layer) {
  const auto& s = layers_.at(layer);
  return {params_.data() + s.bias_offset, s.out};
}

Eigen::Map<const Eigen::VectorXd> DenseNet::bias(int layer) const {
  const auto& s = layers_.at(layer);
  return {params_.data() + s.bias_offset, s.out};
}

std::vector<int> DenseNet::sizes() const {
  std::vector<int> out;
  if (layers_.empty()) return out;
  out.push_back(layers_.front().in);
  for (const auto& s : layers_) out.push_back(s.out);
  return out;
}

void orthogonal_init(DenseNet& net, Rng& rng, double hidden_gain, double output_gain) {
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto& s = net.layers()[l];
    const int rows = std::max(s.out, s.in);
    const int cols = std::min(s.out, s.in);
    Eigen::MatrixXd g(rows, cols);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = standard_normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    // Sign fix so the result is uniformly distributed over orthogonal matrices.
    const Eigen::MatrixXd r = qr.matrixQR();
    for (int j = 0; j < cols; ++j) {
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    const double gain = (l + 1 == net.num_layers()) ? output_gain : hidden_gain;
    if (s.out >= s.in) {
      net.weight(l) = gain * q;
    } else {
      net.weight(l) = gain * q.transpose();
    }
    net.bias(l).setZero();
  }
}

Eigen::MatrixXd forward(const DenseNet& net, const Eigen::MatrixXd& x, ForwardCache* cache) {
  if (x.rows() != net.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.rows()) +
                                " rows, network expects " + std::to_string(net.input_dim()));
  }
  if (cache) {
    cache->activations.clear();
    cache->activations.reserve(net.num_layers() + 1);
    cache->activations.push_back(x);
  }
  Eigen::MatrixXd a = x;
  for (int l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd z = net.weight(l) * a;
    z.colwise() += net.bias(l);
    if (net.layers()[l].activation == Activation::tanh) z = z.array().tanh().matrix();
    a = std::move(z);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x) {
  return forward(net, Eigen::MatrixXd(x), nullptr).col(0);
}

Gradients backward(const DenseNet& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& upstream) {
  if (cache.activations.size() != static_cast<std::size_t>(net.num_layers()) + 1) {
    throw std::invalid_argument("backward: cache does not match network depth");
  }
  const Eigen::MatrixXd& out = cache.activations.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw std::invalid_argument("backward: upstream gradient shape mismatch");
  }

  Gradients g;
  g.params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params()));
  Eigen::MatrixXd delta = upstream;
  for (int l = net.num_layers() - 1; l >= 0; --l) {
    const auto& s = net.layers()[l];
    if (s.activation == Activation::tanh) {
      const auto& y = cache.activations[l + 1];
      delta.array() *= (1.0 - y.array().square());
    }
    const auto& a_in = cache.activations[l];
    Eigen::Map<Eigen::MatrixXd>(g.params.data() + s.weight_offset, s.out, s.in).noalias() =
        delta * a_in.transpose();
    Eigen::Map<Eigen::VectorXd>(g.params.data() + s.bias_offset, s.out) = delta.rowwise().sum();
    Eigen::MatrixXd next = net.weight(l).transpose() * delta;
    delta = std::move(next);
  }
  g.input = std::move(delta);
  return g;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr) {
  check_shapes(params.size(), grads.size(), "adam_step");
  check_shapes(params.size(), static_cast<std::size_t>(state.m.size()), "adam_step");
  check_shapes(params.size(), static_cast<std::size_t>(state.v.size()), "adam_step");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

void clamp_log_std(Eigen::VectorXd& log_std) {
  log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

double gaussian_log_prob(const GaussianHead& head, const Eigen::VectorXd& action) {
  check_shapes(static_cast<std::size_t>(action.size()), static_cast<std::size_t>(head.mean.size()),
               "gaussian_log_prob");
  check_shapes(static_cast<std::size_t>(head.log_std.size()),
               static_cast<std::size_t>(head.mean.size()), "gaussian_log_prob");
  double lp = 0.0;
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    const double z = (action[i] - head.mean[i]) * std::exp(-head.log_std[i]);
    lp -= 0.5 * z * z + head.log_std[i] + 0.5 * kLog2Pi;
  }
  return lp;
}

Eigen::VectorXd gaussian_log_prob(const Eigen::MatrixXd& means, const Eigen::VectorXd& log_std,
                                  const Eigen::MatrixXd& actions) {
  if (means.rows() != actions.rows() || means.cols() != actions.cols() ||
      means.rows() != log_std.size()) {
    throw std::invalid_argument("gaussian_log_prob: shape mismatch");
  }
  const Eigen::VectorXd inv_std = (-log_std).array().exp();
  const Eigen::MatrixXd z = (actions - means).array().colwise() * inv_std.array();
  const double norm = log_std.sum() + 0.5 * kLog2Pi * static_cast<double>(log_std.size());
  return (-0.5 * z.array().square().colwise().sum()).matrix().transpose().array() - norm;
}

double gaussian_entropy(const Eigen::VectorXd& log_std) {
  return (0.5 + 0.5 * kLog2Pi) * static_cast<double>(log_std.size()) + log_std.sum();
}

Eigen::VectorXd gaussian_sample(const GaussianHead& head, Rng& rng) {
  Eigen::VectorXd a(head.mean.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a[i] = head.mean[i] + std::exp(head.log_std[i]) * standard_normal(rng);
  }
  return a;
}

}  // namespace coadapt::nn
