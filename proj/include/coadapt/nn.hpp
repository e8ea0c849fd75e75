#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "coadapt/rng.hpp"

namespace coadapt::nn {

enum class Activation { tanh, identity };

struct LayerShape {
  int in = 0;
  int out = 0;
  Activation activation = Activation::identity;
  std::size_t weight_offset = 0;  // column-major out x in block
  std::size_t bias_offset = 0;
};

/// Fully connected network whose parameters live in one flat vector, so
/// optimizers, gradient clipping and checkpoints all work on a single span.
/// Batches are column-major: one sample per column.
class DenseNet {
 public:
  DenseNet() = default;
  // sizes = {input, hidden..., output}; hidden layers use `hidden`, the last
  // layer uses `output`. Parameters start at zero.
  DenseNet(std::span<const int> sizes, Activation hidden, Activation output);

  int input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  int output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }
  const std::vector<LayerShape>& layers() const { return layers_; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  // Sizes as passed to the constructor.
  std::vector<int> sizes() const;

 private:
  std::vector<LayerShape> layers_;
  Eigen::VectorXd params_;
};

/// Orthogonal init (QR of a Gaussian matrix) scaled by `hidden_gain` for
/// hidden layers and `output_gain` for the last layer; zero biases.
void orthogonal_init(DenseNet& net, Rng& rng, double hidden_gain, double output_gain);

struct ForwardCache {
  // activations[0] is the input, activations[l + 1] the output of layer l.
  std::vector<Eigen::MatrixXd> activations;
};

Eigen::MatrixXd forward(const DenseNet& net, const Eigen::MatrixXd& x,
                        ForwardCache* cache = nullptr);
Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x);

struct Gradients {
  Eigen::VectorXd params;  // same layout as DenseNet::params()
  Eigen::MatrixXd input;   // d/dx, one column per sample
};

/// Reverse-mode gradients of sum(y .* upstream) w.r.t. parameters and input.
Gradients backward(const DenseNet& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& upstream);

struct AdamState {
  AdamState() = default;
  explicit AdamState(std::size_t n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam; `params` and `grads` must match the state size.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Diagonal Gaussian with state-independent log standard deviation.
struct GaussianHead {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;
};

void clamp_log_std(Eigen::VectorXd& log_std);

double gaussian_log_prob(const GaussianHead& head, const Eigen::VectorXd& action);

// Column-wise log densities for a batch of means/actions sharing log_std.
Eigen::VectorXd gaussian_log_prob(const Eigen::MatrixXd& means, const Eigen::VectorXd& log_std,
                                  const Eigen::MatrixXd& actions);

double gaussian_entropy(const Eigen::VectorXd& log_std);
inline double gaussian_entropy(const GaussianHead& head) {
  return gaussian_entropy(head.log_std);
}

Eigen::VectorXd gaussian_sample(const GaussianHead& head, Rng& rng);

}  // namespace coadapt::nn
