#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "beergame/rng.hpp"
#include "json.hpp"

namespace beergame {

class NeuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out

  int inputs() const { return static_cast<int>(weights.cols()); }
  int outputs() const { return static_cast<int>(weights.rows()); }
};

struct NetShape {
  int inputs = 16;
  std::vector<int> hidden{64, 64, 64};
  int actions = 17;

  void validate() const;
  bool operator==(const NetShape&) const = default;
};

/// Trunk, value head and advantage head. Also used as the container for
/// gradients and optimizer moments, which share the same layout.
struct DuelingParams {
  std::vector<DenseLayer> trunk;
  DenseLayer value;
  DenseLayer advantage;

  static DuelingParams zeros(const NetShape& shape);

  template <typename F>
  void for_each_block(F&& fn) {
    for (auto& l : trunk) {
      fn(l.weights);
      fn(l.bias);
    }
    fn(value.weights);
    fn(value.bias);
    fn(advantage.weights);
    fn(advantage.bias);
  }
  template <typename F>
  void for_each_block(F&& fn) const {
    const_cast<DuelingParams*>(this)->for_each_block(
        [&](const auto& block) { fn(block); });
  }

  std::size_t size() const;
  /// Reference to the k-th scalar in a fixed traversal order.
  double& at(std::size_t k);
};

struct ForwardOutput {
  double state_value = 0.0;
  Eigen::VectorXd advantages;
  Eigen::VectorXd q_values;
  Eigen::VectorXd trunk_output;
};

class DuelingNet {
 public:
  DuelingNet() = default;
  /// He-style uniform initialisation: U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
  DuelingNet(const NetShape& shape, Rng& rng);

  const NetShape& shape() const { return shape_; }
  DuelingParams& params() { return params_; }
  const DuelingParams& params() const { return params_; }

  /// Q = V + A - mean(A).
  ForwardOutput forward(std::span<const double> obs) const;
  Eigen::VectorXd q_values(std::span<const double> obs) const { return forward(obs).q_values; }

  /// Column-per-sample batched Q values (actions x batch).
  Eigen::MatrixXd q_batch(const Eigen::MatrixXd& obs) const;

  bool operator==(const DuelingNet& other) const;

 private:
  friend DuelingNet make_net(const NetShape&, DuelingParams);
  NetShape shape_;
  DuelingParams params_;
};

DuelingNet make_net(const NetShape& shape, DuelingParams params);

struct TrainSample {
  std::vector<double> obs;
  int action = 0;
  double target = 0.0;
};

struct LossAndGrads {
  double loss = 0.0;
  DuelingParams grads;
};

inline constexpr double kHuberDelta = 1.0;

/// Batch-mean Huber loss of Q(obs)[action] against target, with gradients
/// for every weight.
LossAndGrads loss_and_grads(const DuelingNet& net, std::span<const TrainSample> batch);

/// Same loss, evaluated only (for finite-difference checks).
double batch_loss(const DuelingNet& net, std::span<const TrainSample> batch);

struct AdamState {
  DuelingParams m;
  DuelingParams v;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_net(const DuelingNet& net, double learning_rate = 1e-3);
};

/// Bias-corrected adaptive-moment update.
void adam_step(DuelingNet& net, const DuelingParams& grads, AdamState& adam);

inline constexpr int kWeightsFormatVersion = 1;

/// Weights document: version tag, shape, per-layer row-major arrays, optimizer
/// state and a caller-supplied descriptor (e.g. the environment config).
nlohmann::json weights_to_json(const DuelingNet& net, const AdamState& adam,
                               const nlohmann::json& descriptor = nlohmann::json::object());

struct LoadedWeights {
  DuelingNet net;
  AdamState adam;
  nlohmann::json descriptor;
};

LoadedWeights weights_from_json(const nlohmann::json& doc);

void save_weights(const std::string& path, const DuelingNet& net, const AdamState& adam,
                  const nlohmann::json& descriptor = nlohmann::json::object());
LoadedWeights load_weights(const std::string& path);

}  // namespace beergame
