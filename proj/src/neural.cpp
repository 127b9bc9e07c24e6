#include "beergame/neural.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <fstream>
#include <random>

namespace beergame {

void NetShape::validate() const {
  if (inputs < 1) throw NeuralError("network needs at least one input");
  if (actions < 1) throw NeuralError("network needs at least one action");
  if (hidden.empty()) throw NeuralError("network needs at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw NeuralError("hidden widths must be positive");
}

namespace {

DenseLayer zero_layer(int in, int out) {
  return DenseLayer{Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)};
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

}  // namespace

DuelingParams DuelingParams::zeros(const NetShape& shape) {
  shape.validate();
  DuelingParams p;
  int in = shape.inputs;
  for (int h : shape.hidden) {
    p.trunk.push_back(zero_layer(in, h));
    in = h;
  }
  p.value = zero_layer(in, 1);
  p.advantage = zero_layer(in, shape.actions);
  return p;
}

std::size_t DuelingParams::size() const {
  std::size_t n = 0;
  for_each_block([&](const auto& b) { n += static_cast<std::size_t>(b.size()); });
  return n;
}

double& DuelingParams::at(std::size_t k) {
  double* found = nullptr;
  for_each_block([&](auto& b) {
    if (found) return;
    if (k < static_cast<std::size_t>(b.size())) {
      found = b.data() + k;
    } else {
      k -= static_cast<std::size_t>(b.size());
    }
  });
  if (!found) throw NeuralError("parameter index out of range");
  return *found;
}

DuelingNet::DuelingNet(const NetShape& shape, Rng& rng)
    : shape_(shape), params_(DuelingParams::zeros(shape)) {
  params_.for_each_block([&](auto& block) {
    if constexpr (std::is_same_v<std::decay_t<decltype(block)>, Eigen::MatrixXd>) {
      const double limit = std::sqrt(6.0 / static_cast<double>(block.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index j = 0; j < block.cols(); ++j)
        for (Eigen::Index i = 0; i < block.rows(); ++i) block(i, j) = u(rng);
    }
  });
}

DuelingNet make_net(const NetShape& shape, DuelingParams params) {
  shape.validate();
  const auto ref = DuelingParams::zeros(shape);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> want, got;
  ref.for_each_block([&](const auto& b) { want.emplace_back(b.rows(), b.cols()); });
  params.for_each_block([&](const auto& b) { got.emplace_back(b.rows(), b.cols()); });
  if (want != got) throw NeuralError("parameter shapes do not match the network shape");
  DuelingNet net;
  net.shape_ = shape;
  net.params_ = std::move(params);
  return net;
}

ForwardOutput DuelingNet::forward(std::span<const double> obs) const {
  if (static_cast<int>(obs.size()) != shape_.inputs) {
    throw NeuralError("observation length " + std::to_string(obs.size()) +
                      " does not match network input width " + std::to_string(shape_.inputs));
  }
  Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
  for (const auto& l : params_.trunk) h = ((l.weights * h) + l.bias).cwiseMax(0.0);
  ForwardOutput out;
  out.state_value = (params_.value.weights * h + params_.value.bias)(0);
  out.advantages = params_.advantage.weights * h + params_.advantage.bias;
  out.q_values = out.advantages.array() - out.advantages.mean() + out.state_value;
  out.trunk_output = std::move(h);
  return out;
}

Eigen::MatrixXd DuelingNet::q_batch(const Eigen::MatrixXd& obs) const {
  if (obs.rows() != shape_.inputs) throw NeuralError("batch observation width mismatch");
  Eigen::MatrixXd h = obs;
  for (const auto& l : params_.trunk) h = relu((l.weights * h).colwise() + l.bias);
  const Eigen::RowVectorXd v = (params_.value.weights * h).array() + params_.value.bias(0);
  Eigen::MatrixXd a = (params_.advantage.weights * h).colwise() + params_.advantage.bias;
  const Eigen::RowVectorXd mean = a.colwise().mean();
  a.rowwise() -= mean;
  a.rowwise() += v;
  return a;
}

bool DuelingNet::operator==(const DuelingNet& other) const {
  if (!(shape_ == other.shape_)) return false;
  std::vector<const double*> mine, theirs;
  std::vector<Eigen::Index> sizes;
  params_.for_each_block([&](const auto& b) {
    mine.push_back(b.data());
    sizes.push_back(b.size());
  });
  other.params_.for_each_block([&](const auto& b) { theirs.push_back(b.data()); });
  for (std::size_t k = 0; k < mine.size(); ++k)
    for (Eigen::Index i = 0; i < sizes[k]; ++i)
      if (mine[k][i] != theirs[k][i]) return false;
  return true;
}

namespace {

Eigen::MatrixXd stack_obs(const DuelingNet& net, std::span<const TrainSample> batch) {
  const int in = net.shape().inputs;
  Eigen::MatrixXd x(in, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t c = 0; c < batch.size(); ++c) {
    if (static_cast<int>(batch[c].obs.size()) != in) throw NeuralError("sample observation width mismatch");
    if (batch[c].action < 0 || batch[c].action >= net.shape().actions) {
      throw NeuralError("sample action out of range");
    }
    if (!std::isfinite(batch[c].target)) throw NeuralError("non-finite TD target");
    for (int r = 0; r < in; ++r) x(r, static_cast<Eigen::Index>(c)) = batch[c].obs[static_cast<std::size_t>(r)];
  }
  return x;
}

double huber(double r) {
  const double a = std::abs(r);
  return a <= kHuberDelta ? 0.5 * r * r : kHuberDelta * (a - 0.5 * kHuberDelta);
}

}  // namespace

double batch_loss(const DuelingNet& net, std::span<const TrainSample> batch) {
  if (batch.empty()) throw NeuralError("empty batch");
  const Eigen::MatrixXd q = net.q_batch(stack_obs(net, batch));
  double loss = 0.0;
  for (std::size_t c = 0; c < batch.size(); ++c) {
    loss += huber(q(batch[c].action, static_cast<Eigen::Index>(c)) - batch[c].target);
  }
  return loss / static_cast<double>(batch.size());
}

LossAndGrads loss_and_grads(const DuelingNet& net, std::span<const TrainSample> batch) {
  if (batch.empty()) throw NeuralError("empty batch");
  const auto& p = net.params();
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);

  // forward, keeping activations
  std::vector<Eigen::MatrixXd> acts{stack_obs(net, batch)};
  for (const auto& l : p.trunk) acts.push_back(relu((l.weights * acts.back()).colwise() + l.bias));
  const Eigen::MatrixXd& h = acts.back();
  const Eigen::RowVectorXd v = (p.value.weights * h).array() + p.value.bias(0);
  Eigen::MatrixXd a = (p.advantage.weights * h).colwise() + p.advantage.bias;
  const Eigen::RowVectorXd mean = a.colwise().mean();

  LossAndGrads out{0.0, DuelingParams::zeros(net.shape())};
  const Eigen::Index k = a.rows();
  Eigen::RowVectorXd dv(n);
  Eigen::MatrixXd da = Eigen::MatrixXd::Zero(k, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const int act = batch[static_cast<std::size_t>(c)].action;
    const double q = v(c) + a(act, c) - mean(c);
    const double r = q - batch[static_cast<std::size_t>(c)].target;
    out.loss += huber(r) * inv_n;
    const double dq = std::clamp(r, -kHuberDelta, kHuberDelta) * inv_n;
    dv(c) = dq;
    da.col(c).setConstant(-dq / static_cast<double>(k));
    da(act, c) += dq;
  }

  auto& g = out.grads;
  g.value.weights = dv * h.transpose();
  g.value.bias(0) = dv.sum();
  g.advantage.weights = da * h.transpose();
  g.advantage.bias = da.rowwise().sum();

  Eigen::MatrixXd dh = p.value.weights.transpose() * dv + p.advantage.weights.transpose() * da;
  for (std::size_t li = p.trunk.size(); li-- > 0;) {
    const Eigen::MatrixXd dz = dh.cwiseProduct((acts[li + 1].array() > 0.0).cast<double>().matrix());
    g.trunk[li].weights = dz * acts[li].transpose();
    g.trunk[li].bias = dz.rowwise().sum();
    if (li > 0) dh = p.trunk[li].weights.transpose() * dz;
  }
  return out;
}

AdamState AdamState::for_net(const DuelingNet& net, double learning_rate) {
  AdamState s;
  s.m = DuelingParams::zeros(net.shape());
  s.v = DuelingParams::zeros(net.shape());
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(DuelingNet& net, const DuelingParams& grads, AdamState& adam) {
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  std::vector<double*> w, m, v;
  std::vector<const double*> g;
  std::vector<Eigen::Index> sizes;
  net.params().for_each_block([&](auto& b) {
    w.push_back(b.data());
    sizes.push_back(b.size());
  });
  adam.m.for_each_block([&](auto& b) { m.push_back(b.data()); });
  adam.v.for_each_block([&](auto& b) { v.push_back(b.data()); });
  grads.for_each_block([&](const auto& b) { g.push_back(b.data()); });
  if (m.size() != w.size() || v.size() != w.size() || g.size() != w.size()) {
    throw NeuralError("optimizer state does not match network layout");
  }
  for (std::size_t k = 0; k < w.size(); ++k) {
    for (Eigen::Index i = 0; i < sizes[k]; ++i) {
      m[k][i] = adam.beta1 * m[k][i] + (1.0 - adam.beta1) * g[k][i];
      v[k][i] = adam.beta2 * v[k][i] + (1.0 - adam.beta2) * g[k][i] * g[k][i];
      const double mhat = m[k][i] / c1;
      const double vhat = v[k][i] / c2;
      w[k][i] -= adam.learning_rate * mhat / (std::sqrt(vhat) + adam.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// persistence

namespace {

using nlohmann::json;

json block_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd block_from(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw NeuralError("corrupt weights: block '" + what + "' is malformed");
  }
  if (j.at("rows").get<Eigen::Index>() != rows || j.at("cols").get<Eigen::Index>() != cols) {
    throw NeuralError("corrupt weights: block '" + what + "' has shape " +
                      std::to_string(j.at("rows").get<long>()) + "x" +
                      std::to_string(j.at("cols").get<long>()) + ", expected " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
  const auto& data = j.at("data");
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw NeuralError("corrupt weights: block '" + what + "' has the wrong element count");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& e = data[k++];
      if (!e.is_number()) throw NeuralError("corrupt weights: non-numeric entry in '" + what + "'");
      m(r, c) = e.get<double>();
    }
  return m;
}

json params_json(const DuelingParams& p) {
  json arr = json::array();
  int idx = 0;
  for (const auto& l : p.trunk) {
    arr.push_back({{"name", "trunk" + std::to_string(idx++)},
                   {"weights", block_json(l.weights)},
                   {"bias", block_json(l.bias)}});
  }
  arr.push_back({{"name", "value"}, {"weights", block_json(p.value.weights)}, {"bias", block_json(p.value.bias)}});
  arr.push_back({{"name", "advantage"},
                 {"weights", block_json(p.advantage.weights)},
                 {"bias", block_json(p.advantage.bias)}});
  return arr;
}

DuelingParams params_from(const json& arr, const NetShape& shape, const std::string& what) {
  DuelingParams p = DuelingParams::zeros(shape);
  const std::size_t expected = p.trunk.size() + 2;
  if (!arr.is_array() || arr.size() != expected) {
    throw NeuralError("corrupt weights: '" + what + "' should hold " + std::to_string(expected) + " layers");
  }
  auto fill = [&](DenseLayer& l, const json& j) {
    const std::string name = what + "." + j.value("name", std::string("?"));
    l.weights = block_from(j.at("weights"), l.weights.rows(), l.weights.cols(), name + ".weights");
    Eigen::MatrixXd b = block_from(j.at("bias"), l.bias.rows(), 1, name + ".bias");
    l.bias = b.col(0);
  };
  for (std::size_t i = 0; i < p.trunk.size(); ++i) fill(p.trunk[i], arr[i]);
  fill(p.value, arr[p.trunk.size()]);
  fill(p.advantage, arr[p.trunk.size() + 1]);
  return p;
}

}  // namespace

nlohmann::json weights_to_json(const DuelingNet& net, const AdamState& adam, const nlohmann::json& descriptor) {
  const auto& s = net.shape();
  return json{
      {"format", "beergame-dueling-net"},
      {"version", kWeightsFormatVersion},
      {"shape", {{"inputs", s.inputs}, {"hidden", s.hidden}, {"actions", s.actions}}},
      {"layers", params_json(net.params())},
      {"adam",
       {{"step", adam.step},
        {"learning_rate", adam.learning_rate},
        {"beta1", adam.beta1},
        {"beta2", adam.beta2},
        {"epsilon", adam.epsilon},
        {"m", params_json(adam.m)},
        {"v", params_json(adam.v)}}},
      {"descriptor", descriptor},
  };
}

LoadedWeights weights_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object() || doc.value("format", std::string()) != "beergame-dueling-net") {
      throw NeuralError("not a dueling-net weights document");
    }
    const int version = doc.at("version").get<int>();
    if (version != kWeightsFormatVersion) {
      throw NeuralError("unsupported weights format version " + std::to_string(version) +
                        " (expected " + std::to_string(kWeightsFormatVersion) + ")");
    }
    NetShape shape;
    const auto& js = doc.at("shape");
    shape.inputs = js.at("inputs").get<int>();
    shape.hidden = js.at("hidden").get<std::vector<int>>();
    shape.actions = js.at("actions").get<int>();
    shape.validate();

    LoadedWeights out;
    out.net = make_net(shape, params_from(doc.at("layers"), shape, "layers"));
    const auto& ja = doc.at("adam");
    out.adam.step = ja.at("step").get<std::int64_t>();
    out.adam.learning_rate = ja.at("learning_rate").get<double>();
    out.adam.beta1 = ja.at("beta1").get<double>();
    out.adam.beta2 = ja.at("beta2").get<double>();
    out.adam.epsilon = ja.at("epsilon").get<double>();
    out.adam.m = params_from(ja.at("m"), shape, "adam.m");
    out.adam.v = params_from(ja.at("v"), shape, "adam.v");
    if (out.adam.step < 0) throw NeuralError("corrupt weights: negative optimizer step");
    out.descriptor = doc.value("descriptor", json::object());
    return out;
  } catch (const json::exception& e) {
    throw NeuralError(std::string("corrupt weights: ") + e.what());
  }
}

void save_weights(const std::string& path, const DuelingNet& net, const AdamState& adam,
                  const nlohmann::json& descriptor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NeuralError("cannot write weights file: " + path);
  out << weights_to_json(net, adam, descriptor).dump() << '\n';
  if (!out) throw NeuralError("failed writing weights file: " + path);
}

LoadedWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NeuralError("cannot open weights file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw NeuralError("corrupt weights file " + path + ": " + e.what());
  }
  return weights_from_json(doc);
}

}  // namespace beergame
