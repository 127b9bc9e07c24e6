#include "beergame/rl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

namespace beergame {

using nlohmann::json;

std::vector<int> EnvConfig::default_offsets() {
  std::vector<int> v(17);
  std::iota(v.begin(), v.end(), -8);
  return v;
}

void EnvConfig::validate() const {
  if (agent_position < 0 || agent_position >= kEntities) {
    throw RlError("agent_position must be 0..3, got " + std::to_string(agent_position));
  }
  if (teammate_roster.empty()) throw RlError("teammate roster is empty");
  for (const auto& p : teammate_roster) p.validate();
  baseline_params.validate();
  if (horizon_min < 1 || horizon_min > horizon_max) {
    throw RlError("horizon range must satisfy 1 <= min <= max");
  }
  if (eval_horizon < 1) throw RlError("eval_horizon must be >= 1");
  if (window < 1) throw RlError("window must be >= 1");
  if (action_offsets.empty()) throw RlError("action_offsets is empty");
  if (!std::is_sorted(action_offsets.begin(), action_offsets.end()) ||
      std::adjacent_find(action_offsets.begin(), action_offsets.end()) != action_offsets.end()) {
    throw RlError("action_offsets must be strictly ascending");
  }
  if (!(obs_scale > 0.0) || !std::isfinite(obs_scale)) throw RlError("obs_scale must be > 0");
  if (!(teammate_sigma >= 0.0) || !std::isfinite(teammate_sigma)) {
    throw RlError("teammate_sigma must be >= 0");
  }
  schedule.validate();
  costs.validate();
  conventions.validate();
}

namespace {

json params_json(const StermanParams& p) {
  return json{{"theta", p.theta}, {"alpha", p.alpha}, {"beta", p.beta}, {"s_prime", p.s_prime}};
}

StermanParams params_from(const json& j) {
  return StermanParams{j.at("theta").get<double>(), j.at("alpha").get<double>(),
                       j.at("beta").get<double>(), j.at("s_prime").get<double>()};
}

}  // namespace

json to_json(const EnvConfig& c) {
  json roster = json::array();
  for (const auto& p : c.teammate_roster) roster.push_back(params_json(p));
  return json{
      {"agent_position", c.agent_position},
      {"teammate_roster", roster},
      {"horizon_min", c.horizon_min},
      {"horizon_max", c.horizon_max},
      {"eval_horizon", c.eval_horizon},
      {"window", c.window},
      {"action_offsets", c.action_offsets},
      {"obs_scale", c.obs_scale},
      {"teammate_sigma", c.teammate_sigma},
      {"baseline_params", params_json(c.baseline_params)},
      {"schedule",
       {{"pre_step_demand", c.schedule.pre_step_demand},
        {"post_step_demand", c.schedule.post_step_demand},
        {"step_period", c.schedule.step_period},
        {"horizon", c.schedule.horizon}}},
      {"costs", {{"holding", c.costs.holding}, {"backorder", c.costs.backorder}}},
      {"conventions",
       {{"factory_lead", c.conventions.factory_lead},
        {"customer_order_delay", c.conventions.customer_order_delay},
        {"supply_line_orders", c.conventions.supply_line_orders},
        {"supply_line_backlog", c.conventions.supply_line_backlog},
        {"net_stock", c.conventions.net_stock},
        {"upstream_signal_lag", c.conventions.upstream_signal_lag}}},
  };
}

EnvConfig env_config_from_json(const json& j) {
  try {
    EnvConfig c;
    c.agent_position = j.at("agent_position").get<int>();
    c.teammate_roster.clear();
    for (const auto& p : j.at("teammate_roster")) c.teammate_roster.push_back(params_from(p));
    c.horizon_min = j.at("horizon_min").get<int>();
    c.horizon_max = j.at("horizon_max").get<int>();
    c.eval_horizon = j.at("eval_horizon").get<int>();
    c.window = j.at("window").get<int>();
    c.action_offsets = j.at("action_offsets").get<std::vector<int>>();
    c.obs_scale = j.at("obs_scale").get<double>();
    c.teammate_sigma = j.at("teammate_sigma").get<double>();
    c.baseline_params = params_from(j.at("baseline_params"));
    const auto& s = j.at("schedule");
    c.schedule.pre_step_demand = s.at("pre_step_demand").get<double>();
    c.schedule.post_step_demand = s.at("post_step_demand").get<double>();
    c.schedule.step_period = s.at("step_period").get<int>();
    c.schedule.horizon = s.at("horizon").get<int>();
    c.costs.holding = j.at("costs").at("holding").get<double>();
    c.costs.backorder = j.at("costs").at("backorder").get<double>();
    const auto& v = j.at("conventions");
    c.conventions.factory_lead = v.at("factory_lead").get<int>();
    c.conventions.customer_order_delay = v.at("customer_order_delay").get<int>();
    c.conventions.supply_line_orders = v.at("supply_line_orders").get<bool>();
    c.conventions.supply_line_backlog = v.at("supply_line_backlog").get<bool>();
    c.conventions.net_stock = v.at("net_stock").get<bool>();
    c.conventions.upstream_signal_lag = v.at("upstream_signal_lag").get<bool>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw RlError(std::string("bad environment descriptor: ") + e.what());
  }
}

double order_plus(double incoming_order, double offset) {
  return std::max(0.0, incoming_order + offset);
}

std::vector<double> observe(const GameState& state, int entity, int window, double scale) {
  if (!state.round_open) throw RlError("observation needs an open round");
  if (entity < 0 || entity >= kEntities) throw RlError("entity index out of range");
  const auto e = static_cast<std::size_t>(entity);
  const auto& traj = state.trajectory;
  const int now = static_cast<int>(traj.size()) - 1;
  std::vector<double> obs(static_cast<std::size_t>(kFeaturesPerPeriod * window), 0.0);
  for (int w = 0; w < window; ++w) {
    const int p = now - (window - 1 - w);
    if (p < 0) continue;
    const auto& row = traj[static_cast<std::size_t>(p)].entities[e];
    const double prev_order =
        p == 0 ? state.schedule.pre_step_demand
               : traj[static_cast<std::size_t>(p - 1)].entities[e].order_placed;
    double* f = obs.data() + kFeaturesPerPeriod * w;
    f[0] = (row.on_hand - row.backlog) / scale;
    f[1] = row.incoming_order / scale;
    f[2] = row.received / scale;
    f[3] = prev_order / scale;
  }
  return obs;
}

// ---------------------------------------------------------------------------

BeerGameEnv::BeerGameEnv(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

void BeerGameEnv::set_reward_scale(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw RlError("reward scale must be > 0");
  reward_scale_ = r;
}

std::vector<double> BeerGameEnv::reset(std::uint64_t seed, EnvMode mode) {
  DemandSchedule schedule = config_.schedule;
  if (mode == EnvMode::train) {
    Rng hr = make_rng(seed, "horizon");
    std::uniform_int_distribution<int> pick(config_.horizon_min, config_.horizon_max);
    schedule.horizon = pick(hr);
  } else {
    schedule.horizon = config_.eval_horizon;
  }
  Rng tr = make_rng(seed, "team");
  teammates_ = bootstrap_team(config_.teammate_roster, tr);

  state_ = init_state(schedule, config_.costs, config_.conventions);
  std::size_t k = 0;
  for (int i = 0; i < kEntities; ++i) {
    const auto s = static_cast<std::size_t>(i);
    noise_streams_[s] = make_rng(seed, "noise", {static_cast<std::uint64_t>(i)});
    if (i == config_.agent_position) {
      deciders_[s] = nullptr;
      continue;
    }
    deciders_[s] = make_decider(PolicyHandle::sterman(teammates_[k++], {config_.teammate_sigma, std::nullopt}),
                                &noise_streams_[s]);
  }
  begin_round(state_);
  active_ = true;
  return observe(state_, config_.agent_position, config_.window, config_.obs_scale);
}

StepResult BeerGameEnv::step(int action_index) {
  if (!active_) throw RlError("step called on a finished episode; reset first");
  if (action_index < 0 || action_index >= config_.action_count()) {
    throw RlError("action index " + std::to_string(action_index) + " out of range");
  }
  const int agent = config_.agent_position;
  std::array<double, kEntities> orders{};
  for (int i = 0; i < kEntities; ++i) {
    const auto s = static_cast<std::size_t>(i);
    if (i == agent) {
      orders[s] = order_plus(order_signal(state_, i),
                             config_.action_offsets[static_cast<std::size_t>(action_index)]);
    } else {
      orders[s] = deciders_[s](state_, i);
    }
  }
  const double period_cost = state_.trajectory.back().team_cost();
  place_orders(state_, orders);

  StepResult out;
  out.reward = -period_cost / reward_scale_;
  if (state_.period >= state_.schedule.horizon) {
    active_ = false;
    out.done = true;
    out.observation.assign(static_cast<std::size_t>(config_.observation_size()), 0.0);
  } else {
    begin_round(state_);
    out.observation = observe(state_, agent, config_.window, config_.obs_scale);
  }
  return out;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw RlError("replay capacity must be >= 1");
  items_.reserve(std::min<std::size_t>(capacity, 1u << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw RlError("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  if (items_.empty()) throw RlError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const Transition*> out(count);
  for (auto& p : out) p = &items_[pick(rng)];
  return out;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (total_env_steps < 0) throw RlError("total_env_steps must be >= 0");
  if (batch_size < 1) throw RlError("batch_size must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw RlError("gamma must lie in [0, 1]");
  if (target_sync_interval < 1) throw RlError("target_sync_interval must be >= 1");
  if (!(learning_rate > 0.0)) throw RlError("learning_rate must be > 0");
  if (!(epsilon_start >= epsilon_end && epsilon_end >= 0.0 && epsilon_start <= 1.0)) {
    throw RlError("epsilon schedule must satisfy 1 >= start >= end >= 0");
  }
  if (!(temperature_start >= temperature_end && temperature_end > 0.0)) {
    throw RlError("temperature schedule must satisfy start >= end > 0");
  }
  if (!(decay_fraction > 0.0 && decay_fraction <= 1.0)) {
    throw RlError("decay_fraction must lie in (0, 1]");
  }
  if (!(reward_scale > 0.0)) throw RlError("reward_scale must be > 0");
  if (warmup_steps < 0) throw RlError("warmup_steps must be >= 0");
  if (replay_capacity < 1) throw RlError("replay_capacity must be >= 1");
  if (hidden.empty()) throw RlError("hidden layer list is empty");
  for (int h : hidden)
    if (h < 1) throw RlError("hidden widths must be positive");
}

long TrainConfig::decay_steps() const {
  return std::max(1L, static_cast<long>(std::llround(decay_fraction * static_cast<double>(total_env_steps))));
}

json to_json(const TrainConfig& c) {
  return json{{"total_env_steps", c.total_env_steps},
              {"batch_size", c.batch_size},
              {"gamma", c.gamma},
              {"target_sync_interval", c.target_sync_interval},
              {"learning_rate", c.learning_rate},
              {"epsilon_start", c.epsilon_start},
              {"epsilon_end", c.epsilon_end},
              {"temperature_start", c.temperature_start},
              {"temperature_end", c.temperature_end},
              {"decay_fraction", c.decay_fraction},
              {"reward_scale", c.reward_scale},
              {"warmup_steps", c.warmup_steps},
              {"replay_capacity", c.replay_capacity},
              {"hidden", c.hidden},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  try {
    TrainConfig c;
    c.total_env_steps = j.at("total_env_steps").get<long>();
    c.batch_size = j.at("batch_size").get<int>();
    c.gamma = j.at("gamma").get<double>();
    c.target_sync_interval = j.at("target_sync_interval").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epsilon_start = j.at("epsilon_start").get<double>();
    c.epsilon_end = j.at("epsilon_end").get<double>();
    c.temperature_start = j.at("temperature_start").get<double>();
    c.temperature_end = j.at("temperature_end").get<double>();
    c.decay_fraction = j.at("decay_fraction").get<double>();
    c.reward_scale = j.at("reward_scale").get<double>();
    c.warmup_steps = j.at("warmup_steps").get<long>();
    c.replay_capacity = j.at("replay_capacity").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw RlError(std::string("bad training descriptor: ") + e.what());
  }
}

namespace {

double linear_schedule(double start, double end, long step, long span) {
  if (step >= span) return end;
  const double t = static_cast<double>(step) / static_cast<double>(span);
  return start + (end - start) * t;
}

}  // namespace

double epsilon_at(const TrainConfig& c, long step) {
  return linear_schedule(c.epsilon_start, c.epsilon_end, step, c.decay_steps());
}

double temperature_at(const TrainConfig& c, long step) {
  return linear_schedule(c.temperature_start, c.temperature_end, step, c.decay_steps());
}

int greedy_action(std::span<const double> q) {
  if (q.empty()) throw RlError("no action values");
  int best = 0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!std::isfinite(q[a])) throw RlError("non-finite action value");
    if (q[a] > q[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  }
  return best;
}

int select_action(std::span<const double> q, double epsilon, double temperature, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw RlError("epsilon must lie in [0, 1]");
  if (!(temperature > 0.0)) throw RlError("temperature must be > 0");
  const int greedy = greedy_action(q);
  if (epsilon == 0.0) return greedy;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) >= epsilon) return greedy;

  const double top = q[static_cast<std::size_t>(greedy)];
  std::vector<double> w(q.size());
  for (std::size_t a = 0; a < q.size(); ++a) w[a] = std::exp((q[a] - top) / temperature);
  std::discrete_distribution<int> boltzmann(w.begin(), w.end());
  return boltzmann(rng);
}

std::vector<double> td_targets(const std::vector<const Transition*>& batch,
                               const DuelingNet& target_net, double gamma) {
  std::vector<double> y(batch.size());
  if (batch.empty()) return y;
  const int in = target_net.shape().inputs;
  Eigen::MatrixXd next(in, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t c = 0; c < batch.size(); ++c) {
    const auto& o = batch[c]->next_obs;
    if (static_cast<int>(o.size()) != in) throw RlError("transition observation width mismatch");
    for (int r = 0; r < in; ++r) next(r, static_cast<Eigen::Index>(c)) = o[static_cast<std::size_t>(r)];
  }
  const Eigen::MatrixXd q = target_net.q_batch(next);
  for (std::size_t c = 0; c < batch.size(); ++c) {
    const auto& t = *batch[c];
    y[c] = t.done ? t.reward : t.reward + gamma * q.col(static_cast<Eigen::Index>(c)).maxCoeff();
  }
  return y;
}

NetShape net_shape(const EnvConfig& env, const TrainConfig& train) {
  return NetShape{env.observation_size(), train.hidden, env.action_count()};
}

TrainResult train(const EnvConfig& env_config, const TrainConfig& tc) {
  env_config.validate();
  tc.validate();

  Rng init_rng = make_rng(tc.seed, "net-init");
  Rng explore_rng = make_rng(tc.seed, "explore");
  Rng replay_rng = make_rng(tc.seed, "replay");

  TrainResult out;
  out.net = DuelingNet(net_shape(env_config, tc), init_rng);
  out.adam = AdamState::for_net(out.net, tc.learning_rate);
  DuelingNet target = out.net;

  BeerGameEnv env(env_config);
  env.set_reward_scale(tc.reward_scale);
  ReplayBuffer replay(tc.replay_capacity);
  const long ready = std::max<long>(tc.batch_size, tc.warmup_steps);

  long steps = 0;
  long episode = 0;
  std::vector<TrainSample> samples(static_cast<std::size_t>(tc.batch_size));
  while (steps < tc.total_env_steps) {
    std::vector<double> obs =
        env.reset(derive_seed(tc.seed, "episode", {static_cast<std::uint64_t>(episode)}));
    double eps = epsilon_at(tc, steps);
    double temp = temperature_at(tc, steps);
    bool done = false;
    while (!done && steps < tc.total_env_steps) {
      eps = epsilon_at(tc, steps);
      temp = temperature_at(tc, steps);
      const Eigen::VectorXd q = out.net.q_values(obs);
      const int a = select_action(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())),
                                  eps, temp, explore_rng);
      StepResult r = env.step(a);
      done = r.done;
      replay.push(Transition{obs, a, r.reward, r.observation, r.done});
      obs = std::move(r.observation);
      ++steps;

      if (static_cast<long>(replay.size()) >= ready) {
        const auto batch = replay.sample(static_cast<std::size_t>(tc.batch_size), replay_rng);
        const auto y = td_targets(batch, target, tc.gamma);
        for (std::size_t b = 0; b < batch.size(); ++b) {
          samples[b].obs = batch[b]->obs;
          samples[b].action = batch[b]->action_index;
          samples[b].target = y[b];
        }
        const LossAndGrads lg = loss_and_grads(out.net, samples);
        adam_step(out.net, lg.grads, out.adam);
        ++out.updates;
        if (out.updates % tc.target_sync_interval == 0) target = out.net;
      }
    }
    if (done) {
      out.curve.push_back(CurveRecord{episode, env.horizon(), env.episode_cost(), eps, temp, steps});
    }
    ++episode;
  }
  out.env_steps = steps;
  return out;
}

void write_curve_csv(std::ostream& out, const std::vector<CurveRecord>& curve) {
  out << "episode,horizon,team_cost,epsilon,temperature,steps\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& r : curve) {
    out << r.episode << ',' << r.horizon << ',' << r.team_cost << ',' << r.epsilon << ','
        << r.temperature << ',' << r.steps << '\n';
  }
}

PolicyHandle agent_policy(std::shared_ptr<const DuelingNet> net, const EnvConfig& config) {
  if (!net) throw RlError("agent policy needs a network");
  if (net->shape().inputs != config.observation_size() ||
      net->shape().actions != config.action_count()) {
    throw RlError("network shape does not match the environment descriptor");
  }
  return PolicyHandle::external(
      [net, window = config.window, scale = config.obs_scale,
       offsets = config.action_offsets](const GameState& s, int i) {
        const std::vector<double> obs = observe(s, i, window, scale);
        const Eigen::VectorXd q = net->q_values(obs);
        const int a = greedy_action(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
        return order_plus(order_signal(s, i), offsets[static_cast<std::size_t>(a)]);
      });
}

namespace {

/// Teammate seats for one episode seed, matching BeerGameEnv::reset.
std::array<PolicyHandle, kEntities> episode_team(const EnvConfig& c, std::uint64_t seed,
                                                 const PolicyHandle& agent_seat) {
  Rng tr = make_rng(seed, "team");
  const auto team = bootstrap_team(c.teammate_roster, tr);
  std::array<PolicyHandle, kEntities> seats;
  std::size_t k = 0;
  for (int i = 0; i < kEntities; ++i) {
    seats[static_cast<std::size_t>(i)] =
        i == c.agent_position ? agent_seat : PolicyHandle::sterman(team[k++], {c.teammate_sigma, std::nullopt});
  }
  return seats;
}

}  // namespace

EvalResult evaluate(const DuelingNet& net, const EnvConfig& config, int n_episodes,
                    std::uint64_t seed, int jobs) {
  config.validate();
  if (n_episodes < 1) throw RlError("evaluation needs at least one episode");
  auto shared = std::make_shared<const DuelingNet>(net);
  const PolicyHandle agent = agent_policy(shared, config);
  const PolicyHandle baseline = PolicyHandle::sterman(config.baseline_params);
  DemandSchedule schedule = config.schedule;
  schedule.horizon = config.eval_horizon;

  EvalResult out;
  out.costs.resize(static_cast<std::size_t>(n_episodes));
  out.baseline_costs.resize(static_cast<std::size_t>(n_episodes));
  auto run_episode = [&](int e) {
    const std::uint64_t s = derive_seed(seed, "eval", {static_cast<std::uint64_t>(e)});
    out.costs[static_cast<std::size_t>(e)] =
        run_game(episode_team(config, s, agent), schedule, config.costs, s, config.conventions).total_cost;
    out.baseline_costs[static_cast<std::size_t>(e)] =
        run_game(episode_team(config, s, baseline), schedule, config.costs, s, config.conventions)
            .total_cost;
  };

  const int workers = std::clamp(jobs, 1, n_episodes);
  if (workers == 1) {
    for (int e = 0; e < n_episodes; ++e) run_episode(e);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int e = next++; e < n_episodes; e = next++) run_episode(e);
      });
    }
    for (auto& t : pool) t.join();
  }

  const double n = static_cast<double>(n_episodes);
  out.mean_cost = std::accumulate(out.costs.begin(), out.costs.end(), 0.0) / n;
  out.mean_baseline = std::accumulate(out.baseline_costs.begin(), out.baseline_costs.end(), 0.0) / n;
  double ss = 0.0;
  for (double c : out.costs) ss += (c - out.mean_cost) * (c - out.mean_cost);
  out.stddev_cost = n_episodes > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return out;
}

void save_agent(const std::string& path, const TrainResult& result, const EnvConfig& env,
                const TrainConfig& tc) {
  save_weights(path, result.net, result.adam, json{{"env", to_json(env)}, {"train", to_json(tc)}});
}

AgentBundle load_agent(const std::string& path) {
  LoadedWeights w = load_weights(path);
  if (!w.descriptor.contains("env")) {
    throw RlError("weights file " + path + " carries no environment descriptor");
  }
  AgentBundle b{std::move(w.net), env_config_from_json(w.descriptor.at("env"))};
  if (b.net.shape().inputs != b.env.observation_size() ||
      b.net.shape().actions != b.env.action_count()) {
    throw RlError("weights file " + path + ": network shape disagrees with its descriptor");
  }
  return b;
}

}  // namespace beergame
