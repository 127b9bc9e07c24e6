#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "beergame/engine.hpp"
#include "beergame/neural.hpp"
#include "beergame/policies.hpp"
#include "beergame/rng.hpp"
#include "json.hpp"

namespace beergame {

class RlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kFeaturesPerPeriod = 4;

struct EnvConfig {
  int agent_position = 1;
  std::vector<StermanParams> teammate_roster{kGeneralParams};
  int horizon_min = 36;
  int horizon_max = 68;
  int eval_horizon = 52;
  int window = 4;
  std::vector<int> action_offsets = default_offsets();
  double obs_scale = 20.0;
  double teammate_sigma = 0.0;
  /// Rule that fills the agent's seat in paired baseline runs.
  StermanParams baseline_params = kGeneralParams;
  DemandSchedule schedule;
  CostParams costs;
  Conventions conventions;

  static std::vector<int> default_offsets();
  void validate() const;
  int observation_size() const { return kFeaturesPerPeriod * window; }
  int action_count() const { return static_cast<int>(action_offsets.size()); }
};

nlohmann::json to_json(const EnvConfig& config);
EnvConfig env_config_from_json(const nlohmann::json& doc);

/// max(0, incoming + offset).
double order_plus(double incoming_order, double offset);

/// Window of the entity's own ledger, oldest period first: net inventory,
/// incoming order, arriving shipment and the previous order placed, each
/// divided by `scale`. Periods before the game start are zero. Requires an
/// open round.
std::vector<double> observe(const GameState& state, int entity, int window, double scale);

enum class EnvMode { train, eval };

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool done = false;
};

/// Single-learner view of a game. Teammates are bootstrapped from the roster
/// and noise streams derive from the reset seed exactly as `run_game` derives
/// them, so an eval-mode episode replays under `run_game` bit for bit.
class BeerGameEnv {
 public:
  explicit BeerGameEnv(EnvConfig config);
  BeerGameEnv(const BeerGameEnv&) = delete;
  BeerGameEnv& operator=(const BeerGameEnv&) = delete;

  std::vector<double> reset(std::uint64_t seed, EnvMode mode = EnvMode::train);
  /// The reward is minus the team cost of the period being decided, over the
  /// reward scale; its episode sum times -scale is the game's team cost.
  StepResult step(int action_index);

  const EnvConfig& config() const { return config_; }
  const GameState& state() const { return state_; }
  /// Mutable access for harnesses that perturb hidden state.
  GameState& state_for_testing() { return state_; }
  int horizon() const { return state_.schedule.horizon; }
  bool done() const { return !active_; }
  const std::array<StermanParams, 3>& teammates() const { return teammates_; }
  double episode_cost() const { return state_.cumulative_cost; }
  double reward_scale() const { return reward_scale_; }
  void set_reward_scale(double r);

 private:
  EnvConfig config_;
  GameState state_;
  std::array<StermanParams, 3> teammates_{};
  std::array<Rng, kEntities> noise_streams_{};
  std::array<DecisionFn, kEntities> deciders_{};
  double reward_scale_ = 200.0;
  bool active_ = false;
};

struct Transition {
  std::vector<double> obs;
  int action_index = 0;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool done = false;
};

/// Fixed-capacity FIFO with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// i = 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const;
  std::vector<const Transition*> sample(std::size_t count, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // oldest slot once full
};

struct TrainConfig {
  long total_env_steps = 50'000;
  int batch_size = 64;
  double gamma = 0.99;
  int target_sync_interval = 1'000;
  double learning_rate = 1e-3;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double temperature_start = 1.0;
  double temperature_end = 0.1;
  double decay_fraction = 0.6;
  double reward_scale = 200.0;
  long warmup_steps = 1'000;
  std::size_t replay_capacity = 50'000;
  std::vector<int> hidden{64, 64, 64};
  std::uint64_t seed = 0;

  void validate() const;
  long decay_steps() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

double epsilon_at(const TrainConfig& config, long step);
double temperature_at(const TrainConfig& config, long step);

/// Greedy with probability 1 - epsilon (ties to the lowest index), otherwise a
/// Boltzmann draw at `temperature`.
int select_action(std::span<const double> q_values, double epsilon, double temperature, Rng& rng);

int greedy_action(std::span<const double> q_values);

/// r + gamma * max_a Q_target(next) for live transitions, r for terminal ones.
std::vector<double> td_targets(const std::vector<const Transition*>& batch,
                               const DuelingNet& target_net, double gamma);

struct CurveRecord {
  long episode = 0;
  int horizon = 0;
  double team_cost = 0.0;
  double epsilon = 0.0;
  double temperature = 0.0;
  long steps = 0;
};

struct TrainResult {
  DuelingNet net;
  AdamState adam;
  std::vector<CurveRecord> curve;
  long env_steps = 0;
  long updates = 0;
};

NetShape net_shape(const EnvConfig& env, const TrainConfig& train);

TrainResult train(const EnvConfig& env_config, const TrainConfig& train_config);

void write_curve_csv(std::ostream& out, const std::vector<CurveRecord>& curve);

/// A greedy trained agent as a seat policy.
PolicyHandle agent_policy(std::shared_ptr<const DuelingNet> net, const EnvConfig& config);

struct EvalResult {
  std::vector<double> costs;
  std::vector<double> baseline_costs;
  double mean_cost = 0.0;
  double stddev_cost = 0.0;
  double mean_baseline = 0.0;
  double reduction_pct() const { return 100.0 * (mean_cost - mean_baseline) / mean_baseline; }
};

/// Greedy episodes at the eval horizon; each is paired with a run that seats
/// `baseline_params` instead and shares the teammates and noise streams.
EvalResult evaluate(const DuelingNet& net, const EnvConfig& config, int n_episodes,
                    std::uint64_t seed, int jobs = 1);

struct AgentBundle {
  DuelingNet net;
  EnvConfig env;
};

void save_agent(const std::string& path, const TrainResult& result, const EnvConfig& env,
                const TrainConfig& train);
AgentBundle load_agent(const std::string& path);

}  // namespace beergame
