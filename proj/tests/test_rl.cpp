#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "beergame/rl.hpp"

using namespace beergame;

namespace {

constexpr int kZeroOffset = 8;  // index of offset 0 in the default action set

EnvConfig pass_through_env(double demand = 4.0) {
  EnvConfig c;
  c.teammate_roster = {kPassThroughParams};
  c.schedule = DemandSchedule{demand, demand, 1, 52};
  return c;
}

/// Network whose greedy action is always `index`.
DuelingNet constant_choice(const EnvConfig& env, int index) {
  const NetShape shape{env.observation_size(), {4}, env.action_count()};
  DuelingParams p = DuelingParams::zeros(shape);
  p.advantage.bias[index] = 1.0;
  return make_net(shape, p);
}

Transition make_transition(double reward, bool done, std::vector<double> next) {
  Transition t;
  t.obs = next;
  t.reward = reward;
  t.done = done;
  t.next_obs = std::move(next);
  return t;
}

}  // namespace

TEST(OrderPlus, ClipsAtZero) {
  EXPECT_EQ(order_plus(8, 3), 11.0);
  EXPECT_EQ(order_plus(8, -3), 5.0);
  EXPECT_EQ(order_plus(2, -5), 0.0);
  EXPECT_EQ(order_plus(0, 0), 0.0);
}

TEST(EnvConfig, DefaultsAndValidation) {
  EnvConfig c;
  EXPECT_EQ(c.observation_size(), 16);
  EXPECT_EQ(c.action_count(), 17);
  EXPECT_EQ(c.action_offsets[kZeroOffset], 0);
  c.horizon_min = 70;
  EXPECT_THROW(c.validate(), RlError);
  EnvConfig d;
  d.agent_position = 4;
  EXPECT_THROW(d.validate(), RlError);
  EnvConfig e;
  e.teammate_roster.clear();
  EXPECT_THROW(e.validate(), std::exception);
}

TEST(EnvConfig, JsonRoundTrip) {
  EnvConfig c = pass_through_env(6.0);
  c.agent_position = 3;
  c.teammate_sigma = 2.5;
  c.conventions.factory_lead = 3;
  const EnvConfig back = env_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Observe, LengthAndZeroPaddingAtStart) {
  BeerGameEnv env(EnvConfig{});
  const auto obs = env.reset(1, EnvMode::eval);
  ASSERT_EQ(obs.size(), 16u);
  // only period 0 exists: three padded periods then the live one
  for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(obs[k], 0.0);
  EXPECT_DOUBLE_EQ(obs[12], 12.0 / 20.0);  // net inventory
  EXPECT_DOUBLE_EQ(obs[13], 4.0 / 20.0);   // incoming order
  EXPECT_DOUBLE_EQ(obs[14], 4.0 / 20.0);   // arriving shipment
  EXPECT_DOUBLE_EQ(obs[15], 4.0 / 20.0);   // previous order
}

TEST(Observe, SeesOnlyTheAgentsOwnLedger) {
  EnvConfig c;
  c.agent_position = 1;
  BeerGameEnv env(c);
  env.reset(3, EnvMode::eval);
  for (int t = 0; t < 6; ++t) env.step(kZeroOffset + (t % 3) - 1);
  const auto before = observe(env.state(), 1, c.window, c.obs_scale);
  GameState& s = env.state_for_testing();
  for (int i : {0, 2, 3}) {
    s.entities[static_cast<std::size_t>(i)].on_hand += 99.0;
    s.entities[static_cast<std::size_t>(i)].backlog += 7.0;
    for (auto& row : s.trajectory) {
      row.entities[static_cast<std::size_t>(i)].on_hand = -1234.0;
      row.entities[static_cast<std::size_t>(i)].order_placed = 555.0;
    }
  }
  EXPECT_EQ(observe(env.state(), 1, c.window, c.obs_scale), before);
}

TEST(Env, ResetIsDeterministicAndHorizonsStayInBounds) {
  EnvConfig c;
  c.teammate_roster = {kGeneralParams, kPassThroughParams, {0.5, 0.5, 0.5, 30}};
  BeerGameEnv a(c), b(c);
  EXPECT_EQ(a.reset(77), b.reset(77));
  EXPECT_EQ(a.horizon(), b.horizon());
  EXPECT_EQ(a.teammates(), b.teammates());

  std::set<int> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    a.reset(s);
    EXPECT_GE(a.horizon(), 36);
    EXPECT_LE(a.horizon(), 68);
    seen.insert(a.horizon());
  }
  EXPECT_EQ(seen.size(), 33u);
  a.reset(5, EnvMode::eval);
  EXPECT_EQ(a.horizon(), 52);
}

TEST(Env, EquilibriumRewardAndEpisodeAccounting) {
  BeerGameEnv env(pass_through_env());
  env.reset(0, EnvMode::eval);
  double sum = 0.0;
  int steps = 0;
  while (!env.done()) {
    const StepResult r = env.step(kZeroOffset);
    EXPECT_NEAR(r.reward, -0.12, 1e-12);
    sum += r.reward;
    ++steps;
  }
  EXPECT_EQ(steps, 52);
  EXPECT_NEAR(-sum * env.reward_scale(), env.episode_cost(), 1e-9);
  EXPECT_DOUBLE_EQ(env.episode_cost(), 1248.0);
  EXPECT_THROW(env.step(kZeroOffset), RlError);
}

TEST(Env, RewardSumIsTeamCostUnderNoise) {
  EnvConfig c;
  c.teammate_sigma = 3.0;
  BeerGameEnv env(c);
  env.reset(12);
  Rng rng(1);
  std::uniform_int_distribution<int> a(0, c.action_count() - 1);
  double sum = 0.0;
  StepResult last;
  while (!env.done()) {
    last = env.step(a(rng));
    sum += last.reward;
  }
  EXPECT_NEAR(-sum * env.reward_scale(), team_cost(env.state().trajectory), 1e-9);
  EXPECT_EQ(last.observation, std::vector<double>(16, 0.0));
  EXPECT_THROW(env.step(-1), RlError);
}

TEST(Env, EvalEpisodeReplaysUnderRunGame) {
  EnvConfig c;
  c.agent_position = 2;
  c.teammate_roster = {kGeneralParams, {0.2, 0.6, 0.1, 25}};
  c.teammate_sigma = 2.0;
  BeerGameEnv env(c);
  env.reset(99, EnvMode::eval);
  while (!env.done()) env.step(kZeroOffset + 2);

  std::array<PolicyHandle, kEntities> seats;
  std::size_t k = 0;
  for (int i = 0; i < kEntities; ++i) {
    seats[static_cast<std::size_t>(i)] =
        i == c.agent_position
            ? PolicyHandle::external([](const GameState& s, int e) { return order_plus(order_signal(s, e), 2); })
            : PolicyHandle::sterman(env.teammates()[k++], {c.teammate_sigma, std::nullopt});
  }
  DemandSchedule d = c.schedule;
  d.horizon = c.eval_horizon;
  const GameResult g = run_game(seats, d, c.costs, 99, c.conventions);
  EXPECT_EQ(g.trajectory, env.state().trajectory);
}

TEST(Actions, GreedyTiesAndExploration) {
  const std::vector<double> q{1.0, 3.0, 3.0, -2.0};
  EXPECT_EQ(greedy_action(q), 1);
  Rng rng(4);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(select_action(q, 0.0, 1.0, rng), 1);
  const std::vector<double> bad{1.0, std::nan("")};
  EXPECT_THROW(greedy_action(bad), RlError);

  // epsilon 1 with a tiny temperature is a near-greedy Boltzmann draw
  int hits = 0;
  const std::vector<double> sharp{0.0, 10.0, 0.0};
  for (int k = 0; k < 500; ++k) hits += select_action(sharp, 1.0, 0.01, rng) == 1;
  EXPECT_EQ(hits, 500);

  // huge Q values do not overflow the softmax
  const std::vector<double> big{1e308, 1e308};
  const int a = select_action(big, 1.0, 1.0, rng);
  EXPECT_TRUE(a == 0 || a == 1);
}

TEST(Actions, BoltzmannFollowsSoftmax) {
  const std::vector<double> q{0.0, std::log(3.0)};
  Rng rng(8);
  int ones = 0;
  const int n = 40000;
  for (int k = 0; k < n; ++k) ones += select_action(q, 1.0, 1.0, rng);
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.75, 0.01);
}

TEST(TdTargets, LiveTerminalAndZeroGamma) {
  const EnvConfig env = pass_through_env();
  const DuelingNet target = constant_choice(env, 3);  // max Q = 1 - 1/17
  const double max_q = 1.0 - 1.0 / 17.0;
  const Transition live = make_transition(-0.1, false, std::vector<double>(16, 0.0));
  const Transition term = make_transition(-0.1, true, std::vector<double>(16, 0.0));
  const auto y = td_targets({&live, &term}, target, 0.99);
  EXPECT_NEAR(y[0], -0.1 + 0.99 * max_q, 1e-12);
  EXPECT_DOUBLE_EQ(y[1], -0.1);
  EXPECT_DOUBLE_EQ(td_targets({&live}, target, 0.0)[0], -0.1);
}

TEST(TdTargets, HandValue) {
  // zero weights with a value bias of 0.2: every next-state Q is 0.2
  const NetShape shape{16, {4}, 17};
  DuelingParams p = DuelingParams::zeros(shape);
  p.value.bias[0] = 0.2;
  const DuelingNet target = make_net(shape, p);
  const Transition t = make_transition(-0.1, false, std::vector<double>(16, 1.0));
  EXPECT_NEAR(td_targets({&t}, target, 0.99)[0], 0.098, 1e-12);
}

TEST(Replay, FifoEvictionAndSampling) {
  ReplayBuffer buf(3);
  for (int k = 0; k < 5; ++k) {
    Transition t;
    t.action_index = k;
    buf.push(t);
  }
  EXPECT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.at(0).action_index, 2);
  EXPECT_EQ(buf.at(1).action_index, 3);
  EXPECT_EQ(buf.at(2).action_index, 4);
  EXPECT_THROW(buf.at(3), RlError);
  Rng rng(1);
  for (const Transition* t : buf.sample(50, rng)) EXPECT_GE(t->action_index, 2);
  EXPECT_THROW(ReplayBuffer(0), RlError);
  ReplayBuffer empty(2);
  EXPECT_THROW(empty.sample(1, rng), RlError);
}

TEST(Schedules, LinearDecayReachesFloorsExactly) {
  TrainConfig c;
  c.total_env_steps = 1000;
  EXPECT_EQ(c.decay_steps(), 600);
  EXPECT_DOUBLE_EQ(epsilon_at(c, 0), 1.0);
  EXPECT_DOUBLE_EQ(temperature_at(c, 0), 1.0);
  EXPECT_DOUBLE_EQ(epsilon_at(c, 300), 0.525);
  EXPECT_DOUBLE_EQ(epsilon_at(c, 600), 0.05);
  EXPECT_DOUBLE_EQ(temperature_at(c, 600), 0.1);
  EXPECT_DOUBLE_EQ(epsilon_at(c, 999), 0.05);
  for (long s = 1; s < 1000; ++s) {
    EXPECT_LE(epsilon_at(c, s), epsilon_at(c, s - 1));
    EXPECT_LE(temperature_at(c, s), temperature_at(c, s - 1));
  }
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c;
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), RlError);
  TrainConfig d;
  d.total_env_steps = 1234;
  d.hidden = {32, 16};
  d.seed = 42;
  EXPECT_EQ(to_json(train_config_from_json(to_json(d))), to_json(d));
}

TEST(Train, ZeroStepsGivesUntrainedNetAndEmptyCurve) {
  TrainConfig c;
  c.total_env_steps = 0;
  c.hidden = {8};
  const TrainResult r = train(EnvConfig{}, c);
  EXPECT_TRUE(r.curve.empty());
  EXPECT_EQ(r.updates, 0);
  Rng init = make_rng(c.seed, "net-init");
  EXPECT_TRUE(r.net == DuelingNet(net_shape(EnvConfig{}, c), init));
}

TEST(Train, ShortRunIsReproducibleAndSyncsTarget) {
  TrainConfig c;
  c.total_env_steps = 600;
  c.warmup_steps = 100;
  c.batch_size = 16;
  c.target_sync_interval = 50;
  c.hidden = {16, 16};
  c.seed = 3;
  const TrainResult a = train(EnvConfig{}, c);
  const TrainResult b = train(EnvConfig{}, c);
  EXPECT_TRUE(a.net == b.net);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t k = 0; k < a.curve.size(); ++k) EXPECT_EQ(a.curve[k].team_cost, b.curve[k].team_cost);
  EXPECT_EQ(a.env_steps, 600);
  EXPECT_EQ(a.updates, 501);  // one update per step from the warmup step on
  long steps = 0;
  for (const auto& r : a.curve) {
    EXPECT_GE(r.horizon, 36);
    EXPECT_LE(r.horizon, 68);
    steps += r.horizon;
  }
  EXPECT_LE(steps, 600);

  std::ostringstream os;
  write_curve_csv(os, a.curve);
  EXPECT_EQ(os.str().rfind("episode,horizon,team_cost,epsilon,temperature,steps\n", 0), 0u);
}

TEST(Evaluate, ZeroOffsetAgentMatchesPassThroughBaseline) {
  EnvConfig c;
  c.teammate_roster = {kGeneralParams, {0.9, 0.1, 0.4, 20}};
  c.teammate_sigma = 1.5;
  c.baseline_params = kPassThroughParams;
  const DuelingNet net = constant_choice(c, kZeroOffset);
  const EvalResult e = evaluate(net, c, 12, 4, 3);
  EXPECT_EQ(e.costs, e.baseline_costs);
  EXPECT_DOUBLE_EQ(e.reduction_pct(), 0.0);
  const EvalResult serial = evaluate(net, c, 12, 4, 1);
  EXPECT_EQ(serial.costs, e.costs);
}

TEST(Evaluate, NoiselessSingleRosterHasNoSpread) {
  EnvConfig c;
  const DuelingNet net = constant_choice(c, kZeroOffset + 1);
  const EvalResult e = evaluate(net, c, 5, 9);
  for (double x : e.costs) EXPECT_EQ(x, e.costs.front());
  EXPECT_EQ(e.stddev_cost, 0.0);
  EXPECT_THROW(evaluate(net, c, 0, 9), RlError);
}

TEST(AgentBundle, SaveLoadRoundTrip) {
  TrainConfig tc;
  tc.total_env_steps = 0;
  tc.hidden = {8};
  EnvConfig env;
  env.agent_position = 3;
  const TrainResult r = train(env, tc);
  const auto path = std::filesystem::temp_directory_path() / "beergame_agent_test.json";
  save_agent(path.string(), r, env, tc);
  const AgentBundle b = load_agent(path.string());
  EXPECT_TRUE(b.net == r.net);
  EXPECT_EQ(b.env.agent_position, 3);
  std::filesystem::remove(path);

  const NetShape wrong{8, {4}, 17};
  EXPECT_THROW(agent_policy(std::make_shared<const DuelingNet>(make_net(wrong, DuelingParams::zeros(wrong))), env),
               RlError);
}
