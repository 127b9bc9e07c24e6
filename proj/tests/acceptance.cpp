// Acceptance harness: one PASS/FAIL line per criterion A1..A8, followed by
// indented detail lines. Exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "beergame/experiments.hpp"
#include "beergame/neural.hpp"
#include "beergame/optimize.hpp"
#include "beergame/policies.hpp"
#include "beergame/rl.hpp"

using namespace beergame;
namespace fs = std::filesystem;

namespace {

constexpr double kReferenceBaseline = 9978.44;
constexpr std::array<double, kEntities> kReferenceOptimized{1440.45, 1911.77, 3225.41, 4799.45};

int failures = 0;

void verdict(const char* id, bool ok, const std::string& summary) {
  std::cout << id << ' ' << (ok ? "PASS" : "FAIL") << "  " << summary << std::endl;
  if (!ok) ++failures;
}

void detail(const std::string& line) { std::cout << "    " << line << std::endl; }

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int worker_count() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

std::array<PolicyHandle, kEntities> homogeneous(const PolicyHandle& p) {
  std::array<PolicyHandle, kEntities> team;
  team.fill(p);
  return team;
}

// ---------------------------------------------------------------------------

void check_a1() {
  const auto team = homogeneous(PolicyHandle::sterman(kGeneralParams));
  Conventions best;
  double best_cost = 0.0, best_gap = 1e300;
  for (const Conventions& c : Conventions::all()) {
    const double cost = run_game(team, DemandSchedule{}, CostParams{}, 0, c).total_cost;
    const double gap = std::abs(cost - kReferenceBaseline);
    if (gap < best_gap) {
      best_gap = gap;
      best = c;
      best_cost = cost;
    }
  }
  const double dflt = run_game(team, DemandSchedule{}, CostParams{}, 0).total_cost;
  const double rel = (dflt - kReferenceBaseline) / kReferenceBaseline;
  verdict("A1", best == Conventions{} && std::abs(rel) <= 0.005,
          "baseline team cost " + fmt(dflt, 4) + " vs " + fmt(kReferenceBaseline) + " (" +
              fmt(100 * rel) + "%)");
  detail("closest of " + std::to_string(Conventions::all().size()) + " convention sets: " + best.describe() +
         " -> " + fmt(best_cost, 4));
}

// ---------------------------------------------------------------------------

std::array<StermanParams, kEntities> check_a2() {
  std::array<StermanParams, kEntities> fitted{};
  bool ok = true;
  std::ostringstream line;
  for (int pos = 0; pos < kEntities; ++pos) {
    OptProblem p;
    p.position = pos;
    const auto t0 = std::chrono::steady_clock::now();
    const OptResult r = minimize_box(p, 32, derive_seed(0, "optimize", {static_cast<std::uint64_t>(pos)}));
    const double secs = seconds_since(t0);
    fitted[static_cast<std::size_t>(pos)] = r.best_params;
    const double target = kReferenceOptimized[static_cast<std::size_t>(pos)];
    const bool in_bounds = p.box().contains(std::vector<double>{r.best_params.theta, r.best_params.alpha,
                                                                r.best_params.beta, r.best_params.s_prime});
    const bool pos_ok = r.best_cost <= 1.15 * target && secs < 300.0 && in_bounds;
    ok = ok && pos_ok;
    line << role_name(pos) << ' ' << fmt(r.best_cost) << (pos == 3 ? "" : ", ");
    detail(std::string(role_name(pos)) + ": cost " + fmt(r.best_cost) + " (limit " + fmt(1.15 * target) +
           "), params (" + fmt(r.best_params.theta, 4) + ", " + fmt(r.best_params.alpha, 4) + ", " +
           fmt(r.best_params.beta, 4) + ", " + fmt(r.best_params.s_prime, 3) + "), " +
           std::to_string(r.start_count) + " starts, " + fmt(secs, 1) + " s");
  }
  verdict("A2", ok, "optimized costs " + line.str());
  return fitted;
}

// ---------------------------------------------------------------------------

std::array<std::shared_ptr<const AgentBundle>, kEntities> check_a3() {
  std::array<std::shared_ptr<const AgentBundle>, kEntities> bundles;
  std::array<double, kEntities> reduction{};
  double worst_secs = 0.0;
  for (int pos = 0; pos < kEntities; ++pos) {
    EnvConfig env;
    env.agent_position = pos;
    TrainConfig tc;
    tc.total_env_steps = 50'000;
    tc.seed = 7;
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r = train(env, tc);
    const double secs = seconds_since(t0);
    worst_secs = std::max(worst_secs, secs);
    const EvalResult e = evaluate(r.net, env, 100, 1, worker_count());
    reduction[static_cast<std::size_t>(pos)] = -e.reduction_pct();
    detail(std::string(role_name(pos)) + ": mean cost " + fmt(e.mean_cost) + " vs baseline " +
           fmt(e.mean_baseline) + " -> reduction " + fmt(-e.reduction_pct()) + "%, trained in " +
           fmt(secs, 1) + " s");
    bundles[static_cast<std::size_t>(pos)] =
        std::make_shared<const AgentBundle>(AgentBundle{std::move(r.net), env});
  }
  const int strong = static_cast<int>(std::count_if(reduction.begin(), reduction.end(),
                                                    [](double x) { return x >= 25.0; }));
  verdict("A3", reduction[1] >= 35.0 && strong >= 2 && worst_secs < 1800.0,
          "wholesaler reduction " + fmt(reduction[1]) + "% (need >= 35), " + std::to_string(strong) +
              " of 4 positions >= 25%");
  return bundles;
}

// ---------------------------------------------------------------------------

struct Curve {
  std::vector<double> sigma;
  std::vector<double> mean;
};

Curve curve_of(const std::vector<SummaryRow>& summary, int position, AgentKind kind) {
  Curve c;
  for (const auto& r : summary) {
    if (r.position == position && r.kind == kind) {
      c.sigma.push_back(r.sigma);
      c.mean.push_back(r.mean_reduction_pct);
    }
  }
  return c;
}

/// Smallest grid sigma from which the model-free mean stays strictly below the
/// model-based mean through the end of the grid; negative when there is none.
/// At least three grid points must qualify so a single noisy cell cannot pass.
double crossover_sigma(const Curve& mf, const Curve& mb) {
  std::size_t k = mf.mean.size();
  while (k > 0 && mf.mean[k - 1] < mb.mean[k - 1]) --k;
  if (mf.mean.size() - k < 3) return -1.0;
  return mf.sigma[k];
}

std::vector<SummaryRow> sweep_summary(const std::map<int, StermanParams>& model_based,
                                      const std::array<std::shared_ptr<const AgentBundle>, kEntities>& bundles) {
  SweepConfig s;
  s.sigmas = sigma_grid(15.0);
  s.reps = 100;
  s.positions = {1, 2};
  s.model_based = model_based;
  s.model_free[1] = bundles[1];
  s.model_free[2] = bundles[2];
  s.seed = 2024;
  s.jobs = worker_count();
  return summarize(run_sweep(s));
}

void print_curves(const Curve& a, const std::string& name_a, const Curve& b, const std::string& name_b) {
  std::ostringstream os;
  os << "sigma:";
  for (std::size_t k = 0; k < a.sigma.size(); k += 2) os << ' ' << std::setw(6) << fmt(a.sigma[k], 1);
  detail(os.str());
  for (const auto& [c, name] : {std::pair{&a, name_a}, std::pair{&b, name_b}}) {
    std::ostringstream row;
    row << name << ':';
    for (std::size_t k = 0; k < c->mean.size(); k += 2) row << ' ' << std::setw(6) << fmt(c->mean[k], 1);
    detail(row.str());
  }
}

void check_a4_a5(const std::array<StermanParams, kEntities>& fitted,
                 const std::array<std::shared_ptr<const AgentBundle>, kEntities>& bundles) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto summary = sweep_summary({{1, fitted[1]}, {2, fitted[2]}}, bundles);
  const double secs = seconds_since(t0);

  const Curve dist = curve_of(summary, 2, AgentKind::model_based);
  const double rho = spearman(dist.sigma, dist.mean);
  verdict("A4", rho >= 0.8,
          "Spearman(sigma, model-based distributor reduction) = " + fmt(rho, 3) + " (need >= 0.8)");
  detail("distributor model-based reduction " + fmt(dist.mean.front()) + "% at sigma 0, " +
         fmt(dist.mean.back()) + "% at sigma 15; sweep took " + fmt(secs, 1) + " s");

  const Curve mf = curve_of(summary, 1, AgentKind::model_free);
  const Curve mb = curve_of(summary, 1, AgentKind::model_based);
  const double cross = crossover_sigma(mf, mb);
  verdict("A5", cross >= 0.0,
          cross >= 0.0 ? "DQN wholesaler beats the fitted rule from sigma " + fmt(cross, 1) + " onward"
                       : "no crossover: the fitted wholesaler rule stays ahead of the DQN wholesaler through sigma 15");
  print_curves(mf, "  dqn", mb, "  fit");

  // Same sweep with the published wholesaler fit in the model-based seat,
  // to separate the learner from the particular rule our optimizer found.
  const StermanParams published{1.0, 0.495, 1.0, 36.405};
  const auto alt = sweep_summary({{1, published}, {2, fitted[2]}}, bundles);
  const Curve mb_pub = curve_of(alt, 1, AgentKind::model_based);
  const Curve mf_pub = curve_of(alt, 1, AgentKind::model_free);
  const double cross_pub = crossover_sigma(mf_pub, mb_pub);
  detail("diagnostic with the published wholesaler rule (1, 0.495, 1, 36.405) in the model-based seat: " +
         (cross_pub >= 0.0 ? "crossover from sigma " + fmt(cross_pub, 1) : std::string("no crossover")));
  double positive_from = -1.0;
  for (std::size_t k = 0; k < mb_pub.mean.size(); ++k) {
    if (mb_pub.mean[k] > 0.0 && positive_from < 0.0) positive_from = mb_pub.sigma[k];
    if (mb_pub.mean[k] <= 0.0) positive_from = -1.0;
  }
  const double dqn_worst = *std::max_element(mf_pub.mean.begin(), mf_pub.mean.end());
  detail("published rule turns cost-increasing (reduction > 0) from sigma " +
         (positive_from >= 0.0 ? fmt(positive_from, 1) : std::string("never")) +
         "; DQN wholesaler's weakest cell is " + fmt(dqn_worst) + "%");
  print_curves(mf_pub, "  dqn", mb_pub, "  pub");
}

// ---------------------------------------------------------------------------

void check_a6() {
  Rng rng = make_rng(0, "net-init");
  DuelingNet net(NetShape{}, rng);
  Rng data(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> act(0, net.shape().actions - 1);
  std::vector<TrainSample> batch(32);
  for (auto& s : batch) {
    for (int i = 0; i < net.shape().inputs; ++i) s.obs.push_back(g(data));
    s.action = act(data);
    s.target = 2.0 * g(data);
  }

  // finite differences on 20 random weights
  const DuelingParams grads = loss_and_grads(net, batch).grads;
  std::uniform_int_distribution<std::size_t> pick(0, net.params().size() - 1);
  double worst_grad = 0.0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t idx = pick(data);
    double& w = net.params().at(idx);
    const double saved = w, h = 1e-6;
    w = saved + h;
    const double up = batch_loss(net, batch);
    w = saved - h;
    const double down = batch_loss(net, batch);
    w = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = const_cast<DuelingParams&>(grads).at(idx);
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst_grad = std::max(worst_grad, std::abs(numeric - analytic) / scale);
  }

  double worst_identity = 0.0;
  for (const auto& s : batch) {
    const ForwardOutput f = net.forward(s.obs);
    const Eigen::VectorXd expect = (f.advantages.array() - f.advantages.mean() + f.state_value).matrix();
    worst_identity = std::max(worst_identity, (f.q_values - expect).cwiseAbs().maxCoeff());
  }

  DuelingNet moved = net;
  AdamState adam = AdamState::for_net(moved, 1e-3);
  adam_step(moved, grads, adam);
  double worst_adam = 0.0;
  for (std::size_t k = 0; k < net.params().size(); ++k) {
    const double gk = const_cast<DuelingParams&>(grads).at(k);
    // closed form of the first bias-corrected step: -lr * g / (|g| + eps)
    const double expect = -1e-3 * gk / (std::abs(gk) + 1e-8);
    worst_adam = std::max(worst_adam, std::abs(moved.params().at(k) - net.params().at(k) - expect));
  }

  verdict("A6", worst_grad <= 1e-4 && worst_identity <= 1e-12 && worst_adam <= 1e-6,
          "grad rel err " + fmt(worst_grad * 1e6, 3) + "e-6, dueling identity " +
              fmt(worst_identity * 1e15, 3) + "e-15, Adam step err " + fmt(worst_adam * 1e9, 3) + "e-9");
}

// ---------------------------------------------------------------------------

void check_a7() {
  bool ok = true;
  std::ostringstream notes;

  // conservation and fill correctness under random orders
  {
    Rng rng(42);
    std::uniform_real_distribution<double> u(0.0, 14.0);
    GameState s = init_state(DemandSchedule{}, CostParams{});
    double worst = 0.0;
    while (s.period < s.schedule.horizon) {
      const double before = total_units(s);
      const std::array<double, kEntities> orders{u(rng), u(rng), u(rng), u(rng)};
      const auto prev = s.entities;
      advance_round(s, orders);
      const auto& rec = s.trajectory.back().entities;
      const double in = orders[3] + orders[0] + orders[1] + orders[2];
      const double out = rec[0].shipped + rec[1].incoming_order + rec[2].incoming_order + rec[3].incoming_order;
      worst = std::max(worst, std::abs(total_units(s) - (before + in - out)));
      for (std::size_t i = 0; i < kEntities; ++i) {
        const double want = std::min(prev[i].on_hand + rec[i].received, prev[i].backlog + rec[i].incoming_order);
        worst = std::max(worst, std::abs(rec[i].shipped - want));
        if (rec[i].on_hand < 0 || rec[i].backlog < 0 || rec[i].on_hand * rec[i].backlog != 0) ok = false;
      }
    }
    ok = ok && worst < 1e-9;
    notes << "conservation/fill max err " << worst;
  }

  // equilibrium fixed point at demand 4
  {
    GameState s = init_state(DemandSchedule{4, 4, 1, 52}, CostParams{});
    bool fixed = true;
    while (s.period < s.schedule.horizon) {
      const auto c = advance_round(s, {4, 4, 4, 4});
      fixed = fixed && c[0] + c[1] + c[2] + c[3] == 24.0 && s.entities[2].on_hand == 12.0;
    }
    ok = ok && fixed;
    notes << "; equilibrium 24/period " << (fixed ? "holds" : "broken");
  }

  // base-stock-36 retailer with pass-through partners re-equilibrates at 8
  {
    DemandSchedule d;
    d.horizon = 80;
    GameState s = init_state(d, CostParams{});
    std::array<DecisionFn, kEntities> seats{
        make_decider(PolicyHandle::base_stock(36.0), nullptr),
        make_decider(PolicyHandle::sterman(kPassThroughParams), nullptr),
        make_decider(PolicyHandle::sterman(kPassThroughParams), nullptr),
        make_decider(PolicyHandle::sterman(kPassThroughParams), nullptr)};
    while (s.period < d.horizon) {
      begin_round(s);
      std::array<double, kEntities> orders{};
      for (int i = 0; i < kEntities; ++i) orders[static_cast<std::size_t>(i)] = seats[static_cast<std::size_t>(i)](s, i);
      place_orders(s, orders);
    }
    // orders in the mail plus shipments in transit; the supplier's backlog is
    // frozen by the pass-through partners and reported separately
    auto total = [](const auto& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
    bool steady = true;
    for (int i = 1; i <= 2; ++i) {
      const auto& me = s.entities[static_cast<std::size_t>(i)];
      const auto& up = s.entities[static_cast<std::size_t>(i + 1)];
      const double pipeline = total(up.inbound_orders) + total(me.inbound_shipping);
      steady = steady && std::abs(pipeline - 32.0) < 1e-9 && s.trajectory.back().entities[0].order_placed == 8.0;
      notes << "; " << role_name(i) << " on-order+in-transit " << pipeline << " (supplier backlog "
            << up.backlog << ")";
    }
    ok = ok && steady;
  }
  verdict("A7", ok, "simulation invariants");
  detail(notes.str());
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::string without_out_line(const std::string& yaml) {
  std::istringstream in(yaml);
  std::string line, keep;
  while (std::getline(in, line))
    if (line.rfind("out:", 0) != 0) keep += line + '\n';
  return keep;
}

int run(const std::string& cmd) {
  return std::system((cmd + " > /dev/null 2>&1").c_str());
}

/// Runs `args` into dir/first, re-runs from the echoed config into
/// dir/second, and compares every artifact byte for byte.
bool replay_matches(const std::string& name, const std::string& args, const fs::path& dir,
                    std::string& why) {
  const fs::path a = dir / (name + "_first"), b = dir / (name + "_second");
  const std::string cli = BEERGAME_CLI;
  if (run(cli + ' ' + name + ' ' + args + " --out " + a.string()) != 0) {
    why = name + ": first run failed";
    return false;
  }
  if (run(cli + ' ' + name + " --config " + (a / "config.yaml").string() + " --out " + b.string()) != 0) {
    why = name + ": replay failed";
    return false;
  }
  for (const auto& entry : fs::directory_iterator(a)) {
    const std::string file = entry.path().filename().string();
    std::string x = slurp(entry.path()), y = slurp(b / file);
    if (file == "config.yaml") {
      x = without_out_line(x);
      y = without_out_line(y);
    }
    if (!fs::exists(b / file) || x != y) {
      why = name + ": " + file + " differs";
      return false;
    }
  }
  return true;
}

void check_a8() {
  const fs::path dir = fs::temp_directory_path() / "beergame_acceptance_a8";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream m(dir / "fit.csv");
    write_optimize_csv(m, {{1, {1.0, 0.495, 1.0, 36.405}, 0, 0, 0, 0, 0}});
  }
  const std::string jobs = " --jobs " + std::to_string(worker_count());
  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "--seed 5"},
      {"optimize", "--seed 5 --position 2" + jobs},
      {"train", "--seed 5 --position 1" + jobs},
      {"evaluate", "--seed 5 --weights " + (dir / "train_first" / "agent.json").string() + jobs},
      {"sweep", "--seed 5 --position 1 --sigma-max 2 --reps 4 --weights " +
                    (dir / "train_first" / "agent.json").string() + jobs},
      {"report", ""},
  };
  // small budgets so the whole replay stays quick
  {
    std::ofstream t(dir / "train.yaml");
    t << "train:\n  total_env_steps: 3000\n  warmup_steps: 500\n  eval_episodes: 10\n"
         "optimize:\n  starts: 4\nevaluate:\n  episodes: 10\nsweep:\n  model_based: "
      << (dir / "fit.csv").string() << "\nreport:\n  summary: " << (dir / "sweep_first" / "summary.csv").string()
      << '\n';
  }
  const std::string base = " --config " + (dir / "train.yaml").string() + ' ';
  bool ok = true;
  std::vector<std::string> done;
  std::string why;
  for (const auto& [name, args] : commands) {
    if (!replay_matches(name, base + args, dir, why)) {
      ok = false;
      break;
    }
    done.push_back(name);
  }
  std::string list;
  for (const auto& d : done) list += (list.empty() ? "" : ", ") + d;
  verdict("A8", ok, ok ? "re-runs from the echoed config are byte-identical: " + list : why);
  fs::remove_all(dir);
}

}  // namespace

int main() {
  std::cout << "acceptance run on " << worker_count() << " worker thread(s)" << std::endl;
  check_a1();
  const auto fitted = check_a2();
  const auto bundles = check_a3();
  check_a4_a5(fitted, bundles);
  check_a6();
  check_a7();
  check_a8();
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
