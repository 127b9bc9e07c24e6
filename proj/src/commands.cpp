#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <thread>

#include "beergame/config.hpp"
#include "beergame/experiments.hpp"
#include "beergame/optimize.hpp"

namespace beergame {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

std::vector<StermanParams> load_roster_params(const RunConfig& c) {
  return roster_params(c.roster.empty() ? default_roster() : load_roster(c.roster));
}

void cmd_simulate(const RunConfig& c, const fs::path& out, std::ostream& log) {
  std::array<PolicyHandle, kEntities> seats;
  for (int i = 0; i < kEntities; ++i) {
    seats[static_cast<std::size_t>(i)] = c.simulate.seats[static_cast<std::size_t>(i)].to_policy();
  }
  const GameResult g = run_game(seats, c.schedule, c.costs, c.seed, c.conventions);
  auto f = open_out(out / "trajectory.csv");
  write_trajectory_csv(f, g.trajectory);
  auto t = open_out(out / "total_cost.txt");
  t << std::fixed << std::setprecision(6) << g.total_cost << '\n';
  log << "total team cost: " << std::fixed << std::setprecision(2) << g.total_cost << '\n';
}

void cmd_optimize(const RunConfig& c, const fs::path& out, std::ostream& log) {
  const auto& positions = c.optimize.positions;
  std::vector<OptimizeRow> rows(positions.size());
  auto solve = [&](std::size_t k) {
    OptProblem p;
    p.position = positions[k];
    p.schedule = c.schedule;
    p.costs = c.costs;
    p.conventions = c.conventions;
    p.s_prime_search_cap = c.optimize.s_prime_cap;
    const std::uint64_t seed = derive_seed(c.seed, "optimize", {static_cast<std::uint64_t>(p.position)});
    const OptResult r = minimize_box(p, c.optimize.starts, seed);
    rows[k] = OptimizeRow{p.position, r.best_params, r.best_cost, baseline_cost(p), r.start_count,
                          r.evaluations, seed};
  };
  std::vector<std::thread> pool;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(c.jobs), positions.size());
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < positions.size(); k += workers) solve(k);
    });
  }
  for (auto& t : pool) t.join();

  auto f = open_out(out / "optimize.csv");
  write_optimize_csv(f, rows);
  for (const auto& r : rows) {
    log << role_name(r.position) << ": cost " << std::fixed << std::setprecision(2) << r.cost << " ("
        << std::showpos << r.reduction_pct() << std::noshowpos << "% vs " << r.baseline_cost << ")\n";
  }
}

void write_eval_csv(const fs::path& path, const EvalResult& e) {
  auto f = open_out(path);
  f << "episode,cost,baseline_cost,reduction_pct\n" << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < e.costs.size(); ++i) {
    f << i << ',' << e.costs[i] << ',' << e.baseline_costs[i] << ','
      << 100.0 * (e.costs[i] - e.baseline_costs[i]) / e.baseline_costs[i] << '\n';
  }
}

void log_eval(std::ostream& log, const EvalResult& e) {
  log << std::fixed << std::setprecision(2) << "mean cost " << e.mean_cost << " (sd " << e.stddev_cost
      << "), paired baseline " << e.mean_baseline << ", reduction " << e.reduction_pct() << "%\n";
}

void cmd_train(const RunConfig& c, const fs::path& out, std::ostream& log) {
  const EnvConfig env = c.env_config(load_roster_params(c));
  TrainConfig tc = c.train.train;
  tc.seed = c.seed;
  const TrainResult r = train(env, tc);
  save_agent((out / "agent.json").string(), r, env, tc);
  auto f = open_out(out / "learning_curve.csv");
  write_curve_csv(f, r.curve);
  log << "trained " << role_name(env.agent_position) << " for " << r.env_steps << " steps, "
      << r.updates << " updates, " << r.curve.size() << " episodes\n";
  if (c.train.eval_episodes > 0) {
    const EvalResult e = evaluate(r.net, env, c.train.eval_episodes,
                                  derive_seed(c.seed, "train-eval"), c.jobs);
    write_eval_csv(out / "evaluation.csv", e);
    log_eval(log, e);
  }
}

void cmd_evaluate(const RunConfig& c, const fs::path& out, std::ostream& log) {
  const AgentBundle b = load_agent(c.evaluate.weights);
  const EvalResult e = evaluate(b.net, b.env, c.evaluate.episodes, c.seed, c.jobs);
  write_eval_csv(out / "evaluation.csv", e);
  log << role_name(b.env.agent_position) << ": ";
  log_eval(log, e);
}

void emit_reports(const std::vector<SummaryRow>& summary, const fs::path& out, std::ostream& log) {
  render_lineplot(summary, (out / "reduction.svg").string());
  std::vector<std::string> written{"reduction.svg"};
  for (AgentKind k : {AgentKind::model_based, AgentKind::model_free}) {
    std::vector<SummaryRow> part;
    for (const auto& r : summary)
      if (r.kind == k) part.push_back(r);
    if (part.empty()) continue;
    const std::string name = "reduction_" + std::string(kind_name(k)) + ".svg";
    render_lineplot(part, (out / name).string(), "mean reduction vs sigma, " + std::string(kind_name(k)));
    written.push_back(name);
  }
  try {
    const auto adv = relative_advantage(summary);
    auto f = open_out(out / "advantage.csv");
    write_advantage_csv(f, adv);
    written.push_back("advantage.csv");
  } catch (const ExperimentError&) {
    // only one agent kind present: no advantage table
  }
  for (const auto& w : written) log << "wrote " << (out / w).string() << '\n';
}

void cmd_sweep(const RunConfig& c, const fs::path& out, std::ostream& log) {
  SweepConfig s;
  s.sigmas = sigma_grid(c.sweep.sigma_max, c.sweep.sigma_step);
  s.reps = c.sweep.reps;
  s.positions = c.sweep.positions;
  s.kinds.clear();
  for (const auto& k : c.sweep.kinds) s.kinds.push_back(parse_kind(k));
  s.roster = load_roster_params(c);
  s.general_baseline = c.sweep.general_baseline;
  s.schedule = c.schedule;
  s.costs = c.costs;
  s.conventions = c.conventions;
  s.seed = c.seed;
  s.jobs = c.jobs;

  const bool want_mb = std::find(s.kinds.begin(), s.kinds.end(), AgentKind::model_based) != s.kinds.end();
  if (want_mb) {
    if (c.sweep.model_based.empty()) {
      throw std::runtime_error("sweep needs sweep.model_based (an optimize.csv) for model_based cells");
    }
    std::ifstream in(c.sweep.model_based);
    if (!in) throw std::runtime_error("cannot open model-based parameter file: " + c.sweep.model_based);
    for (const auto& r : read_optimize_csv(in, c.sweep.model_based)) s.model_based[r.position] = r.params;
  }
  for (const auto& w : c.sweep.weights) {
    auto bundle = std::make_shared<const AgentBundle>(load_agent(w));
    const int p = bundle->env.agent_position;
    if (s.model_free.contains(p)) {
      throw std::runtime_error("two trained-agent bundles for position " + std::to_string(p));
    }
    s.model_free[p] = std::move(bundle);
  }

  const auto records = run_sweep(s);
  const auto summary = summarize(records);
  {
    auto f = open_out(out / "sweep.csv");
    write_sweep_csv(f, records);
    auto g = open_out(out / "summary.csv");
    write_summary_csv(g, summary);
  }
  log << records.size() << " records\n";
  emit_reports(summary, out, log);
}

void cmd_report(const RunConfig& c, const fs::path& out, std::ostream& log) {
  std::ifstream in(c.report.summary);
  if (!in) throw std::runtime_error("cannot open summary file: " + c.report.summary);
  const auto summary = read_summary_csv(in, c.report.summary);
  emit_reports(summary, out, log);
}

}  // namespace

int run_command(const RunConfig& config, std::ostream& log, std::ostream& err) {
  try {
    config.validate();
    if (config.command.empty()) throw ConfigError("no command given");
    const fs::path out(config.out);
    fs::create_directories(out);
    {
      auto f = open_out(out / "config.yaml");
      f << to_yaml(config);
    }
    const std::string& cmd = config.command;
    if (cmd == "simulate") cmd_simulate(config, out, log);
    else if (cmd == "optimize") cmd_optimize(config, out, log);
    else if (cmd == "train") cmd_train(config, out, log);
    else if (cmd == "evaluate") cmd_evaluate(config, out, log);
    else if (cmd == "sweep") cmd_sweep(config, out, log);
    else cmd_report(config, out, log);
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace beergame
