// Command-line front end: parses flags, merges them over an optional YAML
// config, and hands the effective config to run_command.

#include <iostream>

#include "CLI11.hpp"
#include "beergame/config.hpp"

int main(int argc, char** argv) {
  using namespace beergame;

  CLI::App app{"Four-echelon beer game: simulation, parameter fitting, DQN agents, noise sweeps"};
  app.require_subcommand(1);

  std::string config_path;
  FlagOverrides flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "YAML run configuration");
    sub->add_option("--seed", flags.seed, "base seed");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--jobs", flags.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--position", flags.position, "entity 0..3 (retailer..factory)")->check(CLI::Range(0, 3));
    sub->add_option("--sigma-max", flags.sigma_max, "largest noise level in a sweep");
    sub->add_option("--reps", flags.reps, "repetitions per sweep cell");
    sub->add_option("--roster", flags.roster, "roster CSV (name,theta,alpha,beta,s_prime)");
    sub->add_option("--weights", flags.weights, "trained agent bundle(s)");
    sub->add_option("--factory-lead", flags.factory_lead, "factory order-to-receipt periods (3 or 4)");
    sub->add_option("--customer-order-delay", flags.customer_order_delay, "customer order delay (0 or 2)");
    sub->add_option("--supply-line-orders", flags.supply_line_orders, "count mailed orders in the supply line");
    sub->add_option("--supply-line-backlog", flags.supply_line_backlog, "count supplier backlog in the supply line");
    sub->add_option("--net-stock", flags.net_stock, "stock is on-hand minus backlog (false: on-hand)");
    sub->add_option("--upstream-signal-lag", flags.upstream_signal_lag,
                    "upstream forecasts use the previous order slip");
  };

  const std::vector<std::pair<const char*, const char*>> commands{
      {"simulate", "play one game and write its trajectory"},
      {"optimize", "fit ordering-rule parameters per position"},
      {"train", "train a DQN agent for one position"},
      {"evaluate", "evaluate a trained agent against its paired baseline"},
      {"sweep", "noise-robustness sweep over sigma, position and agent kind"},
      {"report", "render plots from a summary CSV"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    flags.command = app.get_subcommands().front()->get_name();
    config = apply_overrides(std::move(config), flags);
    return run_command(config, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
