#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "beergame/engine.hpp"
#include "beergame/policies.hpp"
#include "beergame/rl.hpp"

namespace beergame {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One seat in `simulate`.
struct SeatSpec {
  std::string kind = "sterman";  // sterman | base_stock | fixed
  StermanParams params = kGeneralParams;
  double target = 36.0;
  double quantity = 4.0;
  double sigma = 0.0;

  PolicyHandle to_policy() const;
};

struct SimulateSection {
  std::vector<SeatSpec> seats{4};
};

struct OptimizeSection {
  std::vector<int> positions{0, 1, 2, 3};
  int starts = 32;
  double s_prime_cap = 150.0;
};

struct TrainSection {
  int position = 1;
  TrainConfig train;
  int horizon_min = 36;
  int horizon_max = 68;
  int window = 4;
  int min_offset = -8;
  int max_offset = 8;
  double obs_scale = 20.0;
  double teammate_sigma = 0.0;
  int eval_episodes = 100;
};

struct EvaluateSection {
  std::string weights;
  int episodes = 100;
};

struct SweepSection {
  double sigma_max = 15.0;
  double sigma_step = 0.5;
  int reps = 100;
  std::vector<int> positions{0, 1, 2, 3};
  std::vector<std::string> kinds{"model_based", "model_free"};
  /// `optimize` output providing the model-based parameters per position.
  std::string model_based;
  /// Trained-agent bundles; each carries its own position.
  std::vector<std::string> weights;
  bool general_baseline = false;
};

struct ReportSection {
  std::string summary;
};

struct RunConfig {
  std::string command;  // empty until chosen; simulate | optimize | train | evaluate | sweep | report
  std::uint64_t seed = 0;
  std::string out = "out";
  int jobs = 1;
  std::string roster;  // empty: the single general row
  DemandSchedule schedule;
  CostParams costs;
  Conventions conventions;
  SimulateSection simulate;
  OptimizeSection optimize;
  TrainSection train;
  EvaluateSection evaluate;
  SweepSection sweep;
  ReportSection report;

  void validate() const;
  EnvConfig env_config(const std::vector<StermanParams>& roster) const;
};

/// Command-line values that take precedence over the file.
struct FlagOverrides {
  std::optional<std::string> command;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<int> position;
  std::optional<double> sigma_max;
  std::optional<int> reps;
  std::optional<std::string> roster;
  std::vector<std::string> weights;
  std::optional<int> factory_lead;
  std::optional<int> customer_order_delay;
  std::optional<bool> supply_line_orders;
  std::optional<bool> supply_line_backlog;
  std::optional<bool> net_stock;
  std::optional<bool> upstream_signal_lag;
};

/// Errors carry `source:line:` prefixes.
RunConfig parse_config(const std::string& text, const std::string& source);
RunConfig load_config(const std::string& path);

/// Flags win over file values; the result is validated.
RunConfig apply_overrides(RunConfig config, const FlagOverrides& flags);

/// Complete effective configuration; parse_config(to_yaml(c)) == c.
std::string to_yaml(const RunConfig& config);

/// Runs the configured command, writing every artifact under `config.out`.
/// Returns the process exit status.
int run_command(const RunConfig& config, std::ostream& log, std::ostream& err);

}  // namespace beergame
