#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "beergame/engine.hpp"
#include "beergame/policies.hpp"
#include "beergame/rl.hpp"

namespace beergame {

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AgentKind { model_based, model_free };

std::string_view kind_name(AgentKind kind);
AgentKind parse_kind(std::string_view text);

/// 0, 0.5, ..., max inclusive.
std::vector<double> sigma_grid(double sigma_max, double step = 0.5);

struct SweepConfig {
  std::vector<double> sigmas = sigma_grid(15.0);
  int reps = 100;
  std::vector<int> positions{0, 1, 2, 3};
  std::vector<AgentKind> kinds{AgentKind::model_based, AgentKind::model_free};
  std::vector<StermanParams> roster{kGeneralParams};
  std::map<int, StermanParams> model_based;
  std::map<int, std::shared_ptr<const AgentBundle>> model_free;
  /// Seat the general parameters in the without-agent arm instead of a
  /// fresh roster draw.
  bool general_baseline = false;
  DemandSchedule schedule;
  CostParams costs;
  Conventions conventions;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

struct SweepRecord {
  double sigma = 0.0;
  int position = 0;
  AgentKind kind = AgentKind::model_based;
  int rep = 0;
  std::uint64_t seed = 0;
  double cost_with_agent = 0.0;
  double cost_baseline = 0.0;
  double reduction_pct = 0.0;
  /// Hashes of the teammates' noise draws in each arm.
  std::uint64_t draws_with_agent = 0;
  std::uint64_t draws_baseline = 0;
};

/// Records ordered by (sigma, position, kind, rep) whatever `jobs` is.
std::vector<SweepRecord> run_sweep(const SweepConfig& config);

struct SummaryRow {
  double sigma = 0.0;
  int position = 0;
  AgentKind kind = AgentKind::model_based;
  double mean_reduction_pct = 0.0;
  double stderr_pct = 0.0;
  int n = 0;
};

std::vector<SummaryRow> summarize(const std::vector<SweepRecord>& records);

struct AdvantageRow {
  double sigma = 0.0;
  int position = 0;
  double advantage = 0.0;  // model-free minus model-based, in points
};

std::vector<AdvantageRow> relative_advantage(const std::vector<SummaryRow>& summary);

/// Rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRecord>& records);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(std::istream& in, const std::string& source);
void write_advantage_csv(std::ostream& out, const std::vector<AdvantageRow>& rows);

/// Reduction against sigma, one polyline per (position, kind).
void render_lineplot(const std::vector<SummaryRow>& summary, std::ostream& out,
                     const std::string& title = "mean reduction vs sigma");
void render_lineplot(const std::vector<SummaryRow>& summary, const std::string& path,
                     const std::string& title = "mean reduction vs sigma");

}  // namespace beergame
