#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "beergame/engine.hpp"
#include "beergame/policies.hpp"

namespace beergame {

class OptimizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ObjectiveFn = std::function<double(std::span<const double>)>;

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t dim() const { return lower.size(); }
  void validate() const;
  std::vector<double> project(std::span<const double> x) const;
  bool contains(std::span<const double> x) const;
};

/// Central differences with step h_rel * max(|x_i|, 1); one-sided where a
/// bound is active (or too close for the full stencil) when `box` is given.
std::vector<double> finite_diff_gradient(const ObjectiveFn& f, std::span<const double> x,
                                         double h_rel, const Box* box = nullptr);

struct MinimizeOptions {
  double h_rel = 1e-3;
  int lbfgs_memory = 6;
  int max_iterations = 200;
  double gradient_tol = 1e-7;
  double function_tol = 1e-10;
  int polish_evaluations = 600;
  double polish_initial_step = 0.05;  // fraction of each box side
};

struct StartLog {
  std::vector<double> start;
  double start_value = 0.0;
  std::vector<double> terminus;
  double terminus_value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool ok = false;
  std::string message;
};

struct BoxMinResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
  std::vector<StartLog> starts;
};

/// Halton points (bases 2, 3, 5, 7, ...) with a seed-derived rotation,
/// scaled into the box. The sequence is prefix-stable in `count`.
std::vector<std::vector<double>> quasi_random_starts(const Box& box, int count,
                                                     std::uint64_t seed);

/// Projected limited-memory BFGS from each start, each terminus polished by
/// a bounded Nelder-Mead pass. `mandatory_starts` come first and count
/// toward `n_starts`.
BoxMinResult minimize_box(const ObjectiveFn& f, const Box& box, int n_starts,
                          std::uint64_t seed,
                          const std::vector<std::vector<double>>& mandatory_starts = {},
                          const MinimizeOptions& options = {});

struct GridResult {
  std::vector<double> x;
  double value = 0.0;
  long long evaluations = 0;
};

inline constexpr long long kGridCap = 1'000'000;

/// Exhaustive search over `resolution` evenly spaced points per axis
/// (box corners included; resolution 1 evaluates the box centre).
GridResult grid_oracle(const ObjectiveFn& f, const Box& box, int resolution);

// ---------------------------------------------------------------------------
// Single-seat parameter fitting.

struct OptProblem {
  int position = 0;
  std::array<StermanParams, 3> teammate_params{kGeneralParams, kGeneralParams, kGeneralParams};
  DemandSchedule schedule;
  CostParams costs;
  Conventions conventions;
  double s_prime_search_cap = 150.0;

  void validate() const;
  Box box() const;
};

struct OptResult {
  StermanParams best_params;
  double best_cost = 0.0;
  int start_count = 0;
  int evaluations = 0;
  std::vector<StartLog> starts;
};

/// Team cost of one deterministic game with `candidate` at the problem's seat.
double objective(const OptProblem& problem, const StermanParams& candidate);

/// Team cost with every seat (including the candidate's) on teammate rules;
/// the seat itself plays kGeneralParams.
double baseline_cost(const OptProblem& problem);

OptResult minimize_box(const OptProblem& problem, int n_starts, std::uint64_t seed,
                       const MinimizeOptions& options = {});

std::pair<StermanParams, double> grid_oracle(const OptProblem& problem, int resolution);

struct OptimizeRow {
  int position = 0;
  StermanParams params;
  double cost = 0.0;
  double baseline_cost = 0.0;
  int starts = 0;
  int evaluations = 0;
  std::uint64_t seed = 0;

  double reduction_pct() const { return 100.0 * (cost - baseline_cost) / baseline_cost; }
};

void write_optimize_csv(std::ostream& out, const std::vector<OptimizeRow>& rows);
std::vector<OptimizeRow> read_optimize_csv(std::istream& in, const std::string& source);

}  // namespace beergame
