#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "beergame/engine.hpp"
#include "beergame/rng.hpp"

namespace beergame {

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Anchoring-and-adjustment ordering heuristic parameters.
struct StermanParams {
  double theta = 0.36;    // forecast smoothing weight
  double alpha = 0.26;    // stock adjustment rate
  double beta = 0.34;     // supply-line weight
  double s_prime = 17.0;  // desired stock anchor

  void validate() const;
  std::array<double, 4> to_array() const { return {theta, alpha, beta, s_prime}; }
  static StermanParams from_array(const std::array<double, 4>& x) {
    return {x[0], x[1], x[2], x[3]};
  }
  bool operator==(const StermanParams&) const = default;
};

/// Best-fit parameters across all human teams.
inline constexpr StermanParams kGeneralParams{0.36, 0.26, 0.34, 17.0};

/// Pass-through: orders exactly the smoothed incoming order, no stock terms.
inline constexpr StermanParams kPassThroughParams{1.0, 0.0, 0.0, 0.0};

struct NoiseSpec {
  double sigma = 0.0;
  /// Stream index mixed into the game seed; defaults to the seat index.
  std::optional<std::uint64_t> stream;
};

struct BaseStockPolicy {
  double target = 36.0;
};

struct FixedOrderPolicy {
  double quantity = 4.0;
};

/// An order rule supplied from outside (e.g. a trained agent).
struct ExternalPolicy {
  std::function<double(const GameState&, int entity)> decide;
};

enum class PolicyKind { sterman, base_stock, fixed, external_agent };

struct PolicyHandle {
  std::variant<StermanParams, BaseStockPolicy, FixedOrderPolicy, ExternalPolicy> rule;
  NoiseSpec noise;

  PolicyKind kind() const { return static_cast<PolicyKind>(rule.index()); }
  void validate() const;

  static PolicyHandle sterman(const StermanParams& p, NoiseSpec noise = {});
  static PolicyHandle base_stock(double target);
  static PolicyHandle fixed(double quantity);
  static PolicyHandle external(std::function<double(const GameState&, int)> fn);
};

/// L-hat_t = theta * L_t + (1 - theta) * L-hat_{t-1}.
double update_forecast(double prev_forecast, double observed_order, double theta);

/// O_t = max(0, L-hat_t + alpha * (S' - S_t - beta * SL_t) + eps_t).
double sterman_order(const StermanParams& params, double forecast, double stock,
                     double supply_line, double noise_draw = 0.0);

/// max(0, target - inventory_position).
double base_stock_order(double target, double inventory_position);

/// max(0, intended + N(0, sigma^2)); no draw is consumed when sigma == 0.
double inject_noise(double intended_order, double sigma, Rng& rng);

/// S_t under the state's conventions.
double stock_level(const GameState& state, int entity);

/// Binds a policy to a seat. `noise_rng` must outlive the returned callable
/// when the policy is noisy. Every noise draw is appended to `draw_log` when
/// one is given.
DecisionFn make_decider(const PolicyHandle& policy, Rng* noise_rng,
                        std::vector<double>* draw_log = nullptr);

/// Plays one full game; noise streams derive from (seed, "noise", stream).
GameResult run_game(const std::array<PolicyHandle, kEntities>& policies,
                    const DemandSchedule& schedule, const CostParams& costs,
                    std::uint64_t seed, const Conventions& conventions = {});

struct RosterEntry {
  std::string name;
  StermanParams params;
};

using Roster = std::vector<RosterEntry>;

/// CSV with header `name,theta,alpha,beta,s_prime`.
Roster parse_roster(std::istream& in, const std::string& source = "<roster>");
Roster load_roster(const std::string& path);
void write_roster(std::ostream& out, const Roster& roster);

/// The single best-fit "general" row.
Roster default_roster();

std::vector<StermanParams> roster_params(const Roster& roster);

/// Three teammates drawn uniformly with replacement, in seat order.
std::array<StermanParams, 3> bootstrap_team(const std::vector<StermanParams>& roster, Rng& rng);

}  // namespace beergame
