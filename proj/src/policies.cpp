#include "beergame/policies.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace beergame {

void StermanParams::validate() const {
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!in_unit(theta)) throw PolicyError("theta must lie in [0, 1]");
  if (!in_unit(alpha)) throw PolicyError("alpha must lie in [0, 1]");
  if (!in_unit(beta)) throw PolicyError("beta must lie in [0, 1]");
  if (!std::isfinite(s_prime) || s_prime < 0.0) throw PolicyError("s_prime must be >= 0");
}

void PolicyHandle::validate() const {
  if (!std::isfinite(noise.sigma) || noise.sigma < 0.0) {
    throw PolicyError("noise sigma must be >= 0");
  }
  std::visit(
      [](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, StermanParams>) {
          r.validate();
        } else if constexpr (std::is_same_v<T, BaseStockPolicy>) {
          if (!(r.target >= 0.0) || !std::isfinite(r.target)) {
            throw PolicyError("base-stock target must be >= 0");
          }
        } else if constexpr (std::is_same_v<T, FixedOrderPolicy>) {
          if (!(r.quantity >= 0.0) || !std::isfinite(r.quantity)) {
            throw PolicyError("fixed order quantity must be >= 0");
          }
        } else {
          if (!r.decide) throw PolicyError("external policy has no decision function");
        }
      },
      rule);
}

PolicyHandle PolicyHandle::sterman(const StermanParams& p, NoiseSpec noise) {
  PolicyHandle h{p, noise};
  h.validate();
  return h;
}

PolicyHandle PolicyHandle::base_stock(double target) {
  PolicyHandle h{BaseStockPolicy{target}, {}};
  h.validate();
  return h;
}

PolicyHandle PolicyHandle::fixed(double quantity) {
  PolicyHandle h{FixedOrderPolicy{quantity}, {}};
  h.validate();
  return h;
}

PolicyHandle PolicyHandle::external(std::function<double(const GameState&, int)> fn) {
  PolicyHandle h{ExternalPolicy{std::move(fn)}, {}};
  h.validate();
  return h;
}

double update_forecast(double prev_forecast, double observed_order, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw PolicyError("theta must lie in [0, 1]");
  return theta * observed_order + (1.0 - theta) * prev_forecast;
}

double sterman_order(const StermanParams& params, double forecast, double stock,
                     double supply_line, double noise_draw) {
  params.validate();
  const double raw = forecast +
                     params.alpha * (params.s_prime - stock - params.beta * supply_line) +
                     noise_draw;
  return std::max(0.0, raw);
}

double base_stock_order(double target, double inventory_position) {
  if (!(target >= 0.0)) throw PolicyError("base-stock target must be >= 0");
  return std::max(0.0, target - inventory_position);
}

double inject_noise(double intended_order, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw PolicyError("noise sigma must be >= 0");
  if (sigma == 0.0) return intended_order;
  std::normal_distribution<double> gauss(0.0, sigma);
  return std::max(0.0, intended_order + gauss(rng));
}

double stock_level(const GameState& state, int entity) {
  const auto& e = state.entities.at(static_cast<std::size_t>(entity));
  return state.conventions.net_stock ? e.on_hand - e.backlog : e.on_hand;
}

DecisionFn make_decider(const PolicyHandle& policy, Rng* noise_rng,
                        std::vector<double>* draw_log) {
  policy.validate();
  const double sigma = policy.noise.sigma;
  if (sigma > 0.0 && noise_rng == nullptr) {
    throw PolicyError("noisy policy needs a noise stream");
  }
  auto draw = [sigma, noise_rng, draw_log]() {
    if (sigma == 0.0) return 0.0;
    std::normal_distribution<double> gauss(0.0, sigma);
    const double d = gauss(*noise_rng);
    if (draw_log) draw_log->push_back(d);
    return d;
  };

  return std::visit(
      [&](const auto& r) -> DecisionFn {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, StermanParams>) {
          return [r, draw](GameState& s, int i) {
            auto& e = s.entities[static_cast<std::size_t>(i)];
            e.demand_forecast = update_forecast(e.demand_forecast, order_signal(s, i), r.theta);
            return sterman_order(r, e.demand_forecast, stock_level(s, i), supply_line(s, i),
                                 draw());
          };
        } else if constexpr (std::is_same_v<T, BaseStockPolicy>) {
          return [r, draw](GameState& s, int i) {
            const auto& e = s.entities[static_cast<std::size_t>(i)];
            const double position = e.on_hand - e.backlog + on_order(s, i);
            return std::max(0.0, base_stock_order(r.target, position) + draw());
          };
        } else if constexpr (std::is_same_v<T, FixedOrderPolicy>) {
          return [r, draw](GameState&, int) { return std::max(0.0, r.quantity + draw()); };
        } else {
          return [r, draw](GameState& s, int i) {
            return std::max(0.0, r.decide(s, i) + draw());
          };
        }
      },
      policy.rule);
}

GameResult run_game(const std::array<PolicyHandle, kEntities>& policies,
                    const DemandSchedule& schedule, const CostParams& costs,
                    std::uint64_t seed, const Conventions& conventions) {
  std::array<Rng, kEntities> streams;
  std::array<DecisionFn, kEntities> deciders;
  for (int i = 0; i < kEntities; ++i) {
    const auto& p = policies[static_cast<std::size_t>(i)];
    const std::uint64_t stream = p.noise.stream.value_or(static_cast<std::uint64_t>(i));
    streams[static_cast<std::size_t>(i)] = make_rng(seed, "noise", {stream});
    deciders[static_cast<std::size_t>(i)] = make_decider(p, &streams[static_cast<std::size_t>(i)]);
  }
  return run_game(deciders, schedule, costs, conventions);
}

namespace {

double parse_field(const std::string& text, const std::string& source, int line,
                   const char* field) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\r')) --end;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || begin == end) {
    std::ostringstream os;
    os << source << ":" << line << ": field '" << field << "' is not a number: '" << text << "'";
    throw PolicyError(os.str());
  }
  return v;
}

}  // namespace

Roster parse_roster(std::istream& in, const std::string& source) {
  static const char* kFields[] = {"name", "theta", "alpha", "beta", "s_prime"};
  Roster roster;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    if (!header_seen) {
      header_seen = true;
      if (cols.size() != 5 || cols[0] != "name" || cols[1] != "theta" || cols[2] != "alpha" ||
          cols[3] != "beta" || cols[4] != "s_prime") {
        throw PolicyError(source + ":" + std::to_string(lineno) +
                          ": expected header name,theta,alpha,beta,s_prime");
      }
      continue;
    }
    if (cols.size() != 5) {
      throw PolicyError(source + ":" + std::to_string(lineno) + ": expected 5 fields, got " +
                        std::to_string(cols.size()));
    }
    RosterEntry entry;
    entry.name = cols[0];
    if (entry.name.empty()) {
      throw PolicyError(source + ":" + std::to_string(lineno) + ": field 'name' is empty");
    }
    std::array<double, 4> v{};
    for (int f = 0; f < 4; ++f) {
      v[static_cast<std::size_t>(f)] = parse_field(cols[static_cast<std::size_t>(f + 1)], source,
                                                   lineno, kFields[f + 1]);
    }
    entry.params = StermanParams::from_array(v);
    try {
      entry.params.validate();
    } catch (const PolicyError& e) {
      throw PolicyError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
    roster.push_back(std::move(entry));
  }
  if (roster.empty()) throw PolicyError(source + ": empty roster");
  return roster;
}

Roster load_roster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PolicyError("cannot open roster file: " + path);
  return parse_roster(in, path);
}

void write_roster(std::ostream& out, const Roster& roster) {
  out << "name,theta,alpha,beta,s_prime\n";
  out << std::setprecision(17);
  for (const auto& r : roster) {
    out << r.name << ',' << r.params.theta << ',' << r.params.alpha << ',' << r.params.beta << ','
        << r.params.s_prime << '\n';
  }
}

Roster default_roster() { return {RosterEntry{"general", kGeneralParams}}; }

std::vector<StermanParams> roster_params(const Roster& roster) {
  std::vector<StermanParams> out;
  out.reserve(roster.size());
  for (const auto& r : roster) out.push_back(r.params);
  return out;
}

std::array<StermanParams, 3> bootstrap_team(const std::vector<StermanParams>& roster, Rng& rng) {
  if (roster.empty()) throw PolicyError("cannot draw a team from an empty roster");
  std::uniform_int_distribution<std::size_t> pick(0, roster.size() - 1);
  std::array<StermanParams, 3> team;
  for (auto& seat : team) seat = roster[pick(rng)];
  return team;
}

}  // namespace beergame
