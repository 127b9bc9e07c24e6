#include "beergame/engine.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace beergame {

namespace {

constexpr int kShippingSlots = 2;
constexpr int kOrderSlots = 2;

void check_entity(int entity) {
  if (entity < 0 || entity >= kEntities) {
    throw EngineError("entity index out of range: " + std::to_string(entity));
  }
}

double sum(const std::deque<double>& slots) {
  return std::accumulate(slots.begin(), slots.end(), 0.0);
}

}  // namespace

std::string_view role_name(int entity) {
  static constexpr std::array<std::string_view, kEntities> names{
      "retailer", "wholesaler", "distributor", "factory"};
  check_entity(entity);
  return names[static_cast<std::size_t>(entity)];
}

void CostParams::validate() const {
  if (!(holding > 0.0) || !(backorder > 0.0) || !std::isfinite(holding) ||
      !std::isfinite(backorder)) {
    throw EngineError("cost parameters must be finite and strictly positive");
  }
}

void DemandSchedule::validate() const {
  if (step_period < 1) throw EngineError("step_period must be >= 1");
  if (horizon < step_period) throw EngineError("horizon must be >= step_period");
  if (!(pre_step_demand >= 0.0) || !(post_step_demand >= 0.0) ||
      !std::isfinite(pre_step_demand) || !std::isfinite(post_step_demand)) {
    throw EngineError("demand levels must be finite and non-negative");
  }
}

void Conventions::validate() const {
  if (factory_lead != 3 && factory_lead != 4) {
    throw EngineError("factory_lead must be 3 or 4");
  }
  if (customer_order_delay != 0 && customer_order_delay != 2) {
    throw EngineError("customer_order_delay must be 0 or 2");
  }
}

std::string Conventions::describe() const {
  std::ostringstream os;
  os << "factory_lead=" << factory_lead
     << " customer_order_delay=" << customer_order_delay
     << " supply_line_orders=" << supply_line_orders
     << " supply_line_backlog=" << supply_line_backlog
     << " net_stock=" << net_stock
     << " upstream_signal_lag=" << upstream_signal_lag;
  return os.str();
}

std::vector<Conventions> Conventions::all() {
  std::vector<Conventions> out;
  for (int lead : {4, 3})
    for (int delay : {0, 2})
      for (bool orders : {false, true})
        for (bool backlog : {false, true})
          for (bool net : {true, false})
            for (bool lag : {true, false}) {
              out.push_back(Conventions{lead, delay, orders, backlog, net, lag});
            }
  return out;
}

double PeriodRecord::team_cost() const {
  double c = 0.0;
  for (const auto& e : entities) c += e.period_cost;
  return c;
}

GameState init_state(const DemandSchedule& schedule, const CostParams& costs,
                     const Conventions& conventions) {
  schedule.validate();
  costs.validate();
  conventions.validate();

  GameState s;
  s.schedule = schedule;
  s.costs = costs;
  s.conventions = conventions;
  const double d = schedule.pre_step_demand;
  for (int i = 0; i < kEntities; ++i) {
    auto& e = s.entities[static_cast<std::size_t>(i)];
    e.on_hand = 12.0;
    e.backlog = 0.0;
    e.inbound_shipping.assign(kShippingSlots, d);
    const int order_slots = i == 0 ? conventions.customer_order_delay : kOrderSlots;
    e.inbound_orders.assign(static_cast<std::size_t>(order_slots), d);
    if (i == kEntities - 1) {
      e.production.assign(static_cast<std::size_t>(conventions.factory_lead - kShippingSlots), d);
    }
    e.demand_forecast = d;
    e.last_incoming_order = d;
    e.prior_incoming_order = d;
    e.last_received = d;
    e.last_shipped = d;
    e.last_order_placed = d;
  }
  return s;
}

std::array<double, kEntities> begin_round(GameState& state) {
  if (state.round_open) throw EngineError("round already open; place orders first");
  if (state.period >= state.schedule.horizon) {
    throw EngineError("cannot step past horizon " + std::to_string(state.schedule.horizon));
  }

  PeriodRecord rec;
  rec.period = state.period;
  auto& ents = state.entities;

  // 1. receive
  for (int i = 0; i < kEntities; ++i) {
    auto& e = ents[static_cast<std::size_t>(i)];
    const double arrived = e.inbound_shipping.front();
    e.inbound_shipping.pop_front();
    e.on_hand += arrived;
    e.last_received = arrived;
    rec.entities[static_cast<std::size_t>(i)].received = arrived;
  }

  // 2. fill
  ents[0].inbound_orders.push_back(state.schedule.demand_at(state.period));
  std::array<double, kEntities> shipped{};
  for (int i = 0; i < kEntities; ++i) {
    auto& e = ents[static_cast<std::size_t>(i)];
    const double incoming = e.inbound_orders.front();
    const double owed = e.backlog + incoming;
    const double out = std::min(e.on_hand, owed);
    e.on_hand -= out;
    e.backlog = owed - out;
    e.prior_incoming_order = e.last_incoming_order;
    e.last_incoming_order = incoming;
    e.last_shipped = out;
    shipped[static_cast<std::size_t>(i)] = out;
    auto& r = rec.entities[static_cast<std::size_t>(i)];
    r.incoming_order = incoming;
    r.shipped = out;
  }
  for (int i = 1; i < kEntities; ++i) {
    ents[static_cast<std::size_t>(i - 1)].inbound_shipping.push_back(shipped[static_cast<std::size_t>(i)]);
  }
  auto& factory = ents[kEntities - 1];
  factory.inbound_shipping.push_back(factory.production.front());
  factory.production.pop_front();

  // 3. record
  std::array<double, kEntities> costs{};
  for (int i = 0; i < kEntities; ++i) {
    const auto& e = ents[static_cast<std::size_t>(i)];
    const double c = state.costs.holding * e.on_hand + state.costs.backorder * e.backlog;
    costs[static_cast<std::size_t>(i)] = c;
    auto& r = rec.entities[static_cast<std::size_t>(i)];
    r.on_hand = e.on_hand;
    r.backlog = e.backlog;
    r.period_cost = c;
    state.cumulative_cost += c;
  }

  // 4. advance order slips
  for (auto& e : ents) e.inbound_orders.pop_front();

  state.trajectory.push_back(rec);
  state.round_open = true;
  return costs;
}

void place_orders(GameState& state, const std::array<double, kEntities>& orders) {
  if (!state.round_open) throw EngineError("no open round; call begin_round first");
  for (int i = 0; i < kEntities; ++i) {
    const double o = orders[static_cast<std::size_t>(i)];
    if (!std::isfinite(o) || o < 0.0) {
      std::ostringstream os;
      os << "order for " << role_name(i) << " must be finite and >= 0, got " << o;
      throw EngineError(os.str());
    }
  }
  auto& ents = state.entities;
  for (int i = 0; i < kEntities; ++i) {
    const double o = orders[static_cast<std::size_t>(i)];
    ents[static_cast<std::size_t>(i)].last_order_placed = o;
    state.trajectory.back().entities[static_cast<std::size_t>(i)].order_placed = o;
    if (i + 1 < kEntities) {
      ents[static_cast<std::size_t>(i + 1)].inbound_orders.push_back(o);
    } else {
      ents[static_cast<std::size_t>(i)].production.push_back(o);
    }
  }
  state.round_open = false;
  ++state.period;
}

std::array<double, kEntities> advance_round(GameState& state,
                                            const std::array<double, kEntities>& orders) {
  for (double o : orders) {
    if (!std::isfinite(o) || o < 0.0) throw EngineError("orders must be finite and >= 0");
  }
  auto costs = begin_round(state);
  place_orders(state, orders);
  return costs;
}

double supply_line(const GameState& state, int entity) {
  check_entity(entity);
  const auto& c = state.conventions;
  const auto& e = state.entities[static_cast<std::size_t>(entity)];
  double sl = sum(e.inbound_shipping) + sum(e.production);
  if (entity + 1 < kEntities) {
    const auto& up = state.entities[static_cast<std::size_t>(entity + 1)];
    if (c.supply_line_orders) sl += sum(up.inbound_orders);
    if (c.supply_line_backlog) sl += up.backlog;
  }
  return sl;
}

double on_order(const GameState& state, int entity) {
  check_entity(entity);
  const auto& e = state.entities[static_cast<std::size_t>(entity)];
  double sl = sum(e.inbound_shipping) + sum(e.production);
  if (entity + 1 < kEntities) {
    const auto& up = state.entities[static_cast<std::size_t>(entity + 1)];
    sl += sum(up.inbound_orders) + up.backlog;
  }
  return sl;
}

double order_signal(const GameState& state, int entity) {
  check_entity(entity);
  const auto& e = state.entities[static_cast<std::size_t>(entity)];
  if (entity > 0 && state.conventions.upstream_signal_lag) return e.prior_incoming_order;
  return e.last_incoming_order;
}

double total_units(const GameState& state) {
  double u = 0.0;
  for (const auto& e : state.entities) {
    u += e.on_hand + sum(e.inbound_shipping) + sum(e.production);
  }
  for (int i = 1; i < kEntities; ++i) u += sum(state.entities[static_cast<std::size_t>(i)].inbound_orders);
  return u;
}

double team_cost(const Trajectory& trajectory) {
  double c = 0.0;
  for (const auto& rec : trajectory) c += rec.team_cost();
  return c;
}

GameResult run_game(const std::array<DecisionFn, kEntities>& deciders,
                    const DemandSchedule& schedule, const CostParams& costs,
                    const Conventions& conventions) {
  GameState state = init_state(schedule, costs, conventions);
  std::array<double, kEntities> orders{};
  while (state.period < schedule.horizon) {
    begin_round(state);
    for (int i = 0; i < kEntities; ++i) {
      orders[static_cast<std::size_t>(i)] = deciders[static_cast<std::size_t>(i)](state, i);
    }
    place_orders(state, orders);
  }
  return GameResult{std::move(state.trajectory), state.cumulative_cost};
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  out << "period,entity,incoming_order,shipped,on_hand,backlog,order_placed,period_cost\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& rec : trajectory) {
    for (int i = 0; i < kEntities; ++i) {
      const auto& e = rec.entities[static_cast<std::size_t>(i)];
      out << rec.period << ',' << i << ',' << e.incoming_order << ',' << e.shipped << ','
          << e.on_hand << ',' << e.backlog << ',' << e.order_placed << ',' << e.period_cost
          << '\n';
    }
  }
}

}  // namespace beergame
