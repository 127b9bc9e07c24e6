#include "beergame/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace beergame {

namespace {

const std::set<std::string> kCommands{"simulate", "optimize", "train", "evaluate", "sweep", "report"};

/// Validation failure tied to a dotted field path, resolved to a line later.
struct FieldError : ConfigError {
  std::string path;
  FieldError(std::string p, const std::string& msg) : ConfigError(p + ": " + msg), path(std::move(p)) {}
};

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw FieldError(path, msg);
}

}  // namespace

PolicyHandle SeatSpec::to_policy() const {
  if (kind == "sterman") return PolicyHandle::sterman(params, {sigma, std::nullopt});
  PolicyHandle h = kind == "base_stock" ? PolicyHandle::base_stock(target) : PolicyHandle::fixed(quantity);
  h.noise.sigma = sigma;
  h.validate();
  return h;
}

void RunConfig::validate() const {
  require(command.empty() || kCommands.contains(command), "command",
          "unknown command '" + command + "' (simulate, optimize, train, evaluate, sweep, report)");
  require(!out.empty(), "out", "output directory is empty");
  require(jobs >= 1, "jobs", "must be >= 1");
  require(schedule.horizon >= 1, "game.horizon", "must be >= 1");
  require(std::isfinite(schedule.pre_step_demand) && schedule.pre_step_demand >= 0,
          "game.pre_step_demand", "must be >= 0");
  require(std::isfinite(schedule.post_step_demand) && schedule.post_step_demand >= 0,
          "game.post_step_demand", "must be >= 0");
  require(schedule.step_period >= 0, "game.step_period", "must be >= 0");
  require(std::isfinite(costs.holding) && costs.holding >= 0, "game.holding", "must be >= 0");
  require(std::isfinite(costs.backorder) && costs.backorder >= 0, "game.backorder", "must be >= 0");
  require(conventions.factory_lead == 3 || conventions.factory_lead == 4, "conventions.factory_lead",
          "must be 3 or 4");
  require(conventions.customer_order_delay == 0 || conventions.customer_order_delay == 2,
          "conventions.customer_order_delay", "must be 0 or 2");

  require(simulate.seats.size() == kEntities, "simulate.seats", "needs exactly 4 entries");
  for (std::size_t i = 0; i < simulate.seats.size(); ++i) {
    const auto& s = simulate.seats[i];
    const std::string p = "simulate.seats." + std::to_string(i);
    require(s.kind == "sterman" || s.kind == "base_stock" || s.kind == "fixed", p + ".kind",
            "must be sterman, base_stock or fixed");
    try {
      s.to_policy();
    } catch (const PolicyError& e) {
      throw FieldError(p, e.what());
    }
  }

  auto check_positions = [](const std::vector<int>& v, const std::string& path) {
    require(!v.empty(), path, "must not be empty");
    for (int x : v) require(x >= 0 && x < kEntities, path, "positions are 0..3");
  };
  check_positions(optimize.positions, "optimize.positions");
  require(optimize.starts >= 1, "optimize.starts", "must be >= 1");
  require(optimize.s_prime_cap >= 100.0, "optimize.s_prime_cap", "must be >= 100");

  require(train.position >= 0 && train.position < kEntities, "train.position", "positions are 0..3");
  require(train.min_offset <= train.max_offset, "train.min_offset", "must not exceed max_offset");
  require(train.eval_episodes >= 0, "train.eval_episodes", "must be >= 0");
  try {
    train.train.validate();
  } catch (const RlError& e) {
    // messages lead with the offending field name
    const std::string msg = e.what();
    throw FieldError("train." + msg.substr(0, msg.find(' ')), msg);
  }

  require(evaluate.episodes >= 1, "evaluate.episodes", "must be >= 1");
  if (command == "evaluate") require(!evaluate.weights.empty(), "evaluate.weights", "a weights file is required");

  require(std::isfinite(sweep.sigma_max) && sweep.sigma_max >= 0, "sweep.sigma_max", "must be >= 0");
  require(sweep.sigma_step > 0, "sweep.sigma_step", "must be > 0");
  require(sweep.reps >= 1, "sweep.reps", "must be >= 1");
  check_positions(sweep.positions, "sweep.positions");
  require(!sweep.kinds.empty(), "sweep.kinds", "must not be empty");
  for (const auto& k : sweep.kinds) {
    require(k == "model_based" || k == "model_free", "sweep.kinds", "unknown agent kind '" + k + "'");
  }
  if (command == "report") require(!report.summary.empty(), "report.summary", "a summary CSV is required");

  try {
    env_config({kGeneralParams}).validate();
  } catch (const RlError& e) {
    const std::string msg = e.what();
    throw FieldError("train." + msg.substr(0, msg.find(' ')), msg);
  }
}

EnvConfig RunConfig::env_config(const std::vector<StermanParams>& roster) const {
  EnvConfig e;
  e.agent_position = train.position;
  e.teammate_roster = roster;
  e.horizon_min = train.horizon_min;
  e.horizon_max = train.horizon_max;
  e.eval_horizon = schedule.horizon;
  e.window = train.window;
  e.action_offsets.clear();
  for (int o = train.min_offset; o <= train.max_offset; ++o) e.action_offsets.push_back(o);
  e.obs_scale = train.obs_scale;
  e.teammate_sigma = train.teammate_sigma;
  e.schedule = schedule;
  e.costs = costs;
  e.conventions = conventions;
  return e;
}

// ---------------------------------------------------------------------------
// parsing

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    const int line = node.Mark().is_null() ? 0 : node.Mark().line + 1;
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
  }

  void remember(const std::string& path, const YAML::Node& node) {
    if (!node.Mark().is_null()) lines_[path] = node.Mark().line + 1;
  }

  int line_of(const std::string& path) const {
    // fall back to the closest enclosing section
    std::string p = path;
    while (true) {
      auto it = lines_.find(p);
      if (it != lines_.end()) return it->second;
      const auto dot = p.rfind('.');
      if (dot == std::string::npos) return 0;
      p.erase(dot);
    }
  }

  const std::string& source() const { return source_; }

  /// Rejects keys outside `allowed`, then calls `fn(key, value)` for each.
  template <typename F>
  void each_key(const YAML::Node& map, const std::string& section, const std::set<std::string>& allowed,
                F&& fn) {
    if (!map.IsMap()) fail(map, "'" + section + "' must be a mapping");
    for (const auto& kv : map) {
      const std::string key = kv.first.as<std::string>();
      const std::string path = section.empty() ? key : section + "." + key;
      if (!allowed.contains(key)) {
        fail(kv.first, "unknown key '" + key + "'" + (section.empty() ? "" : " in section '" + section + "'"));
      }
      remember(path, kv.first);
      fn(key, kv.second, path);
    }
  }

  template <typename T>
  T scalar(const YAML::Node& node, const std::string& path) {
    if (!node.IsScalar()) fail(node, "'" + path + "' must be a scalar");
    const std::string text = node.Scalar();
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true") return true;
      if (text == "false") return false;
      fail(node, "'" + path + "' must be true or false, got '" + text + "'");
    } else {
      T v{};
      const char* b = text.data();
      const char* e = b + text.size();
      auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || ptr != e || b == e) {
        fail(node, "'" + path + "' is not a valid " + (std::is_floating_point_v<T> ? "number" : "integer") +
                       ": '" + text + "'");
      }
      return v;
    }
  }

  template <typename T>
  std::vector<T> list(const YAML::Node& node, const std::string& path) {
    if (!node.IsSequence()) fail(node, "'" + path + "' must be a list");
    std::vector<T> out;
    for (const auto& item : node) out.push_back(scalar<T>(item, path));
    return out;
  }

 private:
  std::string source_;
  std::map<std::string, int> lines_;
};

void parse_seat(Reader& r, const YAML::Node& n, const std::string& path, SeatSpec& s) {
  r.each_key(n, path, {"kind", "theta", "alpha", "beta", "s_prime", "target", "quantity", "sigma"},
             [&](const std::string& k, const YAML::Node& v, const std::string& p) {
               if (k == "kind") s.kind = r.scalar<std::string>(v, p);
               else if (k == "theta") s.params.theta = r.scalar<double>(v, p);
               else if (k == "alpha") s.params.alpha = r.scalar<double>(v, p);
               else if (k == "beta") s.params.beta = r.scalar<double>(v, p);
               else if (k == "s_prime") s.params.s_prime = r.scalar<double>(v, p);
               else if (k == "target") s.target = r.scalar<double>(v, p);
               else if (k == "quantity") s.quantity = r.scalar<double>(v, p);
               else s.sigma = r.scalar<double>(v, p);
             });
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  RunConfig c;
  Reader r(source);
  if (root.IsNull()) {
    c.validate();
    return c;
  }

  r.each_key(
      root, "",
      {"command", "seed", "out", "jobs", "roster", "game", "conventions", "simulate", "optimize", "train",
       "evaluate", "sweep", "report"},
      [&](const std::string& key, const YAML::Node& v, const std::string& path) {
        if (key == "command") c.command = r.scalar<std::string>(v, path);
        else if (key == "seed") c.seed = r.scalar<std::uint64_t>(v, path);
        else if (key == "out") c.out = r.scalar<std::string>(v, path);
        else if (key == "jobs") c.jobs = r.scalar<int>(v, path);
        else if (key == "roster") c.roster = r.scalar<std::string>(v, path);
        else if (key == "game") {
          r.each_key(v, path, {"horizon", "pre_step_demand", "post_step_demand", "step_period", "holding", "backorder"},
                     [&](const std::string& k, const YAML::Node& x, const std::string& p) {
                       if (k == "horizon") c.schedule.horizon = r.scalar<int>(x, p);
                       else if (k == "pre_step_demand") c.schedule.pre_step_demand = r.scalar<double>(x, p);
                       else if (k == "post_step_demand") c.schedule.post_step_demand = r.scalar<double>(x, p);
                       else if (k == "step_period") c.schedule.step_period = r.scalar<int>(x, p);
                       else if (k == "holding") c.costs.holding = r.scalar<double>(x, p);
                       else c.costs.backorder = r.scalar<double>(x, p);
                     });
        } else if (key == "conventions") {
          auto& cv = c.conventions;
          r.each_key(v, path,
                     {"factory_lead", "customer_order_delay", "supply_line_orders", "supply_line_backlog",
                      "net_stock", "upstream_signal_lag"},
                     [&](const std::string& k, const YAML::Node& x, const std::string& p) {
                       if (k == "factory_lead") cv.factory_lead = r.scalar<int>(x, p);
                       else if (k == "customer_order_delay") cv.customer_order_delay = r.scalar<int>(x, p);
                       else if (k == "supply_line_orders") cv.supply_line_orders = r.scalar<bool>(x, p);
                       else if (k == "supply_line_backlog") cv.supply_line_backlog = r.scalar<bool>(x, p);
                       else if (k == "net_stock") cv.net_stock = r.scalar<bool>(x, p);
                       else cv.upstream_signal_lag = r.scalar<bool>(x, p);
                     });
        } else if (key == "simulate") {
          r.each_key(v, path, {"seats"}, [&](const std::string&, const YAML::Node& x, const std::string& p) {
            if (!x.IsSequence()) r.fail(x, "'" + p + "' must be a list");
            c.simulate.seats.clear();
            for (std::size_t i = 0; i < x.size(); ++i) {
              const std::string sp = p + "." + std::to_string(i);
              r.remember(sp, x[i]);
              SeatSpec s;
              parse_seat(r, x[i], sp, s);
              c.simulate.seats.push_back(s);
            }
          });
        } else if (key == "optimize") {
          r.each_key(v, path, {"positions", "starts", "s_prime_cap"},
                     [&](const std::string& k, const YAML::Node& x, const std::string& p) {
                       if (k == "positions") c.optimize.positions = r.list<int>(x, p);
                       else if (k == "starts") c.optimize.starts = r.scalar<int>(x, p);
                       else c.optimize.s_prime_cap = r.scalar<double>(x, p);
                     });
        } else if (key == "train") {
          auto& t = c.train;
          auto& tc = t.train;
          r.each_key(
              v, path,
              {"position", "total_env_steps", "batch_size", "gamma", "target_sync_interval", "learning_rate",
               "epsilon_start", "epsilon_end", "temperature_start", "temperature_end", "decay_fraction",
               "reward_scale", "warmup_steps", "replay_capacity", "hidden", "horizon_min", "horizon_max",
               "window", "min_offset", "max_offset", "obs_scale", "teammate_sigma", "eval_episodes"},
              [&](const std::string& k, const YAML::Node& x, const std::string& p) {
                if (k == "position") t.position = r.scalar<int>(x, p);
                else if (k == "total_env_steps") tc.total_env_steps = r.scalar<long>(x, p);
                else if (k == "batch_size") tc.batch_size = r.scalar<int>(x, p);
                else if (k == "gamma") tc.gamma = r.scalar<double>(x, p);
                else if (k == "target_sync_interval") tc.target_sync_interval = r.scalar<int>(x, p);
                else if (k == "learning_rate") tc.learning_rate = r.scalar<double>(x, p);
                else if (k == "epsilon_start") tc.epsilon_start = r.scalar<double>(x, p);
                else if (k == "epsilon_end") tc.epsilon_end = r.scalar<double>(x, p);
                else if (k == "temperature_start") tc.temperature_start = r.scalar<double>(x, p);
                else if (k == "temperature_end") tc.temperature_end = r.scalar<double>(x, p);
                else if (k == "decay_fraction") tc.decay_fraction = r.scalar<double>(x, p);
                else if (k == "reward_scale") tc.reward_scale = r.scalar<double>(x, p);
                else if (k == "warmup_steps") tc.warmup_steps = r.scalar<long>(x, p);
                else if (k == "replay_capacity") tc.replay_capacity = r.scalar<std::size_t>(x, p);
                else if (k == "hidden") tc.hidden = r.list<int>(x, p);
                else if (k == "horizon_min") t.horizon_min = r.scalar<int>(x, p);
                else if (k == "horizon_max") t.horizon_max = r.scalar<int>(x, p);
                else if (k == "window") t.window = r.scalar<int>(x, p);
                else if (k == "min_offset") t.min_offset = r.scalar<int>(x, p);
                else if (k == "max_offset") t.max_offset = r.scalar<int>(x, p);
                else if (k == "obs_scale") t.obs_scale = r.scalar<double>(x, p);
                else if (k == "teammate_sigma") t.teammate_sigma = r.scalar<double>(x, p);
                else t.eval_episodes = r.scalar<int>(x, p);
              });
        } else if (key == "evaluate") {
          r.each_key(v, path, {"weights", "episodes"},
                     [&](const std::string& k, const YAML::Node& x, const std::string& p) {
                       if (k == "weights") c.evaluate.weights = r.scalar<std::string>(x, p);
                       else c.evaluate.episodes = r.scalar<int>(x, p);
                     });
        } else if (key == "sweep") {
          auto& s = c.sweep;
          r.each_key(v, path,
                     {"sigma_max", "sigma_step", "reps", "positions", "kinds", "model_based", "weights",
                      "general_baseline"},
                     [&](const std::string& k, const YAML::Node& x, const std::string& p) {
                       if (k == "sigma_max") s.sigma_max = r.scalar<double>(x, p);
                       else if (k == "sigma_step") s.sigma_step = r.scalar<double>(x, p);
                       else if (k == "reps") s.reps = r.scalar<int>(x, p);
                       else if (k == "positions") s.positions = r.list<int>(x, p);
                       else if (k == "kinds") s.kinds = r.list<std::string>(x, p);
                       else if (k == "model_based") s.model_based = r.scalar<std::string>(x, p);
                       else if (k == "weights") s.weights = r.list<std::string>(x, p);
                       else s.general_baseline = r.scalar<bool>(x, p);
                     });
        } else {
          r.each_key(v, path, {"summary"}, [&](const std::string&, const YAML::Node& x, const std::string& p) {
            c.report.summary = r.scalar<std::string>(x, p);
          });
        }
      });

  try {
    c.validate();
  } catch (const FieldError& e) {
    throw ConfigError(source + ":" + std::to_string(r.line_of(e.path)) + ": " + e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

RunConfig apply_overrides(RunConfig c, const FlagOverrides& f) {
  if (f.command) c.command = *f.command;
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.roster) c.roster = *f.roster;
  if (f.position) {
    c.train.position = *f.position;
    c.optimize.positions = {*f.position};
    c.sweep.positions = {*f.position};
  }
  if (f.sigma_max) c.sweep.sigma_max = *f.sigma_max;
  if (f.reps) c.sweep.reps = *f.reps;
  if (!f.weights.empty()) {
    c.evaluate.weights = f.weights.front();
    c.sweep.weights = f.weights;
  }
  if (f.factory_lead) c.conventions.factory_lead = *f.factory_lead;
  if (f.customer_order_delay) c.conventions.customer_order_delay = *f.customer_order_delay;
  if (f.supply_line_orders) c.conventions.supply_line_orders = *f.supply_line_orders;
  if (f.supply_line_backlog) c.conventions.supply_line_backlog = *f.supply_line_backlog;
  if (f.net_stock) c.conventions.net_stock = *f.net_stock;
  if (f.upstream_signal_lag) c.conventions.upstream_signal_lag = *f.upstream_signal_lag;
  try {
    c.validate();
  } catch (const FieldError& e) {
    throw ConfigError(std::string("after command-line overrides: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// emission

namespace {

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  // keep floats recognisable as floats
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

template <typename T>
std::string flow(const std::vector<T>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_same_v<T, std::string>) s += quoted(v[i]);
    else s += std::to_string(v[i]);
  }
  return s + "]";
}

const char* b(bool v) { return v ? "true" : "false"; }

}  // namespace

std::string to_yaml(const RunConfig& c) {
  std::ostringstream o;
  o << "command: " << c.command << "\n";
  o << "seed: " << c.seed << "\n";
  o << "out: " << quoted(c.out) << "\n";
  o << "jobs: " << c.jobs << "\n";
  o << "roster: " << quoted(c.roster) << "\n";
  o << "game:\n"
    << "  horizon: " << c.schedule.horizon << "\n"
    << "  pre_step_demand: " << num(c.schedule.pre_step_demand) << "\n"
    << "  post_step_demand: " << num(c.schedule.post_step_demand) << "\n"
    << "  step_period: " << c.schedule.step_period << "\n"
    << "  holding: " << num(c.costs.holding) << "\n"
    << "  backorder: " << num(c.costs.backorder) << "\n";
  const auto& cv = c.conventions;
  o << "conventions:\n"
    << "  factory_lead: " << cv.factory_lead << "\n"
    << "  customer_order_delay: " << cv.customer_order_delay << "\n"
    << "  supply_line_orders: " << b(cv.supply_line_orders) << "\n"
    << "  supply_line_backlog: " << b(cv.supply_line_backlog) << "\n"
    << "  net_stock: " << b(cv.net_stock) << "\n"
    << "  upstream_signal_lag: " << b(cv.upstream_signal_lag) << "\n";
  o << "simulate:\n  seats:\n";
  for (const auto& s : c.simulate.seats) {
    o << "    - kind: " << s.kind << "\n"
      << "      theta: " << num(s.params.theta) << "\n"
      << "      alpha: " << num(s.params.alpha) << "\n"
      << "      beta: " << num(s.params.beta) << "\n"
      << "      s_prime: " << num(s.params.s_prime) << "\n"
      << "      target: " << num(s.target) << "\n"
      << "      quantity: " << num(s.quantity) << "\n"
      << "      sigma: " << num(s.sigma) << "\n";
  }
  o << "optimize:\n"
    << "  positions: " << flow(c.optimize.positions) << "\n"
    << "  starts: " << c.optimize.starts << "\n"
    << "  s_prime_cap: " << num(c.optimize.s_prime_cap) << "\n";
  const auto& t = c.train;
  const auto& tc = t.train;
  o << "train:\n"
    << "  position: " << t.position << "\n"
    << "  total_env_steps: " << tc.total_env_steps << "\n"
    << "  batch_size: " << tc.batch_size << "\n"
    << "  gamma: " << num(tc.gamma) << "\n"
    << "  target_sync_interval: " << tc.target_sync_interval << "\n"
    << "  learning_rate: " << num(tc.learning_rate) << "\n"
    << "  epsilon_start: " << num(tc.epsilon_start) << "\n"
    << "  epsilon_end: " << num(tc.epsilon_end) << "\n"
    << "  temperature_start: " << num(tc.temperature_start) << "\n"
    << "  temperature_end: " << num(tc.temperature_end) << "\n"
    << "  decay_fraction: " << num(tc.decay_fraction) << "\n"
    << "  reward_scale: " << num(tc.reward_scale) << "\n"
    << "  warmup_steps: " << tc.warmup_steps << "\n"
    << "  replay_capacity: " << tc.replay_capacity << "\n"
    << "  hidden: " << flow(tc.hidden) << "\n"
    << "  horizon_min: " << t.horizon_min << "\n"
    << "  horizon_max: " << t.horizon_max << "\n"
    << "  window: " << t.window << "\n"
    << "  min_offset: " << t.min_offset << "\n"
    << "  max_offset: " << t.max_offset << "\n"
    << "  obs_scale: " << num(t.obs_scale) << "\n"
    << "  teammate_sigma: " << num(t.teammate_sigma) << "\n"
    << "  eval_episodes: " << t.eval_episodes << "\n";
  o << "evaluate:\n"
    << "  weights: " << quoted(c.evaluate.weights) << "\n"
    << "  episodes: " << c.evaluate.episodes << "\n";
  const auto& s = c.sweep;
  o << "sweep:\n"
    << "  sigma_max: " << num(s.sigma_max) << "\n"
    << "  sigma_step: " << num(s.sigma_step) << "\n"
    << "  reps: " << s.reps << "\n"
    << "  positions: " << flow(s.positions) << "\n"
    << "  kinds: " << flow(s.kinds) << "\n"
    << "  model_based: " << quoted(s.model_based) << "\n"
    << "  weights: " << flow(s.weights) << "\n"
    << "  general_baseline: " << b(s.general_baseline) << "\n";
  o << "report:\n  summary: " << quoted(c.report.summary) << "\n";
  return o.str();
}

}  // namespace beergame
