#include "beergame/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "beergame/rng.hpp"

namespace beergame {

void Box::validate() const {
  if (lower.size() != upper.size() || lower.empty()) {
    throw OptimizeError("box bounds must be non-empty and of equal length");
  }
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || lower[i] > upper[i]) {
      throw OptimizeError("invalid bounds on coordinate " + std::to_string(i));
    }
  }
}

std::vector<double> Box::project(std::span<const double> x) const {
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lower[i], upper[i]);
  return out;
}

bool Box::contains(std::span<const double> x) const {
  if (x.size() != dim()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
  }
  return true;
}

std::vector<double> finite_diff_gradient(const ObjectiveFn& f, std::span<const double> x,
                                         double h_rel, const Box* box) {
  if (!(h_rel > 0.0)) throw OptimizeError("h_rel must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size(), 0.0);
  auto eval = [&](std::size_t i) {
    const double v = f(probe);
    if (!std::isfinite(v)) {
      throw OptimizeError("non-finite objective while differentiating coordinate " +
                          std::to_string(i));
    }
    return v;
  };
  double f0 = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = h_rel * std::max(std::abs(x[i]), 1.0);
    const bool fwd = box == nullptr || x[i] + h <= box->upper[i];
    const bool bwd = box == nullptr || x[i] - h >= box->lower[i];
    if (fwd && bwd) {
      probe[i] = x[i] + h;
      const double fp = eval(i);
      probe[i] = x[i] - h;
      const double fm = eval(i);
      grad[i] = (fp - fm) / (2.0 * h);
    } else if (fwd || bwd) {
      if (std::isnan(f0)) {
        probe[i] = x[i];
        f0 = eval(i);
      }
      probe[i] = fwd ? x[i] + h : x[i] - h;
      const double fs = eval(i);
      grad[i] = fwd ? (fs - f0) / h : (f0 - fs) / h;
    }
    probe[i] = x[i];
  }
  return grad;
}

std::vector<std::vector<double>> quasi_random_starts(const Box& box, int count,
                                                     std::uint64_t seed) {
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  box.validate();
  const std::size_t n = box.dim();
  if (n > std::size(kPrimes)) throw OptimizeError("quasi-random starts support up to 12 dims");
  Rng rng = make_rng(seed, "halton-shift");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> shift(n);
  for (auto& s : shift) s = unif(rng);

  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    std::vector<double> x(n);
    for (std::size_t d = 0; d < n; ++d) {
      const int base = kPrimes[d];
      double inv = 1.0 / base, r = 0.0, frac = inv;
      for (int i = k + 1; i > 0; i /= base) {
        r += (i % base) * frac;
        frac *= inv;
      }
      double u = r + shift[d];
      u -= std::floor(u);
      x[d] = std::clamp(box.lower[d] + u * (box.upper[d] - box.lower[d]), box.lower[d],
                        box.upper[d]);
    }
    out.push_back(std::move(x));
  }
  return out;
}

namespace {

/// Objective seen in unit-cube coordinates u, x = lower + u * range.
class UnitProblem {
 public:
  UnitProblem(const ObjectiveFn& f, const Box& box, double h_rel)
      : f_(f), box_(box), h_rel_(h_rel) {}

  std::size_t dim() const { return box_.dim(); }

  std::vector<double> to_x(std::span<const double> u) const {
    std::vector<double> x(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      x[i] = std::clamp(box_.lower[i] + u[i] * range(i), box_.lower[i], box_.upper[i]);
    }
    return x;
  }

  std::vector<double> to_u(std::span<const double> x) const {
    std::vector<double> u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      u[i] = range(i) > 0.0 ? std::clamp((x[i] - box_.lower[i]) / range(i), 0.0, 1.0) : 0.0;
    }
    return u;
  }

  double value(std::span<const double> u) {
    ++evaluations;
    return f_(to_x(u));
  }

  std::vector<double> gradient(std::span<const double> u) {
    const auto x = to_x(u);
    ObjectiveFn counted = [this](std::span<const double> p) {
      ++evaluations;
      return f_(p);
    };
    auto g = finite_diff_gradient(counted, x, h_rel_, &box_);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= range(i);
    return g;
  }

  double range(std::size_t i) const { return box_.upper[i] - box_.lower[i]; }

  int evaluations = 0;

 private:
  const ObjectiveFn& f_;
  const Box& box_;
  double h_rel_;
};

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

struct LocalResult {
  std::vector<double> u;
  double value = 0.0;
  int iterations = 0;
};

bool pinned(const UnitProblem& p, std::span<const double> u, std::span<const double> g,
            std::size_t i) {
  return p.range(i) == 0.0 || (u[i] <= 0.0 && g[i] > 0.0) || (u[i] >= 1.0 && g[i] < 0.0);
}

LocalResult projected_lbfgs(UnitProblem& p, std::vector<double> u, double fu,
                            const MinimizeOptions& opt) {
  const std::size_t n = p.dim();
  std::vector<std::vector<double>> s_hist, y_hist;
  auto g = p.gradient(u);
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    double pg_norm = 0.0;
    std::vector<double> gf(n);
    for (std::size_t i = 0; i < n; ++i) {
      gf[i] = pinned(p, u, g, i) ? 0.0 : g[i];
      pg_norm = std::max(pg_norm, std::abs(gf[i]));
    }
    if (pg_norm < opt.gradient_tol) break;

    // two-loop recursion on the free subspace
    std::vector<double> q = gf;
    const std::size_t m = s_hist.size();
    std::vector<double> a(m);
    for (std::size_t k = m; k-- > 0;) {
      const double rho = 1.0 / dot(y_hist[k], s_hist[k]);
      a[k] = rho * dot(s_hist[k], q);
      for (std::size_t i = 0; i < n; ++i) q[i] -= a[k] * y_hist[k][i];
    }
    double gamma = 1.0;
    if (m > 0) gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
    for (auto& v : q) v *= gamma;
    for (std::size_t k = 0; k < m; ++k) {
      const double rho = 1.0 / dot(y_hist[k], s_hist[k]);
      const double b = rho * dot(y_hist[k], q);
      for (std::size_t i = 0; i < n; ++i) q[i] += s_hist[k][i] * (a[k] - b);
    }
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = pinned(p, u, g, i) ? 0.0 : -q[i];
    if (m == 0 || dot(d, gf) >= 0.0) {
      s_hist.clear();
      y_hist.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -gf[i] * (0.1 / pg_norm);
    }

    // backtracking along the projection arc
    double t = 1.0;
    std::vector<double> un(n);
    double fn = fu;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) un[i] = std::clamp(u[i] + t * d[i], 0.0, 1.0);
      std::vector<double> step(n);
      for (std::size_t i = 0; i < n; ++i) step[i] = un[i] - u[i];
      if (dot(step, step) == 0.0) break;
      fn = p.value(un);
      if (std::isfinite(fn) && fn <= fu + 1e-4 * dot(g, step)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    auto gn = p.gradient(un);
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = un[i] - u[i];
      y[i] = gn[i] - g[i];
    }
    if (dot(s, y) > 1e-12 * dot(y, y)) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      if (static_cast<int>(s_hist.size()) > opt.lbfgs_memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
      }
    }
    const double change = fu - fn;
    u = std::move(un);
    g = std::move(gn);
    fu = fn;
    if (change <= opt.function_tol * (1.0 + std::abs(fu))) {
      ++it;
      break;
    }
  }
  return {std::move(u), fu, it};
}

LocalResult nelder_mead(UnitProblem& p, std::vector<double> u0, double f0,
                        const MinimizeOptions& opt) {
  const std::size_t n = p.dim();
  const int budget_end = p.evaluations + opt.polish_evaluations;
  auto clamp_unit = [](std::vector<double>& v) {
    for (auto& c : v) c = std::clamp(c, 0.0, 1.0);
  };
  std::vector<std::vector<double>> pts{u0};
  std::vector<double> vals{f0};
  for (std::size_t i = 0; i < n; ++i) {
    auto v = u0;
    if (p.range(i) > 0.0) {
      v[i] += v[i] + opt.polish_initial_step <= 1.0 ? opt.polish_initial_step
                                                    : -opt.polish_initial_step;
    }
    pts.push_back(v);
    vals.push_back(p.value(v));
  }
  int iters = 0;
  std::vector<std::size_t> order(n + 1);
  while (p.evaluations < budget_end) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    double spread = 0.0;
    for (const auto& q : pts)
      for (std::size_t i = 0; i < n; ++i) spread = std::max(spread, std::abs(q[i] - pts[best][i]));
    if (spread < 1e-10) break;
    ++iters;
    std::vector<double> c(n, 0.0);
    for (std::size_t k : order)
      if (k != worst)
        for (std::size_t i = 0; i < n; ++i) c[i] += pts[k][i] / static_cast<double>(n);
    auto along = [&](double coef) {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = c[i] + coef * (pts[worst][i] - c[i]);
      clamp_unit(v);
      return v;
    };
    auto xr = along(-1.0);
    const double fr = p.value(xr);
    if (fr < vals[best]) {
      auto xe = along(-2.0);
      const double fe = p.value(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
    } else if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
    } else {
      const bool outside = fr < vals[worst];
      auto xc = along(outside ? -0.5 : 0.5);
      const double fc = p.value(xc);
      if (fc < (outside ? fr : vals[worst])) {
        pts[worst] = xc;
        vals[worst] = fc;
      } else {
        for (std::size_t k = 0; k < pts.size(); ++k) {
          if (k == best) continue;
          for (std::size_t i = 0; i < n; ++i) pts[k][i] = pts[best][i] + 0.5 * (pts[k][i] - pts[best][i]);
          vals[k] = p.value(pts[k]);
        }
      }
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  return {pts[static_cast<std::size_t>(it - vals.begin())], *it, iters};
}

}  // namespace

BoxMinResult minimize_box(const ObjectiveFn& f, const Box& box, int n_starts,
                          std::uint64_t seed,
                          const std::vector<std::vector<double>>& mandatory_starts,
                          const MinimizeOptions& options) {
  box.validate();
  if (n_starts < 1) throw OptimizeError("n_starts must be >= 1");

  std::vector<std::vector<double>> starts;
  for (const auto& s : mandatory_starts) {
    if (static_cast<int>(starts.size()) == n_starts) break;
    if (s.size() != box.dim()) throw OptimizeError("mandatory start has wrong dimension");
    starts.push_back(box.project(s));
  }
  const int remaining = n_starts - static_cast<int>(starts.size());
  for (auto& s : quasi_random_starts(box, remaining, seed)) starts.push_back(std::move(s));

  UnitProblem problem(f, box, options.h_rel);
  BoxMinResult result;
  result.value = std::numeric_limits<double>::infinity();
  std::ostringstream failures;
  for (const auto& x0 : starts) {
    StartLog log;
    log.start = x0;
    const int evals_before = problem.evaluations;
    try {
      auto u = problem.to_u(x0);
      const double f0 = problem.value(u);
      log.start_value = f0;
      if (!std::isfinite(f0)) throw OptimizeError("non-finite objective at start point");
      auto qn = projected_lbfgs(problem, u, f0, options);
      auto nm = nelder_mead(problem, qn.u, qn.value, options);
      std::vector<double> best_u = u;
      double best_f = f0;
      if (qn.value < best_f) best_u = qn.u, best_f = qn.value;
      if (nm.value < best_f) best_u = nm.u, best_f = nm.value;
      log.terminus = problem.to_x(best_u);
      log.terminus_value = best_f;
      log.iterations = qn.iterations + nm.iterations;
      log.ok = true;
    } catch (const std::exception& e) {
      log.message = e.what();
      failures << "  start " << result.starts.size() << ": " << e.what() << "\n";
    }
    log.evaluations = problem.evaluations - evals_before;
    if (log.ok && log.terminus_value < result.value) {
      result.value = log.terminus_value;
      result.x = log.terminus;
    }
    result.starts.push_back(std::move(log));
  }
  result.evaluations = problem.evaluations;
  if (result.x.empty()) {
    throw OptimizeError("all " + std::to_string(starts.size()) + " starts failed:\n" +
                        failures.str());
  }
  return result;
}

GridResult grid_oracle(const ObjectiveFn& f, const Box& box, int resolution) {
  box.validate();
  if (resolution < 1) throw OptimizeError("grid resolution must be >= 1");
  const std::size_t n = box.dim();
  long long total = 1;
  for (std::size_t i = 0; i < n; ++i) {
    total *= resolution;
    if (total > kGridCap) {
      throw OptimizeError("grid of resolution " + std::to_string(resolution) + " in " +
                          std::to_string(n) + " dims exceeds the cap of " +
                          std::to_string(kGridCap) + " points");
    }
  }
  auto coord = [&](std::size_t d, int k) {
    if (resolution == 1) return 0.5 * (box.lower[d] + box.upper[d]);
    const double t = static_cast<double>(k) / (resolution - 1);
    return std::clamp(box.lower[d] + t * (box.upper[d] - box.lower[d]), box.lower[d],
                      box.upper[d]);
  };
  GridResult best;
  best.value = std::numeric_limits<double>::infinity();
  std::vector<int> idx(n, 0);
  std::vector<double> x(n);
  for (long long e = 0; e < total; ++e) {
    for (std::size_t d = 0; d < n; ++d) x[d] = coord(d, idx[d]);
    const double v = f(x);
    ++best.evaluations;
    if (v < best.value) {
      best.value = v;
      best.x = x;
    }
    for (std::size_t d = 0; d < n; ++d) {
      if (++idx[d] < resolution) break;
      idx[d] = 0;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

void OptProblem::validate() const {
  if (position < 0 || position >= kEntities) throw OptimizeError("position must be 0..3");
  for (const auto& p : teammate_params) p.validate();
  schedule.validate();
  costs.validate();
  conventions.validate();
  if (!(s_prime_search_cap >= 100.0)) throw OptimizeError("s_prime_search_cap must be >= 100");
}

Box OptProblem::box() const { return Box{{0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, s_prime_search_cap}}; }

namespace {

std::array<PolicyHandle, kEntities> seat_policies(const OptProblem& problem,
                                                  const StermanParams& candidate) {
  std::array<PolicyHandle, kEntities> out;
  std::size_t t = 0;
  for (int i = 0; i < kEntities; ++i) {
    out[static_cast<std::size_t>(i)] = PolicyHandle::sterman(
        i == problem.position ? candidate : problem.teammate_params[t++]);
  }
  return out;
}

}  // namespace

double objective(const OptProblem& problem, const StermanParams& candidate) {
  candidate.validate();
  return run_game(seat_policies(problem, candidate), problem.schedule, problem.costs, 0,
                  problem.conventions)
      .total_cost;
}

double baseline_cost(const OptProblem& problem) { return objective(problem, kGeneralParams); }

OptResult minimize_box(const OptProblem& problem, int n_starts, std::uint64_t seed,
                       const MinimizeOptions& options) {
  problem.validate();
  ObjectiveFn f = [&problem](std::span<const double> x) {
    return objective(problem, StermanParams{x[0], x[1], x[2], x[3]});
  };
  const auto g = kGeneralParams.to_array();
  auto r = minimize_box(f, problem.box(), n_starts, seed,
                        {std::vector<double>(g.begin(), g.end())}, options);
  OptResult out;
  out.best_params = StermanParams{r.x[0], r.x[1], r.x[2], r.x[3]};
  out.best_cost = r.value;
  out.start_count = static_cast<int>(r.starts.size());
  out.evaluations = r.evaluations;
  out.starts = std::move(r.starts);
  return out;
}

std::pair<StermanParams, double> grid_oracle(const OptProblem& problem, int resolution) {
  problem.validate();
  ObjectiveFn f = [&problem](std::span<const double> x) {
    return objective(problem, StermanParams{x[0], x[1], x[2], x[3]});
  };
  auto r = grid_oracle(f, problem.box(), resolution);
  return {StermanParams{r.x[0], r.x[1], r.x[2], r.x[3]}, r.value};
}

void write_optimize_csv(std::ostream& out, const std::vector<OptimizeRow>& rows) {
  out << "position,theta,alpha,beta,s_prime,cost,baseline_cost,reduction_pct,starts,evals,seed\n";
  for (const auto& r : rows) {
    out << r.position << std::setprecision(17) << ',' << r.params.theta << ',' << r.params.alpha
        << ',' << r.params.beta << ',' << r.params.s_prime << std::fixed << std::setprecision(6)
        << ',' << r.cost << ',' << r.baseline_cost << ',' << r.reduction_pct()
        << std::defaultfloat << ',' << r.starts << ',' << r.evaluations << ',' << r.seed << '\n';
  }
}

std::vector<OptimizeRow> read_optimize_csv(std::istream& in, const std::string& source) {
  std::vector<OptimizeRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line.rfind("position,theta,alpha,beta,s_prime", 0) != 0) {
        throw OptimizeError(source + ":1: not an optimize results file");
      }
      continue;
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    std::vector<std::string> cols;
    while (std::getline(ss, f, ',')) cols.push_back(f);
    if (cols.size() != 11) {
      throw OptimizeError(source + ":" + std::to_string(lineno) + ": expected 11 fields");
    }
    try {
      OptimizeRow r;
      r.position = std::stoi(cols[0]);
      r.params = StermanParams{std::stod(cols[1]), std::stod(cols[2]), std::stod(cols[3]),
                               std::stod(cols[4])};
      r.params.validate();
      r.cost = std::stod(cols[5]);
      r.baseline_cost = std::stod(cols[6]);
      r.starts = std::stoi(cols[8]);
      r.evaluations = std::stoi(cols[9]);
      r.seed = std::stoull(cols[10]);
      rows.push_back(r);
    } catch (const std::exception& e) {
      throw OptimizeError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace beergame
