#include "beergame/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

namespace beergame {

std::string_view kind_name(AgentKind kind) {
  return kind == AgentKind::model_based ? "model_based" : "model_free";
}

AgentKind parse_kind(std::string_view text) {
  if (text == "model_based") return AgentKind::model_based;
  if (text == "model_free") return AgentKind::model_free;
  throw ExperimentError("unknown agent kind '" + std::string(text) +
                        "' (expected model_based or model_free)");
}

std::vector<double> sigma_grid(double sigma_max, double step) {
  if (!(sigma_max >= 0.0) || !std::isfinite(sigma_max)) throw ExperimentError("sigma max must be >= 0");
  if (!(step > 0.0)) throw ExperimentError("sigma step must be > 0");
  std::vector<double> out;
  // index-based so 0.5-steps stay exact
  for (long k = 0;; ++k) {
    const double s = static_cast<double>(k) * step;
    if (s > sigma_max + 1e-9) break;
    out.push_back(s);
  }
  return out;
}

void SweepConfig::validate() const {
  if (sigmas.empty()) throw ExperimentError("sigma grid is empty");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] >= 0.0) || !std::isfinite(sigmas[i])) throw ExperimentError("sigma values must be >= 0");
    if (i > 0 && !(sigmas[i] > sigmas[i - 1])) throw ExperimentError("sigma grid must be ascending");
  }
  if (reps < 1) throw ExperimentError("reps must be >= 1");
  if (positions.empty()) throw ExperimentError("no positions requested");
  for (int p : positions)
    if (p < 0 || p >= kEntities) throw ExperimentError("position out of range: " + std::to_string(p));
  if (kinds.empty()) throw ExperimentError("no agent kinds requested");
  if (roster.empty()) throw ExperimentError("roster is empty");
  for (const auto& r : roster) r.validate();
  for (int p : positions) {
    for (AgentKind k : kinds) {
      if (k == AgentKind::model_based && !model_based.contains(p)) {
        throw ExperimentError("missing model-based parameters for position " + std::to_string(p));
      }
      if (k == AgentKind::model_free && (!model_free.contains(p) || !model_free.at(p))) {
        throw ExperimentError("missing trained-agent bundle for position " + std::to_string(p));
      }
    }
  }
  for (const auto& [p, params] : model_based) params.validate();
  if (jobs < 1) throw ExperimentError("jobs must be >= 1");
  schedule.validate();
  costs.validate();
  conventions.validate();
}

namespace {

std::uint64_t fingerprint(const std::vector<double>& draws) {
  std::uint64_t h = mix64(draws.size());
  for (double d : draws) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &d, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

struct ArmResult {
  double cost = 0.0;
  std::uint64_t draws = 0;
};

/// One game; the seat at `position` is taken by `occupant` and never
/// perturbed, every other seat plays its teammate rule with noise `sigma`.
ArmResult play_arm(const SweepConfig& c, std::uint64_t seed, int position,
                   const std::array<StermanParams, 3>& team, double sigma,
                   const PolicyHandle& occupant) {
  std::array<Rng, kEntities> streams;
  std::array<DecisionFn, kEntities> deciders;
  std::vector<double> log;
  std::size_t k = 0;
  for (int i = 0; i < kEntities; ++i) {
    const auto s = static_cast<std::size_t>(i);
    streams[s] = make_rng(seed, "noise", {static_cast<std::uint64_t>(i)});
    if (i == position) {
      deciders[s] = make_decider(occupant, nullptr);
    } else {
      deciders[s] = make_decider(PolicyHandle::sterman(team[k++], {sigma, std::nullopt}), &streams[s], &log);
    }
  }
  const GameResult g = run_game(deciders, c.schedule, c.costs, c.conventions);
  return {g.total_cost, fingerprint(log)};
}

}  // namespace

std::vector<SweepRecord> run_sweep(const SweepConfig& c) {
  c.validate();

  std::map<int, PolicyHandle> free_agents;
  for (int p : c.positions) {
    if (std::find(c.kinds.begin(), c.kinds.end(), AgentKind::model_free) == c.kinds.end()) break;
    const auto& bundle = *c.model_free.at(p);
    free_agents.emplace(p, agent_policy(std::make_shared<const DuelingNet>(bundle.net), bundle.env));
  }

  struct Cell {
    std::size_t sigma_index;
    int position;
    std::size_t kind_index;
    int rep;
  };
  std::vector<Cell> cells;
  for (std::size_t si = 0; si < c.sigmas.size(); ++si)
    for (int p : c.positions)
      for (std::size_t ki = 0; ki < c.kinds.size(); ++ki)
        for (int r = 0; r < c.reps; ++r) cells.push_back({si, p, ki, r});

  std::vector<SweepRecord> out(cells.size());
  auto run_cell = [&](std::size_t idx) {
    const Cell& cell = cells[idx];
    const AgentKind kind = c.kinds[cell.kind_index];
    const double sigma = c.sigmas[cell.sigma_index];
    const std::uint64_t seed =
        derive_seed(c.seed, "sweep",
                    {cell.sigma_index, static_cast<std::uint64_t>(cell.position),
                     static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(cell.rep)});
    Rng team_rng = make_rng(seed, "team");
    const auto team = bootstrap_team(c.roster, team_rng);
    StermanParams stand_in = kGeneralParams;
    if (!c.general_baseline) {
      Rng seat_rng = make_rng(seed, "baseline-seat");
      stand_in = bootstrap_team(c.roster, seat_rng)[0];
    }
    const PolicyHandle agent = kind == AgentKind::model_based
                                   ? PolicyHandle::sterman(c.model_based.at(cell.position))
                                   : free_agents.at(cell.position);
    const ArmResult with = play_arm(c, seed, cell.position, team, sigma, agent);
    const ArmResult without = play_arm(c, seed, cell.position, team, sigma, PolicyHandle::sterman(stand_in));

    SweepRecord& rec = out[idx];
    rec.sigma = sigma;
    rec.position = cell.position;
    rec.kind = kind;
    rec.rep = cell.rep;
    rec.seed = seed;
    rec.cost_with_agent = with.cost;
    rec.cost_baseline = without.cost;
    rec.reduction_pct = 100.0 * (with.cost - without.cost) / without.cost;
    rec.draws_with_agent = with.draws;
    rec.draws_baseline = without.draws;
  };

  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(c.jobs), cells.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<SweepRecord>& records) {
  if (records.empty()) throw ExperimentError("nothing to summarize");
  using Key = std::tuple<double, int, int>;
  std::map<Key, std::vector<double>> cells;
  for (const auto& r : records) {
    cells[{r.sigma, r.position, static_cast<int>(r.kind)}].push_back(r.reduction_pct);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, v] : cells) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    out.push_back(SummaryRow{std::get<0>(key), std::get<1>(key), static_cast<AgentKind>(std::get<2>(key)),
                             mean, se, static_cast<int>(v.size())});
  }
  return out;
}

std::vector<AdvantageRow> relative_advantage(const std::vector<SummaryRow>& summary) {
  std::map<std::pair<double, int>, std::array<const SummaryRow*, 2>> cells;
  for (const auto& r : summary) {
    auto& slot = cells[{r.sigma, r.position}][static_cast<std::size_t>(r.kind)];
    if (slot) throw ExperimentError("duplicate summary cell");
    slot = &r;
  }
  std::vector<AdvantageRow> out;
  for (const auto& [key, pair] : cells) {
    if (!pair[0] || !pair[1]) {
      std::ostringstream os;
      os << "unmatched summary cell at sigma " << key.first << ", position " << key.second
         << ": both model_based and model_free are needed";
      throw ExperimentError(os.str());
    }
    out.push_back({key.first, key.second, pair[1]->mean_reduction_pct - pair[0]->mean_reduction_pct});
  }
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ExperimentError("spearman: length mismatch");
  if (x.size() < 2) throw ExperimentError("spearman: need at least two points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ExperimentError("spearman: constant input");
  return sxy / std::sqrt(sxx * syy);
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRecord>& records) {
  out << "sigma,position,agent_kind,rep,seed,cost_with_agent,cost_baseline,reduction_pct\n";
  out << std::fixed;
  for (const auto& r : records) {
    out << std::setprecision(2) << r.sigma << ',' << r.position << ',' << kind_name(r.kind) << ','
        << r.rep << ',' << r.seed << ',' << std::setprecision(6) << r.cost_with_agent << ','
        << r.cost_baseline << ',' << r.reduction_pct << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "sigma,position,agent_kind,mean_reduction_pct,stderr,n\n";
  out << std::fixed;
  for (const auto& r : rows) {
    out << std::setprecision(2) << r.sigma << ',' << r.position << ',' << kind_name(r.kind) << ','
        << std::setprecision(6) << r.mean_reduction_pct << ',' << r.stderr_pct << ',' << r.n << '\n';
  }
}

void write_advantage_csv(std::ostream& out, const std::vector<AdvantageRow>& rows) {
  out << "sigma,position,advantage_pts\n";
  out << std::fixed;
  for (const auto& r : rows) {
    out << std::setprecision(2) << r.sigma << ',' << r.position << ',' << std::setprecision(6)
        << r.advantage << '\n';
  }
}

namespace {

template <typename T>
T parse_num(const std::string& text, const std::string& source, int line, const char* field) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || b == e) {
    throw ExperimentError(source + ":" + std::to_string(line) + ": field '" + field +
                          "' is not a number: '" + text + "'");
  }
  return v;
}

}  // namespace

std::vector<SummaryRow> read_summary_csv(std::istream& in, const std::string& source) {
  std::vector<SummaryRow> rows;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) f.push_back(col);
    if (!header) {
      if (line != "sigma,position,agent_kind,mean_reduction_pct,stderr,n") {
        throw ExperimentError(source + ":" + std::to_string(lineno) +
                              ": expected header sigma,position,agent_kind,mean_reduction_pct,stderr,n");
      }
      header = true;
      continue;
    }
    if (f.size() != 6) {
      throw ExperimentError(source + ":" + std::to_string(lineno) + ": expected 6 fields, got " +
                            std::to_string(f.size()));
    }
    SummaryRow r;
    r.sigma = parse_num<double>(f[0], source, lineno, "sigma");
    r.position = parse_num<int>(f[1], source, lineno, "position");
    try {
      r.kind = parse_kind(f[2]);
    } catch (const ExperimentError& e) {
      throw ExperimentError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
    r.mean_reduction_pct = parse_num<double>(f[3], source, lineno, "mean_reduction_pct");
    r.stderr_pct = parse_num<double>(f[4], source, lineno, "stderr");
    r.n = parse_num<int>(f[5], source, lineno, "n");
    rows.push_back(r);
  }
  if (rows.empty()) throw ExperimentError(source + ": no summary rows");
  return rows;
}

void render_lineplot(const std::vector<SummaryRow>& summary, std::ostream& out,
                     const std::string& title) {
  if (summary.empty()) throw ExperimentError("cannot plot an empty summary");
  std::map<std::pair<int, int>, std::vector<std::pair<double, double>>> series;
  double x0 = summary[0].sigma, x1 = x0, y0 = summary[0].mean_reduction_pct, y1 = y0;
  for (const auto& r : summary) {
    series[{r.position, static_cast<int>(r.kind)}].emplace_back(r.sigma, r.mean_reduction_pct);
    x0 = std::min(x0, r.sigma);
    x1 = std::max(x1, r.sigma);
    y0 = std::min(y0, r.mean_reduction_pct);
    y1 = std::max(y1, r.mean_reduction_pct);
  }
  y0 = std::min(y0, 0.0);
  y1 = std::max(y1, 0.0);
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;

  constexpr double W = 720, H = 440, L = 70, R = 190, T = 40, B = 50;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return T + (y1 - y) / (y1 - y0) * (H - T - B); };
  static const char* kColors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                  "#66a61e", "#e6ab02", "#a6761d", "#666666"};

  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << py(0.0) << "\" x2=\"" << W - R << "\" y2=\"" << py(0.0)
      << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n";
  for (double v : {y0, y1}) {
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << v << "</text>\n";
  }
  for (double v : {x0, x1}) {
    out << "<text x=\"" << px(v) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << v << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">sigma</text>\n";
  out << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\" text-anchor=\"middle\">mean reduction (%)</text>\n";

  std::size_t s = 0;
  for (auto& [key, pts] : series) {
    std::sort(pts.begin(), pts.end());
    const char* color = kColors[s % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out << (i ? " " : "") << px(pts[i].first) << ',' << py(pts[i].second);
    }
    out << "\"/>\n";
    const double ly = T + 18.0 * static_cast<double>(s);
    out << "<text x=\"" << W - R + 12 << "\" y=\"" << ly + 4 << "\" font-size=\"11\" fill=\"" << color
        << "\">" << role_name(key.first) << ' ' << kind_name(static_cast<AgentKind>(key.second))
        << "</text>\n";
    ++s;
  }
  out << "</svg>\n";
}

void render_lineplot(const std::vector<SummaryRow>& summary, const std::string& path,
                     const std::string& title) {
  if (summary.empty()) throw ExperimentError("cannot plot an empty summary");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ExperimentError("cannot write plot file: " + path);
  render_lineplot(summary, f, title);
  if (!f) throw ExperimentError("failed writing plot file: " + path);
}

}  // namespace beergame
