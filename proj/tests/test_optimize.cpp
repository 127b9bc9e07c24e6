#include <gtest/gtest.h>

#include <sstream>

#include "beergame/optimize.hpp"

using namespace beergame;

TEST(FiniteDiff, QuadraticPlusLinear) {
  const ObjectiveFn f = [](std::span<const double> x) { return x[0] * x[0] + 3.0 * x[1]; };
  const std::vector<double> x{1.0, 2.0};
  const auto g = finite_diff_gradient(f, x, 1e-4);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 3.0, 1e-6);
}

TEST(FiniteDiff, OneSidedAtActiveBound) {
  const ObjectiveFn f = [](std::span<const double> x) {
    if (x[0] < 0.0) throw std::logic_error("evaluated outside the box");
    return (x[0] - 0.5) * (x[0] - 0.5);
  };
  const Box box{{0.0}, {1.0}};
  const std::vector<double> x{0.0};
  const auto g = finite_diff_gradient(f, x, 1e-4, &box);
  EXPECT_NEAR(g[0], -1.0, 1e-3);
}

TEST(Box, ProjectAndValidate) {
  const Box box{{0.0, -1.0}, {1.0, 1.0}};
  const std::vector<double> x{2.0, -3.0};
  EXPECT_EQ(box.project(x), (std::vector<double>{1.0, -1.0}));
  EXPECT_FALSE(box.contains(x));
  EXPECT_THROW((Box{{1.0}, {0.0}}).validate(), OptimizeError);
}

TEST(MinimizeBox, InteriorAndBoundaryMinima) {
  const Box box{{0.0}, {1.0}};
  const ObjectiveFn interior = [](std::span<const double> x) { return (x[0] - 0.3) * (x[0] - 0.3); };
  const auto a = minimize_box(interior, box, 4, 1);
  EXPECT_NEAR(a.x[0], 0.3, 1e-4);
  EXPECT_LT(a.value, 1e-8);

  const ObjectiveFn edge = [](std::span<const double> x) { return (x[0] + 1.0) * (x[0] + 1.0); };
  const auto b = minimize_box(edge, box, 4, 1);
  EXPECT_EQ(b.x[0], 0.0);
  EXPECT_DOUBLE_EQ(b.value, 1.0);
}

TEST(MinimizeBox, ResultInsideBoxAndReproducible) {
  const Box box{{0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 150.0}};
  const ObjectiveFn rosen = [](std::span<const double> x) {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2) + std::pow(x[2] - 0.2, 2) +
           std::pow(x[3] / 150 - 0.9, 2);
  };
  const auto r = minimize_box(rosen, box, 6, 11);
  EXPECT_TRUE(box.contains(r.x));
  EXPECT_EQ(rosen(r.x), r.value);
  const auto again = minimize_box(rosen, box, 6, 11);
  EXPECT_EQ(r.x, again.x);
  EXPECT_EQ(r.starts.size(), 6u);
}

TEST(QuasiRandomStarts, PrefixStableAndInsideBox) {
  const Box box{{0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 150.0}};
  const auto a = quasi_random_starts(box, 8, 3);
  const auto b = quasi_random_starts(box, 16, 3);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k], b[k]);
    EXPECT_TRUE(box.contains(a[k]));
  }
}

TEST(Grid, CountsAndCentre) {
  const Box box{{0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 1.0}};
  const ObjectiveFn sum = [](std::span<const double> x) { return x[0] + x[1] + x[2] + x[3]; };
  const auto g = grid_oracle(sum, box, 5);
  EXPECT_EQ(g.evaluations, 625);
  EXPECT_EQ(g.value, 0.0);
  const auto one = grid_oracle(sum, box, 1);
  EXPECT_EQ(one.evaluations, 1);
  EXPECT_DOUBLE_EQ(one.value, 2.0);
  EXPECT_THROW(grid_oracle(sum, box, 40), OptimizeError);
}

TEST(Objective, GeneralParamsGiveTheBaseline) {
  for (int pos = 0; pos < kEntities; ++pos) {
    OptProblem p;
    p.position = pos;
    EXPECT_NEAR(objective(p, kGeneralParams), 9932.5635, 1e-3);
    EXPECT_EQ(baseline_cost(p), objective(p, kGeneralParams));
  }
  OptProblem p;
  EXPECT_THROW(objective(p, {1.5, 0, 0, 0}), PolicyError);
}

// Published single-seat candidates, replayed under the adopted conventions.
// The adopted timing differs slightly from the one those fits came from, so
// the band is 8% rather than 1%; the measured residuals range -7.2%..+3.2%.
TEST(Objective, ReferenceCandidatesWithinDocumentedBand) {
  struct Case {
    int pos;
    StermanParams p;
    double target;
  };
  const Case cases[] = {{0, {0.002, 0.409, 0.975, 29.259}, 1440.45},
                        {1, {1.0, 0.495, 1.0, 36.405}, 1911.77},
                        {2, {0.747, 0.094, 0.784, 73.721}, 3225.41},
                        {3, {1.0, 1.0, 0.048, 21.581}, 4799.45}};
  for (const auto& c : cases) {
    OptProblem p;
    p.position = c.pos;
    const double cost = objective(p, c.p);
    EXPECT_NEAR(cost, c.target, 0.08 * c.target) << role_name(c.pos);
    EXPECT_LT(cost, 0.5 * baseline_cost(p));
  }
}

TEST(MinimizeSeat, BeatsCoarseGridAndBaseline) {
  OptProblem p;
  p.position = 1;
  const auto [grid_params, grid_cost] = grid_oracle(p, 4);
  MinimizeOptions quick;
  quick.max_iterations = 60;
  quick.polish_evaluations = 200;
  const OptResult r = minimize_box(p, 4, 5, quick);
  EXPECT_LE(r.best_cost, grid_cost);
  EXPECT_LT(r.best_cost, baseline_cost(p));
  EXPECT_EQ(objective(p, r.best_params), r.best_cost);
  EXPECT_NO_THROW(r.best_params.validate());
  (void)grid_params;
}

TEST(OptimizeCsv, RoundTripsParamsExactly) {
  std::vector<OptimizeRow> rows{{2, {0.1234567890123, 0.5, 1.0, 73.0000001}, 1640.4, 9932.56, 32, 9000, 77}};
  std::ostringstream os;
  write_optimize_csv(os, rows);
  std::istringstream is(os.str());
  const auto back = read_optimize_csv(is, "mem");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].params, rows[0].params);
  EXPECT_EQ(back[0].position, 2);
  std::istringstream bad("nope\n");
  EXPECT_THROW(read_optimize_csv(bad, "mem"), OptimizeError);
}
