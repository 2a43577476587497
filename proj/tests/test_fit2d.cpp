#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace hazsmooth;

namespace {

BinnedData2D simulated_2d(std::uint64_t seed, int n, const ObservationScheme& scheme) {
  SimConfig config;
  config.n = n;
  config.seed = seed;
  const auto recs = simulate_records(config, HazardSpec::hm2(), scheme, 0);
  BinGrid2D grid;
  grid.u = {0.0, 1.0, 20, "u"};
  grid.s = {0.0, 1.0, static_cast<int>(scheme.s_span()), "s"};
  return bin_2d(recs, grid);
}

}  // namespace

TEST_CASE("surface fit matches the dense tensor reference", "[fit2d]") {
  CounterRng rng(201, 0);
  const auto data = testsupport::random_binned_2d(rng, 7, 6);
  const KnotGrid gu{0.0, 7.0, 3, 2};
  const KnotGrid gs{0.0, 6.0, 3, 2};
  const Penalty2D pen{3.0, 8.0, 2, 2};

  FitControl control;
  control.tol = 1e-9;
  control.max_iter = 80;
  const auto fit = fit_2d(data, gu, gs, pen, control);
  const auto dense = testsupport::dense_fit_2d(data, gu, gs, pen, 1e-9, 80);
  REQUIRE(fit.converged);
  REQUIRE(dense.converged);

  CHECK((fit.eta_hat - dense.eta).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(fit.aic - dense.aic) < 1e-8);
  CHECK(std::abs(fit.ed - dense.ed) < 1e-8);
}

TEST_CASE("constant hazard is recovered flat", "[fit2d]") {
  // Counts drawn around a constant rate of 0.1 per unit exposure.
  CounterRng rng(202, 0);
  BinnedData2D data;
  data.grid.u = {0.0, 1.0, 10, "u"};
  data.grid.s = {0.0, 1.0, 10, "s"};
  data.R = Matrix::Constant(10, 10, 60.0);
  data.Y = Matrix::Zero(10, 10);
  for (int j = 0; j < 10; ++j)
    for (int k = 0; k < 10; ++k) {
      // Sum of 60 Bernoulli(0.1) draws approximates Poisson(6).
      int y = 0;
      for (int t = 0; t < 60; ++t) y += uniform01(rng) < 0.1 ? 1 : 0;
      data.Y(j, k) = y;
    }

  const KnotGrid gu{0.0, 10.0, 6, 3};
  const KnotGrid gs{0.0, 10.0, 6, 3};
  for (double rho : {1.0, 100.0, 10000.0}) {
    const auto fit = fit_2d(data, gu, gs, Penalty2D{rho, rho, 2, 2});
    const Matrix lambda = fit.eta_hat.array().exp();
    CHECK((lambda.array() - 0.1).abs().maxCoeff() < 0.05);
  }
}

TEST_CASE("score identity and mass conservation on the surface", "[fit2d]") {
  const auto data = simulated_2d(210, 900, ObservationScheme::scheme_a());
  const KnotGrid gu{0.0, 20.0, 8, 3};
  const KnotGrid gs{0.0, 20.0, 8, 3};
  const Penalty2D pen{30.0, 5.0, 2, 2};
  FitControl control;
  control.tol = 1e-10;
  control.max_iter = 100;
  const auto fit = fit_2d(data, gu, gs, pen, control);
  REQUIRE(fit.converged);

  const Matrix Bu = build_basis(gu, data.grid.u.midpoints()).values;
  const Matrix Bs = build_basis(gs, data.grid.s.midpoints()).values;
  const Matrix resid = Bu.transpose() * (data.Y - fit.mu_hat) * Bs;
  const Vector score =
      Eigen::Map<const Vector>(resid.data(), resid.size()) -
      pen.matrix(gu.n_basis(), gs.n_basis()) *
          Eigen::Map<const Vector>(fit.A.data(), fit.A.size());
  CHECK(score.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::abs(fit.mu_hat.sum() - data.Y.sum()) < 1e-6 * data.Y.sum());
}

TEST_CASE("huge penalties flatten their own axis only", "[fit2d]") {
  const auto data = simulated_2d(211, 1200, ObservationScheme::scheme_a());
  const KnotGrid gu{0.0, 20.0, 8, 3};
  const KnotGrid gs{0.0, 20.0, 8, 3};

  // Second-order penalty at 1e9 forces the u-profile of every s-column to a
  // straight line; the s-direction stays flexible.
  const auto stiff_u = fit_2d(data, gu, gs, Penalty2D{1e9, 1.0, 2, 2});
  for (int k = 0; k < data.grid.s.count; ++k) {
    const Vector col = stiff_u.eta_hat.col(k);
    double max_resid = 0.0;
    const int n = data.grid.u.count;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int j = 0; j < n; ++j) {
      sx += j;
      sy += col[j];
      sxx += static_cast<double>(j) * j;
      sxy += j * col[j];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icept = (sy - slope * sx) / n;
    for (int j = 0; j < n; ++j)
      max_resid = std::max(max_resid, std::abs(col[j] - (icept + slope * j)));
    CHECK(max_resid < 1e-3);
  }

  // Both penalties huge: the whole surface is bilinear and ED drops to the
  // product of the null-space dimensions (2 x 2 for second order).
  const auto stiff_both = fit_2d(data, gu, gs, Penalty2D{1e9, 1e9, 2, 2});
  CHECK(stiff_both.ed > 3.9);
  CHECK(stiff_both.ed < 4.1);
}

TEST_CASE("prediction agrees with the fitted grid and flags the hull", "[fit2d]") {
  // Scheme B truncates the (u, s) rectangle along u + s = 30, leaving the
  // upper-right corner without exposure.
  const auto data = simulated_2d(212, 1500, ObservationScheme::scheme_b());
  const KnotGrid gu{0.0, 20.0, 8, 3};
  const KnotGrid gs{0.0, 30.0, 8, 3};
  const auto fit = fit_2d(data, gu, gs, Penalty2D{10.0, 10.0, 2, 2});

  std::vector<SurfacePoint> pts;
  for (int j = 0; j < data.grid.u.count; ++j)
    pts.push_back(SurfacePoint::us(data.grid.u.midpoint(j), data.grid.s.midpoint(3)));
  const auto pred = predict_2d(fit, gu, gs, pts);
  for (int j = 0; j < data.grid.u.count; ++j)
    CHECK_THAT(pred.eta[j], Catch::Matchers::WithinAbs(fit.eta_hat(j, 3), 1e-10));

  // The same location must give the same answer in both frames.
  const SurfacePoint both[] = {SurfacePoint::us(4.0, 6.5), SurfacePoint::ts(10.5, 6.5)};
  const auto two = predict_2d(fit, gu, gs, both);
  CHECK(two.eta[0] == two.eta[1]);
  CHECK(two.se_eta[0] == two.se_eta[1]);

  // Deep inside vs beyond the exposure wedge.
  const SurfacePoint probes[] = {SurfacePoint::us(5.0, 5.0), SurfacePoint::us(18.5, 25.0),
                                 SurfacePoint::us(25.0, 5.0)};
  const auto flags = predict_2d(fit, gu, gs, probes);
  CHECK_FALSE(flags.extrapolated[0]);
  CHECK(flags.extrapolated[1]);
  CHECK(flags.extrapolated[2]);
  CHECK(flags.se_eta.minCoeff() > 0.0);
}

TEST_CASE("grid and numeric searches find comparable optima", "[fit2d]") {
  const auto data = simulated_2d(213, 800, ObservationScheme::scheme_a());
  const KnotGrid gu{0.0, 20.0, 8, 3};
  const KnotGrid gs{0.0, 20.0, 8, 3};

  RhoStrategy grid_strategy;
  grid_strategy.kind = RhoStrategy::Kind::grid;
  const auto by_grid = select_rho_2d(data, gu, gs, 2, 2, grid_strategy);

  RhoStrategy numeric_strategy;
  numeric_strategy.kind = RhoStrategy::Kind::numeric;
  const auto by_numeric = select_rho_2d(data, gu, gs, 2, 2, numeric_strategy);

  CHECK(by_numeric.best.aic <= by_grid.best.aic + 1.0);
  CHECK(by_grid.trace.size() == 17 * 17);
  CHECK(by_numeric.trace.size() >= 3);
  CHECK(by_numeric.best.cov_alpha.size() > 0);  // final refit carries covariance
}

TEST_CASE("exactly planar truth drives rho to the lattice edge with a warning", "[fit2d]") {
  // Deterministic counts equal to the mean of a log-planar hazard: the fit
  // can match the data exactly inside the penalty null space, so AIC keeps
  // falling as rho grows and the search must land on the edge and warn.
  BinnedData2D data;
  data.grid.u = {0.0, 1.0, 8, "u"};
  data.grid.s = {0.0, 1.0, 8, "s"};
  data.R = Matrix::Constant(8, 8, 50.0);
  data.Y = Matrix::Zero(8, 8);
  for (int j = 0; j < 8; ++j)
    for (int k = 0; k < 8; ++k)
      data.Y(j, k) = 50.0 * std::exp(-2.0 + 0.05 * j + 0.08 * k);

  const KnotGrid gu{0.0, 8.0, 5, 3};
  const KnotGrid gs{0.0, 8.0, 5, 3};
  RhoStrategy strategy;
  strategy.kind = RhoStrategy::Kind::grid;
  strategy.grid_lo = 0.0;
  strategy.grid_hi = 3.0;
  strategy.grid_step = 1.0;
  const auto sel = select_rho_2d(data, gu, gs, 2, 2, strategy);
  CHECK(sel.log10_rho_u == 3.0);
  CHECK(sel.log10_rho_s == 3.0);
  CHECK(sel.boundary_warning);
}

TEST_CASE("surface fit input validation", "[fit2d]") {
  BinnedData2D data;
  data.grid.u = {0.0, 1.0, 4, "u"};
  data.grid.s = {0.0, 1.0, 4, "s"};
  data.Y = Matrix::Zero(4, 4);
  data.R = Matrix::Constant(4, 4, 1.0);
  const KnotGrid gu{0.0, 4.0, 2, 2};
  const KnotGrid gs{0.0, 4.0, 2, 2};
  CHECK_THROWS_WITH(fit_2d(data, gu, gs, Penalty2D{1.0, 1.0, 2, 2}),
                    Catch::Matchers::ContainsSubstring("no events to fit"));

  data.Y(1, 1) = 1.0;
  CHECK_THROWS_AS(fit_2d(data, gu, gs, Penalty2D{-1.0, 1.0, 2, 2}), std::invalid_argument);
  data.Y.resize(3, 4);
  CHECK_THROWS_AS(fit_2d(data, gu, gs, Penalty2D{1.0, 1.0, 2, 2}), std::invalid_argument);
}
