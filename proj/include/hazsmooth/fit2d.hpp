#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hazsmooth/basis.hpp"
#include "hazsmooth/fit1d.hpp"
#include "hazsmooth/glam.hpp"
#include "hazsmooth/lexis.hpp"
#include "hazsmooth/nelder_mead.hpp"
#include "hazsmooth/types.hpp"

namespace hazsmooth {

// Anisotropic difference penalty for a coefficient array A (c_u x c_s):
// rho_u penalises differences down the u margin, rho_s across the s margin.
struct Penalty2D {
  double rho_u = 1.0;
  double rho_s = 1.0;
  int order_u = 2;
  int order_s = 2;

  // rho_u (I_cs kron Du'Du) + rho_s (Ds'Ds kron I_cu) in the vec(A) layout.
  Matrix matrix(int c_u, int c_s) const {
    if (!(rho_u > 0.0) || !(rho_s > 0.0) || !std::isfinite(rho_u) || !std::isfinite(rho_s))
      throw std::invalid_argument("Penalty2D: rho_u and rho_s must be positive and finite");
    const Matrix du = build_difference_matrix(c_u, order_u).values;
    const Matrix ds = build_difference_matrix(c_s, order_s).values;
    const Matrix dtd_u = du.transpose() * du;
    const Matrix dtd_s = ds.transpose() * ds;

    Matrix p = Matrix::Zero(c_u * c_s, c_u * c_s);
    for (int b = 0; b < c_s; ++b)
      p.block(b * c_u, b * c_u, c_u, c_u) = rho_u * dtd_u;
    for (int a = 0; a < c_s; ++a)
      for (int b = 0; b < c_s; ++b)
        if (dtd_s(a, b) != 0.0)
          p.block(a * c_u, b * c_u, c_u, c_u).diagonal().array() += rho_s * dtd_s(a, b);
    return p;
  }
};

struct Fit2DResult {
  Matrix A;  // c_u x c_s coefficient array
  Penalty2D penalty;
  Matrix eta_hat;  // n_u x n_s log-hazard at bin midpoints
  Matrix mu_hat;
  double deviance = 0.0;
  double ed = 0.0;
  double aic = 0.0;
  Eigen::LDLT<Matrix> factor;  // of B'WB + P at the solution
  Matrix cov_alpha;            // (c_u c_s)^2, empty unless requested
  bool converged = false;
  int iterations = 0;
  std::vector<double> penalized_deviance_trace;
  // Observed-data hull, used to flag extrapolation in predictions.
  double hull_u_edge = 0.0;
  Vector hull_s_edge;  // per u-row: right edge of the last bin with exposure
  BinGrid2D data_grid;
};

namespace detail {

inline double full_deviance_2d(const Matrix& Y, const Matrix& M, const Matrix& R) {
  double dev = 0.0;
  for (Eigen::Index k = 0; k < Y.cols(); ++k)
    for (Eigen::Index j = 0; j < Y.rows(); ++j) {
      if (R(j, k) <= 0.0) continue;
      dev += 2.0 * (M(j, k) - Y(j, k));
      if (Y(j, k) > 0.0) {
        if (M(j, k) <= 0.0) return std::numeric_limits<double>::infinity();
        dev += 2.0 * Y(j, k) * std::log(Y(j, k) / M(j, k));
      }
    }
  return dev;
}

inline double reported_deviance_2d(const Matrix& Y, const Matrix& M, const Matrix& R) {
  double dev = 0.0;
  for (Eigen::Index k = 0; k < Y.cols(); ++k)
    for (Eigen::Index j = 0; j < Y.rows(); ++j) {
      if (R(j, k) <= 0.0 || Y(j, k) <= 0.0) continue;
      if (M(j, k) <= 0.0) return std::numeric_limits<double>::infinity();
      dev += 2.0 * Y(j, k) * std::log(Y(j, k) / M(j, k));
    }
  return dev;
}

inline void observed_hull(const Matrix& R, const BinGrid2D& grid, double& u_edge,
                          Vector& s_edges) {
  s_edges = Vector::Constant(grid.u.count, grid.s.origin);
  u_edge = grid.u.origin;
  for (int j = 0; j < grid.u.count; ++j) {
    for (int k = grid.s.count - 1; k >= 0; --k) {
      if (R(j, k) > 0.0) {
        s_edges[j] = grid.s.edge(k + 1);
        u_edge = grid.u.edge(j + 1);
        break;
      }
    }
  }
}

}  // namespace detail

// Penalized Poisson fit of a smooth log-hazard over two time scales.  The
// linear predictor is Eta = Bu A Bs' on the bin grid; normal equations are
// assembled with the grid kernels so the Kronecker design never exists.
inline Fit2DResult fit_2d(const BinnedData2D& data, const KnotGrid& grid_u,
                          const KnotGrid& grid_s, const Penalty2D& penalty,
                          const FitControl& control = {}) {
  grid_u.validate();
  grid_s.validate();
  data.grid.u.validate();
  data.grid.s.validate();
  if (data.Y.rows() != data.grid.u.count || data.Y.cols() != data.grid.s.count ||
      data.R.rows() != data.grid.u.count || data.R.cols() != data.grid.s.count)
    throw std::invalid_argument("fit_2d: binned data does not match its grid");
  if (data.Y.sum() <= 0.0) throw std::runtime_error("no events to fit");

  const int cu = grid_u.n_basis();
  const int cs = grid_s.n_basis();
  const std::vector<double> mid_u = data.grid.u.midpoints();
  const std::vector<double> mid_s = data.grid.s.midpoints();
  const Matrix Bu = build_basis(grid_u, mid_u).values;
  const Matrix Bs = build_basis(grid_s, mid_s).values;
  const Matrix pen = penalty.matrix(cu, cs);

  const Matrix& Y = data.Y;
  const Matrix& R = data.R;

  const auto to_array = [&](const Vector& a) {
    return Matrix(Eigen::Map<const Matrix>(a.data(), cu, cs));
  };
  const auto to_vec = [&](const Matrix& A) {
    return Vector(Eigen::Map<const Vector>(A.data(), A.size()));
  };

  Vector alpha;
  if (control.init_alpha) {
    if (control.init_alpha->size() != cu * cs)
      throw std::invalid_argument("fit_2d: warm-start coefficient size mismatch");
    alpha = *control.init_alpha;
  } else {
    const Matrix eta0 =
        ((Y.array() + 0.5) / (R.array() + 1e-10)).log().matrix();
    const Matrix g0 = inner_product_2d(Bu, Bs, Matrix::Ones(Y.rows(), Y.cols())) + pen;
    const Vector rhs0 = to_vec(Bu.transpose() * eta0 * Bs);
    alpha = detail::solve_checked(detail::factor_system(g0, "fit_2d init"), rhs0, "fit_2d init");
  }

  const auto penalized_deviance = [&](const Vector& a) {
    const Matrix eta = linear_predictor_2d(Bu, to_array(a), Bs);
    const Matrix mu = R.array() * eta.array().exp();
    return detail::full_deviance_2d(Y, mu, R) + a.dot(pen * a);
  };

  Fit2DResult out;
  out.penalty = penalty;
  out.data_grid = data.grid;

  double current_pd = penalized_deviance(alpha);
  bool converged = false;
  int iterations = 0;
  for (int iter = 1; iter <= control.max_iter; ++iter) {
    iterations = iter;
    out.penalized_deviance_trace.push_back(current_pd);

    const Matrix eta = linear_predictor_2d(Bu, to_array(alpha), Bs);
    const Matrix mu = R.array() * eta.array().exp();
    const Matrix g = inner_product_2d(Bu, Bs, mu) + pen;
    const Vector rhs = rhs_2d(Bu, Bs, Y, mu, eta);
    const auto f = detail::factor_system(g, "fit_2d");
    const Vector proposal = detail::solve_checked(f, rhs, "fit_2d");

    Vector candidate = proposal;
    double candidate_pd = penalized_deviance(candidate);
    for (int h = 0; candidate_pd > current_pd * (1.0 + 1e-12) + 1e-12 &&
                    h < control.max_step_halvings;
         ++h) {
      candidate = 0.5 * (alpha + candidate);
      candidate_pd = penalized_deviance(candidate);
    }

    const double delta = (candidate - alpha).cwiseAbs().maxCoeff();
    alpha = candidate;
    current_pd = candidate_pd;
    if (delta < control.tol) {
      converged = true;
      break;
    }
  }
  out.penalized_deviance_trace.push_back(current_pd);
  out.converged = converged;
  out.iterations = iterations;

  out.A = to_array(alpha);
  out.eta_hat = linear_predictor_2d(Bu, out.A, Bs);
  out.mu_hat = R.array() * out.eta_hat.array().exp();

  const Matrix g0 = inner_product_2d(Bu, Bs, out.mu_hat);
  out.factor = detail::factor_system(Matrix(g0 + pen), "fit_2d");
  out.ed = out.factor.solve(g0).trace();
  if (!std::isfinite(out.ed))
    throw std::runtime_error("fit_2d: singular penalized system, rcond=" +
                             std::to_string(out.factor.rcond()));
  if (control.compute_covariance)
    out.cov_alpha = out.factor.solve(Matrix::Identity(cu * cs, cu * cs));
  out.deviance = detail::reported_deviance_2d(Y, out.mu_hat, R);
  out.aic = out.deviance + 2.0 * out.ed;
  detail::observed_hull(R, data.grid, out.hull_u_edge, out.hull_s_edge);
  return out;
}

// ---------------------------------------------------------------------------
// Smoothing-parameter search shared by the surface and hazard-ratio models.
// ---------------------------------------------------------------------------

struct RhoStrategy {
  enum class Kind { grid, numeric };
  Kind kind = Kind::numeric;
  // grid mode: log10(rho) lattice per axis
  double grid_lo = -2.0;
  double grid_hi = 6.0;
  double grid_step = 0.5;
  // numeric mode: simplex search with box constraints on log10(rho)
  double start_u = 1.0;
  double start_s = 1.0;
  double rel_tol = 1e-3;
  int max_evals = 200;
  double box_lo = -4.0;
  double box_hi = 8.0;
  bool warm_start = true;
};

struct RhoTracePoint {
  double log10_rho_u = 0.0;
  double log10_rho_s = 0.0;
  double aic = 0.0;
  bool converged = false;
};

namespace detail {

struct RhoSearchOutcome {
  double log10_rho_u = 0.0;
  double log10_rho_s = 0.0;
  std::vector<RhoTracePoint> trace;
  bool boundary_warning = false;
};

// eval must return the AIC (or +inf for a failed fit) and a convergence flag.
template <class Eval>
RhoSearchOutcome run_rho_search(const RhoStrategy& strategy, Eval&& eval) {
  RhoSearchOutcome out;
  if (strategy.kind == RhoStrategy::Kind::grid) {
    std::vector<double> lattice;
    for (double v = strategy.grid_lo; v <= strategy.grid_hi + 1e-9; v += strategy.grid_step)
      lattice.push_back(v);
    double best = std::numeric_limits<double>::infinity();
    bool have_best = false;
    // Ascending scan with <= acceptance: AIC ties go to the larger rho.
    for (double lu : lattice)
      for (double ls : lattice) {
        const auto [aic, conv] = eval(lu, ls);
        out.trace.push_back({lu, ls, aic, conv});
        if (aic <= best) {
          best = aic;
          out.log10_rho_u = lu;
          out.log10_rho_s = ls;
          have_best = true;
        }
      }
    if (!have_best)
      throw std::runtime_error("smoothing search failed: no grid point produced a finite AIC");
    const double edge = strategy.grid_step * 0.5;
    out.boundary_warning = std::abs(out.log10_rho_u - lattice.front()) < edge ||
                           std::abs(out.log10_rho_u - lattice.back()) < edge ||
                           std::abs(out.log10_rho_s - lattice.front()) < edge ||
                           std::abs(out.log10_rho_s - lattice.back()) < edge;
    return out;
  }

  const auto clamp = [&](double v) {
    return std::min(std::max(v, strategy.box_lo), strategy.box_hi);
  };
  const auto objective = [&](const std::vector<double>& x) {
    const double lu = clamp(x[0]);
    const double ls = clamp(x[1]);
    const auto [aic, conv] = eval(lu, ls);
    out.trace.push_back({lu, ls, aic, conv});
    return aic;
  };
  NelderMeadOptions nm;
  nm.initial_step = 1.0;
  nm.rel_ftol = strategy.rel_tol;
  nm.max_evals = strategy.max_evals;
  const NelderMeadResult res =
      nelder_mead(objective, {strategy.start_u, strategy.start_s}, nm);
  if (!std::isfinite(res.fx))
    throw std::runtime_error("smoothing search failed: no evaluation produced a finite AIC");
  out.log10_rho_u = clamp(res.x[0]);
  out.log10_rho_s = clamp(res.x[1]);
  out.boundary_warning = std::abs(out.log10_rho_u - strategy.box_lo) < 1e-6 ||
                         std::abs(out.log10_rho_u - strategy.box_hi) < 1e-6 ||
                         std::abs(out.log10_rho_s - strategy.box_lo) < 1e-6 ||
                         std::abs(out.log10_rho_s - strategy.box_hi) < 1e-6;
  return out;
}

}  // namespace detail

struct RhoSelection2D {
  Fit2DResult best;
  double log10_rho_u = 0.0;
  double log10_rho_s = 0.0;
  std::vector<RhoTracePoint> trace;
  bool boundary_warning = false;
};

inline RhoSelection2D select_rho_2d(const BinnedData2D& data, const KnotGrid& grid_u,
                                    const KnotGrid& grid_s, int order_u, int order_s,
                                    const RhoStrategy& strategy = {},
                                    const FitControl& control = {}) {
  std::optional<Vector> warm = control.init_alpha;
  const auto eval = [&](double lu, double ls) -> std::pair<double, bool> {
    Penalty2D pen{std::pow(10.0, lu), std::pow(10.0, ls), order_u, order_s};
    FitControl step = control;
    step.compute_covariance = false;
    step.init_alpha = strategy.warm_start ? warm : control.init_alpha;
    try {
      const Fit2DResult fit = fit_2d(data, grid_u, grid_s, pen, step);
      if (strategy.warm_start)
        warm = Vector(Eigen::Map<const Vector>(fit.A.data(), fit.A.size()));
      return {fit.aic, fit.converged};
    } catch (const std::runtime_error&) {
      return {std::numeric_limits<double>::infinity(), false};
    }
  };

  const detail::RhoSearchOutcome search = detail::run_rho_search(strategy, eval);

  RhoSelection2D out;
  out.log10_rho_u = search.log10_rho_u;
  out.log10_rho_s = search.log10_rho_s;
  out.trace = search.trace;
  out.boundary_warning = search.boundary_warning;

  Penalty2D pen{std::pow(10.0, search.log10_rho_u), std::pow(10.0, search.log10_rho_s),
                order_u, order_s};
  FitControl final_control = control;
  if (strategy.warm_start && warm) final_control.init_alpha = warm;
  out.best = fit_2d(data, grid_u, grid_s, pen, final_control);
  return out;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

// A query location, either directly as (u, s) or as (t, s) with t >= s.
struct SurfacePoint {
  double a = 0.0;
  double b = 0.0;
  enum class Frame { us, ts } frame = Frame::us;

  static SurfacePoint us(double u, double s) { return {u, s, Frame::us}; }
  static SurfacePoint ts(double t, double s) { return {t, s, Frame::ts}; }
};

struct Prediction2D {
  Vector eta;
  Vector lambda;
  Vector se_eta;
  std::vector<bool> extrapolated;
};

namespace detail {

inline bool outside_hull(const Fit2DResult& fit, double u, double s) {
  if (u < fit.data_grid.u.origin || u > fit.hull_u_edge) return true;
  if (s < fit.data_grid.s.origin) return true;
  const int row = std::clamp(fit.data_grid.u.find_bin(u), 0, fit.data_grid.u.count - 1);
  return s > fit.hull_s_edge[row];
}

}  // namespace detail

inline Prediction2D predict_2d(const Fit2DResult& fit, const KnotGrid& grid_u,
                               const KnotGrid& grid_s, std::span<const SurfacePoint> points) {
  const int cu = grid_u.n_basis();
  const int cs = grid_s.n_basis();
  if (fit.A.rows() != cu || fit.A.cols() != cs)
    throw std::invalid_argument("predict_2d: fit does not match the supplied grids");

  Prediction2D out;
  out.eta.resize(static_cast<Eigen::Index>(points.size()));
  out.se_eta.resize(static_cast<Eigen::Index>(points.size()));
  out.extrapolated.resize(points.size());

  Vector kappa(cu * cs);
  for (std::size_t i = 0; i < points.size(); ++i) {
    double u = points[i].a;
    double s = points[i].b;
    if (points[i].frame == SurfacePoint::Frame::ts) {
      const auto us = transform_ts_to_us(points[i].a, points[i].b);
      u = us.first;
      s = us.second;
    }
    const double pu[1] = {u};
    const double ps[1] = {s};
    const Vector bu = build_basis(grid_u, pu).values.row(0);
    const Vector bs = build_basis(grid_s, ps).values.row(0);
    out.eta[static_cast<Eigen::Index>(i)] = bu.dot(fit.A * bs);

    for (int m = 0; m < cs; ++m)
      for (int l = 0; l < cu; ++l) kappa[m * cu + l] = bu[l] * bs[m];
    double var;
    if (fit.cov_alpha.size() > 0)
      var = kappa.dot(fit.cov_alpha * kappa);
    else
      var = kappa.dot(fit.factor.solve(kappa));
    out.se_eta[static_cast<Eigen::Index>(i)] = std::sqrt(std::max(var, 0.0));
    out.extrapolated[i] = detail::outside_hull(fit, u, s);
  }
  out.lambda = out.eta.array().exp();
  return out;
}

}  // namespace hazsmooth
