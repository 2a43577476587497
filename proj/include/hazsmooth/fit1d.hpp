#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazsmooth/basis.hpp"
#include "hazsmooth/lexis.hpp"
#include "hazsmooth/types.hpp"

namespace hazsmooth {

struct FitControl {
  int max_iter = 50;
  double tol = 1e-7;            // max absolute coefficient change
  int max_step_halvings = 10;
  bool compute_covariance = true;
  std::optional<Vector> init_alpha;  // warm start; for surfaces this is vec(A)
};

struct Fit1DResult {
  Vector alpha;
  double rho = 0.0;
  int penalty_order = 0;
  Vector eta_hat;  // log-hazard at bin midpoints
  Vector mu_hat;   // fitted counts
  double deviance = 0.0;
  double ed = 0.0;  // effective dimension
  double aic = 0.0;
  Matrix cov_alpha;
  bool converged = false;
  int iterations = 0;
  std::vector<double> penalized_deviance_trace;
  double data_lo = 0.0;  // grid range of the fitted data, for extrapolation flags
  double data_hi = 0.0;
};

namespace detail {

inline Eigen::LDLT<Matrix> factor_system(const Matrix& g, const char* what) {
  Eigen::LDLT<Matrix> f(g);
  if (f.info() != Eigen::Success)
    throw std::runtime_error(std::string(what) + ": penalized system factorisation failed, rcond=" +
                             std::to_string(f.rcond()));
  return f;
}

inline Vector solve_checked(const Eigen::LDLT<Matrix>& f, const Vector& rhs, const char* what) {
  Vector x = f.solve(rhs);
  if (!x.allFinite())
    throw std::runtime_error(std::string(what) + ": singular penalized system, rcond=" +
                             std::to_string(f.rcond()));
  return x;
}

// Full Poisson deviance 2 sum[y log(y/mu) - (y - mu)], used to monitor the
// iteration.  Cells with zero exposure carry no information about the
// coefficients (mu = 0 identically) and are skipped; a positive count with
// zero fitted mean elsewhere yields +inf, which step-halving then rejects.
inline double full_deviance(const Vector& y, const Vector& mu, const Vector& r) {
  double dev = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    if (r[j] <= 0.0) continue;
    dev += 2.0 * (mu[j] - y[j]);
    if (y[j] > 0.0) {
      if (mu[j] <= 0.0) return std::numeric_limits<double>::infinity();
      dev += 2.0 * y[j] * std::log(y[j] / mu[j]);
    }
  }
  return dev;
}

// Deviance as reported (and fed into the AIC): 2 sum y log(y/mu) over cells
// with events.  At an interior optimum the linear terms cancel against the
// penalty, so this differs from full_deviance by the score identity only.
inline double reported_deviance(const Vector& y, const Vector& mu, const Vector& r) {
  double dev = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    if (r[j] <= 0.0 || y[j] <= 0.0) continue;
    if (mu[j] <= 0.0) return std::numeric_limits<double>::infinity();
    dev += 2.0 * y[j] * std::log(y[j] / mu[j]);
  }
  return dev;
}

}  // namespace detail

// Penalized Poisson fit of a smooth log-hazard on one time scale.  The model
// is y_j ~ Poisson(r_j exp(eta_j)) with eta = B alpha and a ridge-free
// difference penalty rho ||D_d alpha||^2 on the coefficients.
inline Fit1DResult fit_1d(const BinnedData1D& data, const KnotGrid& grid, int penalty_order,
                          double rho, const FitControl& control = {}) {
  grid.validate();
  data.grid.validate();
  if (data.y.size() != data.grid.count || data.r.size() != data.grid.count)
    throw std::invalid_argument("fit_1d: binned data does not match its grid");
  if (!(rho > 0.0) || !std::isfinite(rho))
    throw std::invalid_argument("fit_1d: rho must be positive and finite");
  if (data.y.sum() <= 0.0) throw std::runtime_error("no events to fit");

  const int c = grid.n_basis();
  const std::vector<double> mid = data.grid.midpoints();
  const Matrix B = build_basis(grid, mid).values;
  const Matrix D = build_difference_matrix(c, penalty_order).values;
  const Matrix pen = rho * (D.transpose() * D);

  const Vector& y = data.y;
  const Vector& r = data.r;

  Vector alpha;
  if (control.init_alpha) {
    if (control.init_alpha->size() != c)
      throw std::invalid_argument("fit_1d: warm-start coefficient size mismatch");
    alpha = *control.init_alpha;
  } else {
    // Project a crude empirical log-rate onto the basis, penalized least
    // squares so the projection is defined even with empty bins.
    const Vector eta0 = ((y.array() + 0.5) / (r.array() + 1e-10)).log().matrix();
    const Matrix g0 = B.transpose() * B + pen;
    alpha = detail::solve_checked(detail::factor_system(g0, "fit_1d init"),
                                  B.transpose() * eta0, "fit_1d init");
  }

  const auto penalized_deviance = [&](const Vector& a) {
    const Vector eta = B * a;
    const Vector mu = r.array() * eta.array().exp();
    return detail::full_deviance(y, mu, r) + a.dot(pen * a);
  };

  Fit1DResult out;
  out.rho = rho;
  out.penalty_order = penalty_order;
  out.data_lo = data.grid.origin;
  out.data_hi = data.grid.end();

  double current_pd = penalized_deviance(alpha);
  bool converged = false;
  int iterations = 0;
  for (int iter = 1; iter <= control.max_iter; ++iter) {
    iterations = iter;
    out.penalized_deviance_trace.push_back(current_pd);

    const Vector eta = B * alpha;
    const Vector mu = r.array() * eta.array().exp();
    const Matrix g = B.transpose() * mu.asDiagonal() * B + pen;
    const Vector rhs = B.transpose() * (mu.cwiseProduct(eta) + y - mu);
    const auto f = detail::factor_system(g, "fit_1d");
    const Vector proposal = detail::solve_checked(f, rhs, "fit_1d");

    // Step-halving towards the current iterate if the full Newton step
    // increases the penalized deviance.
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

  out.alpha = alpha;
  out.eta_hat = B * alpha;
  out.mu_hat = r.array() * out.eta_hat.array().exp();

  const Matrix g0 = B.transpose() * out.mu_hat.asDiagonal() * B;
  const Matrix g = g0 + pen;
  const auto f = detail::factor_system(g, "fit_1d");
  out.ed = f.solve(g0).trace();
  if (!std::isfinite(out.ed))
    throw std::runtime_error("fit_1d: singular penalized system, rcond=" +
                             std::to_string(f.rcond()));
  if (control.compute_covariance) out.cov_alpha = f.solve(Matrix::Identity(c, c));
  out.deviance = detail::reported_deviance(y, out.mu_hat, r);
  out.aic = out.deviance + 2.0 * out.ed;
  return out;
}

struct RhoProfilePoint {
  double log10_rho = 0.0;
  double aic = 0.0;
  double ed = 0.0;
  double deviance = 0.0;
  bool converged = false;
};

struct RhoSelection1D {
  Fit1DResult best;
  std::vector<RhoProfilePoint> profile;
  std::size_t best_index = 0;
  bool boundary_warning = false;  // minimum sits on an end of the search grid
};

inline std::vector<double> default_log10_rho_grid_1d() {
  std::vector<double> g;
  g.reserve(41);
  for (int i = 0; i <= 40; ++i) g.push_back(-2.0 + 0.2 * i);
  return g;
}

// Profiles the AIC over a log10(rho) grid, warm-starting each fit from the
// previous one.  Ties prefer the larger rho (the smoother fit).
inline RhoSelection1D select_rho_1d(const BinnedData1D& data, const KnotGrid& grid,
                                    int penalty_order,
                                    std::span<const double> log10_rho_grid = {},
                                    const FitControl& control = {}) {
  std::vector<double> default_grid;
  if (log10_rho_grid.empty()) {
    default_grid = default_log10_rho_grid_1d();
    log10_rho_grid = default_grid;
  }

  RhoSelection1D out;
  double best_aic = std::numeric_limits<double>::infinity();
  FitControl step = control;
  for (std::size_t i = 0; i < log10_rho_grid.size(); ++i) {
    const double rho = std::pow(10.0, log10_rho_grid[i]);
    const Fit1DResult fit = fit_1d(data, grid, penalty_order, rho, step);
    step.init_alpha = fit.alpha;
    out.profile.push_back({log10_rho_grid[i], fit.aic, fit.ed, fit.deviance, fit.converged});
    if (fit.aic <= best_aic) {
      best_aic = fit.aic;
      out.best = fit;
      out.best_index = i;
    }
  }
  out.boundary_warning =
      out.best_index == 0 || out.best_index + 1 == log10_rho_grid.size();
  return out;
}

struct Prediction1D {
  Vector eta;
  Vector lambda;
  Vector se_eta;
  Vector lambda_lo;  // exp(eta - 2 se)
  Vector lambda_hi;  // exp(eta + 2 se)
  std::vector<bool> extrapolated;
};

inline Prediction1D predict_1d(const Fit1DResult& fit, const KnotGrid& grid,
                               std::span<const double> times) {
  if (fit.cov_alpha.size() == 0)
    throw std::invalid_argument("predict_1d: fit was run without covariance");
  const Matrix B = build_basis(grid, times).values;
  Prediction1D out;
  out.eta = B * fit.alpha;
  out.lambda = out.eta.array().exp();
  out.se_eta = ((B * fit.cov_alpha).cwiseProduct(B)).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
  out.lambda_lo = (out.eta - 2.0 * out.se_eta).array().exp();
  out.lambda_hi = (out.eta + 2.0 * out.se_eta).array().exp();
  out.extrapolated.resize(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    out.extrapolated[i] = times[i] < fit.data_lo || times[i] > fit.data_hi;
  return out;
}

}  // namespace hazsmooth
