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
#include "hazsmooth/fit2d.hpp"
#include "hazsmooth/glam.hpp"
#include "hazsmooth/lexis.hpp"
#include "hazsmooth/types.hpp"

namespace hazsmooth {

// Proportional-hazards extension of the two-scale surface model: subject i
// has log-hazard Eta_base(u, s) + x_i' beta.  The baseline surface keeps its
// difference penalty; beta is unpenalized.

// One Newton-step system, assembled without per-subject design matrices.
// Subject weight arrays enter only through their aggregates: Wbar sums the
// fitted means over subjects, Ux[v] weights that sum by covariate v.
struct PHSystem {
  Matrix G11;        // c x c      baseline block  B' diag(sum_i mu_i) B
  Matrix G12;        // c x p      cross block
  Matrix G22;        // p x p      covariate block X' diag(v) X
  Vector rhs_alpha;  // c
  Vector rhs_beta;   // p
  Matrix Wbar;       // n_u x n_s  total fitted mean per cell
  Matrix Ydot;       // n_u x n_s  total events per cell
  Vector v;          // per-subject fitted totals
};

namespace detail {

struct PHDevianceParts {
  double sum_mu = 0.0;
  double n_events_counted = 0.0;     // events in cells with positive exposure
  double sum_log_mu_events = 0.0;
};

inline PHDevianceParts ph_deviance_parts(const BinnedData3D& data, const Matrix& E_base,
                                         const Vector& beta) {
  PHDevianceParts parts;
  const Eigen::Index n = static_cast<Eigen::Index>(data.slices.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const PersonSlice& sl = data.slices[static_cast<std::size_t>(i)];
    const double offset = beta.size() ? data.X.row(i).dot(beta) : 0.0;
    const double eo = std::exp(offset);
    for (Eigen::Index k = 0; k < sl.exposure.size(); ++k) {
      const double r = sl.exposure[k];
      if (r <= 0.0) continue;
      parts.sum_mu += r * std::exp(E_base(sl.u_row, sl.s_first + static_cast<int>(k))) * eo;
    }
    if (sl.event_bin >= 0) {
      const int k = sl.event_bin - sl.s_first;
      const double r = (k >= 0 && k < sl.exposure.size()) ? sl.exposure[k] : 0.0;
      if (r > 0.0) {
        parts.n_events_counted += 1.0;
        parts.sum_log_mu_events += std::log(r) + E_base(sl.u_row, sl.event_bin) + offset;
      }
    }
  }
  return parts;
}

inline double ph_full_deviance(const PHDevianceParts& parts) {
  return 2.0 * (parts.sum_mu - parts.n_events_counted) - 2.0 * parts.sum_log_mu_events;
}

}  // namespace detail

inline PHSystem ph_build_system(const BinnedData3D& data, const Matrix& Bu, const Matrix& Bs,
                                const Matrix& A, const Vector& beta) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.slices.size());
  const Eigen::Index p = data.X.cols();
  const Eigen::Index n_u = Bu.rows();
  const Eigen::Index n_s = Bs.rows();

  const Matrix E_base = linear_predictor_2d(Bu, A, Bs);

  PHSystem sys;
  sys.Wbar = Matrix::Zero(n_u, n_s);
  sys.Ydot = Matrix::Zero(n_u, n_s);
  sys.v = Vector::Zero(n);
  std::vector<Matrix> Ux(static_cast<std::size_t>(p), Matrix::Zero(n_u, n_s));
  Vector a_dot = Vector::Zero(n);  // per-subject sum of mu * eta_base
  Vector events = Vector::Zero(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const PersonSlice& sl = data.slices[static_cast<std::size_t>(i)];
    const double offset = p ? data.X.row(i).dot(beta) : 0.0;
    const double eo = std::exp(offset);
    for (Eigen::Index k = 0; k < sl.exposure.size(); ++k) {
      const double r = sl.exposure[k];
      if (r <= 0.0) continue;
      const int col = sl.s_first + static_cast<int>(k);
      const double e_cell = E_base(sl.u_row, col);
      const double mu = r * std::exp(e_cell) * eo;
      sys.Wbar(sl.u_row, col) += mu;
      sys.v[i] += mu;
      a_dot[i] += mu * e_cell;
      for (Eigen::Index var = 0; var < p; ++var)
        Ux[static_cast<std::size_t>(var)](sl.u_row, col) += data.X(i, var) * mu;
    }
    if (sl.event_bin >= 0) {
      sys.Ydot(sl.u_row, sl.event_bin) += 1.0;
      events[i] = 1.0;
    }
  }

  sys.G11 = inner_product_2d(Bu, Bs, sys.Wbar);
  sys.G12.resize(Bu.cols() * Bs.cols(), p);
  Matrix core = (sys.Ydot - sys.Wbar) + sys.Wbar.cwiseProduct(E_base);
  for (Eigen::Index var = 0; var < p; ++var) {
    const Matrix& uxv = Ux[static_cast<std::size_t>(var)];
    const Matrix t = Bu.transpose() * uxv * Bs;
    sys.G12.col(var) = Eigen::Map<const Vector>(t.data(), t.size());
    core += beta[var] * uxv;
  }
  sys.G22 = data.X.transpose() * sys.v.asDiagonal() * data.X;

  const Matrix t = Bu.transpose() * core * Bs;
  sys.rhs_alpha = Eigen::Map<const Vector>(t.data(), t.size());
  sys.rhs_beta.resize(p);
  for (Eigen::Index var = 0; var < p; ++var) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double offset = data.X.row(i).dot(beta);
      acc += data.X(i, var) * (events[i] - sys.v[i] + a_dot[i] + sys.v[i] * offset);
    }
    sys.rhs_beta[var] = acc;
  }
  return sys;
}

struct PHControl {
  int max_iter = 50;
  double tol = 1e-7;
  int max_step_halvings = 10;
  bool compute_covariance = true;
  std::optional<std::pair<Matrix, Vector>> init;  // (A, beta) warm start
};

struct PHFitResult {
  Matrix A;
  Vector beta;
  Vector se_beta;
  Penalty2D penalty;
  Matrix eta_base;  // baseline log-hazard at bin midpoints
  double deviance = 0.0;
  double ed_baseline = 0.0;
  double ed_total = 0.0;  // ed_baseline + number of covariates
  double aic = 0.0;
  Eigen::LDLT<Matrix> factor;  // penalized block system at the solution
  Matrix cov_theta;            // (c+p)^2, empty unless requested
  bool converged = false;
  int iterations = 0;
  std::vector<double> penalized_deviance_trace;
  double hull_u_edge = 0.0;
  Vector hull_s_edge;
  BinGrid2D data_grid;
};

namespace detail {

inline void check_covariates(const Matrix& X, Eigen::Index n) {
  const Eigen::Index p = X.cols();
  if (n < p + 1)
    throw std::invalid_argument("fit_ph: need more individuals than covariates (n=" +
                                std::to_string(n) + ", p=" + std::to_string(p) + ")");
  for (Eigen::Index v = 0; v < p; ++v) {
    if (X.col(v).maxCoeff() == X.col(v).minCoeff())
      throw std::invalid_argument("fit_ph: covariate column " + std::to_string(v) +
                                  " is constant; drop it, the baseline absorbs the intercept");
  }
}

inline std::string collinear_columns_message(const Eigen::FullPivLU<Matrix>& lu) {
  std::string cols;
  const Matrix kernel = lu.kernel();
  for (Eigen::Index v = 0; v < kernel.rows(); ++v) {
    if (kernel.row(v).cwiseAbs().maxCoeff() > 1e-8) {
      if (!cols.empty()) cols += ", ";
      cols += std::to_string(v);
    }
  }
  return "fit_ph: collinear covariate columns: " + cols;
}

}  // namespace detail

inline PHFitResult fit_ph(const BinnedData3D& data, const KnotGrid& grid_u,
                          const KnotGrid& grid_s, const Penalty2D& penalty,
                          const PHControl& control = {}) {
  grid_u.validate();
  grid_s.validate();
  data.grid.u.validate();
  data.grid.s.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(data.slices.size());
  const Eigen::Index p = data.X.cols();
  if (data.X.rows() != n)
    throw std::invalid_argument("fit_ph: covariate rows do not match the number of subjects");
  detail::check_covariates(data.X, n);

  const BinnedData2D agg = data.aggregate();
  if (agg.Y.sum() <= 0.0) throw std::runtime_error("no events to fit");

  const int cu = grid_u.n_basis();
  const int cs = grid_s.n_basis();
  const Eigen::Index c = static_cast<Eigen::Index>(cu) * cs;
  const std::vector<double> mid_u = data.grid.u.midpoints();
  const std::vector<double> mid_s = data.grid.s.midpoints();
  const Matrix Bu = build_basis(grid_u, mid_u).values;
  const Matrix Bs = build_basis(grid_s, mid_s).values;
  const Matrix pen = penalty.matrix(cu, cs);

  Matrix A;
  Vector beta;
  if (control.init) {
    A = control.init->first;
    beta = control.init->second;
    if (A.rows() != cu || A.cols() != cs || beta.size() != p)
      throw std::invalid_argument("fit_ph: warm-start dimensions mismatch");
  } else {
    // Baseline-only fit of the aggregated grid gives the starting surface.
    FitControl base;
    base.compute_covariance = false;
    A = fit_2d(agg, grid_u, grid_s, penalty, base).A;
    beta = Vector::Zero(p);
  }

  const auto penalized_deviance = [&](const Matrix& A_try, const Vector& beta_try) {
    const Matrix e_base = linear_predictor_2d(Bu, A_try, Bs);
    const double dev = detail::ph_full_deviance(detail::ph_deviance_parts(data, e_base, beta_try));
    const Vector a = Eigen::Map<const Vector>(A_try.data(), A_try.size());
    return dev + a.dot(pen * a);
  };

  PHFitResult out;
  out.penalty = penalty;
  out.data_grid = data.grid;

  double current_pd = penalized_deviance(A, beta);
  bool converged = false;
  int iterations = 0;
  for (int iter = 1; iter <= control.max_iter; ++iter) {
    iterations = iter;
    out.penalized_deviance_trace.push_back(current_pd);

    const PHSystem sys = ph_build_system(data, Bu, Bs, A, beta);
    const Matrix g11p = sys.G11 + pen;
    const auto f11 = detail::factor_system(g11p, "fit_ph");

    Vector alpha_new;
    Vector beta_new = beta;
    if (p > 0) {
      // Solve the block system through the Schur complement on the beta
      // block; the baseline block is the only large factorisation.
      const Matrix s1 = f11.solve(sys.G12);
      const Vector s2 = detail::solve_checked(f11, sys.rhs_alpha, "fit_ph");
      const Matrix schur = sys.G22 - sys.G12.transpose() * s1;
      Eigen::FullPivLU<Matrix> lu(schur);
      if (lu.rank() < p) throw std::runtime_error(detail::collinear_columns_message(lu));
      beta_new = lu.solve(sys.rhs_beta - sys.G12.transpose() * s2);
      alpha_new = s2 - s1 * beta_new;
    } else {
      alpha_new = detail::solve_checked(f11, sys.rhs_alpha, "fit_ph");
    }

    Matrix A_cand = Eigen::Map<const Matrix>(alpha_new.data(), cu, cs);
    Vector beta_cand = beta_new;
    double candidate_pd = penalized_deviance(A_cand, beta_cand);
    for (int h = 0; candidate_pd > current_pd * (1.0 + 1e-12) + 1e-12 &&
                    h < control.max_step_halvings;
         ++h) {
      A_cand = 0.5 * (A + A_cand);
      beta_cand = 0.5 * (beta + beta_cand);
      candidate_pd = penalized_deviance(A_cand, beta_cand);
    }

    double delta = (A_cand - A).cwiseAbs().maxCoeff();
    if (p > 0) delta = std::max(delta, (beta_cand - beta).cwiseAbs().maxCoeff());
    A = A_cand;
    beta = beta_cand;
    current_pd = candidate_pd;
    if (delta < control.tol) {
      converged = true;
      break;
    }
  }
  out.penalized_deviance_trace.push_back(current_pd);
  out.converged = converged;
  out.iterations = iterations;

  out.A = A;
  out.beta = beta;
  out.eta_base = linear_predictor_2d(Bu, A, Bs);

  // Information blocks at the solution; the effective dimension is taken on
  // the full (alpha, beta) system so it splits as ed_baseline + p.
  const PHSystem sys = ph_build_system(data, Bu, Bs, A, beta);
  Matrix g0 = Matrix::Zero(c + p, c + p);
  g0.topLeftCorner(c, c) = sys.G11;
  if (p > 0) {
    g0.topRightCorner(c, p) = sys.G12;
    g0.bottomLeftCorner(p, c) = sys.G12.transpose();
    g0.bottomRightCorner(p, p) = sys.G22;
  }
  Matrix gp = g0;
  gp.topLeftCorner(c, c) += pen;
  out.factor = detail::factor_system(gp, "fit_ph");
  out.ed_total = out.factor.solve(g0).trace();
  if (!std::isfinite(out.ed_total))
    throw std::runtime_error("fit_ph: singular penalized system, rcond=" +
                             std::to_string(out.factor.rcond()));
  out.ed_baseline = out.ed_total - static_cast<double>(p);
  if (control.compute_covariance)
    out.cov_theta = out.factor.solve(Matrix::Identity(c + p, c + p));

  out.se_beta.resize(p);
  if (p > 0) {
    if (out.cov_theta.size() > 0) {
      out.se_beta = out.cov_theta.diagonal().tail(p).cwiseMax(0.0).cwiseSqrt();
    } else {
      // Without the full inverse, the beta covariance is the inverse Schur
      // complement of the penalized baseline block.
      const Matrix g11p = sys.G11 + pen;
      const Matrix schur =
          sys.G22 - sys.G12.transpose() * Eigen::LDLT<Matrix>(g11p).solve(sys.G12);
      out.se_beta = schur.inverse().diagonal().cwiseMax(0.0).cwiseSqrt();
    }
  }

  const detail::PHDevianceParts parts = detail::ph_deviance_parts(data, out.eta_base, beta);
  out.deviance = -2.0 * parts.sum_log_mu_events;
  out.aic = out.deviance + 2.0 * out.ed_total;
  detail::observed_hull(agg.R, data.grid, out.hull_u_edge, out.hull_s_edge);
  return out;
}

struct RhoSelectionPH {
  PHFitResult best;
  double log10_rho_u = 0.0;
  double log10_rho_s = 0.0;
  std::vector<RhoTracePoint> trace;
  bool boundary_warning = false;
};

inline RhoSelectionPH select_rho_ph(const BinnedData3D& data, const KnotGrid& grid_u,
                                    const KnotGrid& grid_s, int order_u, int order_s,
                                    const RhoStrategy& strategy = {},
                                    const PHControl& control = {}) {
  std::optional<std::pair<Matrix, Vector>> warm = control.init;
  const auto eval = [&](double lu, double ls) -> std::pair<double, bool> {
    Penalty2D pen{std::pow(10.0, lu), std::pow(10.0, ls), order_u, order_s};
    PHControl step = control;
    step.compute_covariance = false;
    step.init = strategy.warm_start ? warm : control.init;
    try {
      const PHFitResult fit = fit_ph(data, grid_u, grid_s, pen, step);
      if (strategy.warm_start) warm = std::make_pair(fit.A, fit.beta);
      return {fit.aic, fit.converged};
    } catch (const std::runtime_error&) {
      return {std::numeric_limits<double>::infinity(), false};
    }
  };

  const detail::RhoSearchOutcome search = detail::run_rho_search(strategy, eval);

  RhoSelectionPH out;
  out.log10_rho_u = search.log10_rho_u;
  out.log10_rho_s = search.log10_rho_s;
  out.trace = search.trace;
  out.boundary_warning = search.boundary_warning;

  Penalty2D pen{std::pow(10.0, search.log10_rho_u), std::pow(10.0, search.log10_rho_s),
                order_u, order_s};
  PHControl final_control = control;
  if (strategy.warm_start && warm) final_control.init = warm;
  out.best = fit_ph(data, grid_u, grid_s, pen, final_control);
  return out;
}

// Prediction for a subject with covariate vector x at the given locations.
inline Prediction2D predict_ph(const PHFitResult& fit, const KnotGrid& grid_u,
                               const KnotGrid& grid_s, std::span<const SurfacePoint> points,
                               const Vector& x) {
  const int cu = grid_u.n_basis();
  const int cs = grid_s.n_basis();
  const Eigen::Index c = static_cast<Eigen::Index>(cu) * cs;
  const Eigen::Index p = fit.beta.size();
  if (fit.A.rows() != cu || fit.A.cols() != cs)
    throw std::invalid_argument("predict_ph: fit does not match the supplied grids");
  if (x.size() != p)
    throw std::invalid_argument("predict_ph: covariate vector has wrong length");

  Prediction2D out;
  out.eta.resize(static_cast<Eigen::Index>(points.size()));
  out.se_eta.resize(static_cast<Eigen::Index>(points.size()));
  out.extrapolated.resize(points.size());

  Vector cvec(c + p);
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
    out.eta[static_cast<Eigen::Index>(i)] = bu.dot(fit.A * bs) + (p ? x.dot(fit.beta) : 0.0);

    for (int m = 0; m < cs; ++m)
      for (int l = 0; l < cu; ++l) cvec[m * cu + l] = bu[l] * bs[m];
    cvec.tail(p) = x;
    double var;
    if (fit.cov_theta.size() > 0)
      var = cvec.dot(fit.cov_theta * cvec);
    else
      var = cvec.dot(fit.factor.solve(cvec));
    out.se_eta[static_cast<Eigen::Index>(i)] = std::sqrt(std::max(var, 0.0));

    const int row = std::clamp(fit.data_grid.u.find_bin(u), 0, fit.data_grid.u.count - 1);
    out.extrapolated[i] = u < fit.data_grid.u.origin || u > fit.hull_u_edge ||
                          s < fit.data_grid.s.origin || s > fit.hull_s_edge[row];
  }
  out.lambda = out.eta.array().exp();
  return out;
}

}  // namespace hazsmooth
