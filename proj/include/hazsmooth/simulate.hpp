#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hazsmooth/fit2d.hpp"
#include "hazsmooth/lexis.hpp"
#include "hazsmooth/ph2d.hpp"
#include "hazsmooth/rng.hpp"
#include "hazsmooth/types.hpp"

namespace hazsmooth {

// True hazard shapes used in the simulation studies.  All are smooth in s
// with behaviour that drifts along u:
//   HM1  hump on s, no u effect
//   HM2  hump on s whose height and location drift with u
//   HM3  exponential increase in s, u-dependent level and rate
struct HazardSpec {
  enum class Kind { hm1, hm2, hm3, custom };
  Kind kind = Kind::hm1;
  std::function<double(double, double)> fn;  // used when kind == custom

  double operator()(double u, double s) const {
    switch (kind) {
      case Kind::hm1:
        return 0.06 * s * std::exp(-0.3 * s);
      case Kind::hm2: {
        const double a = 0.09 - 0.002 * u;
        const double b = 0.4 - 0.01 * u;
        return a * s * std::exp(-b * s);
      }
      case Kind::hm3: {
        const double a = 0.002 + 0.0008 * u;
        const double b = 0.15 - 0.003 * u;
        return a * std::exp(b * s);
      }
      case Kind::custom:
        return fn(u, s);
    }
    return 0.0;
  }

  static HazardSpec hm1() { return {Kind::hm1, {}}; }
  static HazardSpec hm2() { return {Kind::hm2, {}}; }
  static HazardSpec hm3() { return {Kind::hm3, {}}; }
  static HazardSpec custom(std::function<double(double, double)> f) {
    return {Kind::custom, std::move(f)};
  }
  static HazardSpec from_name(const std::string& name) {
    if (name == "HM1" || name == "hm1") return hm1();
    if (name == "HM2" || name == "hm2") return hm2();
    if (name == "HM3" || name == "hm3") return hm3();
    throw std::invalid_argument("unknown hazard shape: " + name);
  }
  const char* name() const {
    switch (kind) {
      case Kind::hm1: return "HM1";
      case Kind::hm2: return "HM2";
      case Kind::hm3: return "HM3";
      case Kind::custom: return "custom";
    }
    return "?";
  }
};

// How complete event times become observed records:
//   A  administrative censoring on the s scale at s_max
//   B  censoring on the t scale at t_max (so s_out = t_max - u)
//   C  scheme B plus a fraction of late entries, uniform on (0, entry_max),
//      dropping subjects whose exit precedes their entry
struct ObservationScheme {
  enum class Kind { a, b, c };
  Kind kind = Kind::a;
  double s_max = 20.0;
  double t_max = 30.0;
  double late_fraction = 0.2;
  double entry_max = 6.0;

  static ObservationScheme scheme_a() { return {Kind::a, 20.0, 30.0, 0.2, 6.0}; }
  static ObservationScheme scheme_b() { return {Kind::b, 20.0, 30.0, 0.2, 6.0}; }
  static ObservationScheme scheme_c() { return {Kind::c, 20.0, 30.0, 0.2, 6.0}; }
  static ObservationScheme from_name(const std::string& name) {
    if (name == "A" || name == "a") return scheme_a();
    if (name == "B" || name == "b") return scheme_b();
    if (name == "C" || name == "c") return scheme_c();
    throw std::invalid_argument("unknown observation scheme: " + name);
  }
  const char* name() const {
    switch (kind) {
      case Kind::a: return "A";
      case Kind::b: return "B";
      case Kind::c: return "C";
    }
    return "?";
  }
  // Upper end of the s range a scheme can produce.
  double s_span() const { return kind == Kind::a ? s_max : t_max; }
};

struct CovariateSpec {
  double beta1 = 0.5;  // on a standard normal covariate
  double beta2 = 0.7;  // on a centred binary covariate (+-0.5)
};

struct SimConfig {
  int n = 300;
  int replicates = 1;
  std::uint64_t seed = 1;
  double u_lo = 0.0;
  double u_hi = 20.0;
  std::optional<CovariateSpec> covariates;
};

inline constexpr double kHazardIntegrationStep = 0.01;
inline constexpr double kMaxEventTime = 200.0;

// Solves cumulative_hazard(s) = target for s by trapezoidal integration of
// the hazard along s with linear interpolation inside the final step.
// Returns kMaxEventTime when the target is never reached.
inline double invert_cumulative_hazard(const HazardSpec& spec, double u, double risk_multiplier,
                                       double target) {
  if (!(risk_multiplier > 0.0) || !std::isfinite(risk_multiplier))
    throw std::invalid_argument("invert_cumulative_hazard: risk multiplier must be positive");
  if (!(target >= 0.0)) throw std::invalid_argument("invert_cumulative_hazard: negative target");

  const double h = kHazardIntegrationStep;
  const int n_steps = static_cast<int>(std::lround(kMaxEventTime / h));
  double prev_s = 0.0;
  double prev_lam = spec(u, 0.0) * risk_multiplier;
  if (!(prev_lam >= 0.0) || !std::isfinite(prev_lam))
    throw std::invalid_argument("hazard evaluated negative or non-finite at s=0");
  double cum = 0.0;
  for (int k = 1; k <= n_steps; ++k) {
    const double s = k * h;
    const double lam = spec(u, s) * risk_multiplier;
    if (!(lam > 0.0) || !std::isfinite(lam))
      throw std::invalid_argument("hazard evaluated non-positive at u=" + std::to_string(u) +
                                  ", s=" + std::to_string(s));
    const double inc = 0.5 * (prev_lam + lam) * h;
    if (cum + inc >= target)
      return prev_s + h * ((inc > 0.0) ? (target - cum) / inc : 0.0);
    cum += inc;
    prev_lam = lam;
    prev_s = s;
  }
  return kMaxEventTime;
}

template <class Rng>
double sample_event_time(const HazardSpec& spec, double u, double risk_multiplier, Rng& rng) {
  return invert_cumulative_hazard(spec, u, risk_multiplier, exponential1(rng));
}

struct CompleteObservation {
  double u = 0.0;
  double s = 0.0;  // complete (uncensored) event time on the s scale
  std::vector<double> covariates;
};

// Draw order per subject is fixed (u, covariates, event time) so that seeded
// runs are reproducible bit for bit.
template <class Rng>
std::vector<CompleteObservation> simulate_complete(const SimConfig& config,
                                                   const HazardSpec& spec, Rng& rng) {
  std::vector<CompleteObservation> out;
  out.reserve(static_cast<std::size_t>(config.n));
  for (int i = 0; i < config.n; ++i) {
    CompleteObservation obs;
    obs.u = uniform(rng, config.u_lo, config.u_hi);
    double risk = 1.0;
    if (config.covariates) {
      const double x1 = standard_normal(rng);
      const double x2 = uniform01(rng) < 0.5 ? -0.5 : 0.5;
      obs.covariates = {x1, x2};
      risk = std::exp(config.covariates->beta1 * x1 + config.covariates->beta2 * x2);
    }
    obs.s = sample_event_time(spec, obs.u, risk, rng);
    out.push_back(std::move(obs));
  }
  return out;
}

template <class Rng>
std::vector<IndividualRecord> apply_scheme(std::span<const CompleteObservation> complete,
                                           const ObservationScheme& scheme, Rng& rng) {
  std::vector<IndividualRecord> out;
  out.reserve(complete.size());
  for (std::size_t i = 0; i < complete.size(); ++i) {
    const CompleteObservation& obs = complete[i];
    IndividualRecord rec;
    rec.id = std::to_string(i + 1);
    rec.u = obs.u;
    rec.covariates = obs.covariates;
    rec.event = true;
    rec.s_out = obs.s;

    if (scheme.kind == ObservationScheme::Kind::a) {
      if (obs.s > scheme.s_max) {
        rec.event = false;
        rec.s_out = scheme.s_max;
      }
    } else {
      const double s_cens = scheme.t_max - obs.u;  // t-scale cut mapped to s
      if (obs.s > s_cens) {
        rec.event = false;
        rec.s_out = s_cens;
      }
      if (scheme.kind == ObservationScheme::Kind::c) {
        // Entry draws occur for every subject in order, so the stream stays
        // aligned regardless of who gets dropped.
        const bool late = uniform01(rng) < scheme.late_fraction;
        if (late) rec.s_in = uniform(rng, 0.0, scheme.entry_max);
      }
    }
    if (rec.s_out <= rec.s_in) continue;  // never under observation
    out.push_back(std::move(rec));
  }
  return out;
}

// Canonical per-replicate data path: replicate k of a study draws from the
// dedicated stream (seed, k).
inline std::vector<IndividualRecord> simulate_records(const SimConfig& config,
                                                      const HazardSpec& spec,
                                                      const ObservationScheme& scheme,
                                                      int replicate_index) {
  CounterRng rng(config.seed, static_cast<std::uint64_t>(replicate_index));
  const std::vector<CompleteObservation> complete = simulate_complete(config, spec, rng);
  return apply_scheme(std::span<const CompleteObservation>(complete), scheme, rng);
}

// ---------------------------------------------------------------------------
// Replicated study: simulate, fit, aggregate errors against the truth.
// ---------------------------------------------------------------------------

struct EstimatorSettings {
  double bin_width = 1.0;
  int n_segments = 12;
  int degree = 3;
  int order_u = 2;
  int order_s = 2;
  RhoStrategy rho;
  FitControl fit;
};

struct ReplicateSummary {
  int replicate = 0;
  bool ok = false;
  bool converged = false;
  double aic = 0.0;
  double ed = 0.0;
  double log10_rho_u = 0.0;
  double log10_rho_s = 0.0;
  int n_records = 0;
  int n_events = 0;
  std::string error;
};

struct StudyResult {
  std::vector<double> u_mid;  // metric grid (bin midpoints)
  std::vector<double> s_mid;
  Matrix truth;
  Matrix mean_surface;
  Matrix bias_surface;
  Matrix rmse_surface;
  Matrix mc_se_surface;  // monte-carlo standard error of the mean surface
  std::vector<ReplicateSummary> replicates;
  // Filled when the config includes covariates.
  std::vector<double> beta1, beta2, se_beta1, se_beta2;
  int n_failed = 0;
};

namespace detail {

struct ReplicateOutput {
  ReplicateSummary summary;
  Matrix lambda_hat;
  double beta1 = 0.0, beta2 = 0.0, se_beta1 = 0.0, se_beta2 = 0.0;
};

inline ReplicateOutput run_one_replicate(const SimConfig& config, const HazardSpec& spec,
                                         const ObservationScheme& scheme,
                                         const EstimatorSettings& settings, int rep) {
  ReplicateOutput out;
  out.summary.replicate = rep;
  const std::vector<IndividualRecord> records = simulate_records(config, spec, scheme, rep);
  out.summary.n_records = static_cast<int>(records.size());
  for (const IndividualRecord& rec : records) out.summary.n_events += rec.event ? 1 : 0;

  const double w = settings.bin_width;
  const double s_hi = scheme.s_span();
  BinGrid2D grid;
  grid.u = {config.u_lo, w, static_cast<int>(std::lround((config.u_hi - config.u_lo) / w)), "u"};
  grid.s = {0.0, w, static_cast<int>(std::lround(s_hi / w)), "s"};
  const KnotGrid ku{config.u_lo, config.u_hi, settings.n_segments, settings.degree};
  const KnotGrid ks{0.0, s_hi, settings.n_segments, settings.degree};

  if (config.covariates) {
    const BinnedData3D binned = bin_individuals(records, grid);
    PHControl control;
    control.max_iter = settings.fit.max_iter;
    control.tol = settings.fit.tol;
    control.max_step_halvings = settings.fit.max_step_halvings;
    control.compute_covariance = true;
    const RhoSelectionPH sel =
        select_rho_ph(binned, ku, ks, settings.order_u, settings.order_s, settings.rho, control);
    out.summary.converged = sel.best.converged;
    out.summary.aic = sel.best.aic;
    out.summary.ed = sel.best.ed_total;
    out.summary.log10_rho_u = sel.log10_rho_u;
    out.summary.log10_rho_s = sel.log10_rho_s;
    out.lambda_hat = sel.best.eta_base.array().exp();
    out.beta1 = sel.best.beta[0];
    out.beta2 = sel.best.beta[1];
    out.se_beta1 = sel.best.se_beta[0];
    out.se_beta2 = sel.best.se_beta[1];
  } else {
    const BinnedData2D binned = bin_2d(records, grid);
    FitControl control = settings.fit;
    control.compute_covariance = false;
    const RhoSelection2D sel =
        select_rho_2d(binned, ku, ks, settings.order_u, settings.order_s, settings.rho, control);
    out.summary.converged = sel.best.converged;
    out.summary.aic = sel.best.aic;
    out.summary.ed = sel.best.ed;
    out.summary.log10_rho_u = sel.log10_rho_u;
    out.summary.log10_rho_s = sel.log10_rho_s;
    out.lambda_hat = sel.best.eta_hat.array().exp();
  }
  out.summary.ok = true;
  return out;
}

}  // namespace detail

// Runs `config.replicates` simulate-and-fit rounds and aggregates hazard
// errors on the bin-midpoint grid.  Replicates are independent streams, so
// the result does not depend on n_threads; aggregation runs in replicate
// order.  Throws if more than 10% of replicates fail.
inline StudyResult run_study(const SimConfig& config, const HazardSpec& spec,
                             const ObservationScheme& scheme, const EstimatorSettings& settings,
                             int n_threads = 1) {
  if (config.replicates < 1)
    throw std::invalid_argument("run_study: need at least one replicate");
  const int S = config.replicates;

  std::vector<detail::ReplicateOutput> outputs(static_cast<std::size_t>(S));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= S) return;
      try {
        outputs[static_cast<std::size_t>(rep)] =
            detail::run_one_replicate(config, spec, scheme, settings, rep);
      } catch (const std::exception& e) {
        outputs[static_cast<std::size_t>(rep)].summary.replicate = rep;
        outputs[static_cast<std::size_t>(rep)].summary.ok = false;
        outputs[static_cast<std::size_t>(rep)].summary.error = e.what();
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  StudyResult res;
  const double w = settings.bin_width;
  BinAxis u_axis{config.u_lo, w, static_cast<int>(std::lround((config.u_hi - config.u_lo) / w)),
                 "u"};
  BinAxis s_axis{0.0, w, static_cast<int>(std::lround(scheme.s_span() / w)), "s"};
  res.u_mid = u_axis.midpoints();
  res.s_mid = s_axis.midpoints();
  const Eigen::Index nu = u_axis.count;
  const Eigen::Index ns = s_axis.count;

  res.truth.resize(nu, ns);
  for (Eigen::Index j = 0; j < nu; ++j)
    for (Eigen::Index k = 0; k < ns; ++k)
      res.truth(j, k) = spec(res.u_mid[static_cast<std::size_t>(j)],
                             res.s_mid[static_cast<std::size_t>(k)]);

  Matrix sum = Matrix::Zero(nu, ns);
  Matrix sum_sq = Matrix::Zero(nu, ns);
  Matrix sum_err_sq = Matrix::Zero(nu, ns);
  int n_ok = 0;
  for (int rep = 0; rep < S; ++rep) {
    detail::ReplicateOutput& out = outputs[static_cast<std::size_t>(rep)];
    res.replicates.push_back(out.summary);
    if (!out.summary.ok) {
      ++res.n_failed;
      continue;
    }
    ++n_ok;
    sum += out.lambda_hat;
    sum_sq += out.lambda_hat.cwiseProduct(out.lambda_hat);
    const Matrix err = out.lambda_hat - res.truth;
    sum_err_sq += err.cwiseProduct(err);
    if (config.covariates) {
      res.beta1.push_back(out.beta1);
      res.beta2.push_back(out.beta2);
      res.se_beta1.push_back(out.se_beta1);
      res.se_beta2.push_back(out.se_beta2);
    }
  }

  if (res.n_failed * 10 > S) {
    std::string first;
    for (const ReplicateSummary& r : res.replicates)
      if (!r.ok) {
        first = r.error;
        break;
      }
    throw std::runtime_error("run_study: " + std::to_string(res.n_failed) + " of " +
                             std::to_string(S) + " replicates failed (first error: " + first +
                             ")");
  }
  if (n_ok == 0) throw std::runtime_error("run_study: all replicates failed");

  const double inv = 1.0 / n_ok;
  res.mean_surface = sum * inv;
  res.bias_surface = res.mean_surface - res.truth;
  res.rmse_surface = (sum_err_sq * inv).cwiseSqrt();
  if (n_ok > 1) {
    const Matrix var =
        (sum_sq - sum.cwiseProduct(sum) * inv) / static_cast<double>(n_ok - 1);
    res.mc_se_surface = (var.cwiseMax(0.0) * inv).cwiseSqrt();
  } else {
    res.mc_se_surface = Matrix::Zero(nu, ns);
  }
  return res;
}

}  // namespace hazsmooth
