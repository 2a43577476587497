// Command-line interface for smooth hazard estimation over one or two time
// scales.  Subcommands: fit1d, fit2d, fitph, simulate.  Every run writes a
// deterministic set of result files plus a manifest sidecar; result files
// depend only on inputs and flags, never on the clock or thread count.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hazsmooth/hazsmooth.hpp"

namespace {

using hazsmooth::detail::format_double;
using json = nlohmann::ordered_json;

// Exit codes, also listed in --help.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitFit = 3;
constexpr int kExitNotConverged = 4;
constexpr int kExitStudyFailed = 5;
constexpr int kExitWrite = 6;

std::vector<std::string> g_arguments;  // raw argv for the manifest

json make_manifest(const std::string& command, json settings) {
  json m;
  m["artifact_version"] = hazsmooth::kVersion;
  m["command"] = command;
  m["arguments"] = g_arguments;
  m["settings"] = std::move(settings);
  return m;
}

class OutputSet {
 public:
  explicit OutputSet(std::string prefix) : prefix_(std::move(prefix)) {
    const std::filesystem::path parent = std::filesystem::path(prefix_).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
  }

  void write(const std::string& suffix, const std::string& content) {
    const std::string path = prefix_ + suffix;
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.flush();
    if (!out.good()) throw std::ios_base::failure("cannot write output file: " + path);
    written_.push_back(path);
  }

  void write_manifest(const json& manifest, double wall_clock_seconds) {
    json m = manifest;
    m["outputs"] = written_;
    m["wall_clock_seconds"] = wall_clock_seconds;
    const std::string path = prefix_ + ".manifest.json";
    std::ofstream out(path, std::ios::binary);
    out << m.dump(2) << '\n';
    if (!out.good()) throw std::ios_base::failure("cannot write output file: " + path);
  }

  const std::vector<std::string>& written() const { return written_; }

 private:
  std::string prefix_;
  std::vector<std::string> written_;
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

hazsmooth::BinAxis axis_from_records(std::span<const hazsmooth::IndividualRecord> records,
                                     double width, bool u_axis) {
  double hi = 0.0;
  for (const auto& rec : records) hi = std::max(hi, u_axis ? rec.u : rec.s_out);
  const int count = std::max(1, static_cast<int>(std::ceil(hi / width - 1e-9)));
  return {0.0, width, count, u_axis ? "u" : "s"};
}

std::string csv_bool(bool b) { return b ? "1" : "0"; }

json fit_summary_common(double aic, double deviance, double ed, bool converged, int iterations) {
  json j;
  j["aic"] = aic;
  j["deviance"] = deviance;
  j["ed"] = ed;
  j["converged"] = converged;
  j["iterations"] = iterations;
  return j;
}

// ---------------------------------------------------------------------------
// fit1d
// ---------------------------------------------------------------------------

struct Fit1DArgs {
  std::string input;
  std::string out;
  double bin_width = 30.0;
  int nseg = 20;
  int degree = 3;
  int pord = 2;
  double rho = 0.0;  // > 0 fixes rho; otherwise the AIC grid decides
};

int cmd_fit1d(const Fit1DArgs& args) {
  Timer timer;
  json settings{{"bin_width", args.bin_width}, {"nseg", args.nseg},
                {"degree", args.degree},       {"pord", args.pord},
                {"rho", args.rho},             {"input", args.input}};
  const json manifest = make_manifest("fit1d", settings);
  OutputSet outputs(args.out);

  hazsmooth::RecordSet data;
  hazsmooth::BinnedData1D binned;
  try {
    data = hazsmooth::read_records_csv_file(args.input);
    binned = hazsmooth::bin_1d(data.records, axis_from_records(data.records, args.bin_width,
                                                               /*u_axis=*/false));
  } catch (const std::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  }

  const hazsmooth::KnotGrid grid{0.0, binned.grid.end(), args.nseg, args.degree};
  hazsmooth::Fit1DResult fit;
  std::vector<hazsmooth::RhoProfilePoint> profile;
  bool boundary_warning = false;
  try {
    if (args.rho > 0.0) {
      fit = hazsmooth::fit_1d(binned, grid, args.pord, args.rho);
    } else {
      auto sel = hazsmooth::select_rho_1d(binned, grid, args.pord);
      fit = std::move(sel.best);
      profile = std::move(sel.profile);
      boundary_warning = sel.boundary_warning;
    }
  } catch (const std::exception& e) {
    std::cerr << "fit error: " << e.what() << '\n';
    return kExitFit;
  }

  try {
    const auto mids = binned.grid.midpoints();
    const auto pred = hazsmooth::predict_1d(fit, grid, mids);
    std::ostringstream csv;
    csv << "s,y,r,eta,lambda,se_eta,lambda_lo,lambda_hi\n";
    for (std::size_t j = 0; j < mids.size(); ++j) {
      const auto k = static_cast<Eigen::Index>(j);
      csv << format_double(mids[j]) << ',' << format_double(binned.y[k]) << ','
          << format_double(binned.r[k]) << ',' << format_double(pred.eta[k]) << ','
          << format_double(pred.lambda[k]) << ',' << format_double(pred.se_eta[k]) << ','
          << format_double(pred.lambda_lo[k]) << ',' << format_double(pred.lambda_hi[k]) << '\n';
    }
    outputs.write(".hazard1d.csv", csv.str());

    if (!profile.empty()) {
      std::ostringstream pcsv;
      pcsv << "log10_rho,aic,ed,deviance,converged\n";
      for (const auto& pt : profile)
        pcsv << format_double(pt.log10_rho) << ',' << format_double(pt.aic) << ','
             << format_double(pt.ed) << ',' << format_double(pt.deviance) << ','
             << csv_bool(pt.converged) << '\n';
      outputs.write(".profile.csv", pcsv.str());
    }

    json j;
    j["manifest"] = manifest;
    j["data"] = {{"n_records", data.records.size()},
                 {"n_events", static_cast<long long>(binned.y.sum())},
                 {"grid", {{"origin", binned.grid.origin},
                           {"width", binned.grid.width},
                           {"count", binned.grid.count}}}};
    json f = fit_summary_common(fit.aic, fit.deviance, fit.ed, fit.converged, fit.iterations);
    f["rho"] = fit.rho;
    f["log10_rho"] = std::log10(fit.rho);
    f["boundary_warning"] = boundary_warning;
    j["fit"] = f;
    outputs.write(".fit1d.json", j.dump(2) + "\n");
    outputs.write_manifest(manifest, timer.seconds());
  } catch (const std::exception& e) {
    std::cerr << "write error: " << e.what() << '\n';
    return kExitWrite;
  }

  std::cerr << "fit1d: aic=" << fit.aic << " ed=" << fit.ed << " rho=" << fit.rho
            << (fit.converged ? "" : " (not converged)") << "\n";
  return fit.converged ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// fit2d / fitph shared pieces
// ---------------------------------------------------------------------------

struct Fit2DArgs {
  std::string input;
  std::string out;
  double bin_width_u = 30.0;
  double bin_width_s = 30.0;
  int nseg_u = 20;
  int nseg_s = 20;
  int degree = 3;
  int pord_u = 2;
  int pord_s = 2;
  std::string rho_strategy = "numeric";
  double rho_u = 0.0;  // both > 0 fixes the pair, bypassing the search
  double rho_s = 0.0;
};

hazsmooth::RhoStrategy strategy_from_args(const Fit2DArgs& args) {
  hazsmooth::RhoStrategy s;
  s.kind = args.rho_strategy == "grid" ? hazsmooth::RhoStrategy::Kind::grid
                                       : hazsmooth::RhoStrategy::Kind::numeric;
  return s;
}

json grid2d_json(const hazsmooth::BinGrid2D& grid) {
  return {{"u", {{"origin", grid.u.origin}, {"width", grid.u.width}, {"count", grid.u.count}}},
          {"s", {{"origin", grid.s.origin}, {"width", grid.s.width}, {"count", grid.s.count}}}};
}

std::string rho_trace_csv(const std::vector<hazsmooth::RhoTracePoint>& trace) {
  std::ostringstream csv;
  csv << "log10_rho_u,log10_rho_s,aic,converged\n";
  for (const auto& pt : trace)
    csv << format_double(pt.log10_rho_u) << ',' << format_double(pt.log10_rho_s) << ','
        << format_double(pt.aic) << ',' << csv_bool(pt.converged) << '\n';
  return csv.str();
}

std::string surface_csv(const hazsmooth::BinGrid2D& grid, const hazsmooth::Matrix& Y,
                        const hazsmooth::Matrix& R, const hazsmooth::Matrix& eta,
                        const hazsmooth::Matrix& se) {
  std::ostringstream csv;
  csv << "u,s,t,y,r,eta,lambda,se_eta\n";
  for (int j = 0; j < grid.u.count; ++j)
    for (int k = 0; k < grid.s.count; ++k) {
      const double u = grid.u.midpoint(j);
      const double s = grid.s.midpoint(k);
      csv << format_double(u) << ',' << format_double(s) << ',' << format_double(u + s) << ','
          << format_double(Y(j, k)) << ',' << format_double(R(j, k)) << ','
          << format_double(eta(j, k)) << ',' << format_double(std::exp(eta(j, k))) << ','
          << format_double(se(j, k)) << '\n';
    }
  return csv.str();
}

int cmd_fit2d(const Fit2DArgs& args) {
  Timer timer;
  json settings{{"bin_width_u", args.bin_width_u}, {"bin_width_s", args.bin_width_s},
                {"nseg_u", args.nseg_u},           {"nseg_s", args.nseg_s},
                {"degree", args.degree},           {"pord_u", args.pord_u},
                {"pord_s", args.pord_s},           {"rho_strategy", args.rho_strategy},
                {"rho_u", args.rho_u},             {"rho_s", args.rho_s},
                {"input", args.input}};
  const json manifest = make_manifest("fit2d", settings);
  OutputSet outputs(args.out);

  hazsmooth::RecordSet data;
  hazsmooth::BinnedData2D binned;
  try {
    data = hazsmooth::read_records_csv_file(args.input);
    hazsmooth::BinGrid2D grid{axis_from_records(data.records, args.bin_width_u, true),
                              axis_from_records(data.records, args.bin_width_s, false)};
    binned = hazsmooth::bin_2d(data.records, grid);
  } catch (const std::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  }

  const hazsmooth::KnotGrid ku{0.0, binned.grid.u.end(), args.nseg_u, args.degree};
  const hazsmooth::KnotGrid ks{0.0, binned.grid.s.end(), args.nseg_s, args.degree};

  hazsmooth::Fit2DResult fit;
  std::vector<hazsmooth::RhoTracePoint> trace;
  bool boundary_warning = false;
  double lr_u = 0.0, lr_s = 0.0;
  try {
    if (args.rho_u > 0.0 && args.rho_s > 0.0) {
      hazsmooth::Penalty2D pen{args.rho_u, args.rho_s, args.pord_u, args.pord_s};
      fit = hazsmooth::fit_2d(binned, ku, ks, pen);
      lr_u = std::log10(args.rho_u);
      lr_s = std::log10(args.rho_s);
    } else {
      auto sel = hazsmooth::select_rho_2d(binned, ku, ks, args.pord_u, args.pord_s,
                                          strategy_from_args(args));
      fit = std::move(sel.best);
      trace = std::move(sel.trace);
      boundary_warning = sel.boundary_warning;
      lr_u = sel.log10_rho_u;
      lr_s = sel.log10_rho_s;
    }
  } catch (const std::exception& e) {
    std::cerr << "fit error: " << e.what() << '\n';
    return kExitFit;
  }

  try {
    const auto mids_u = binned.grid.u.midpoints();
    const auto mids_s = binned.grid.s.midpoints();
    const hazsmooth::Matrix Bu = hazsmooth::build_basis(ku, mids_u).values;
    const hazsmooth::Matrix Bs = hazsmooth::build_basis(ks, mids_s).values;
    const hazsmooth::Matrix se =
        hazsmooth::variance_diag_2d(Bu, Bs, fit.cov_alpha).cwiseMax(0.0).cwiseSqrt();
    outputs.write(".surface.csv", surface_csv(binned.grid, binned.Y, binned.R, fit.eta_hat, se));
    if (!trace.empty()) outputs.write(".rho_trace.csv", rho_trace_csv(trace));

    json j;
    j["manifest"] = manifest;
    j["data"] = {{"n_records", data.records.size()},
                 {"n_events", static_cast<long long>(binned.Y.sum())},
                 {"grid", grid2d_json(binned.grid)}};
    json f = fit_summary_common(fit.aic, fit.deviance, fit.ed, fit.converged, fit.iterations);
    f["log10_rho_u"] = lr_u;
    f["log10_rho_s"] = lr_s;
    f["boundary_warning"] = boundary_warning;
    f["n_search_evals"] = trace.size();
    j["fit"] = f;
    outputs.write(".fit2d.json", j.dump(2) + "\n");
    outputs.write_manifest(manifest, timer.seconds());
  } catch (const std::exception& e) {
    std::cerr << "write error: " << e.what() << '\n';
    return kExitWrite;
  }

  std::cerr << "fit2d: aic=" << fit.aic << " ed=" << fit.ed << " log10_rho=(" << lr_u << ","
            << lr_s << ")" << (fit.converged ? "" : " (not converged)") << "\n";
  return fit.converged ? kExitOk : kExitNotConverged;
}

int cmd_fitph(const Fit2DArgs& args) {
  Timer timer;
  json settings{{"bin_width_u", args.bin_width_u}, {"bin_width_s", args.bin_width_s},
                {"nseg_u", args.nseg_u},           {"nseg_s", args.nseg_s},
                {"degree", args.degree},           {"pord_u", args.pord_u},
                {"pord_s", args.pord_s},           {"rho_strategy", args.rho_strategy},
                {"rho_u", args.rho_u},             {"rho_s", args.rho_s},
                {"input", args.input}};
  const json manifest = make_manifest("fitph", settings);
  OutputSet outputs(args.out);

  hazsmooth::RecordSet data;
  hazsmooth::BinnedData3D binned;
  try {
    data = hazsmooth::read_records_csv_file(args.input);
    if (data.covariate_names.empty())
      throw std::invalid_argument("fitph needs covariate columns in the CSV");
    hazsmooth::BinGrid2D grid{axis_from_records(data.records, args.bin_width_u, true),
                              axis_from_records(data.records, args.bin_width_s, false)};
    binned = hazsmooth::bin_individuals(data.records, grid);
  } catch (const std::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  }

  const hazsmooth::KnotGrid ku{0.0, binned.grid.u.end(), args.nseg_u, args.degree};
  const hazsmooth::KnotGrid ks{0.0, binned.grid.s.end(), args.nseg_s, args.degree};

  hazsmooth::PHFitResult fit;
  std::vector<hazsmooth::RhoTracePoint> trace;
  bool boundary_warning = false;
  double lr_u = 0.0, lr_s = 0.0;
  try {
    if (args.rho_u > 0.0 && args.rho_s > 0.0) {
      hazsmooth::Penalty2D pen{args.rho_u, args.rho_s, args.pord_u, args.pord_s};
      fit = hazsmooth::fit_ph(binned, ku, ks, pen);
      lr_u = std::log10(args.rho_u);
      lr_s = std::log10(args.rho_s);
    } else {
      auto sel = hazsmooth::select_rho_ph(binned, ku, ks, args.pord_u, args.pord_s,
                                          strategy_from_args(args));
      fit = std::move(sel.best);
      trace = std::move(sel.trace);
      boundary_warning = sel.boundary_warning;
      lr_u = sel.log10_rho_u;
      lr_s = sel.log10_rho_s;
    }
  } catch (const std::exception& e) {
    std::cerr << "fit error: " << e.what() << '\n';
    return kExitFit;
  }

  try {
    const hazsmooth::BinnedData2D agg = binned.aggregate();
    const auto mids_u = binned.grid.u.midpoints();
    const auto mids_s = binned.grid.s.midpoints();
    const hazsmooth::Matrix Bu = hazsmooth::build_basis(ku, mids_u).values;
    const hazsmooth::Matrix Bs = hazsmooth::build_basis(ks, mids_s).values;
    const Eigen::Index c = static_cast<Eigen::Index>(ku.n_basis()) * ks.n_basis();
    const hazsmooth::Matrix se =
        hazsmooth::variance_diag_2d(Bu, Bs, fit.cov_theta.topLeftCorner(c, c))
            .cwiseMax(0.0)
            .cwiseSqrt();
    outputs.write(".surface.csv", surface_csv(binned.grid, agg.Y, agg.R, fit.eta_base, se));
    if (!trace.empty()) outputs.write(".rho_trace.csv", rho_trace_csv(trace));

    std::ostringstream beta_csv;
    beta_csv << "name,estimate,se,hazard_ratio\n";
    for (Eigen::Index v = 0; v < fit.beta.size(); ++v)
      beta_csv << data.covariate_names[static_cast<std::size_t>(v)] << ','
               << format_double(fit.beta[v]) << ',' << format_double(fit.se_beta[v]) << ','
               << format_double(std::exp(fit.beta[v])) << '\n';
    outputs.write(".beta.csv", beta_csv.str());

    json j;
    j["manifest"] = manifest;
    j["data"] = {{"n_records", data.records.size()},
                 {"n_events", static_cast<long long>(agg.Y.sum())},
                 {"covariates", data.covariate_names},
                 {"grid", grid2d_json(binned.grid)}};
    json f = fit_summary_common(fit.aic, fit.deviance, fit.ed_total, fit.converged,
                                fit.iterations);
    f["ed_baseline"] = fit.ed_baseline;
    f["log10_rho_u"] = lr_u;
    f["log10_rho_s"] = lr_s;
    f["boundary_warning"] = boundary_warning;
    f["n_search_evals"] = trace.size();
    json betas = json::array();
    for (Eigen::Index v = 0; v < fit.beta.size(); ++v)
      betas.push_back({{"name", data.covariate_names[static_cast<std::size_t>(v)]},
                       {"estimate", fit.beta[v]},
                       {"se", fit.se_beta[v]},
                       {"hazard_ratio", std::exp(fit.beta[v])}});
    f["beta"] = betas;
    j["fit"] = f;
    outputs.write(".fitph.json", j.dump(2) + "\n");
    outputs.write_manifest(manifest, timer.seconds());
  } catch (const std::exception& e) {
    std::cerr << "write error: " << e.what() << '\n';
    return kExitWrite;
  }

  std::cerr << "fitph: aic=" << fit.aic << " ed_total=" << fit.ed_total << " log10_rho=("
            << lr_u << "," << lr_s << ")" << (fit.converged ? "" : " (not converged)") << "\n";
  return fit.converged ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string out;
  std::string hm = "HM1";
  std::string scheme = "A";
  int n = 300;
  int replicates = 1;
  std::uint64_t seed = 1;
  bool covariates = false;
  bool study = false;
  bool no_datasets = false;
  int threads = 1;
  // estimator settings for --study
  double bin_width = 1.0;
  int nseg = 12;
  int degree = 3;
  int pord = 2;
  std::string rho_strategy = "numeric";
};

int cmd_simulate(const SimulateArgs& args) {
  Timer timer;
  json settings{{"hm", args.hm},
                {"scheme", args.scheme},
                {"n", args.n},
                {"replicates", args.replicates},
                {"seed", args.seed},
                {"covariates", args.covariates},
                {"study", args.study},
                {"bin_width", args.bin_width},
                {"nseg", args.nseg},
                {"degree", args.degree},
                {"pord", args.pord},
                {"rho_strategy", args.rho_strategy},
                {"threads", args.threads}};
  const json manifest = make_manifest("simulate", settings);
  OutputSet outputs(args.out);

  hazsmooth::HazardSpec spec;
  hazsmooth::ObservationScheme scheme;
  hazsmooth::SimConfig config;
  try {
    spec = hazsmooth::HazardSpec::from_name(args.hm);
    scheme = hazsmooth::ObservationScheme::from_name(args.scheme);
    config.n = args.n;
    config.replicates = args.replicates;
    config.seed = args.seed;
    if (args.covariates) config.covariates = hazsmooth::CovariateSpec{};
    if (args.n < 1 || args.replicates < 1)
      throw std::invalid_argument("n and replicates must be positive");
  } catch (const std::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitUsage;
  }

  const std::vector<std::string> cov_names =
      args.covariates ? std::vector<std::string>{"x1", "x2"} : std::vector<std::string>{};

  try {
    if (!args.no_datasets) {
      for (int rep = 0; rep < args.replicates; ++rep) {
        const auto records = hazsmooth::simulate_records(config, spec, scheme, rep);
        std::ostringstream csv;
        hazsmooth::write_records_csv(csv, records, cov_names);
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), ".rep%04d.csv", rep + 1);
        outputs.write(suffix, csv.str());
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "write error: " << e.what() << '\n';
    return kExitWrite;
  }

  json j;
  j["manifest"] = manifest;

  if (args.study) {
    hazsmooth::EstimatorSettings est;
    est.bin_width = args.bin_width;
    est.n_segments = args.nseg;
    est.degree = args.degree;
    est.order_u = args.pord;
    est.order_s = args.pord;
    est.rho.kind = args.rho_strategy == "grid" ? hazsmooth::RhoStrategy::Kind::grid
                                               : hazsmooth::RhoStrategy::Kind::numeric;

    hazsmooth::StudyResult study;
    try {
      study = hazsmooth::run_study(config, spec, scheme, est, args.threads);
    } catch (const std::exception& e) {
      std::cerr << "study error: " << e.what() << '\n';
      return kExitStudyFailed;
    }

    try {
      std::ostringstream grids;
      grids << "u,s,truth,mean,bias,rmse,mc_se\n";
      for (std::size_t jj = 0; jj < study.u_mid.size(); ++jj)
        for (std::size_t kk = 0; kk < study.s_mid.size(); ++kk) {
          const auto r = static_cast<Eigen::Index>(jj);
          const auto cidx = static_cast<Eigen::Index>(kk);
          grids << format_double(study.u_mid[jj]) << ',' << format_double(study.s_mid[kk]) << ','
                << format_double(study.truth(r, cidx)) << ','
                << format_double(study.mean_surface(r, cidx)) << ','
                << format_double(study.bias_surface(r, cidx)) << ','
                << format_double(study.rmse_surface(r, cidx)) << ','
                << format_double(study.mc_se_surface(r, cidx)) << '\n';
        }
      outputs.write(".grids.csv", grids.str());

      json reps = json::array();
      for (const auto& rs : study.replicates)
        reps.push_back({{"replicate", rs.replicate},
                        {"ok", rs.ok},
                        {"converged", rs.converged},
                        {"aic", rs.aic},
                        {"ed", rs.ed},
                        {"log10_rho_u", rs.log10_rho_u},
                        {"log10_rho_s", rs.log10_rho_s},
                        {"n_records", rs.n_records},
                        {"n_events", rs.n_events},
                        {"error", rs.error}});
      json st;
      st["n_failed"] = study.n_failed;
      st["replicates"] = reps;
      if (!study.beta1.empty()) {
        const auto mean = [](const std::vector<double>& v) {
          double s = 0.0;
          for (double x : v) s += x;
          return s / static_cast<double>(v.size());
        };
        const auto coverage = [](const std::vector<double>& b, const std::vector<double>& se,
                                 double truth) {
          int hit = 0;
          for (std::size_t i = 0; i < b.size(); ++i)
            if (truth >= b[i] - 2.0 * se[i] && truth <= b[i] + 2.0 * se[i]) ++hit;
          return static_cast<double>(hit) / static_cast<double>(b.size());
        };
        st["beta"] = {{"mean_beta1", mean(study.beta1)},
                      {"mean_beta2", mean(study.beta2)},
                      {"coverage_beta1", coverage(study.beta1, study.se_beta1, 0.5)},
                      {"coverage_beta2", coverage(study.beta2, study.se_beta2, 0.7)}};
      }
      j["study"] = st;
    } catch (const std::exception& e) {
      std::cerr << "write error: " << e.what() << '\n';
      return kExitWrite;
    }
  }

  try {
    outputs.write(".sim.json", j.dump(2) + "\n");
    outputs.write_manifest(manifest, timer.seconds());
  } catch (const std::exception& e) {
    std::cerr << "write error: " << e.what() << '\n';
    return kExitWrite;
  }

  std::cerr << "simulate: wrote " << outputs.written().size() << " file(s)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_arguments.emplace_back(argv[i]);

  CLI::App app{"Smooth hazard estimation over one or two time scales"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hazsmooth::kVersion);
  app.footer(
      "Exit codes:\n"
      "  0  success (outputs written, fit converged)\n"
      "  1  usage error\n"
      "  2  input error (missing file, malformed CSV, invalid records)\n"
      "  3  fit error (singular system, no events)\n"
      "  4  outputs written but the fit did not converge\n"
      "  5  simulation study failed (more than 10% of replicates)\n"
      "  6  cannot write output files");

  Fit1DArgs f1;
  CLI::App* fit1d = app.add_subcommand("fit1d", "Smooth hazard on a single time scale");
  fit1d->add_option("--input", f1.input, "Records CSV (id,u,s_in,s_out,event,...)")->required();
  fit1d->add_option("--out", f1.out, "Output path prefix")->required();
  fit1d->add_option("--bin-width", f1.bin_width, "Bin width on the s scale")
      ->check(CLI::PositiveNumber);
  fit1d->add_option("--nseg", f1.nseg, "B-spline segments")->check(CLI::PositiveNumber);
  fit1d->add_option("--degree", f1.degree, "B-spline degree")->check(CLI::NonNegativeNumber);
  fit1d->add_option("--pord", f1.pord, "Difference penalty order")->check(CLI::PositiveNumber);
  fit1d->add_option("--rho", f1.rho, "Fix the smoothing parameter (skips the AIC grid)");

  Fit2DArgs f2;
  const auto add_2d_options = [&](CLI::App* cmd) {
    cmd->add_option("--input", f2.input, "Records CSV (id,u,s_in,s_out,event,...)")->required();
    cmd->add_option("--out", f2.out, "Output path prefix")->required();
    cmd->add_option("--bin-width-u", f2.bin_width_u, "Bin width on the u scale")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--bin-width-s", f2.bin_width_s, "Bin width on the s scale")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--nseg-u", f2.nseg_u, "B-spline segments on u")->check(CLI::PositiveNumber);
    cmd->add_option("--nseg-s", f2.nseg_s, "B-spline segments on s")->check(CLI::PositiveNumber);
    cmd->add_option("--degree", f2.degree, "B-spline degree")->check(CLI::NonNegativeNumber);
    cmd->add_option("--pord-u", f2.pord_u, "Penalty order on u")->check(CLI::PositiveNumber);
    cmd->add_option("--pord-s", f2.pord_s, "Penalty order on s")->check(CLI::PositiveNumber);
    cmd->add_option("--rho-strategy", f2.rho_strategy, "AIC search: grid or numeric")
        ->check(CLI::IsMember({"grid", "numeric"}));
    cmd->add_option("--rho-u", f2.rho_u, "Fix rho_u (with --rho-s skips the search)");
    cmd->add_option("--rho-s", f2.rho_s, "Fix rho_s (with --rho-u skips the search)");
  };
  CLI::App* fit2d = app.add_subcommand("fit2d", "Smooth hazard surface over two time scales");
  add_2d_options(fit2d);
  CLI::App* fitph =
      app.add_subcommand("fitph", "Hazard surface with proportional covariate effects");
  add_2d_options(fitph);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "Simulate datasets and optional study");
  simulate->add_option("--out", sim.out, "Output path prefix")->required();
  simulate->add_option("--hm", sim.hm, "Hazard shape: HM1, HM2 or HM3")
      ->check(CLI::IsMember({"HM1", "HM2", "HM3", "hm1", "hm2", "hm3"}));
  simulate->add_option("--scheme", sim.scheme, "Observation scheme: A, B or C")
      ->check(CLI::IsMember({"A", "B", "C", "a", "b", "c"}));
  simulate->add_option("--n", sim.n, "Subjects per replicate")->check(CLI::PositiveNumber);
  simulate->add_option("--replicates", sim.replicates, "Number of replicates")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.seed, "Base seed; replicate k uses stream (seed, k)");
  simulate->add_flag("--covariates", sim.covariates,
                     "Add x1 ~ N(0,1) and x2 in {-0.5, +0.5} with effects 0.5 and 0.7");
  simulate->add_flag("--study", sim.study, "Fit every replicate and write error summaries");
  simulate->add_flag("--no-datasets", sim.no_datasets, "Skip writing per-replicate CSVs");
  simulate->add_option("--threads", sim.threads, "Worker threads for --study")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--bin-width", sim.bin_width, "Study estimator: bin width")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--nseg", sim.nseg, "Study estimator: B-spline segments")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--degree", sim.degree, "Study estimator: B-spline degree")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--pord", sim.pord, "Study estimator: penalty order")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--rho-strategy", sim.rho_strategy, "Study estimator: grid or numeric")
      ->check(CLI::IsMember({"grid", "numeric"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (fit1d->parsed()) return cmd_fit1d(f1);
  if (fit2d->parsed()) return cmd_fit2d(f2);
  if (fitph->parsed()) return cmd_fitph(f2);
  if (simulate->parsed()) return cmd_simulate(sim);
  return kExitUsage;
}
