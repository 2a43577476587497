#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace hazsmooth {

struct NelderMeadOptions {
  double initial_step = 1.0;   // offset of the starting simplex along each axis
  double rel_ftol = 1e-3;      // stop when f-spread < rel_ftol * max(1, |f_best|)
  int max_evals = 200;
};

struct NelderMeadResult {
  std::vector<double> x;
  double fx = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Derivative-free simplex minimiser (standard reflection/expansion/
// contraction/shrink coefficients 1, 2, 0.5, 0.5).  Small-dimension use;
// the objective may return +inf to veto a region.
template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> start,
                             const NelderMeadOptions& opt = {}) {
  const std::size_t n = start.size();
  NelderMeadResult res;

  std::vector<std::vector<double>> xs(n + 1, start);
  std::vector<double> fs(n + 1);
  for (std::size_t i = 0; i < n; ++i) xs[i + 1][i] += opt.initial_step;
  for (std::size_t i = 0; i <= n; ++i) {
    fs[i] = f(xs[i]);
    ++res.evaluations;
  }

  std::vector<std::size_t> order(n + 1);
  const auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
  };

  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  while (res.evaluations < opt.max_evals) {
    sort_simplex();
    const std::size_t best = order[0], worst = order[n];
    const double spread = fs[worst] - fs[best];
    if (std::isfinite(spread) && spread < opt.rel_ftol * std::max(1.0, std::abs(fs[best]))) {
      res.converged = true;
      break;
    }

    for (std::size_t d = 0; d < n; ++d) {
      double sum = 0.0;
      for (std::size_t i = 0; i <= n; ++i)
        if (i != worst) sum += xs[i][d];
      centroid[d] = sum / static_cast<double>(n);
    }

    for (std::size_t d = 0; d < n; ++d) xr[d] = centroid[d] + (centroid[d] - xs[worst][d]);
    const double fr = f(xr);
    ++res.evaluations;

    if (fr < fs[order[0]]) {
      for (std::size_t d = 0; d < n; ++d) xe[d] = centroid[d] + 2.0 * (centroid[d] - xs[worst][d]);
      const double fe = f(xe);
      ++res.evaluations;
      if (fe < fr) {
        xs[worst] = xe;
        fs[worst] = fe;
      } else {
        xs[worst] = xr;
        fs[worst] = fr;
      }
    } else if (fr < fs[order[n - 1]]) {
      xs[worst] = xr;
      fs[worst] = fr;
    } else {
      const bool outside = fr < fs[worst];
      const std::vector<double>& base = outside ? xr : xs[worst];
      for (std::size_t d = 0; d < n; ++d) xc[d] = centroid[d] + 0.5 * (base[d] - centroid[d]);
      const double fc = f(xc);
      ++res.evaluations;
      if (fc < (outside ? fr : fs[worst])) {
        xs[worst] = xc;
        fs[worst] = fc;
      } else {
        // Shrink towards the best vertex.
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t d = 0; d < n; ++d)
            xs[i][d] = xs[best][d] + 0.5 * (xs[i][d] - xs[best][d]);
          fs[i] = f(xs[i]);
          ++res.evaluations;
          if (res.evaluations >= opt.max_evals) break;
        }
      }
    }
  }

  sort_simplex();
  res.x = xs[order[0]];
  res.fx = fs[order[0]];
  return res;
}

}  // namespace hazsmooth
