#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rsd/errors.hpp"

namespace rsd {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  bool converged = false;
  int intervals = 0;
};

namespace detail {

// 15-point Kronrod rule with embedded 7-point Gauss rule (positive half).
inline constexpr std::array<double, 8> kGk15Nodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> kGk15Weights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kG7Weights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <int N, class F>
struct Segment {
  double a, b;
  std::array<double, N> value;
  std::array<double, N> error;
};

// One GK15 pass over [a, b] for an N-component integrand.
template <int N, class F>
Segment<N, F> gk15(F&& f, double a, double b) {
  Segment<N, F> seg{a, b, {}, {}};
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  std::array<double, N> kronrod{};
  std::array<double, N> gauss{};
  const auto fc = f(mid);
  for (int c = 0; c < N; ++c) {
    kronrod[c] = kGk15Weights[7] * fc[c];
    gauss[c] = kG7Weights[3] * fc[c];
  }
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kGk15Nodes[i];
    const auto flo = f(mid - dx);
    const auto fhi = f(mid + dx);
    for (int c = 0; c < N; ++c) {
      const double pair = flo[c] + fhi[c];
      kronrod[c] += kGk15Weights[i] * pair;
      if (i % 2 == 1) gauss[c] += kG7Weights[i / 2] * pair;
    }
  }
  for (int c = 0; c < N; ++c) {
    seg.value[c] = kronrod[c] * half;
    const double diff = (kronrod[c] - gauss[c]) * half;
    // QUADPACK-style sharpened error estimate.
    seg.error[c] = std::pow(std::abs(200.0 * diff), 1.5);
    seg.error[c] = std::min(seg.error[c], std::abs(diff) * 200.0);
    if (!std::isfinite(seg.error[c])) seg.error[c] = std::abs(diff) * 200.0;
  }
  return seg;
}

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of an N-component integrand over [a, b].
/// Worst-segment-first bisection; a segment's badness is its largest error
/// relative to the current per-component totals. Deterministic (ties broken by
/// insertion order).
template <int N, class F>
std::array<QuadratureResult, N> integrate_adaptive_multi(F&& f, double a, double b,
                                                         double rel_tol, double abs_tol = 0.0,
                                                         int max_intervals = 4000,
                                                         int initial_segments = 1) {
  using Seg = detail::Segment<N, F>;
  std::vector<Seg> segs;
  segs.reserve(64);
  // Pre-splitting guards against integrands whose support is a narrow spike
  // inside a wide window, which a single 15-point pass can miss entirely.
  initial_segments = std::max(1, initial_segments);
  for (int k = 0; k < initial_segments; ++k) {
    const double lo = a + (b - a) * static_cast<double>(k) / initial_segments;
    const double hi = a + (b - a) * static_cast<double>(k + 1) / initial_segments;
    segs.push_back(detail::gk15<N>(f, lo, hi));
  }

  auto totals = [&segs]() {
    std::array<double, N> val{};
    std::array<double, N> err{};
    for (const auto& s : segs)
      for (int c = 0; c < N; ++c) {
        val[c] += s.value[c];
        err[c] += s.error[c];
      }
    return std::pair(val, err);
  };

  while (static_cast<int>(segs.size()) < max_intervals) {
    auto [val, err] = totals();
    bool done = true;
    for (int c = 0; c < N; ++c)
      if (err[c] > rel_tol * std::abs(val[c]) + abs_tol) done = false;
    if (done) break;

    std::size_t worst = 0;
    double worst_err = -1.0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      double e = 0.0;
      for (int c = 0; c < N; ++c) {
        const double scale = std::max(std::abs(val[c]), 1e-300);
        e = std::max(e, segs[i].error[c] / scale);
      }
      if (e > worst_err) {
        worst_err = e;
        worst = i;
      }
    }
    const Seg s = segs[worst];
    const double mid = 0.5 * (s.a + s.b);
    if (mid <= s.a || mid >= s.b) break;  // interval exhausted at double precision
    segs[worst] = detail::gk15<N>(f, s.a, mid);
    segs.push_back(detail::gk15<N>(f, mid, s.b));
  }

  // Stable final accumulation in left-to-right order.
  std::sort(segs.begin(), segs.end(), [](const Seg& x, const Seg& y) { return x.a < y.a; });
  std::array<QuadratureResult, N> out{};
  std::array<double, N> val{};
  std::array<double, N> err{};
  for (const auto& s : segs)
    for (int c = 0; c < N; ++c) {
      val[c] += s.value[c];
      err[c] += s.error[c];
    }
  for (int c = 0; c < N; ++c) {
    out[c].value = val[c];
    out[c].error_estimate = err[c];
    out[c].converged = err[c] <= rel_tol * std::abs(val[c]) + abs_tol;
    out[c].intervals = static_cast<int>(segs.size());
  }
  return out;
}

/// Scalar convenience wrapper.
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, double rel_tol,
                                    double abs_tol = 0.0, int max_intervals = 4000,
                                    int initial_segments = 1) {
  auto wrapped = [&f](double x) { return std::array<double, 1>{f(x)}; };
  return integrate_adaptive_multi<1>(wrapped, a, b, rel_tol, abs_tol, max_intervals,
                                     initial_segments)[0];
}

/// As integrate_adaptive but throws numeric_error on non-convergence.
template <class F>
double integrate_or_throw(F&& f, double a, double b, double rel_tol, const char* what,
                          double abs_tol = 0.0, int max_intervals = 4000,
                          int initial_segments = 1) {
  const QuadratureResult r =
      integrate_adaptive(f, a, b, rel_tol, abs_tol, max_intervals, initial_segments);
  if (!r.converged)
    throw numeric_error(std::string("quadrature failed to converge: ") + what +
                        " (intervals=" + std::to_string(r.intervals) +
                        ", err=" + std::to_string(r.error_estimate) + ")");
  return r.value;
}

}  // namespace rsd
