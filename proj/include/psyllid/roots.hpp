#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "psyllid/error.hpp"

namespace psyllid {

struct Bracket {
  double lo = 0.0;
  double hi = 0.0;
};

/// Bisection on a sign-changing bracket until |hi - lo| < tol * max(1, |x|).
template <class F>
double find_root_bracketed(F&& f, double lo, double hi, double tol = 1e-12, int max_iter = 300) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (!(std::isfinite(flo) && std::isfinite(fhi)) || std::signbit(flo) == std::signbit(fhi)) {
    throw NumericalError("invalid bracket [" + std::to_string(lo) + ", " + std::to_string(hi) +
                         "]: no sign change");
  }
  for (int i = 0; i < max_iter; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (std::abs(hi - lo) < tol * std::max(1.0, std::abs(mid)) || mid == lo || mid == hi) {
      return mid;
    }
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if (std::signbit(fm) == std::signbit(flo)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct Extremum {
  double x = 0.0;
  double value = 0.0;
  Bracket bracket;  // final golden-section interval containing x
};

/// Golden-section search for the maximum of a unimodal function on [lo, hi].
template <class F>
Extremum maximize_golden(F&& f, double lo, double hi, double tol = 1e-11, int max_iter = 500) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < max_iter && std::abs(b - a) > tol * std::max(1.0, std::abs(c)); ++i) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? Extremum{c, fc, {a, b}} : Extremum{d, fd, {a, b}};
}

/// Maximum of f with known derivative df: golden section narrows the peak,
/// then bisection on the derivative sign pins it beyond the sqrt(eps) limit
/// of comparison-only search.
template <class F, class DF>
Extremum maximize_with_derivative(F&& f, DF&& df, double lo, double hi, double tol = 1e-11) {
  Extremum coarse = maximize_golden(f, lo, hi, 1e-7);
  // Widen slightly so the derivative changes sign inside the bracket.
  const double pad = 0.5 * (coarse.bracket.hi - coarse.bracket.lo);
  double a = std::max(lo, coarse.bracket.lo - pad), b = std::min(hi, coarse.bracket.hi + pad);
  if (df(a) > 0.0 && df(b) < 0.0) {
    const double x = find_root_bracketed(df, a, b, tol);
    return {x, f(x), {a, b}};
  }
  return coarse;
}

/// Sign-change brackets of f over the sorted sample points xs.
template <class F>
std::vector<Bracket> scan_sign_changes(F&& f, const std::vector<double>& xs) {
  std::vector<Bracket> out;
  if (xs.empty()) return out;
  double prev_x = xs.front(), prev_f = f(prev_x);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double fx = f(xs[i]);
    if ((prev_f < 0.0 && fx >= 0.0) || (prev_f >= 0.0 && fx < 0.0)) out.push_back({prev_x, xs[i]});
    prev_x = xs[i];
    prev_f = fx;
  }
  return out;
}

/// n equally spaced points on [lo, hi], endpoints included.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> xs(n);
  if (n == 1) {
    xs[0] = lo;
    return xs;
  }
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return xs;
}

}  // namespace psyllid
