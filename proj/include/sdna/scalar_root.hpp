#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "sdna/errors.hpp"

namespace sdna {

// Root of a strictly increasing scalar function on the open interval
// (lo, hi): Newton iterations safeguarded by a shrinking bracket, falling
// back to bisection whenever a Newton step leaves the bracket. The interval
// ends may be infinite; finite ends are approached but never evaluated
// exactly (the derivative may blow up there).
template <typename Scalar, typename F, typename DF>
Scalar increasing_root(const F& fn, const DF& dfn, Scalar lo, Scalar hi,
                       Scalar guess, Scalar tol, int max_iter = 200) {
  const Scalar inf = std::numeric_limits<Scalar>::infinity();

  // Establish a finite bracket [a, b] with fn(a) <= 0 <= fn(b).
  Scalar a, b;
  if (lo == -inf || hi == inf) {
    Scalar step = Scalar(1);
    a = b = std::clamp(guess, lo == -inf ? -Scalar(1) : lo, hi == inf ? Scalar(1) : hi);
    while (fn(a) > 0) {
      b = a;
      a = (lo == -inf) ? a - step : std::max(lo + (a - lo) / 16, a - step);
      step *= 2;
      if (--max_iter <= 0) throw SolverError("root bracketing failed (low side)");
    }
    step = Scalar(1);
    while (fn(b) < 0) {
      a = std::max(a, b);
      b = (hi == inf) ? b + step : std::min(hi - (hi - b) / 16, b + step);
      step *= 2;
      if (--max_iter <= 0) throw SolverError("root bracketing failed (high side)");
    }
  } else {
    // Nudge strictly inside the open interval.
    const Scalar width = hi - lo;
    a = lo + std::numeric_limits<Scalar>::denorm_min() +
        width * std::numeric_limits<Scalar>::epsilon();
    b = hi - width * std::numeric_limits<Scalar>::epsilon();
    if (a >= b) return (lo + hi) / 2;
    if (fn(a) >= 0) return a;
    if (fn(b) <= 0) return b;
  }

  Scalar x = std::clamp(guess, a, b);
  for (int it = 0; it < max_iter; ++it) {
    const Scalar value = fn(x);
    if (std::abs(value) <= tol) return x;
    (value > 0 ? b : a) = x;
    const Scalar slope = dfn(x);
    Scalar next = (slope > 0) ? x - value / slope
                              : std::numeric_limits<Scalar>::quiet_NaN();
    if (!(next > a && next < b)) next = (a + b) / 2;
    if (next == x) return x;  // bracket exhausted at machine precision
    x = next;
  }
  return x;
}

}  // namespace sdna
