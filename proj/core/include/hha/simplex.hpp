#pragma once

#include "hha/types.hpp"

namespace hha::lp {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Vec x;
  double value = 0.0;
};

/// minimize c'x  s.t.  A x <= b,  lower <= x <= upper.
///
/// Dense two-phase tableau simplex with Bland's rule. Bounds must be finite;
/// intended for the small problems produced by region-adjacency tests.
LpResult minimize(const Vec& c, const Mat& A, const Vec& b, const Vec& lower, const Vec& upper);

}  // namespace hha::lp
