#pragma once

#include "roundcert/rational.hpp"

#include <algorithm>

namespace roundcert {

/// Closed interval [lo, hi] with exact rational endpoints.
struct Interval {
  Rational lo;
  Rational hi;

  Interval() : lo(0), hi(0) {}
  Interval(Rational l, Rational h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo > hi) throw Error("invalid interval: lo > hi");
  }

  static Interval point(const Rational& v) { return Interval(v, v); }

  bool contains(const Rational& v) const { return lo <= v && v <= hi; }
  bool encloses(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
  bool is_point() const { return lo == hi; }
  Rational width() const { return hi - lo; }
};

inline Interval iv_add(const Interval& a, const Interval& b) {
  return Interval(a.lo + b.lo, a.hi + b.hi);
}

inline Interval iv_sub(const Interval& a, const Interval& b) {
  return Interval(a.lo - b.hi, a.hi - b.lo);
}

inline Interval iv_neg(const Interval& a) { return Interval(-a.hi, -a.lo); }

inline Interval iv_mul(const Interval& a, const Interval& b) {
  Rational p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
  return Interval(std::min(std::min(p1, p2), std::min(p3, p4)),
                  std::max(std::max(p1, p2), std::max(p3, p4)));
}

inline Interval iv_scale(const Interval& a, const Rational& c) {
  if (c >= 0) return Interval(c * a.lo, c * a.hi);
  return Interval(c * a.hi, c * a.lo);
}

/// max |x| over the interval.
inline Rational iv_mag(const Interval& a) {
  return std::max(rat_abs(a.lo), rat_abs(a.hi));
}

inline bool iv_contains_zero(const Interval& a) { return a.lo <= 0 && 0 <= a.hi; }

inline Interval iv_hull(const Interval& a, const Interval& b) {
  return Interval(std::min(a.lo, b.lo), std::max(a.hi, b.hi));
}

inline bool operator==(const Interval& a, const Interval& b) {
  return a.lo == b.lo && a.hi == b.hi;
}

}  // namespace roundcert
