#pragma once

#include "roundcert/interval.hpp"

#include <optional>
#include <string>

namespace roundcert {

enum class FormatKind { Fixed, Float };
enum class RoundingMode { Nearest, Truncate };

/// Machine number format: fixed point with a given lsb weight, or binary
/// floating point with p significand bits.
struct NumberFormat {
  FormatKind kind = FormatKind::Fixed;
  int precision = 0;     // float: significand bits, p >= 2
  int lsb_exponent = 0;  // fixed: the least significant bit weighs 2^lsb
  RoundingMode rounding = RoundingMode::Nearest;

  static NumberFormat fixed(int lsb, RoundingMode m = RoundingMode::Nearest);
  static NumberFormat flt(int p, RoundingMode m = RoundingMode::Nearest);

  bool is_fixed() const { return kind == FormatKind::Fixed; }
  bool is_float() const { return kind == FormatKind::Float; }
  std::string to_string() const;  // e.g. "fixed(lsb=-16)" or "float(p=24),trunc"
};

bool operator==(const NumberFormat& a, const NumberFormat& b);

enum class ErrorOrder { FirstOrderX, HigherOrderY };

/// One modeled error contribution: moments of the random part plus a hard
/// magnitude bound. variance_bound <= worst_case^2 and |mean| <= worst_case.
struct ErrorTerm {
  Rational mean;
  Rational variance_bound;
  Rational worst_case;
  ErrorOrder order = ErrorOrder::FirstOrderX;
};

ErrorTerm make_error_term(Rational mean, Rational variance, Rational worst,
                          ErrorOrder order = ErrorOrder::FirstOrderX);

enum class OpKind { Add, Sub, Mul, Narrow };

/// Unit in the last place at v. Fixed point: the constant 2^lsb.
/// Float: 2^(e-p+1) where 2^e <= |v| < 2^(e+1). Undefined at v = 0.
Rational ulp_of(const Rational& v, const NumberFormat& fmt);

/// Largest ulp taken by any value of the range. For float the range must not
/// reach 0 unless a positive magnitude_floor asserts that live values stay
/// away from it. A power-of-two magnitude endpoint is treated as approached
/// from below, so quantizing values up to 2^e costs the spacing of [2^(e-1), 2^e).
Rational max_ulp_over(const NumberFormat& fmt, const Interval& value_range,
                      const std::optional<Rational>& magnitude_floor = std::nullopt);

/// Error of representing an arbitrary real from value_range in fmt.
/// Nearest: mean 0, variance u^2/12, worst u/2. Truncate: mean -u/2,
/// variance u^2/12, worst u. u is max_ulp_over the range.
ErrorTerm quantization_error_model(const NumberFormat& fmt, const Interval& value_range,
                                   const std::optional<Rational>& magnitude_floor = std::nullopt);

/// Error of one arithmetic operation whose exact result lies in result_range.
/// Fixed-point add/sub are exact (no error, either rounding mode). Everything
/// else re-quantizes per quantization_error_model with fmt's rounding mode.
ErrorTerm rounding_error_model(OpKind op, const NumberFormat& fmt, const Interval& result_range,
                               const std::optional<Rational>& magnitude_floor = std::nullopt);

}  // namespace roundcert
