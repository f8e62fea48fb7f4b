#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace roundcert {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 2^k for any integer k; negative k yields 1/2^|k|.
Rational pow2(long k);

/// Largest e with 2^e <= v. Requires v > 0.
long floor_log2(const Rational& v);

Rational rat_abs(const Rational& v);

/// Floor toward negative infinity.
BigInt rat_floor(const Rational& v);

/// Parses "0.01", "-3", "2.5e-7", or "355/113" exactly.
Rational parse_number(const std::string& text);

/// Exact decimal string when the reduced denominator is 2^a * 5^b,
/// otherwise "num/den".
std::string to_exact_string(const Rational& v);

double to_double(const Rational& v);

/// Exact conversion; rejects NaN and infinities.
Rational from_double(double v);

/// True when v = m * 2^k for integers m, k (finite binary expansion).
bool is_dyadic(const Rational& v);

/// For dyadic nonzero v = m * 2^k with m odd, returns k.
/// The weight of the lowest set bit of v's binary expansion.
long dyadic_lsb(const Rational& v);

}  // namespace roundcert
