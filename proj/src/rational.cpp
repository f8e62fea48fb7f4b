#include "roundcert/rational.hpp"

#include <cctype>
#include <cmath>
#include <limits>

namespace roundcert {

Rational pow2(long k) {
  BigInt one = 1;
  if (k >= 0) return Rational(one << k);
  return Rational(one, one << (-k));
}

long floor_log2(const Rational& v) {
  if (v <= 0) throw Error("floor_log2 requires a positive value");
  const BigInt num = numerator(v);
  const BigInt den = denominator(v);
  long e = static_cast<long>(msb(num)) - static_cast<long>(msb(den));
  // msb difference is off by at most one; settle by exact comparison.
  auto at_least_pow2 = [&](long k) {
    if (k >= 0) return num >= (den << k);
    return (num << (-k)) >= den;
  };
  if (!at_least_pow2(e)) --e;
  if (at_least_pow2(e + 1)) ++e;
  return e;
}

Rational rat_abs(const Rational& v) { return v < 0 ? Rational(-v) : v; }

BigInt rat_floor(const Rational& v) {
  BigInt q = numerator(v) / denominator(v);
  if (v < 0 && q * denominator(v) != numerator(v)) --q;
  return q;
}

namespace {

Rational parse_plain_decimal(const std::string& text) {
  size_t i = 0;
  bool neg = false;
  if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
    neg = text[i] == '-';
    ++i;
  }
  std::string digits;
  long frac_digits = 0;
  bool seen_digit = false, seen_dot = false;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digits.push_back(c);
      if (seen_dot) ++frac_digits;
      seen_digit = true;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      break;
    }
  }
  long exp10 = 0;
  if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
    ++i;
    bool eneg = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
      eneg = text[i] == '-';
      ++i;
    }
    if (i == text.size()) throw Error("malformed number: " + text);
    for (; i < text.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(text[i])))
        throw Error("malformed number: " + text);
      exp10 = exp10 * 10 + (text[i] - '0');
      if (exp10 > 100000) throw Error("exponent out of range: " + text);
    }
    if (eneg) exp10 = -exp10;
  }
  if (!seen_digit || i != text.size()) throw Error("malformed number: " + text);

  // strip leading zeros: cpp_int would read "025" as octal
  std::size_t first = digits.find_first_not_of('0');
  digits.erase(0, first == std::string::npos ? digits.size() : first);

  BigInt mant(digits.empty() ? "0" : digits);
  Rational value(mant);
  long net = exp10 - frac_digits;
  BigInt ten = 10;
  if (net > 0) {
    value *= Rational(boost::multiprecision::pow(ten, static_cast<unsigned>(net)));
  } else if (net < 0) {
    value /= Rational(boost::multiprecision::pow(ten, static_cast<unsigned>(-net)));
  }
  return neg ? Rational(-value) : value;
}

}  // namespace

Rational parse_number(const std::string& text) {
  auto slash = text.find('/');
  if (slash != std::string::npos) {
    Rational num = parse_plain_decimal(text.substr(0, slash));
    Rational den = parse_plain_decimal(text.substr(slash + 1));
    if (den == 0) throw Error("zero denominator: " + text);
    return num / den;
  }
  return parse_plain_decimal(text);
}

std::string to_exact_string(const Rational& v) {
  BigInt num = numerator(v);
  BigInt den = denominator(v);
  if (den == 1) return num.str();
  // Terminating decimal exists iff den = 2^a * 5^b.
  BigInt d = den;
  long a = 0, b = 0;
  while (d % 2 == 0) {
    d /= 2;
    ++a;
  }
  while (d % 5 == 0) {
    d /= 5;
    ++b;
  }
  if (d != 1) return num.str() + "/" + den.str();

  long m = std::max(a, b);
  BigInt five = 5, two = 2;
  BigInt scaled = num * boost::multiprecision::pow(five, static_cast<unsigned>(m - b)) *
                  boost::multiprecision::pow(two, static_cast<unsigned>(m - a));
  bool neg = scaled < 0;
  std::string s = (neg ? BigInt(-scaled) : scaled).str();
  if (static_cast<long>(s.size()) <= m) s.insert(0, m - s.size() + 1, '0');
  s.insert(s.size() - m, ".");
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return (neg ? "-" : "") + s;
}

double to_double(const Rational& v) { return v.convert_to<double>(); }

Rational from_double(double v) {
  if (!std::isfinite(v)) throw Error("cannot convert non-finite double to rational");
  return Rational(v);
}

bool is_dyadic(const Rational& v) {
  BigInt den = denominator(v);
  return (den & (den - 1)) == 0;
}

long dyadic_lsb(const Rational& v) {
  if (v == 0) throw Error("dyadic_lsb undefined at zero");
  if (!is_dyadic(v)) throw Error("dyadic_lsb requires a dyadic value");
  BigInt num = numerator(v);
  if (num < 0) num = -num;
  return static_cast<long>(lsb(num)) - static_cast<long>(msb(denominator(v)));
}

}  // namespace roundcert
