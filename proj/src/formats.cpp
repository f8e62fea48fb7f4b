#include "roundcert/formats.hpp"

namespace roundcert {

NumberFormat NumberFormat::fixed(int lsb, RoundingMode m) {
  NumberFormat f;
  f.kind = FormatKind::Fixed;
  f.lsb_exponent = lsb;
  f.rounding = m;
  return f;
}

NumberFormat NumberFormat::flt(int p, RoundingMode m) {
  if (p < 2) throw Error("float format needs p >= 2 significand bits");
  NumberFormat f;
  f.kind = FormatKind::Float;
  f.precision = p;
  f.rounding = m;
  return f;
}

std::string NumberFormat::to_string() const {
  std::string s = is_fixed() ? "fixed(lsb=" + std::to_string(lsb_exponent) + ")"
                             : "float(p=" + std::to_string(precision) + ")";
  if (rounding == RoundingMode::Truncate) s += ",trunc";
  return s;
}

bool operator==(const NumberFormat& a, const NumberFormat& b) {
  if (a.kind != b.kind || a.rounding != b.rounding) return false;
  return a.is_fixed() ? a.lsb_exponent == b.lsb_exponent : a.precision == b.precision;
}

ErrorTerm make_error_term(Rational mean, Rational variance, Rational worst, ErrorOrder order) {
  if (variance < 0 || worst < 0) throw Error("error term needs nonnegative variance and bound");
  if (variance > worst * worst) throw Error("error term variance exceeds worst_case^2");
  if (rat_abs(mean) > worst) throw Error("error term mean exceeds worst_case");
  return ErrorTerm{std::move(mean), std::move(variance), std::move(worst), order};
}

Rational ulp_of(const Rational& v, const NumberFormat& fmt) {
  if (fmt.is_fixed()) return pow2(fmt.lsb_exponent);
  if (v == 0) throw Error("ulp undefined at zero for float formats");
  long e = floor_log2(rat_abs(v));
  return pow2(e - fmt.precision + 1);
}

Rational max_ulp_over(const NumberFormat& fmt, const Interval& value_range,
                      const std::optional<Rational>& magnitude_floor) {
  if (fmt.is_fixed()) return pow2(fmt.lsb_exponent);
  if (magnitude_floor && *magnitude_floor <= 0)
    throw Error("magnitude floor must be positive");
  Rational m = iv_mag(value_range);
  if (iv_contains_zero(value_range)) {
    if (!magnitude_floor)
      throw Error("unbounded relative quantization: float range reaches zero; "
                  "declare a zero-excluding range or supply a magnitude floor");
    m = std::max(m, *magnitude_floor);
  }
  long e = floor_log2(m);
  // Exactly 2^e at the magnitude endpoint: every value short of it sits in
  // the binade below, whose spacing is 2^(e-p); the endpoint itself is
  // representable, so the coarser spacing above is never charged.
  if (m == pow2(e)) return pow2(e - fmt.precision);
  return pow2(e - fmt.precision + 1);
}

namespace {

ErrorTerm quantize_with_ulp(const Rational& u, RoundingMode mode) {
  if (mode == RoundingMode::Nearest) {
    // Uniform on +-u/2.
    return make_error_term(Rational(0), u * u / 12, u / 2);
  }
  // Truncation: uniform on (-u, 0]; midpoint model for the mean.
  return make_error_term(-u / 2, u * u / 12, u);
}

}  // namespace

ErrorTerm quantization_error_model(const NumberFormat& fmt, const Interval& value_range,
                                   const std::optional<Rational>& magnitude_floor) {
  return quantize_with_ulp(max_ulp_over(fmt, value_range, magnitude_floor), fmt.rounding);
}

ErrorTerm rounding_error_model(OpKind op, const NumberFormat& fmt, const Interval& result_range,
                               const std::optional<Rational>& magnitude_floor) {
  if (fmt.is_fixed() && (op == OpKind::Add || op == OpKind::Sub)) {
    // In-format fixed add/sub lands on the grid; truncating it is also exact.
    return make_error_term(Rational(0), Rational(0), Rational(0));
  }
  return quantization_error_model(fmt, result_range, magnitude_floor);
}

}  // namespace roundcert
