#pragma once

#include "roundcert/rational.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace roundcert {

// ============================ polynomials ============================

/// Dense polynomial with exact rational coefficients: coeffs[i] * x^i.
struct Poly {
  std::vector<Rational> coeffs;

  Poly() = default;
  explicit Poly(std::vector<Rational> c) : coeffs(std::move(c)) { trim(); }
  static Poly constant(const Rational& c) { return Poly({c}); }

  int degree() const;  // -1 for the zero polynomial
  bool is_zero() const { return coeffs.empty(); }
  Rational eval(const Rational& x) const;
  Poly antiderivative() const;  // constant term 0
  void trim();
};

Poly poly_add(const Poly& a, const Poly& b);
Poly poly_sub(const Poly& a, const Poly& b);
Poly poly_mul(const Poly& a, const Poly& b);
Poly poly_scale(const Poly& a, const Rational& c);

// ======================= piecewise densities ==========================

/// Probability density that is polynomial on each piece of a finite
/// partition of its support. breakpoints are strictly ascending and
/// pieces[i] applies on [breakpoints[i], breakpoints[i+1]).
struct PiecewiseDensity {
  std::vector<Rational> breakpoints;
  std::vector<Poly> pieces;

  static PiecewiseDensity uniform(const Rational& a, const Rational& b);

  Rational integral() const;
  Rational cdf(const Rational& x) const;
  Rational moment(int k) const;
  Rational mean() const { return moment(1); }
  Rational variance() const;
  Rational eval(const Rational& x) const;
  int max_degree() const;

  /// Shape and unit-mass checks; throws Error on violation.
  void validate() const;
};

/// Highest polynomial degree convolve may produce before refusing.
inline constexpr int kConvolutionDegreeCap = 8;

/// Density of X + Y for independent X ~ f, Y ~ g. Exact rational result.
/// Throws "convolution order too high" past the degree cap.
PiecewiseDensity convolve(const PiecewiseDensity& f, const PiecewiseDensity& g);

/// CDF of the sum of n independent U[0,1] variables, evaluated exactly.
Rational irwin_hall_cdf_exact(int n, const Rational& x);
double irwin_hall_cdf(int n, double x);

// ============================ uniform RV =============================

struct UniformRv {
  Rational a, b;  // a < b
  UniformRv(Rational lo, Rational hi);
  Rational mean() const { return (a + b) / 2; }
  Rational variance() const { return (b - a) * (b - a) / 12; }
};

/// Pr(X <= x): 0 for x <= a, (x-a)/(b-a) on (a,b], 1 for x > b.
Rational uniform_cdf(const UniformRv& u, const Rational& x);

// ========================== discrete spaces ==========================

/// Finite probability space: outcome labels with exact rational weights
/// summing to 1.
struct DiscreteSpace {
  std::vector<std::string> outcomes;
  std::vector<Rational> weights;

  std::size_t size() const { return outcomes.size(); }
  void validate() const;
};

/// Subset of a space's outcomes as a membership mask.
struct Event {
  std::vector<bool> members;

  static Event none(std::size_t n) { return Event{std::vector<bool>(n, false)}; }
  static Event all(std::size_t n) { return Event{std::vector<bool>(n, true)}; }
  static Event of(std::size_t n, std::initializer_list<std::size_t> idx);
  std::size_t size() const { return members.size(); }
};

Event ev_complement(const Event& a);
Event ev_intersect(const Event& a, const Event& b);
Event ev_union(const Event& a, const Event& b);

Rational probability(const DiscreteSpace& s, const Event& a);

/// Pr(A | B); by convention 0 when Pr(B) = 0.
Rational cond_prob(const DiscreteSpace& s, const Event& a, const Event& b);

/// Posterior Pr(partition[j] | b) via the partition identity.
/// Throws "not a partition" / "conditioning on null event".
Rational bayes(const DiscreteSpace& s, const std::vector<Event>& partition,
               const Event& b, std::size_t j);

/// Independent pairing; outcome labels are "(a,b)", weights multiply.
DiscreteSpace product_space(const DiscreteSpace& s1, const DiscreteSpace& s2);

}  // namespace roundcert
