#include "roundcert/prob.hpp"

#include <algorithm>

namespace roundcert {

// ============================ polynomials ============================

void Poly::trim() {
  while (!coeffs.empty() && coeffs.back() == 0) coeffs.pop_back();
}

int Poly::degree() const { return static_cast<int>(coeffs.size()) - 1; }

Rational Poly::eval(const Rational& x) const {
  Rational acc(0);
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
  return acc;
}

Poly Poly::antiderivative() const {
  std::vector<Rational> c(coeffs.size() + 1, Rational(0));
  for (std::size_t i = 0; i < coeffs.size(); ++i) c[i + 1] = coeffs[i] / Rational(i + 1);
  return Poly(std::move(c));
}

Poly poly_add(const Poly& a, const Poly& b) {
  std::vector<Rational> c(std::max(a.coeffs.size(), b.coeffs.size()), Rational(0));
  for (std::size_t i = 0; i < a.coeffs.size(); ++i) c[i] += a.coeffs[i];
  for (std::size_t i = 0; i < b.coeffs.size(); ++i) c[i] += b.coeffs[i];
  return Poly(std::move(c));
}

Poly poly_sub(const Poly& a, const Poly& b) { return poly_add(a, poly_scale(b, Rational(-1))); }

Poly poly_mul(const Poly& a, const Poly& b) {
  if (a.is_zero() || b.is_zero()) return Poly();
  std::vector<Rational> c(a.coeffs.size() + b.coeffs.size() - 1, Rational(0));
  for (std::size_t i = 0; i < a.coeffs.size(); ++i)
    for (std::size_t j = 0; j < b.coeffs.size(); ++j) c[i + j] += a.coeffs[i] * b.coeffs[j];
  return Poly(std::move(c));
}

Poly poly_scale(const Poly& a, const Rational& c) {
  std::vector<Rational> r(a.coeffs.size());
  for (std::size_t i = 0; i < a.coeffs.size(); ++i) r[i] = a.coeffs[i] * c;
  return Poly(std::move(r));
}

// ======================= piecewise densities ==========================

PiecewiseDensity PiecewiseDensity::uniform(const Rational& a, const Rational& b) {
  if (a >= b) throw Error("uniform density needs a < b");
  PiecewiseDensity d;
  d.breakpoints = {a, b};
  d.pieces = {Poly::constant(Rational(1) / (b - a))};
  return d;
}

Rational PiecewiseDensity::integral() const { return moment(0); }

Rational PiecewiseDensity::moment(int k) const {
  Rational total(0);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    Poly integrand = pieces[i];
    for (int j = 0; j < k; ++j) integrand = poly_mul(integrand, Poly({Rational(0), Rational(1)}));
    Poly anti = integrand.antiderivative();
    total += anti.eval(breakpoints[i + 1]) - anti.eval(breakpoints[i]);
  }
  return total;
}

Rational PiecewiseDensity::variance() const {
  Rational m = mean();
  return moment(2) - m * m;
}

Rational PiecewiseDensity::cdf(const Rational& x) const {
  if (breakpoints.empty() || x <= breakpoints.front()) return Rational(0);
  if (x >= breakpoints.back()) return Rational(1);
  Rational total(0);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const Rational& lo = breakpoints[i];
    const Rational& hi = breakpoints[i + 1];
    Poly anti = pieces[i].antiderivative();
    if (x >= hi) {
      total += anti.eval(hi) - anti.eval(lo);
    } else {
      total += anti.eval(x) - anti.eval(lo);
      break;
    }
  }
  return total;
}

Rational PiecewiseDensity::eval(const Rational& x) const {
  for (std::size_t i = 0; i < pieces.size(); ++i)
    if (x >= breakpoints[i] && x < breakpoints[i + 1]) return pieces[i].eval(x);
  if (!breakpoints.empty() && x == breakpoints.back()) return pieces.back().eval(x);
  return Rational(0);
}

int PiecewiseDensity::max_degree() const {
  int d = 0;
  for (const Poly& p : pieces) d = std::max(d, p.degree());
  return d;
}

void PiecewiseDensity::validate() const {
  if (breakpoints.size() < 2 || pieces.size() + 1 != breakpoints.size())
    throw Error("density needs k+1 breakpoints for k pieces");
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
    if (breakpoints[i] >= breakpoints[i + 1])
      throw Error("density breakpoints must be strictly ascending");
  if (integral() != 1) throw Error("density does not integrate to 1");
}

// ============================ convolution ============================

namespace {

/// P(x) * Q(z - x), as z-polynomials indexed by the power of x.
std::vector<Poly> bivariate_product(const Poly& p, const Poly& q) {
  // Expand Q(z - x) first: contribution q_m * C(m,j) * (-1)^j z^(m-j) x^j.
  std::size_t qn = q.coeffs.size();
  std::vector<Poly> qzx(qn);
  for (std::size_t m = 0; m < qn; ++m) {
    if (q.coeffs[m] == 0) continue;
    BigInt binom = 1;
    for (std::size_t j = 0; j <= m; ++j) {
      Rational c = q.coeffs[m] * Rational(binom) * ((j % 2) ? -1 : 1);
      std::vector<Rational>& zc = qzx[j].coeffs;
      if (zc.size() < m - j + 1) zc.resize(m - j + 1, Rational(0));
      zc[m - j] += c;
      binom = binom * BigInt(m - j) / BigInt(j + 1);
    }
  }
  for (Poly& pl : qzx) pl.trim();

  std::vector<Poly> out(p.coeffs.size() + qn);
  for (std::size_t i = 0; i < p.coeffs.size(); ++i) {
    if (p.coeffs[i] == 0) continue;
    for (std::size_t j = 0; j < qn; ++j)
      out[i + j] = poly_add(out[i + j], poly_scale(qzx[j], p.coeffs[i]));
  }
  return out;
}

/// Substitute x := lin into a bivariate Sum_k h_k(z) x^k, where lin is a
/// z-polynomial (constant or z + c). Result is a z-polynomial.
Poly substitute_x(const std::vector<Poly>& h, const Poly& lin) {
  Poly result;
  Poly power = Poly::constant(Rational(1));
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!h[k].is_zero()) result = poly_add(result, poly_mul(h[k], power));
    power = poly_mul(power, lin);
  }
  return result;
}

}  // namespace

PiecewiseDensity convolve(const PiecewiseDensity& f, const PiecewiseDensity& g) {
  f.validate();
  g.validate();
  if (f.max_degree() + g.max_degree() + 1 > kConvolutionDegreeCap)
    throw Error("convolution order too high");

  // Output breakpoints: all pairwise sums of input breakpoints.
  std::vector<Rational> bps;
  for (const Rational& a : f.breakpoints)
    for (const Rational& b : g.breakpoints) bps.push_back(a + b);
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());

  PiecewiseDensity out;
  for (std::size_t s = 0; s + 1 < bps.size(); ++s) {
    const Rational& z0 = bps[s];
    const Rational& z1 = bps[s + 1];
    Rational zmid = (z0 + z1) / 2;
    Poly piece;
    for (std::size_t i = 0; i < f.pieces.size(); ++i) {
      const Rational& a1 = f.breakpoints[i];
      const Rational& a2 = f.breakpoints[i + 1];
      for (std::size_t j = 0; j < g.pieces.size(); ++j) {
        const Rational& b1 = g.breakpoints[j];
        const Rational& b2 = g.breakpoints[j + 1];
        // Integration window for h(z) = int f_i(x) g_j(z-x) dx.
        // Within (z0, z1) the active bound expressions never switch because
        // switches happen exactly at pairwise breakpoint sums.
        Rational lo_at_mid = std::max(a1, Rational(zmid - b2));
        Rational hi_at_mid = std::min(a2, Rational(zmid - b1));
        if (lo_at_mid >= hi_at_mid) continue;
        std::vector<Poly> h;  // antiderivative in x of f_i(x) g_j(z-x)
        {
          std::vector<Poly> s2 = bivariate_product(f.pieces[i], g.pieces[j]);
          h.assign(s2.size() + 1, Poly());
          for (std::size_t k = 0; k < s2.size(); ++k)
            h[k + 1] = poly_scale(s2[k], Rational(1, static_cast<long>(k + 1)));
        }
        Poly upper = (a2 <= zmid - b1) ? Poly::constant(a2) : Poly({-b1, Rational(1)});
        Poly lower = (a1 >= zmid - b2) ? Poly::constant(a1) : Poly({-b2, Rational(1)});
        piece = poly_add(piece, poly_sub(substitute_x(h, upper), substitute_x(h, lower)));
      }
    }
    if (!piece.is_zero() || !out.breakpoints.empty()) {
      if (out.breakpoints.empty()) out.breakpoints.push_back(z0);
      out.breakpoints.push_back(z1);
      out.pieces.push_back(std::move(piece));
    }
  }
  // Drop an all-zero tail so the support is tight.
  while (!out.pieces.empty() && out.pieces.back().is_zero()) {
    out.pieces.pop_back();
    out.breakpoints.pop_back();
  }
  out.validate();
  return out;
}

// ============================ Irwin-Hall =============================

Rational irwin_hall_cdf_exact(int n, const Rational& x) {
  if (n < 1) throw Error("irwin_hall_cdf needs n >= 1");
  if (x <= 0) return Rational(0);
  if (x >= n) return Rational(1);
  BigInt factorial = 1;
  for (int i = 2; i <= n; ++i) factorial *= i;
  Rational sum(0);
  BigInt binom = 1;  // C(n, k)
  for (int k = 0; Rational(k) <= x && k <= n; ++k) {
    Rational base = x - k;
    Rational pw(1);
    for (int i = 0; i < n; ++i) pw *= base;
    Rational term = Rational(binom) * pw;
    sum += (k % 2) ? Rational(-term) : term;
    binom = binom * BigInt(n - k) / BigInt(k + 1);
  }
  return sum / Rational(factorial);
}

double irwin_hall_cdf(int n, double x) {
  // Exact rational evaluation sidesteps the cancellation in the
  // alternating sum; only the final value is rounded.
  return to_double(irwin_hall_cdf_exact(n, from_double(x)));
}

// ============================ uniform RV =============================

UniformRv::UniformRv(Rational lo, Rational hi) : a(std::move(lo)), b(std::move(hi)) {
  if (a >= b) throw Error("uniform random variable needs a < b");
}

Rational uniform_cdf(const UniformRv& u, const Rational& x) {
  if (x <= u.a) return Rational(0);
  if (x > u.b) return Rational(1);
  return (x - u.a) / (u.b - u.a);
}

// ========================== discrete spaces ==========================

void DiscreteSpace::validate() const {
  if (outcomes.size() != weights.size())
    throw Error("discrete space: outcome/weight size mismatch");
  if (outcomes.empty()) throw Error("discrete space must be nonempty");
  Rational total(0);
  for (const Rational& w : weights) {
    if (w < 0 || w > 1) throw Error("discrete space: weight outside [0,1]");
    total += w;
  }
  if (total != 1) throw Error("discrete space: weights must sum to 1 exactly");
}

Event Event::of(std::size_t n, std::initializer_list<std::size_t> idx) {
  Event e = none(n);
  for (std::size_t i : idx) {
    if (i >= n) throw Error("event index out of range");
    e.members[i] = true;
  }
  return e;
}

namespace {
void check_event(const DiscreteSpace& s, const Event& e) {
  if (e.size() != s.size()) throw Error("event mask does not match the space");
}
}  // namespace

Event ev_complement(const Event& a) {
  Event r = a;
  for (std::size_t i = 0; i < r.members.size(); ++i) r.members[i] = !r.members[i];
  return r;
}

Event ev_intersect(const Event& a, const Event& b) {
  if (a.size() != b.size()) throw Error("event size mismatch");
  Event r = a;
  for (std::size_t i = 0; i < r.members.size(); ++i)
    r.members[i] = r.members[i] && b.members[i];
  return r;
}

Event ev_union(const Event& a, const Event& b) {
  if (a.size() != b.size()) throw Error("event size mismatch");
  Event r = a;
  for (std::size_t i = 0; i < r.members.size(); ++i)
    r.members[i] = r.members[i] || b.members[i];
  return r;
}

Rational probability(const DiscreteSpace& s, const Event& a) {
  check_event(s, a);
  Rational p(0);
  for (std::size_t i = 0; i < s.size(); ++i)
    if (a.members[i]) p += s.weights[i];
  return p;
}

Rational cond_prob(const DiscreteSpace& s, const Event& a, const Event& b) {
  check_event(s, a);
  check_event(s, b);
  Rational pb = probability(s, b);
  if (pb == 0) return Rational(0);
  return probability(s, ev_intersect(a, b)) / pb;
}

Rational bayes(const DiscreteSpace& s, const std::vector<Event>& partition,
               const Event& b, std::size_t j) {
  if (j >= partition.size()) throw Error("bayes: partition index out of range");
  check_event(s, b);
  std::vector<bool> covered(s.size(), false);
  for (const Event& cell : partition) {
    check_event(s, cell);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!cell.members[i]) continue;
      if (covered[i]) throw Error("not a partition");
      covered[i] = true;
    }
  }
  for (bool c : covered)
    if (!c) throw Error("not a partition");
  if (probability(s, b) == 0) throw Error("conditioning on null event");

  Rational numer = cond_prob(s, b, partition[j]) * probability(s, partition[j]);
  Rational denom(0);
  for (const Event& cell : partition)
    denom += cond_prob(s, b, cell) * probability(s, cell);
  return numer / denom;
}

DiscreteSpace product_space(const DiscreteSpace& s1, const DiscreteSpace& s2) {
  s1.validate();
  s2.validate();
  DiscreteSpace p;
  p.outcomes.reserve(s1.size() * s2.size());
  p.weights.reserve(s1.size() * s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    for (std::size_t j = 0; j < s2.size(); ++j) {
      p.outcomes.push_back("(" + s1.outcomes[i] + "," + s2.outcomes[j] + ")");
      p.weights.push_back(s1.weights[i] * s2.weights[j]);
    }
  }
  return p;
}

}  // namespace roundcert
