#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "roundcert/bounds.hpp"

using namespace roundcert;

namespace {

// Inner-loop accumulator example: 2^25 additions in fixed(lsb=-24), rounding
// to nearest. Per step: variance u^2/12, hard bound u/2, with u = 2^-24.
VarianceLedger accumulator_ledger() {
  return VarianceLedger::uniform_steps(pow2(-48) / 12, pow2(-25), std::uint64_t{1} << 25);
}

}  // namespace

// ==================== ledger bookkeeping =====================

TEST_CASE("ledger totals are exact closed forms") {
  VarianceLedger l = accumulator_ledger();
  CHECK(l.steps() == (std::uint64_t{1} << 25));
  CHECK(l.total_variance() == pow2(-23) / 12);
  CHECK(l.worst_case_total() == 1);
  CHECK(l.segments().size() == 1);
}

TEST_CASE("ledger analytic total matches brute-force summation") {
  VarianceLedger l = accumulator_ledger();
  long double acc = 0.0L;
  long double v = static_cast<long double>(to_double(pow2(-48) / 12));
  for (std::uint64_t i = 0; i < l.steps(); ++i) acc += v;
  double analytic = to_double(l.total_variance());
  CHECK(std::abs(static_cast<double>(acc) - analytic) <= 1e-12 * analytic);
}

TEST_CASE("adjacent equal segments merge; distinct ones do not") {
  VarianceLedger l;
  l.append_steps(Rational(1, 100), Rational(1, 10), 3);
  l.append_steps(Rational(1, 100), Rational(1, 10), 2);
  CHECK(l.segments().size() == 1);
  CHECK(l.steps() == 5);
  l.append_steps(Rational(1, 400), Rational(1, 20), 4);
  CHECK(l.segments().size() == 2);
  CHECK(l.steps() == 9);
  CHECK(l.total_variance() == Rational(5, 100) + Rational(4, 400));
  CHECK(l.worst_case_total() == Rational(5, 10) + Rational(4, 20));
}

TEST_CASE("per-step lookup spans segment boundaries") {
  VarianceLedger l;
  l.append_steps(Rational(1, 4), Rational(1, 2), 2);
  l.append_steps(Rational(1, 16), Rational(1, 4), 3);
  CHECK(l.variance_at(0) == Rational(1, 4));
  CHECK(l.variance_at(1) == Rational(1, 4));
  CHECK(l.variance_at(2) == Rational(1, 16));
  CHECK(l.worst_case_at(4) == Rational(1, 4));
  CHECK_THROWS_AS(l.variance_at(5), Error);
}

TEST_CASE("ledger rejects inconsistent entries") {
  VarianceLedger l;
  CHECK_THROWS_AS(l.append_steps(Rational(-1), Rational(1), 1), Error);
  CHECK_THROWS_AS(l.append_steps(Rational(1), Rational(-1), 1), Error);
  // variance above worst^2 cannot come from a bounded variable
  CHECK_THROWS_AS(l.append_steps(Rational(1, 2), Rational(1, 2), 1), Error);
  l.append_steps(Rational(1, 4), Rational(1, 2), 1);  // equality is attainable
  CHECK(l.steps() == 1);
  l.append_steps(Rational(0), Rational(0), 7);  // exact steps are fine
  CHECK(l.total_variance() == Rational(1, 4));
}

// ==================== failure bound =====================

TEST_CASE("failure bound: exact textbook value") {
  // 1000 steps of variance 1e-6 against epsilon 0.1: (1000e-6)/(0.01) = 1/10.
  VarianceLedger l = VarianceLedger::uniform_steps(parse_number("1e-6"),
                                                   parse_number("1e-3"), 1000);
  Rational b = doob_failure_bound(l, parse_number("0.1"));
  CHECK(b == Rational(1, 10));
  CHECK(success_lower_bound(l, parse_number("0.1")) == Rational(9, 10));
}

TEST_CASE("failure bound: accumulator example is exact") {
  VarianceLedger l = accumulator_ledger();
  Rational b = doob_failure_bound(l, Rational(1, 100));
  CHECK(b == Rational(625, 6291456));
  CHECK(to_double(b) == doctest::Approx(9.9341e-5).epsilon(1e-4));
  CHECK(success_lower_bound(l, Rational(1, 100)) == 1 - Rational(625, 6291456));
}

TEST_CASE("failure bound caps at one") {
  VarianceLedger l = VarianceLedger::uniform_steps(Rational(1), Rational(1), 10);
  CHECK(doob_failure_bound(l, Rational(1)) == 1);
  CHECK(success_lower_bound(l, Rational(1)) == 0);
}

TEST_CASE("threshold beyond the reachable envelope is certain") {
  VarianceLedger l = accumulator_ledger();  // worst_case_total == 1
  CHECK(doob_failure_bound(l, Rational(2)) == 0);
  CHECK(doob_failure_bound(l, Rational(1001, 1000)) == 0);
  // at the envelope itself the variance bound still applies
  CHECK(doob_failure_bound(l, Rational(1)) == pow2(-23) / 12);
  CHECK(success_lower_bound(l, Rational(2)) == 1);
}

TEST_CASE("failure bound input validation") {
  VarianceLedger l = accumulator_ledger();
  CHECK_THROWS_WITH_AS(doob_failure_bound(l, Rational(0)), "epsilon must be positive", Error);
  CHECK_THROWS_AS(doob_failure_bound(l, Rational(-1)), Error);

  VarianceLedger drifting = accumulator_ledger();
  drifting.zero_mean_certified = false;
  CHECK_THROWS_WITH_AS(doob_failure_bound(drifting, Rational(1, 2)),
                       "not a martingale: drift or dependence present", Error);

  VarianceLedger coupled = accumulator_ledger();
  coupled.independence_certified = false;
  CHECK_THROWS_AS(doob_failure_bound(coupled, Rational(1, 2)), Error);
}

TEST_CASE("failure bound scale covariance is exact") {
  std::mt19937_64 rng(97);
  std::uniform_int_distribution<long> small(1, 1000);
  for (int i = 0; i < 200; ++i) {
    Rational w(small(rng), 1000 * small(rng));
    Rational v = w * w / (1 + small(rng) % 3);  // v <= w^2
    Rational eps(small(rng), small(rng));
    Rational c(small(rng), small(rng));
    std::uint64_t n = 1 + small(rng) % 50;
    VarianceLedger a = VarianceLedger::uniform_steps(v, w, n);
    VarianceLedger b = VarianceLedger::uniform_steps(v * c * c, w * c, n);
    CHECK(doob_failure_bound(a, eps) == doob_failure_bound(b, eps * c));
  }
}

TEST_CASE("failure bound monotonicity") {
  VarianceLedger l = VarianceLedger::uniform_steps(Rational(1, 1000), Rational(1, 4), 100);
  Rational prev(0);
  // nondecreasing as steps accrue
  for (int more = 0; more < 20; ++more) {
    Rational b = doob_failure_bound(l, Rational(2));
    CHECK(b >= prev);
    prev = b;
    l.append_steps(Rational(1, 1000), Rational(1, 4), 25);
  }
  // nonincreasing as the threshold widens
  prev = Rational(1);
  for (int k = 1; k <= 30; ++k) {
    Rational b = doob_failure_bound(l, Rational(k, 10));
    CHECK(b <= prev);
    prev = b;
  }
}

// ==================== step budget =====================

TEST_CASE("max_safe_steps: accumulator budget and its boundary") {
  Rational sv = pow2(-48) / 12;
  Rational eps = Rational(1, 100);
  Rational p = parse_number("1e-9");
  std::uint64_t n = max_safe_steps(sv, eps, p);
  CHECK(n == 337);
  // n is the last step count whose bound still fits the budget
  CHECK(Rational(n) * sv <= p * eps * eps);
  CHECK(Rational(n + 1) * sv > p * eps * eps);
}

TEST_CASE("max_safe_steps: round numbers land exactly") {
  CHECK(max_safe_steps(parse_number("1e-12"), parse_number("1e-3"), parse_number("1e-3")) ==
        1000);
  CHECK(max_safe_steps(Rational(1, 4), Rational(10), Rational(1, 100)) == 4);
}

TEST_CASE("max_safe_steps saturates instead of overflowing") {
  std::uint64_t n = max_safe_steps(pow2(-200), Rational(1), Rational(1));
  CHECK(n == std::numeric_limits<std::uint64_t>::max());
}

TEST_CASE("max_safe_steps input validation") {
  CHECK_THROWS_WITH_AS(max_safe_steps(Rational(0), Rational(1), Rational(1, 2)),
                       "step variance must be positive", Error);
  CHECK_THROWS_AS(max_safe_steps(Rational(1, 4), Rational(0), Rational(1, 2)), Error);
  CHECK_THROWS_WITH_AS(max_safe_steps(Rational(1, 4), Rational(1), Rational(0)),
                       "failure budget must be in (0, 1]", Error);
  CHECK_THROWS_AS(max_safe_steps(Rational(1, 4), Rational(1), Rational(2)), Error);
}

TEST_CASE("max_safe_steps round-trips against the exact inequality") {
  std::mt19937_64 rng(451);
  std::uniform_int_distribution<long> num(1, 1 << 16);
  for (int i = 0; i < 300; ++i) {
    Rational sv(num(rng), 65536L * num(rng));
    Rational eps(num(rng), num(rng));
    Rational p(1 + num(rng) % 999, 1000);
    std::uint64_t n = max_safe_steps(sv, eps, p);
    if (n == std::numeric_limits<std::uint64_t>::max()) continue;
    CHECK(Rational(n) * sv <= p * eps * eps);
    CHECK(Rational(n + 1) * sv > p * eps * eps);
  }
}

// ==================== threshold query =====================

TEST_CASE("required_epsilon: accumulator example") {
  VarianceLedger l = accumulator_ledger();
  double e = required_epsilon(l, parse_number("1e-9"));
  CHECK(e == doctest::Approx(3.1518).epsilon(1e-3));
  // the returned threshold genuinely meets the budget, checked exactly
  Rational er = from_double(e);
  CHECK(l.total_variance() <= parse_number("1e-9") * er * er);
  // and exceeds the deterministic envelope: this loop never needs the
  // stochastic argument at all once epsilon > 1
  CHECK(er > l.worst_case_total());
}

TEST_CASE("required_epsilon never undershoots and never grossly overshoots") {
  std::mt19937_64 rng(7577);
  std::uniform_int_distribution<long> num(1, 1 << 20);
  for (int i = 0; i < 200; ++i) {
    Rational w(num(rng), 1 << 20);
    if (w == 0) continue;
    Rational v = w * w / (1 + num(rng) % 4);
    std::uint64_t n = 1 + num(rng) % 10000;
    Rational p(1 + num(rng) % 999, 1000);
    VarianceLedger l = VarianceLedger::uniform_steps(v, w, n);
    double e = required_epsilon(l, p);
    Rational er = from_double(e);
    CHECK(l.total_variance() <= p * er * er);
    // four ulps below must already violate the budget
    double down = e;
    for (int k = 0; k < 4; ++k) down = std::nextafter(down, 0.0);
    if (down > 0) {
      Rational dr = from_double(down);
      CHECK(l.total_variance() > p * dr * dr);
    }
  }
}

TEST_CASE("required_epsilon: exact rounding is always reported safe") {
  VarianceLedger l = VarianceLedger::uniform_steps(Rational(0), Rational(0), 1000);
  CHECK(required_epsilon(l, Rational(1, 1000000)) ==
        std::numeric_limits<double>::denorm_min());
  CHECK(doob_failure_bound(l, from_double(std::numeric_limits<double>::denorm_min())) == 0);
}

TEST_CASE("required_epsilon input validation") {
  VarianceLedger l = accumulator_ledger();
  CHECK_THROWS_AS(required_epsilon(l, Rational(0)), Error);
  CHECK_THROWS_AS(required_epsilon(l, Rational(3, 2)), Error);
  VarianceLedger drifting = accumulator_ledger();
  drifting.zero_mean_certified = false;
  CHECK_THROWS_AS(required_epsilon(drifting, Rational(1, 2)), Error);
}

// ==================== certificates =====================

TEST_CASE("certificate: stochastic mode carries the exact bound") {
  VarianceLedger l = accumulator_ledger();
  Certificate c = make_certificate(l, Rational(1, 100), {"rounding to nearest"});
  CHECK(c.mode == CertificateMode::Stochastic);
  CHECK(c.binding == BindingBound::Stochastic);
  CHECK(c.failure_bound == Rational(625, 6291456));
  CHECK(c.success_bound == 1 - Rational(625, 6291456));
  CHECK(c.total_variance == pow2(-23) / 12);
  CHECK(c.worst_case_total == 1);
  CHECK(c.steps == (std::uint64_t{1} << 25));
  CHECK(c.epsilon == Rational(1, 100));
  REQUIRE(c.assumptions.size() == 1);
  CHECK(c.assumptions[0] == "rounding to nearest");
}

TEST_CASE("certificate: deterministic envelope wins past the reachable range") {
  VarianceLedger l = accumulator_ledger();
  Certificate c = make_certificate(l, Rational(2), {});
  CHECK(c.mode == CertificateMode::Stochastic);
  CHECK(c.binding == BindingBound::Deterministic);
  CHECK(c.failure_bound == 0);
  CHECK(c.success_bound == 1);
}

TEST_CASE("certificate: drift downgrades to worst-case-only") {
  VarianceLedger l = VarianceLedger::uniform_steps(Rational(1, 48), Rational(1, 2), 16);
  l.zero_mean_certified = false;
  l.drift_worst_case = Rational(1, 4);
  // envelope is 16/2 + 1/4 = 33/4
  Certificate tight = make_certificate(l, Rational(8), {});
  CHECK(tight.mode == CertificateMode::WorstCaseOnly);
  CHECK(tight.binding == BindingBound::Deterministic);
  CHECK(tight.failure_bound == 1);
  CHECK(tight.success_bound == 0);
  REQUIRE(tight.assumptions.size() == 1);
  CHECK(tight.assumptions[0].find("nonzero mean") != std::string::npos);

  Certificate wide = make_certificate(l, Rational(9), {});
  CHECK(wide.failure_bound == 0);
  CHECK(wide.success_bound == 1);
  CHECK(wide.mode == CertificateMode::WorstCaseOnly);
}

TEST_CASE("certificate: dependence downgrades and is named") {
  VarianceLedger l = VarianceLedger::uniform_steps(Rational(1, 48), Rational(1, 2), 16);
  l.independence_certified = false;
  Certificate c = make_certificate(l, Rational(1), {});
  CHECK(c.mode == CertificateMode::WorstCaseOnly);
  REQUIRE(c.assumptions.size() == 1);
  CHECK(c.assumptions[0].find("independence") != std::string::npos);
}

TEST_CASE("certificate rejects nonpositive thresholds") {
  CHECK_THROWS_AS(make_certificate(accumulator_ledger(), Rational(0), {}), Error);
}

TEST_CASE("mode and binding names used in reports") {
  CHECK(to_string(CertificateMode::Stochastic) == "stochastic");
  CHECK(to_string(CertificateMode::WorstCaseOnly) == "worst_case_only");
  CHECK(to_string(BindingBound::Stochastic) == "stochastic");
  CHECK(to_string(BindingBound::Deterministic) == "deterministic");
  CHECK(to_string(MartingaleVerdict::Pass) == "pass");
  CHECK(to_string(MartingaleVerdict::Fail) == "fail");
  CHECK(to_string(MartingaleVerdict::Inconclusive) == "inconclusive");
}

// ==================== empirical martingale check =====================

namespace {
std::vector<std::vector<double>> iid_uniform(std::size_t trials, std::size_t steps,
                                             double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<std::vector<double>> rows(trials, std::vector<double>(steps));
  for (auto& row : rows)
    for (double& x : row) x = u(rng);
  return rows;
}
}  // namespace

TEST_CASE("martingale check passes iid centered increments") {
  auto rows = iid_uniform(400, 64, -0.5, 0.5, 20260819);
  MartingaleReport r = empirical_martingale_check(rows, 5.0);
  CHECK(r.verdict == MartingaleVerdict::Pass);
  CHECK(r.checks.size() >= 5);
  for (const MartingaleCheck& c : r.checks) CHECK(c.pass);
}

TEST_CASE("martingale check flags sign-flipping dependence") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<std::vector<double>> rows(300, std::vector<double>(32));
  for (auto& row : rows) {
    row[0] = u(rng);
    for (std::size_t j = 1; j < row.size(); ++j) row[j] = -row[j - 1];
  }
  MartingaleReport r = empirical_martingale_check(rows, 5.0);
  CHECK(r.verdict == MartingaleVerdict::Fail);
  bool lag1_failed = false;
  for (const MartingaleCheck& c : r.checks)
    if (c.name == "lag_1_correlation" && !c.pass) lag1_failed = true;
  CHECK(lag1_failed);
  CHECK(r.detail.find("lag_1_correlation") != std::string::npos);
}

TEST_CASE("martingale check flags truncation drift") {
  // truncation leaves a one-sided error in (-u, 0]: mean -u/2, not a martingale
  auto rows = iid_uniform(400, 64, -1.0, 0.0, 99);
  MartingaleReport r = empirical_martingale_check(rows, 5.0);
  CHECK(r.verdict == MartingaleVerdict::Fail);
  bool pooled_failed = false;
  for (const MartingaleCheck& c : r.checks)
    if (c.name == "pooled_zero_mean" && !c.pass) pooled_failed = true;
  CHECK(pooled_failed);
}

TEST_CASE("martingale check is inconclusive on degenerate data") {
  std::vector<std::vector<double>> rows(50, std::vector<double>(16, 0.0));
  MartingaleReport r = empirical_martingale_check(rows, 5.0);
  CHECK(r.verdict == MartingaleVerdict::Inconclusive);
}

TEST_CASE("martingale check flags a constant nonzero drift even without spread") {
  std::vector<std::vector<double>> rows(50, std::vector<double>(16, 0.25));
  MartingaleReport r = empirical_martingale_check(rows, 5.0);
  CHECK(r.verdict == MartingaleVerdict::Fail);
}

TEST_CASE("martingale check input validation") {
  CHECK_THROWS_AS(empirical_martingale_check({}, 5.0), Error);
  CHECK_THROWS_AS(empirical_martingale_check({{0.1, 0.2}}, 5.0), Error);
  CHECK_THROWS_AS(empirical_martingale_check({{0.1}, {0.2}}, 5.0), Error);
  CHECK_THROWS_WITH_AS(empirical_martingale_check({{0.1, 0.2}, {0.3, 0.4}}, 0.0),
                       "tolerance must be positive", Error);
  CHECK_THROWS_WITH_AS(empirical_martingale_check({{0.1, 0.2}, {0.3, 0.4, 0.5}}, 5.0),
                       "ragged increment matrix", Error);
}
