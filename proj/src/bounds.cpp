#include "roundcert/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace roundcert {

VarianceLedger VarianceLedger::uniform_steps(const Rational& variance, const Rational& worst,
                                             std::uint64_t n) {
  VarianceLedger l;
  l.append_steps(variance, worst, n);
  return l;
}

void VarianceLedger::append_steps(const Rational& variance, const Rational& worst,
                                  std::uint64_t count) {
  if (variance < 0 || worst < 0) throw Error("ledger entries must be nonnegative");
  if (variance > worst * worst) throw Error("step variance exceeds step worst_case^2");
  if (count == 0) return;
  if (!segments_.empty() && segments_.back().step_variance == variance &&
      segments_.back().step_worst_case == worst) {
    segments_.back().count += count;
  } else {
    segments_.push_back({variance, worst, count});
  }
  steps_ += count;
}

Rational VarianceLedger::total_variance() const {
  Rational t(0);
  for (const LedgerSegment& s : segments_) t += s.step_variance * Rational(s.count);
  return t;
}

Rational VarianceLedger::worst_case_total() const {
  Rational t(0);
  for (const LedgerSegment& s : segments_) t += s.step_worst_case * Rational(s.count);
  return t;
}

namespace {
const LedgerSegment& segment_at(const std::vector<LedgerSegment>& segs, std::uint64_t i) {
  std::uint64_t off = 0;
  for (const LedgerSegment& s : segs) {
    if (i < off + s.count) return s;
    off += s.count;
  }
  throw Error("ledger step index out of range");
}
}  // namespace

Rational VarianceLedger::variance_at(std::uint64_t i) const {
  return segment_at(segments_, i).step_variance;
}

Rational VarianceLedger::worst_case_at(std::uint64_t i) const {
  return segment_at(segments_, i).step_worst_case;
}

Rational doob_failure_bound(const VarianceLedger& ledger, const Rational& epsilon) {
  if (epsilon <= 0) throw Error("epsilon must be positive");
  if (!ledger.zero_mean_certified || !ledger.independence_certified)
    throw Error("not a martingale: drift or dependence present");
  // |S_i| can never reach past the summed per-step bounds.
  if (epsilon > ledger.worst_case_total()) return Rational(0);
  Rational bound = ledger.total_variance() / (epsilon * epsilon);
  return std::min(bound, Rational(1));
}

Rational success_lower_bound(const VarianceLedger& ledger, const Rational& epsilon) {
  return std::max(Rational(0), Rational(1) - doob_failure_bound(ledger, epsilon));
}

std::uint64_t max_safe_steps(const Rational& step_variance, const Rational& epsilon,
                             const Rational& p_fail) {
  if (step_variance <= 0) throw Error("step variance must be positive");
  if (epsilon <= 0) throw Error("epsilon must be positive");
  if (p_fail <= 0 || p_fail > 1) throw Error("failure budget must be in (0, 1]");
  BigInt n = rat_floor(p_fail * epsilon * epsilon / step_variance);
  if (n > std::numeric_limits<std::uint64_t>::max())
    return std::numeric_limits<std::uint64_t>::max();
  return n.convert_to<std::uint64_t>();
}

double required_epsilon(const VarianceLedger& ledger, const Rational& p_fail) {
  if (p_fail <= 0 || p_fail > 1) throw Error("failure budget must be in (0, 1]");
  if (!ledger.zero_mean_certified || !ledger.independence_certified)
    throw Error("not a martingale: drift or dependence present");
  Rational ratio = ledger.total_variance() / p_fail;
  if (ratio == 0) return std::numeric_limits<double>::denorm_min();
  double eps = std::sqrt(to_double(ratio));
  // The double sqrt may land under the exact root; nudge until the exact
  // inequality total_variance / eps^2 <= p_fail holds.
  for (int i = 0; i < 8; ++i) {
    Rational e = from_double(eps);
    if (e > 0 && ledger.total_variance() <= p_fail * e * e) return eps;
    eps = std::nextafter(eps, std::numeric_limits<double>::infinity());
  }
  throw Error("required_epsilon failed to verify");  // unreachable in practice
}

std::string to_string(CertificateMode m) {
  return m == CertificateMode::Stochastic ? "stochastic" : "worst_case_only";
}

std::string to_string(BindingBound b) {
  return b == BindingBound::Stochastic ? "stochastic" : "deterministic";
}

Certificate make_certificate(const VarianceLedger& ledger, const Rational& epsilon,
                             std::vector<std::string> assumptions) {
  if (epsilon <= 0) throw Error("epsilon must be positive");
  Certificate c;
  c.epsilon = epsilon;
  c.steps = ledger.steps();
  c.total_variance = ledger.total_variance();
  c.drift_worst_case = ledger.drift_worst_case;
  c.worst_case_total = ledger.worst_case_total();
  c.assumptions = std::move(assumptions);

  bool admissible = ledger.zero_mean_certified && ledger.independence_certified;
  if (admissible) {
    c.mode = CertificateMode::Stochastic;
    c.failure_bound = doob_failure_bound(ledger, epsilon);
    c.binding = epsilon > c.worst_case_total ? BindingBound::Deterministic
                                             : BindingBound::Stochastic;
  } else {
    // Drift or dependence: only the deterministic envelope is claimed.
    c.mode = CertificateMode::WorstCaseOnly;
    c.binding = BindingBound::Deterministic;
    c.failure_bound = epsilon > c.worst_case_total + c.drift_worst_case ? Rational(0)
                                                                        : Rational(1);
    if (!ledger.zero_mean_certified)
      c.assumptions.push_back(
          "stochastic bound disabled: a rounding term has nonzero mean (drift)");
    if (!ledger.independence_certified)
      c.assumptions.push_back(
          "stochastic bound disabled: per-step independence not established");
  }
  c.success_bound = std::max(Rational(0), Rational(1) - c.failure_bound);
  return c;
}

// ==================== empirical martingale check =====================

std::string to_string(MartingaleVerdict v) {
  switch (v) {
    case MartingaleVerdict::Pass: return "pass";
    case MartingaleVerdict::Fail: return "fail";
    default: return "inconclusive";
  }
}

namespace {

struct Moments {
  double mean = 0, sd = 0;
  std::size_t n = 0;
};

Moments moments_of(const std::vector<double>& xs) {
  Moments m;
  m.n = xs.size();
  if (m.n == 0) return m;
  double s = 0;
  for (double x : xs) s += x;
  m.mean = s / static_cast<double>(m.n);
  double ss = 0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.sd = m.n > 1 ? std::sqrt(ss / static_cast<double>(m.n - 1)) : 0.0;
  return m;
}

/// z-score of "mean is zero" for a sample; infinity for a nonzero constant.
double zero_mean_z(const Moments& m) {
  if (m.n == 0) return 0;
  if (m.sd == 0) return m.mean == 0 ? 0 : std::numeric_limits<double>::infinity();
  return std::abs(m.mean) / (m.sd / std::sqrt(static_cast<double>(m.n)));
}

}  // namespace

MartingaleReport empirical_martingale_check(const std::vector<std::vector<double>>& increments,
                                            double tolerance) {
  if (tolerance <= 0) throw Error("tolerance must be positive");
  if (increments.size() < 2) throw Error("need at least 2 trials");
  const std::size_t steps = increments.front().size();
  if (steps < 2) throw Error("need at least 2 steps per trial");
  for (const auto& row : increments)
    if (row.size() != steps) throw Error("ragged increment matrix");
  const std::size_t trials = increments.size();

  MartingaleReport report;
  auto add_check = [&](std::string name, double stat) {
    report.checks.push_back({std::move(name), stat, tolerance, stat <= tolerance});
  };

  // Degenerate data cannot support any verdict.
  double pooled_sq = 0;
  double pooled_sum = 0;
  for (const auto& row : increments)
    for (double x : row) {
      pooled_sum += x;
      pooled_sq += x * x;
    }
  const double n_all = static_cast<double>(trials * steps);
  const double pooled_mean = pooled_sum / n_all;
  const double pooled_var = pooled_sq / n_all - pooled_mean * pooled_mean;
  if (pooled_var <= 0 && pooled_mean == 0) {
    report.verdict = MartingaleVerdict::Inconclusive;
    report.detail = "increments have zero variance; no evidence either way";
    return report;
  }

  // Pooled and per-step zero-mean checks.
  {
    double sd = std::sqrt(std::max(pooled_var, 0.0));
    double z = sd == 0 ? std::numeric_limits<double>::infinity()
                       : std::abs(pooled_mean) / (sd / std::sqrt(n_all));
    add_check("pooled_zero_mean", z);
  }
  {
    double worst = 0;
    std::vector<double> col(trials);
    for (std::size_t j = 0; j < steps; ++j) {
      for (std::size_t t = 0; t < trials; ++t) col[t] = increments[t][j];
      worst = std::max(worst, zero_mean_z(moments_of(col)));
    }
    add_check("per_step_zero_mean", worst);
  }

  // Conditional mean of X_{j+1} given the sign of S_j.
  {
    double worst = 0;
    std::vector<double> s(trials, 0.0);
    std::vector<double> neg, pos;
    for (std::size_t j = 0; j + 1 < steps; ++j) {
      neg.clear();
      pos.clear();
      for (std::size_t t = 0; t < trials; ++t) {
        s[t] += increments[t][j];
        if (s[t] < 0) neg.push_back(increments[t][j + 1]);
        else if (s[t] > 0) pos.push_back(increments[t][j + 1]);
      }
      for (const auto* bucket : {&neg, &pos}) {
        if (bucket->size() >= 30) worst = std::max(worst, zero_mean_z(moments_of(*bucket)));
      }
    }
    add_check("conditional_mean_given_sign", worst);
  }

  // Pooled lag-k correlations.
  for (std::size_t lag = 1; lag <= 3 && lag < steps; ++lag) {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    double n = 0;
    for (const auto& row : increments) {
      for (std::size_t j = 0; j + lag < steps; ++j) {
        double x = row[j], y = row[j + lag];
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        n += 1;
      }
    }
    double vx = sxx / n - (sx / n) * (sx / n);
    double vy = syy / n - (sy / n) * (sy / n);
    double cov = sxy / n - (sx / n) * (sy / n);
    double corr = (vx <= 0 || vy <= 0) ? 0.0 : cov / std::sqrt(vx * vy);
    // Under independence, corr ~ N(0, 1/n).
    add_check("lag_" + std::to_string(lag) + "_correlation", std::abs(corr) * std::sqrt(n));
  }

  bool all_pass = true;
  for (const MartingaleCheck& c : report.checks) all_pass = all_pass && c.pass;
  report.verdict = all_pass ? MartingaleVerdict::Pass : MartingaleVerdict::Fail;
  for (const MartingaleCheck& c : report.checks) {
    if (!c.pass) {
      if (!report.detail.empty()) report.detail += "; ";
      report.detail += c.name + " at " + std::to_string(c.statistic) + " standard errors";
    }
  }
  if (report.detail.empty()) report.detail = "all checks within tolerance";
  return report;
}

}  // namespace roundcert
