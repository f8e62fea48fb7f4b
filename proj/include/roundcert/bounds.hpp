#pragma once

#include "roundcert/rational.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace roundcert {

/// A run of consecutive loop steps sharing one per-step error model.
struct LedgerSegment {
  Rational step_variance;
  Rational step_worst_case;
  std::uint64_t count = 0;
};

/// Per-step accounting of accumulated rounding error: the variance and hard
/// bound of each step's zero-mean first-order term, plus a worst-case budget
/// for everything the first-order model does not cover (drift). Run-length
/// encoded; steps() can be in the billions without materializing lists.
class VarianceLedger {
 public:
  VarianceLedger() = default;
  static VarianceLedger uniform_steps(const Rational& variance, const Rational& worst,
                                      std::uint64_t n);

  void append_steps(const Rational& variance, const Rational& worst, std::uint64_t count);

  std::uint64_t steps() const { return steps_; }
  Rational total_variance() const;
  Rational worst_case_total() const;
  Rational variance_at(std::uint64_t i) const;
  Rational worst_case_at(std::uint64_t i) const;
  const std::vector<LedgerSegment>& segments() const { return segments_; }

  Rational drift_worst_case{0};
  bool zero_mean_certified = true;
  bool independence_certified = true;

 private:
  std::vector<LedgerSegment> segments_;
  std::uint64_t steps_ = 0;
};

/// Pr(max_{1<=i<=n} |S_i| >= epsilon) <= min(1, total_variance / epsilon^2),
/// and exactly 0 when epsilon exceeds the deterministic worst case.
/// Requires an admissible ledger (zero-mean and independence certified).
Rational doob_failure_bound(const VarianceLedger& ledger, const Rational& epsilon);

/// max(0, 1 - doob_failure_bound).
Rational success_lower_bound(const VarianceLedger& ledger, const Rational& epsilon);

/// Largest n with n * step_variance / epsilon^2 <= p_fail, by exact floor.
/// Saturates at uint64 max.
std::uint64_t max_safe_steps(const Rational& step_variance, const Rational& epsilon,
                             const Rational& p_fail);

/// Smallest epsilon whose failure bound is at most p_fail, as a double
/// verified against exact arithmetic (never undershoots the guarantee).
/// A zero-variance ledger certifies any epsilon; returns the smallest
/// positive double by convention.
double required_epsilon(const VarianceLedger& ledger, const Rational& p_fail);

enum class CertificateMode { Stochastic, WorstCaseOnly };
enum class BindingBound { Stochastic, Deterministic };

/// The auditable claim: with probability at least success_bound, the running
/// error magnitude never reaches epsilon within steps iterations; regardless,
/// it never exceeds worst_case_total + drift_worst_case.
struct Certificate {
  Rational epsilon;
  std::uint64_t steps = 0;
  Rational failure_bound;
  Rational success_bound;
  Rational total_variance;
  Rational drift_worst_case;
  Rational worst_case_total;
  CertificateMode mode = CertificateMode::Stochastic;
  BindingBound binding = BindingBound::Stochastic;
  std::vector<std::string> assumptions;
};

std::string to_string(CertificateMode m);
std::string to_string(BindingBound b);

/// Assembles the certificate for a ledger. A ledger that is not admissible
/// (drift or dependence) downgrades to worst-case-only instead of failing.
Certificate make_certificate(const VarianceLedger& ledger, const Rational& epsilon,
                             std::vector<std::string> assumptions);

// ==================== empirical martingale check =====================

struct MartingaleCheck {
  std::string name;
  double statistic = 0;  // in standard errors
  double threshold = 0;
  bool pass = false;
};

enum class MartingaleVerdict { Pass, Fail, Inconclusive };

struct MartingaleReport {
  MartingaleVerdict verdict = MartingaleVerdict::Inconclusive;
  std::vector<MartingaleCheck> checks;
  std::string detail;
};

std::string to_string(MartingaleVerdict v);

/// Statistical screen of simulated per-step increments (rows are trials,
/// columns are steps): per-step and pooled means, conditional means given
/// the sign of the running sum, and lag correlations, all within
/// tolerance standard errors. Degenerate input is Inconclusive, never Pass.
MartingaleReport empirical_martingale_check(const std::vector<std::vector<double>>& increments,
                                            double tolerance);

}  // namespace roundcert
