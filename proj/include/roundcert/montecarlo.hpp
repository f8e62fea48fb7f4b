#pragma once

#include "roundcert/analyzer.hpp"
#include "roundcert/bounds.hpp"
#include "roundcert/formats.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace roundcert {

// ==================== simulation configuration =====================

/// Harness parameters shared by both simulation modes. Identical
/// (config, inputs) produce an identical report, independent of the
/// thread count; verdicts require trials >= 100.
struct SimConfig {
  std::uint64_t trials = 100000;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: one worker per hardware thread
  std::vector<Rational> epsilon_grid;  // at most 64 points, all positive

  /// Concrete mode: true sensor values are drawn uniformly from the
  /// 2^truth_lsb grid inside the declared range, then quantized by the
  /// sensor's own format for the emulated run. Setting this equal to a
  /// sensor's lsb makes that sensor's readings exact.
  int truth_lsb = -40;

  /// Concrete mode: options for the internal analysis that prices the
  /// default bounds (e.g. a magnitude floor the program needs).
  AnalysisOptions analysis;
};

enum class SimMode { Abstract, Concrete };
enum class GridVerdict { Sound, Violated, Inconclusive };

std::string to_string(SimMode m);
std::string to_string(GridVerdict v);

/// One epsilon of the report: the certified failure bound against the
/// observed exceedance frequency. Violated only when frequency exceeds
/// bound + 4 binomial standard errors (one-sided; false alarms < 1e-4).
struct GridRow {
  Rational epsilon;
  Rational bound;
  double frequency = 0;
  double stderr_value = 0;
  GridVerdict verdict = GridVerdict::Inconclusive;
};

struct SimReport {
  SimMode mode = SimMode::Abstract;
  std::uint64_t trials = 0;
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  std::vector<GridRow> rows;

  // moment diagnostics over the per-trial final error S_n
  double sample_final_variance = 0;
  double model_final_variance = 0;  // certified upper bound, for comparison
  double mean_final_error = 0;
  double drift_bound = 0;           // certified |E S_n| budget
  bool drift_consistent = true;     // |mean| <= drift_bound + 4 stderr
};

// ==================== simulation modes =====================

/// Random-walk check of the certified bound: each trial draws one
/// independent zero-mean increment per ledger step, uniform on
/// (-w, w] with w = min(sqrt(3 sigma^2), worst) so the model variance
/// is met without breaching the hard bound, and records whether
/// max_i |S_i| reached each grid epsilon. Bounds come from the ledger
/// unless claimed_bounds supplies one per grid point (a certificate
/// under audit). Deterministic given (config, ledger).
SimReport simulate_abstract(const VarianceLedger& ledger, const SimConfig& cfg,
                            const std::vector<Rational>* claimed_bounds = nullptr);

/// Executes the program twice per trial, in its own formats and in a
/// strictly finer reference, on fresh uniform sensor draws; the running
/// difference of the two accumulators is the empirical error walk.
/// Fixed-point programs emulate exactly in scaled integers (reference
/// default fixed(lsb = truth_lsb)); programs with float formats emulate
/// p-bit rounding of double arithmetic against a double reference
/// (exact for p <= 25). Throws "reference precision insufficient" when
/// the reference does not strictly refine every program format.
SimReport simulate_concrete(const ProgramIR& ir, const SimConfig& cfg,
                            std::optional<NumberFormat> reference = std::nullopt,
                            const std::vector<Rational>* claimed_bounds = nullptr);

/// Signed per-iteration error increments of the concrete walk, one row
/// per trial, min(max_steps, loop count) columns: input for
/// empirical_martingale_check. Same engine and draws as
/// simulate_concrete with the same seed.
std::vector<std::vector<double>> concrete_increment_matrix(const ProgramIR& ir,
                                                           std::uint64_t trials,
                                                           std::uint64_t max_steps,
                                                           std::uint64_t seed,
                                                           int truth_lsb = -40);

}  // namespace roundcert
