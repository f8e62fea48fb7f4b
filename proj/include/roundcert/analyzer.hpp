#pragma once

#include "roundcert/bounds.hpp"
#include "roundcert/formats.hpp"
#include "roundcert/interval.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace roundcert {

/// Parse or analysis failure tied to a source position. what() carries
/// "line L, col C: message".
struct ParseError : Error {
  int line = 0;
  int col = 0;
  ParseError(const std::string& msg, int line_, int col_);
};

// ==================== program IR =====================
//
// Text syntax:
//   # comment to end of line
//   sensor x in [-1, 1] : fixed(lsb=-16);
//   const  h = 0.0625 : float(p=24);         (format optional)
//   acc    a = 0 in [-1000000, 1000000] : fixed(lsb=-16);
//   loop n=1000000 { a = a + x; }
//   output a;
//   assume conditional_zero_mean;            (optional)
//
// Expressions: + - * over declared names, numeric literals,
// parentheses, unary minus, and narrow(expr, format). Formats take an
// optional ",trunc" suffix. The loop body is straight-line; temporaries
// may be introduced (each assigned once, before use) and the accumulator
// must be updated by the last statement.

enum class ExprKind { Const, SensorRef, AccRef, TempRef, Add, Sub, Mul, Narrow };

/// One expression node in the arena; children by index. site is the node's
/// pre-order position across the whole body (the key of range/event maps).
struct ExprNode {
  ExprKind kind = ExprKind::Const;
  int site = -1;
  int lhs = -1, rhs = -1;    // operands (Narrow uses lhs only)
  Rational value;            // Const payload
  std::string name;          // SensorRef / TempRef payload
  NumberFormat format;       // Narrow target format
  int line = 0, col = 0;
};

struct SensorDecl {
  std::string name;
  Interval range;
  NumberFormat format;
};

struct ConstDecl {
  std::string name;
  Rational value;
  std::optional<NumberFormat> format;  // absent: exact mathematical constant
};

struct AccDecl {
  std::string name;
  Rational init;
  Interval range;  // loop-invariant enclosure, supplied by the author
  NumberFormat format;
};

struct Statement {
  std::string target;  // accumulator or a temporary
  int root = -1;       // index into ProgramIR::nodes
  int line = 0, col = 0;
};

struct ProgramIR {
  std::vector<SensorDecl> sensors;
  std::vector<ConstDecl> constants;
  AccDecl acc;
  std::uint64_t loop_count = 0;
  std::vector<Statement> body;  // temporaries first, accumulator update last
  std::string output;
  bool assume_conditional_zero_mean = false;
  std::vector<ExprNode> nodes;
  int site_count = 0;

  const SensorDecl* find_sensor(const std::string& n) const;
  const ConstDecl* find_const(const std::string& n) const;
};

/// Parses and validates program text. Rejects, with position: syntax errors,
/// nested loops ("unsupported: nested loops"), undefined or duplicate names,
/// constants/initial values not representable in their declared formats,
/// programs without exactly one accumulator updated exactly once per
/// iteration (by the last body statement), empty bodies, and loop count 0.
ProgramIR parse_program(const std::string& text);

// ==================== range propagation =====================

/// Sound value enclosures for every expression site, valid at every
/// iteration. Enclosures are affine in the accumulator where possible, so
/// contractive bodies (x = x + h*(c - x)) verify against tight invariants
/// that plain interval evaluation would reject.
struct RangeMap {
  std::vector<Interval> by_site;
  Interval acc_range;        // the declared invariant, verified
  Interval loop_coefficient; // accumulator coefficient of the affine update
                             // form (the derivative when the body is affine)
  bool pure_accumulation = false;  // loop_coefficient identically [1,1]
};

/// Checks the declared accumulator range is loop-invariant: either one
/// body iteration maps it into itself, or the body is pure accumulation
/// (coefficient exactly 1) and init + n * hull(increment, 0) fits the
/// declaration. Throws "range divergence: declare a wider invariant range"
/// otherwise.
RangeMap propagate_ranges(const ProgramIR& ir);

// ==================== error accounting =====================

/// One error source charged once per iteration: the moments of the injected
/// error and the enclosure of the factor carrying it to that iteration's
/// output.
struct ErrorEvent {
  int site = -1;
  std::string label;        // e.g. "sensor x quantization", "mul rounding"
  ErrorTerm term;
  Interval loop_coefficient;
};

struct AnalysisOptions {
  /// Smallest live magnitude the author vouches for; authorizes float
  /// rounding models on ranges that reach zero and is recorded as an
  /// assumption when used.
  std::optional<Rational> magnitude_floor;
};

struct AnalysisResult {
  VarianceLedger ledger;
  std::vector<ErrorEvent> events;        // one loop iteration's error sources
  std::vector<std::string> assumptions;  // facts the certificate must carry
  Interval loop_coefficient;             // d(acc')/d(acc) enclosure
};

/// Builds the per-step error ledger for the whole loop. Per iteration:
/// each sensor read contributes its quantization model, each inexact
/// operation contributes its rounding model on the result range; a term's
/// variance enters as mag(coefficient)^2 * variance. Exact steps (fixed
/// add/sub on in-grid operands, narrows to a coarser grid already holding
/// the value) charge nothing. Higher-order products and the decay of
/// carried error under a non-unit loop coefficient accumulate into
/// drift_worst_case with closed-form step sums. zero_mean_certified drops
/// when any charged term has nonzero mean (truncation); independence is
/// certified when the loop coefficient is exactly 1 or the program assumes
/// conditional_zero_mean.
AnalysisResult build_ledger(const ProgramIR& ir, const RangeMap& ranges,
                            const AnalysisOptions& options = {});

/// propagate_ranges + build_ledger in one call.
AnalysisResult analyze_program(const ProgramIR& ir, const AnalysisOptions& options = {});

}  // namespace roundcert
