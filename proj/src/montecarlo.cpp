#include "roundcert/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace roundcert {

std::string to_string(SimMode m) { return m == SimMode::Abstract ? "abstract" : "concrete"; }

std::string to_string(GridVerdict v) {
  switch (v) {
    case GridVerdict::Sound:
      return "sound";
    case GridVerdict::Violated:
      return "violated";
    default:
      return "inconclusive";
  }
}

namespace {

using I128 = __int128;

// ==================== deterministic per-trial streams =====================

// splitmix64 finalizer: scrambles (seed, trial) into a generator seed so
// consecutive trials get unrelated streams
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct TrialRng {
  std::mt19937_64 gen;

  TrialRng(std::uint64_t seed, std::uint64_t trial)
      : gen(mix64(seed + (trial + 1) * 0x9E3779B97F4A7C15ULL)) {}

  double u53() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

  // unbiased uniform integer in [0, m), m >= 1
  std::uint64_t bounded(std::uint64_t m) {
    std::uint64_t reject_below = (-m) % m;  // 2^64 mod m
    for (;;) {
      std::uint64_t r = gen();
      if (r >= reject_below) return r % m;
    }
  }
};

// ==================== shared harness plumbing =====================

void validate_config(const SimConfig& cfg) {
  if (cfg.trials == 0) throw Error("trials must be positive");
  if (cfg.epsilon_grid.size() > 64) throw Error("epsilon grid too large: at most 64 points");
  for (const Rational& e : cfg.epsilon_grid)
    if (e <= 0) throw Error("epsilon grid entries must be positive");
}

unsigned resolve_threads(unsigned requested) {
  if (requested) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

struct TrialOut {
  std::uint64_t exceed_mask = 0;
  double final_error = 0;
};

std::vector<Rational> resolve_bounds(const VarianceLedger& ledger,
                                     const std::vector<Rational>& grid,
                                     const std::vector<Rational>* claimed) {
  if (claimed) {
    if (claimed->size() != grid.size()) throw Error("claimed bounds must match the epsilon grid");
    return *claimed;
  }
  std::vector<Rational> out;
  out.reserve(grid.size());
  bool admissible = ledger.zero_mean_certified && ledger.independence_certified;
  Rational hard = ledger.worst_case_total() + ledger.drift_worst_case;
  for (const Rational& eps : grid) {
    if (admissible)
      out.push_back(doob_failure_bound(ledger, eps));
    else
      out.push_back(eps > hard ? Rational(0) : Rational(1));
  }
  return out;
}

// body(first, last) handles trials [first, last); partitions are contiguous
// and results land in per-trial slots, so the outcome is thread-count-free
template <class Fn>
void run_partitioned(std::uint64_t trials, unsigned threads, const Fn& body) {
  if (threads <= 1 || trials < 2 * threads) {
    body(std::uint64_t{0}, trials);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  std::uint64_t chunk = trials / threads, rem = trials % threads, begin = 0;
  for (unsigned k = 0; k < threads; ++k) {
    std::uint64_t end = begin + chunk + (k < rem ? 1 : 0);
    pool.emplace_back([&, k, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
    begin = end;
  }
  for (std::thread& t : pool) t.join();
  for (std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

SimReport assemble_report(SimMode mode, std::uint64_t steps, const SimConfig& cfg,
                          const std::vector<Rational>& bounds, const std::vector<TrialOut>& outs,
                          double model_variance, double drift_bound) {
  SimReport rep;
  rep.mode = mode;
  rep.trials = cfg.trials;
  rep.steps = steps;
  rep.seed = cfg.seed;
  rep.model_final_variance = model_variance;
  rep.drift_bound = drift_bound;

  double n = static_cast<double>(cfg.trials);
  double sum = 0;
  for (const TrialOut& t : outs) sum += t.final_error;
  double mean = sum / n;
  double ss = 0;
  for (const TrialOut& t : outs) {
    double d = t.final_error - mean;
    ss += d * d;
  }
  rep.mean_final_error = mean;
  rep.sample_final_variance = cfg.trials > 1 ? ss / (n - 1) : 0.0;
  double mean_se = cfg.trials > 1 ? std::sqrt(rep.sample_final_variance / n) : 0.0;
  rep.drift_consistent = std::fabs(mean) <= drift_bound + 4 * mean_se;

  for (std::size_t k = 0; k < cfg.epsilon_grid.size(); ++k) {
    std::uint64_t count = 0;
    for (const TrialOut& t : outs) count += (t.exceed_mask >> k) & 1u;
    GridRow row;
    row.epsilon = cfg.epsilon_grid[k];
    row.bound = bounds[k];
    row.frequency = static_cast<double>(count) / n;
    row.stderr_value = std::sqrt(row.frequency * (1.0 - row.frequency) / n);
    if (cfg.trials < 100)
      row.verdict = GridVerdict::Inconclusive;
    else if (row.frequency > to_double(row.bound) + 4 * row.stderr_value)
      row.verdict = GridVerdict::Violated;
    else
      row.verdict = GridVerdict::Sound;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

// certified budget for |E S_n|: every charged mean carried at full strength
// for n steps, plus the higher-order bucket
double mean_budget(const AnalysisResult& ar) {
  Rational per_step(0);
  for (const ErrorEvent& e : ar.events) per_step += rat_abs(e.term.mean) * iv_mag(e.loop_coefficient);
  return to_double(per_step * Rational(BigInt(ar.ledger.steps())) + ar.ledger.drift_worst_case);
}

// ==================== compiled loop body =====================

enum class Op : std::uint8_t {
  PushSensor,
  PushConst,
  PushAcc,
  PushTemp,
  Add,
  Sub,
  Mul,
  Quantize,  // explicit narrow
  StoreTemp,
  StoreAcc
};

struct Instr {
  Op op = Op::PushAcc;
  int index = 0;       // sensor / constant-pool / temp slot
  NumberFormat fmt;    // Quantize target; Add/Sub/Mul: the working format
};

struct Compiled {
  std::vector<Instr> code;
  std::vector<Rational> const_pool;
  std::vector<int> const_sites;  // node site per pool entry (range lookups)
  int n_temps = 0;
  int max_stack = 0;
};

constexpr int kMaxStack = 64;
constexpr int kMaxTemps = 64;
constexpr int kMaxSensors = 64;

Compiled compile_body(const ProgramIR& ir) {
  Compiled c;
  std::map<std::string, int> sensor_slot, temp_slot;
  for (std::size_t i = 0; i < ir.sensors.size(); ++i)
    sensor_slot[ir.sensors[i].name] = static_cast<int>(i);
  if (ir.sensors.size() > kMaxSensors) throw Error("too many sensors to simulate");

  int depth = 0;
  auto emit = [&](Instr ins, int delta) {
    c.code.push_back(std::move(ins));
    depth += delta;
    if (depth > c.max_stack) c.max_stack = depth;
    if (c.max_stack > kMaxStack) throw Error("expression too deep to simulate");
  };

  std::function<void(int)> walk = [&](int idx) {
    const ExprNode& n = ir.nodes[static_cast<std::size_t>(idx)];
    switch (n.kind) {
      case ExprKind::Const: {
        int slot = static_cast<int>(c.const_pool.size());
        c.const_pool.push_back(n.value);
        c.const_sites.push_back(n.site);
        emit({Op::PushConst, slot, {}}, 1);
        break;
      }
      case ExprKind::SensorRef:
        emit({Op::PushSensor, sensor_slot.at(n.name), {}}, 1);
        break;
      case ExprKind::AccRef:
        emit({Op::PushAcc, 0, {}}, 1);
        break;
      case ExprKind::TempRef:
        emit({Op::PushTemp, temp_slot.at(n.name), {}}, 1);
        break;
      case ExprKind::Add:
      case ExprKind::Sub:
      case ExprKind::Mul:
        walk(n.lhs);
        walk(n.rhs);
        emit({n.kind == ExprKind::Add ? Op::Add : n.kind == ExprKind::Sub ? Op::Sub : Op::Mul, 0,
              ir.acc.format},
             -1);
        break;
      case ExprKind::Narrow:
        walk(n.lhs);
        emit({Op::Quantize, 0, n.format}, 0);
        break;
    }
  };

  for (const Statement& st : ir.body) {
    walk(st.root);
    if (st.target == ir.acc.name) {
      emit({Op::StoreAcc, 0, ir.acc.format}, -1);
    } else {
      auto it = temp_slot.find(st.target);
      int slot = it != temp_slot.end() ? it->second : (temp_slot[st.target] = c.n_temps++);
      if (c.n_temps > kMaxTemps) throw Error("too many temporaries to simulate");
      emit({Op::StoreTemp, slot, ir.acc.format}, -1);
    }
  }
  return c;
}

// true when any declared or narrowed format is floating point
bool uses_float(const ProgramIR& ir) {
  if (ir.acc.format.is_float()) return true;
  for (const SensorDecl& s : ir.sensors)
    if (s.format.is_float()) return true;
  for (const ConstDecl& d : ir.constants)
    if (d.format && d.format->is_float()) return true;
  for (const ExprNode& n : ir.nodes)
    if (n.kind == ExprKind::Narrow && n.format.is_float()) return true;
  return false;
}

// ==================== sensor sampling =====================

// one uniform draw per sensor per iteration, from the 2^T grid points
// inside (lo, hi]; lo == hi degenerates to the point itself
struct SensorSampler {
  long long lo_scaled = 0;
  std::uint64_t span = 0;

  SensorSampler() = default;
  SensorSampler(const Interval& range, int T) {
    Rational sl = range.lo * pow2(-T), sh = range.hi * pow2(-T);
    if (denominator(sl) != 1 || denominator(sh) != 1)
      throw Error("sensor range endpoints not representable on the truth grid");
    BigInt lo_big = numerator(sl), hi_big = numerator(sh);
    BigInt limit = BigInt(1) << 62;
    if (lo_big < -limit || hi_big > limit)
      throw Error("truth grid too fine to sample the sensor range: raise truth_lsb");
    lo_scaled = lo_big.convert_to<long long>();
    span = (hi_big - lo_big).convert_to<std::uint64_t>();
  }

  long long draw(TrialRng& rng) const {
    if (span == 0) return lo_scaled;
    return lo_scaled + 1 + static_cast<long long>(rng.bounded(span));
  }
};

// ==================== exact fixed-point engine =====================

I128 checked_add(I128 a, I128 b) {
  I128 r;
  if (__builtin_add_overflow(a, b, &r))
    throw Error("simulation overflow: program ranges too wide for the truth grid");
  return r;
}

I128 checked_sub(I128 a, I128 b) {
  I128 r;
  if (__builtin_sub_overflow(a, b, &r))
    throw Error("simulation overflow: program ranges too wide for the truth grid");
  return r;
}

I128 checked_mul(I128 a, I128 b) {
  I128 r;
  if (__builtin_mul_overflow(a, b, &r))
    throw Error("simulation overflow: program ranges too wide for the truth grid");
  return r;
}

// divide v by 2^k (k >= 0) under the format's rounding: to nearest with
// ties to even, or chopped toward zero
I128 shift_round(I128 v, int k, RoundingMode mode) {
  if (k <= 0) return v;
  if (mode == RoundingMode::Truncate) {
    bool neg = v < 0;
    I128 m = neg ? -v : v;
    m >>= k;
    return neg ? -m : m;
  }
  I128 q = v >> k;  // floor
  I128 rem = v - (q << k);
  I128 half = I128(1) << (k - 1);
  if (rem > half || (rem == half && (q & 1))) ++q;
  return q;
}

// round value (at scale 2^from_lsb) to the 2^grid_lsb grid, result at scale 2^to_lsb
I128 requantize(I128 v, int from_lsb, int grid_lsb, int to_lsb, RoundingMode mode) {
  I128 q = shift_round(v, grid_lsb - from_lsb, mode);
  int back = grid_lsb - to_lsb;
  return back > 0 ? q << back : q;
}

I128 big_to_i128(const BigInt& b, const char* err) {
  BigInt limit = BigInt(1) << 126;
  if (b > limit || b < -limit) throw Error(err);
  BigInt m = b < 0 ? BigInt(-b) : b;
  std::uint64_t lo = (m & BigInt(0xFFFFFFFFFFFFFFFFULL)).convert_to<std::uint64_t>();
  std::uint64_t hi = (m >> 64).convert_to<std::uint64_t>();
  I128 r = (static_cast<I128>(hi) << 64) | static_cast<I128>(lo);
  return b < 0 ? -r : r;
}

constexpr const char* kOverflowMsg = "simulation overflow: program ranges too wide for the truth grid";

/// Bit-exact emulation of an all-fixed program against an exact wide-grid
/// reference. Every value is an integer multiple of 2^R; emulated rounding
/// clears bits per format and reference multiplies round to the R grid
/// (adds are exact on a shared grid in both runs).
struct FixedEngine {
  int R, T;
  std::uint64_t seed = 0;
  std::vector<SensorSampler> samplers;
  std::vector<int> sensor_q_shift;           // sensor lsb - R
  std::vector<RoundingMode> sensor_q_mode;
  int truth_shift = 0;                       // T - R
  std::vector<I128> const_scaled;
  I128 acc_init = 0;
  Compiled body;
  std::vector<I128> eps_threshold;           // ceil(eps / 2^R), saturated

  FixedEngine(const ProgramIR& ir, const RangeMap& rm, Compiled compiled,
              const NumberFormat& reference, int truth_lsb, std::uint64_t seed_,
              const std::vector<Rational>& eps_grid)
      : R(reference.lsb_exponent), T(truth_lsb), seed(seed_), body(std::move(compiled)) {
    if (R > T) throw Error("reference precision insufficient");
    auto check_finer = [&](const NumberFormat& f) {
      if (!f.is_fixed() || f.lsb_exponent <= R) throw Error("reference precision insufficient");
    };
    check_finer(ir.acc.format);
    for (const SensorDecl& s : ir.sensors) check_finer(s.format);
    for (const ConstDecl& d : ir.constants)
      if (d.format) check_finer(*d.format);
    for (const ExprNode& n : ir.nodes)
      if (n.kind == ExprKind::Narrow) check_finer(n.format);

    truth_shift = T - R;
    for (const SensorDecl& s : ir.sensors) {
      samplers.emplace_back(s.range, T);
      sensor_q_shift.push_back(s.format.lsb_exponent - R);
      sensor_q_mode.push_back(s.format.rounding);
    }
    for (const Rational& v : body.const_pool) {
      if (v != 0 && (!is_dyadic(v) || dyadic_lsb(v) < R))
        throw Error("reference precision insufficient");
      const_scaled.push_back(big_to_i128(numerator(v * pow2(-R)), kOverflowMsg));
    }
    acc_init = big_to_i128(numerator(ir.acc.init * pow2(-R)), kOverflowMsg);

    // every site enclosure must fit the integer engine with product headroom
    Rational cap = pow2(120 + R);
    for (const Interval& rng : rm.by_site)
      if (iv_mag(rng) > cap) throw Error(kOverflowMsg);
    if (iv_mag(ir.acc.range) > cap) throw Error(kOverflowMsg);

    for (const Rational& eps : eps_grid) {
      Rational scaled = eps * pow2(-R);
      BigInt t = (numerator(scaled) + denominator(scaled) - 1) / denominator(scaled);  // ceiling
      BigInt limit = BigInt(1) << 126;
      eps_threshold.push_back(t > limit ? (I128(1) << 126) : big_to_i128(t, kOverflowMsg));
    }
  }

  I128 exec(bool emulated, I128 acc, I128* temps, const I128* sens) const {
    I128 stack[kMaxStack];
    int sp = 0;
    for (const Instr& ins : body.code) {
      switch (ins.op) {
        case Op::PushSensor:
          stack[sp++] = sens[ins.index];
          break;
        case Op::PushConst:
          stack[sp++] = const_scaled[static_cast<std::size_t>(ins.index)];
          break;
        case Op::PushAcc:
          stack[sp++] = acc;
          break;
        case Op::PushTemp:
          stack[sp++] = temps[ins.index];
          break;
        case Op::Add: {
          I128 b = stack[--sp];
          stack[sp - 1] = checked_add(stack[sp - 1], b);
          break;
        }
        case Op::Sub: {
          I128 b = stack[--sp];
          stack[sp - 1] = checked_sub(stack[sp - 1], b);
          break;
        }
        case Op::Mul: {
          I128 b = stack[--sp];
          I128 p = checked_mul(stack[sp - 1], b);  // at scale 2R
          stack[sp - 1] = emulated
                              ? requantize(p, 2 * R, ins.fmt.lsb_exponent, R, ins.fmt.rounding)
                              : requantize(p, 2 * R, R, R, RoundingMode::Nearest);
          break;
        }
        case Op::Quantize:
          if (emulated)
            stack[sp - 1] =
                requantize(stack[sp - 1], R, ins.fmt.lsb_exponent, R, ins.fmt.rounding);
          break;
        case Op::StoreTemp: {
          I128 v = stack[--sp];
          temps[ins.index] =
              emulated ? requantize(v, R, ins.fmt.lsb_exponent, R, ins.fmt.rounding) : v;
          break;
        }
        case Op::StoreAcc: {
          I128 v = stack[--sp];
          acc = emulated ? requantize(v, R, ins.fmt.lsb_exponent, R, ins.fmt.rounding) : v;
          break;
        }
      }
    }
    return acc;
  }

  void run_trial(std::uint64_t trial, std::uint64_t steps, TrialOut* out, double* inc_row) const {
    TrialRng rng(seed, trial);
    I128 acc_e = acc_init, acc_r = acc_init;
    I128 temps_e[kMaxTemps], temps_r[kMaxTemps];
    I128 sens_true[kMaxSensors], sens_emul[kMaxSensors];
    I128 prev_diff = 0, max_abs = 0;
    for (std::uint64_t it = 0; it < steps; ++it) {
      for (std::size_t s = 0; s < samplers.size(); ++s) {
        I128 v = static_cast<I128>(samplers[s].draw(rng)) << truth_shift;
        sens_true[s] = v;
        sens_emul[s] = requantize(v, R, sensor_q_shift[s] + R, R, sensor_q_mode[s]);
      }
      acc_e = exec(true, acc_e, temps_e, sens_emul);
      acc_r = exec(false, acc_r, temps_r, sens_true);
      I128 diff = acc_e - acc_r;
      if (inc_row) inc_row[it] = std::ldexp(static_cast<double>(diff - prev_diff), R);
      prev_diff = diff;
      I128 a = diff < 0 ? -diff : diff;
      if (a > max_abs) max_abs = a;
    }
    if (out) {
      std::uint64_t mask = 0;
      for (std::size_t k = 0; k < eps_threshold.size(); ++k)
        if (max_abs >= eps_threshold[k]) mask |= std::uint64_t{1} << k;
      out->exceed_mask = mask;
      out->final_error = std::ldexp(static_cast<double>(prev_diff), R);
    }
  }
};

// ==================== float / mixed-format engine =====================

// round a double to p significand bits; exact emulation of unbounded-exponent
// binary-p arithmetic for p <= 25 (the double's own rounding cannot perturb it)
double p_round(double v, int p, RoundingMode mode) {
  if (v == 0) return 0;
  int e;
  std::frexp(v, &e);                        // |v| in [2^(e-1), 2^e)
  double s = std::ldexp(v, p - e);          // |s| in [2^(p-1), 2^p)
  double r = mode == RoundingMode::Truncate ? std::trunc(s) : std::nearbyint(s);
  return std::ldexp(r, e - p);
}

double fixed_q(double v, int lsb, RoundingMode mode) {
  double s = std::ldexp(v, -lsb);
  double r = mode == RoundingMode::Truncate ? std::trunc(s) : std::nearbyint(s);
  return std::ldexp(r, lsb);
}

double apply_format(double v, const NumberFormat& f, RoundingMode mode) {
  return f.is_fixed() ? fixed_q(v, f.lsb_exponent, mode) : p_round(v, f.precision, mode);
}

/// Double-backed emulation for programs with float formats (fixed formats
/// mixed in are quantized on their grids). The reference executes the same
/// body in p_ref-bit arithmetic; p_ref = 53 is plain double.
struct FloatEngine {
  int T;
  int p_ref = 53;
  std::uint64_t seed = 0;
  std::vector<SensorSampler> samplers;
  std::vector<NumberFormat> sensor_fmt;
  std::vector<double> const_pool;
  double acc_init = 0;
  Compiled body;
  std::vector<double> eps_d;

  FloatEngine(const ProgramIR& ir, const RangeMap& rm, Compiled compiled,
              const NumberFormat& reference, int truth_lsb, std::uint64_t seed_,
              const std::vector<Rational>& eps_grid)
      : T(truth_lsb), seed(seed_), body(std::move(compiled)) {
    if (!reference.is_float() || reference.precision > 53)
      throw Error("reference precision insufficient");
    p_ref = reference.precision;

    // magnitude bound over everything the run can touch, with error headroom
    Rational mag(1);
    for (const Interval& rng : rm.by_site) mag = std::max(mag, iv_mag(rng));
    mag = std::max(mag, iv_mag(ir.acc.range));
    for (const SensorDecl& s : ir.sensors) mag = std::max(mag, iv_mag(s.range));
    long bits = floor_log2(mag) + 2;

    auto check = [&](const NumberFormat& f) {
      if (f.is_float()) {
        if (f.precision >= p_ref) throw Error("reference precision insufficient");
      } else {
        if (bits - f.lsb_exponent > p_ref - 1) throw Error("reference precision insufficient");
      }
    };
    check(ir.acc.format);
    for (const SensorDecl& s : ir.sensors) check(s.format);
    for (const ConstDecl& d : ir.constants)
      if (d.format) check(*d.format);
    for (const ExprNode& n : ir.nodes)
      if (n.kind == ExprKind::Narrow) check(n.format);

    for (const SensorDecl& s : ir.sensors) {
      if (floor_log2(std::max(iv_mag(s.range), Rational(1))) + 1 - T > 52)
        throw Error("truth grid too fine to sample the sensor range: raise truth_lsb");
      samplers.emplace_back(s.range, T);
      sensor_fmt.push_back(s.format);
    }
    for (const Rational& v : body.const_pool) {
      double d = to_double(v);
      if (from_double(d) != v) throw Error("reference precision insufficient");
      const_pool.push_back(d);
    }
    acc_init = to_double(ir.acc.init);
    if (from_double(acc_init) != ir.acc.init) throw Error("reference precision insufficient");
    for (const Rational& eps : eps_grid) eps_d.push_back(to_double(eps));
  }

  double ref_round(double v) const { return p_ref == 53 ? v : p_round(v, p_ref, RoundingMode::Nearest); }

  double exec(bool emulated, double acc, double* temps, const double* sens) const {
    double stack[kMaxStack];
    int sp = 0;
    for (const Instr& ins : body.code) {
      switch (ins.op) {
        case Op::PushSensor:
          stack[sp++] = sens[ins.index];
          break;
        case Op::PushConst:
          stack[sp++] = const_pool[static_cast<std::size_t>(ins.index)];
          break;
        case Op::PushAcc:
          stack[sp++] = acc;
          break;
        case Op::PushTemp:
          stack[sp++] = temps[ins.index];
          break;
        case Op::Add:
        case Op::Sub: {
          double b = stack[--sp];
          double r = ins.op == Op::Add ? stack[sp - 1] + b : stack[sp - 1] - b;
          if (emulated)
            stack[sp - 1] = ins.fmt.is_float() ? p_round(r, ins.fmt.precision, ins.fmt.rounding) : r;
          else
            stack[sp - 1] = ref_round(r);
          break;
        }
        case Op::Mul: {
          double b = stack[--sp];
          double r = stack[sp - 1] * b;
          stack[sp - 1] = emulated ? apply_format(r, ins.fmt, ins.fmt.rounding) : ref_round(r);
          break;
        }
        case Op::Quantize:
          if (emulated) stack[sp - 1] = apply_format(stack[sp - 1], ins.fmt, ins.fmt.rounding);
          break;
        case Op::StoreTemp: {
          double v = stack[--sp];
          temps[ins.index] = emulated ? apply_format(v, ins.fmt, ins.fmt.rounding) : v;
          break;
        }
        case Op::StoreAcc: {
          double v = stack[--sp];
          acc = emulated ? apply_format(v, ins.fmt, ins.fmt.rounding) : v;
          break;
        }
      }
    }
    return acc;
  }

  void run_trial(std::uint64_t trial, std::uint64_t steps, TrialOut* out, double* inc_row) const {
    TrialRng rng(seed, trial);
    double acc_e = acc_init, acc_r = acc_init;
    double temps_e[kMaxTemps], temps_r[kMaxTemps];
    double sens_true[kMaxSensors], sens_emul[kMaxSensors];
    double prev_diff = 0, max_abs = 0;
    for (std::uint64_t it = 0; it < steps; ++it) {
      for (std::size_t s = 0; s < samplers.size(); ++s) {
        double v = std::ldexp(static_cast<double>(samplers[s].draw(rng)), T);
        sens_true[s] = ref_round(v);
        sens_emul[s] = apply_format(v, sensor_fmt[s], sensor_fmt[s].rounding);
      }
      acc_e = exec(true, acc_e, temps_e, sens_emul);
      acc_r = exec(false, acc_r, temps_r, sens_true);
      double diff = acc_e - acc_r;
      if (inc_row) inc_row[it] = diff - prev_diff;
      prev_diff = diff;
      double a = std::fabs(diff);
      if (a > max_abs) max_abs = a;
    }
    if (out) {
      std::uint64_t mask = 0;
      for (std::size_t k = 0; k < eps_d.size(); ++k)
        if (max_abs >= eps_d[k]) mask |= std::uint64_t{1} << k;
      out->exceed_mask = mask;
      out->final_error = prev_diff;
    }
  }
};

}  // namespace

// ==================== public entry points =====================

SimReport simulate_abstract(const VarianceLedger& ledger, const SimConfig& cfg,
                            const std::vector<Rational>* claimed_bounds) {
  validate_config(cfg);
  std::vector<Rational> bounds = resolve_bounds(ledger, cfg.epsilon_grid, claimed_bounds);

  struct Segment {
    std::uint64_t count;
    double width;
  };
  std::vector<Segment> segs;
  for (const LedgerSegment& s : ledger.segments())
    segs.push_back({s.count, std::min(std::sqrt(3.0 * to_double(s.step_variance)),
                                      to_double(s.step_worst_case))});
  std::vector<double> eps_d;
  for (const Rational& e : cfg.epsilon_grid) eps_d.push_back(to_double(e));

  std::vector<TrialOut> outs(cfg.trials);
  run_partitioned(cfg.trials, resolve_threads(cfg.threads),
                  [&](std::uint64_t first, std::uint64_t last) {
                    for (std::uint64_t t = first; t < last; ++t) {
                      TrialRng rng(cfg.seed, t);
                      double s = 0, mx = 0;
                      for (const Segment& seg : segs) {
                        for (std::uint64_t i = 0; i < seg.count; ++i) {
                          s += seg.width * (1.0 - 2.0 * rng.u53());  // uniform on (-w, w]
                          double a = std::fabs(s);
                          if (a > mx) mx = a;
                        }
                      }
                      std::uint64_t mask = 0;
                      for (std::size_t k = 0; k < eps_d.size(); ++k)
                        if (mx >= eps_d[k]) mask |= std::uint64_t{1} << k;
                      outs[t] = {mask, s};
                    }
                  });
  return assemble_report(SimMode::Abstract, ledger.steps(), cfg, bounds, outs,
                         to_double(ledger.total_variance()),
                         to_double(ledger.drift_worst_case));
}

SimReport simulate_concrete(const ProgramIR& ir, const SimConfig& cfg,
                            std::optional<NumberFormat> reference,
                            const std::vector<Rational>* claimed_bounds) {
  validate_config(cfg);
  AnalysisResult ar = analyze_program(ir, cfg.analysis);
  RangeMap rm = propagate_ranges(ir);
  std::vector<Rational> bounds = resolve_bounds(ar.ledger, cfg.epsilon_grid, claimed_bounds);
  Compiled compiled = compile_body(ir);

  std::vector<TrialOut> outs(cfg.trials);
  unsigned threads = resolve_threads(cfg.threads);
  if (!uses_float(ir) && (!reference || reference->is_fixed())) {
    FixedEngine eng(ir, rm, std::move(compiled),
                    reference.value_or(NumberFormat::fixed(cfg.truth_lsb)), cfg.truth_lsb,
                    cfg.seed, cfg.epsilon_grid);
    run_partitioned(cfg.trials, threads, [&](std::uint64_t first, std::uint64_t last) {
      for (std::uint64_t t = first; t < last; ++t)
        eng.run_trial(t, ir.loop_count, &outs[t], nullptr);
    });
  } else {
    FloatEngine eng(ir, rm, std::move(compiled), reference.value_or(NumberFormat::flt(53)),
                    cfg.truth_lsb, cfg.seed, cfg.epsilon_grid);
    run_partitioned(cfg.trials, threads, [&](std::uint64_t first, std::uint64_t last) {
      for (std::uint64_t t = first; t < last; ++t)
        eng.run_trial(t, ir.loop_count, &outs[t], nullptr);
    });
  }
  return assemble_report(SimMode::Concrete, ir.loop_count, cfg, bounds, outs,
                         to_double(ar.ledger.total_variance()), mean_budget(ar));
}

std::vector<std::vector<double>> concrete_increment_matrix(const ProgramIR& ir,
                                                           std::uint64_t trials,
                                                           std::uint64_t max_steps,
                                                           std::uint64_t seed, int truth_lsb) {
  if (trials == 0) throw Error("trials must be positive");
  if (max_steps == 0) throw Error("steps must be positive");
  RangeMap rm = propagate_ranges(ir);
  Compiled compiled = compile_body(ir);
  std::uint64_t steps = std::min<std::uint64_t>(max_steps, ir.loop_count);

  std::vector<std::vector<double>> rows(trials, std::vector<double>(steps, 0.0));
  if (!uses_float(ir)) {
    FixedEngine eng(ir, rm, std::move(compiled), NumberFormat::fixed(truth_lsb), truth_lsb, seed,
                    {});
    for (std::uint64_t t = 0; t < trials; ++t) eng.run_trial(t, steps, nullptr, rows[t].data());
  } else {
    FloatEngine eng(ir, rm, std::move(compiled), NumberFormat::flt(53), truth_lsb, seed, {});
    for (std::uint64_t t = 0; t < trials; ++t) eng.run_trial(t, steps, nullptr, rows[t].data());
  }
  return rows;
}

}  // namespace roundcert
