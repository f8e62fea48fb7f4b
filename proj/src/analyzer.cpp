#include "roundcert/analyzer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <utility>

namespace roundcert {

ParseError::ParseError(const std::string& msg, int line_, int col_)
    : Error("line " + std::to_string(line_) + ", col " + std::to_string(col_) + ": " + msg),
      line(line_),
      col(col_) {}

const SensorDecl* ProgramIR::find_sensor(const std::string& n) const {
  for (const SensorDecl& s : sensors)
    if (s.name == n) return &s;
  return nullptr;
}

const ConstDecl* ProgramIR::find_const(const std::string& n) const {
  for (const ConstDecl& c : constants)
    if (c.name == n) return &c;
  return nullptr;
}

// ==================== lexer =====================

namespace {

enum class Tok { Ident, Number, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : src_(&text) { advance(); }

  const Token& peek() const { return cur_; }

  Token take() {
    Token t = cur_;
    advance();
    return t;
  }

 private:
  void advance() {
    const std::string& s = *src_;
    while (pos_ < s.size()) {
      char c = s[pos_];
      if (c == '#') {
        while (pos_ < s.size() && s[pos_] != '\n') ++pos_;
      } else if (c == '\n') {
        ++pos_;
        ++line_;
        col_ = 1;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
        ++col_;
      } else {
        break;
      }
    }
    cur_ = Token{Tok::End, "", line_, col_};
    if (pos_ >= s.size()) return;
    char c = s[pos_];
    cur_.line = line_;
    cur_.col = col_;
    if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
      cur_.kind = Tok::Ident;
      while (pos_ < s.size() &&
             (isalnum(static_cast<unsigned char>(s[pos_])) || s[pos_] == '_')) {
        cur_.text += s[pos_++];
        ++col_;
      }
    } else if (isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && pos_ + 1 < s.size() &&
                isdigit(static_cast<unsigned char>(s[pos_ + 1])))) {
      cur_.kind = Tok::Number;
      bool seen_exp = false;
      while (pos_ < s.size()) {
        char d = s[pos_];
        bool ok = isdigit(static_cast<unsigned char>(d)) || d == '.';
        if ((d == 'e' || d == 'E') && !seen_exp) {
          ok = true;
          seen_exp = true;
          if (pos_ + 1 < s.size() && (s[pos_ + 1] == '+' || s[pos_ + 1] == '-')) {
            cur_.text += d;
            ++pos_;
            ++col_;
            d = s[pos_];
            ok = true;
          }
        }
        if (!ok) break;
        cur_.text += d;
        ++pos_;
        ++col_;
      }
    } else {
      cur_.kind = Tok::Punct;
      cur_.text = std::string(1, c);
      ++pos_;
      ++col_;
    }
  }

  const std::string* src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token cur_;
};

[[noreturn]] void fail(const Token& t, const std::string& msg) {
  throw ParseError(msg, t.line, t.col);
}

// ==================== parser =====================

bool representable(const Rational& v, const NumberFormat& f) {
  if (v == 0) return true;
  if (!is_dyadic(v)) return false;
  if (f.is_fixed()) return dyadic_lsb(v) >= f.lsb_exponent;
  long bits = floor_log2(rat_abs(v)) - dyadic_lsb(v) + 1;
  return bits <= f.precision;
}

class Parser {
 public:
  explicit Parser(const std::string& text) : lex_(text) {}

  ProgramIR run() {
    bool saw_loop = false, saw_output = false;
    Token output_tok;
    while (lex_.peek().kind != Tok::End) {
      Token t = lex_.peek();
      if (t.kind != Tok::Ident) fail(t, "expected a declaration, loop, or output");
      if (t.text == "sensor") {
        sensor_decl();
      } else if (t.text == "const") {
        const_decl();
      } else if (t.text == "acc") {
        acc_decl();
      } else if (t.text == "loop") {
        if (saw_loop) fail(t, "program must contain exactly one loop");
        saw_loop = true;
        loop();
      } else if (t.text == "output") {
        lex_.take();
        if (saw_output) fail(t, "duplicate output declaration");
        saw_output = true;
        output_tok = expect_ident("output variable name");
        ir_.output = output_tok.text;
        expect(";");
      } else if (t.text == "assume") {
        lex_.take();
        Token a = expect_ident("assumption name");
        if (a.text != "conditional_zero_mean") fail(a, "unknown assumption '" + a.text + "'");
        ir_.assume_conditional_zero_mean = true;
        expect(";");
      } else {
        fail(t, "unexpected '" + t.text + "'");
      }
    }
    Token eof = lex_.peek();
    if (!saw_acc_) fail(eof, "program must declare exactly one accumulator");
    if (!saw_loop) fail(eof, "program must contain a loop");
    if (!saw_output) fail(eof, "program must declare an output");
    if (ir_.output != ir_.acc.name) fail(output_tok, "output must name the accumulator");
    if (!acc_assigned_) fail(eof, "accumulator is never updated in the loop");

    // pre-order site ids across the body
    int next = 0;
    for (const Statement& s : ir_.body) number_sites(s.root, next);
    ir_.site_count = next;
    return std::move(ir_);
  }

 private:
  void number_sites(int idx, int& next) {
    ExprNode& n = ir_.nodes[static_cast<std::size_t>(idx)];
    n.site = next++;
    if (n.lhs >= 0) number_sites(n.lhs, next);
    if (n.rhs >= 0) number_sites(n.rhs, next);
  }

  Token expect_ident(const std::string& what) {
    Token t = lex_.take();
    if (t.kind != Tok::Ident) fail(t, "expected " + what);
    return t;
  }

  void expect(const std::string& p) {
    Token t = lex_.take();
    if (t.kind != Tok::Punct || t.text != p) fail(t, "expected '" + p + "'");
  }

  bool accept(const std::string& p) {
    if (lex_.peek().kind == Tok::Punct && lex_.peek().text == p) {
      lex_.take();
      return true;
    }
    return false;
  }

  Rational signed_number() {
    bool neg = accept("-");
    Token t = lex_.take();
    if (t.kind != Tok::Number) fail(t, "expected a number");
    Rational v;
    try {
      v = parse_number(t.text);
    } catch (const Error& e) {
      fail(t, e.what());
    }
    return neg ? Rational(-v) : v;
  }

  long signed_integer() {
    Token at = lex_.peek();
    Rational v = signed_number();
    if (denominator(v) != 1) fail(at, "expected an integer");
    return numerator(v).convert_to<long>();
  }

  Interval interval() {
    expect("[");
    Rational lo = signed_number();
    expect(",");
    Rational hi = signed_number();
    Token close = lex_.peek();
    expect("]");
    if (lo > hi) fail(close, "interval endpoints out of order");
    return Interval(lo, hi);
  }

  NumberFormat format() {
    Token t = expect_ident("a format (fixed or float)");
    NumberFormat f;
    if (t.text == "fixed") {
      expect("(");
      Token k = expect_ident("'lsb'");
      if (k.text != "lsb") fail(k, "expected 'lsb'");
      expect("=");
      long lsb = signed_integer();
      expect(")");
      f = NumberFormat::fixed(static_cast<int>(lsb));
    } else if (t.text == "float") {
      expect("(");
      Token k = expect_ident("'p'");
      if (k.text != "p") fail(k, "expected 'p'");
      expect("=");
      long p = signed_integer();
      expect(")");
      if (p < 2) fail(t, "float precision must be at least 2");
      f = NumberFormat::flt(static_cast<int>(p));
    } else {
      fail(t, "expected a format (fixed or float)");
    }
    if (lex_.peek().kind == Tok::Punct && lex_.peek().text == ",") {
      // the suffix belongs to the format only when followed by 'trunc'
      Lexer save = lex_;
      lex_.take();
      if (lex_.peek().kind == Tok::Ident && lex_.peek().text == "trunc") {
        lex_.take();
        f.rounding = RoundingMode::Truncate;
      } else {
        lex_ = save;
      }
    }
    return f;
  }

  void declare_name(const Token& t) {
    if (!names_.insert(t.text).second) fail(t, "duplicate declaration of '" + t.text + "'");
  }

  void sensor_decl() {
    lex_.take();
    Token name = expect_ident("sensor name");
    declare_name(name);
    Token kw = expect_ident("'in'");
    if (kw.text != "in") fail(kw, "expected 'in'");
    Interval range = interval();
    expect(":");
    NumberFormat f = format();
    expect(";");
    ir_.sensors.push_back({name.text, range, f});
  }

  void const_decl() {
    lex_.take();
    Token name = expect_ident("constant name");
    declare_name(name);
    expect("=");
    Rational v = signed_number();
    std::optional<NumberFormat> f;
    if (accept(":")) {
      Token at = lex_.peek();
      f = format();
      if (!representable(v, *f)) fail(at, "constant not representable in its format");
    }
    expect(";");
    ir_.constants.push_back({name.text, v, f});
  }

  void acc_decl() {
    Token kw = lex_.take();
    if (saw_acc_) fail(kw, "program must declare exactly one accumulator");
    saw_acc_ = true;
    Token name = expect_ident("accumulator name");
    declare_name(name);
    expect("=");
    Token at = lex_.peek();
    Rational init = signed_number();
    Token inkw = expect_ident("'in'");
    if (inkw.text != "in") fail(inkw, "expected 'in'");
    Interval range = interval();
    expect(":");
    Token fat = lex_.peek();
    NumberFormat f = format();
    expect(";");
    if (!representable(init, f)) fail(at, "initial value not representable in its format");
    if (!range.contains(init)) fail(fat, "initial value outside declared range");
    ir_.acc = AccDecl{name.text, init, range, f};
  }

  void loop() {
    Token kw = lex_.take();
    Token n = expect_ident("'n'");
    if (n.text != "n") fail(n, "expected 'n'");
    expect("=");
    Token at = lex_.peek();
    long count = signed_integer();
    if (count < 1) fail(at, "loop count must be at least 1");
    ir_.loop_count = static_cast<std::uint64_t>(count);
    expect("{");
    if (!saw_acc_) fail(kw, "accumulator must be declared before the loop");
    while (!(lex_.peek().kind == Tok::Punct && lex_.peek().text == "}")) {
      if (lex_.peek().kind == Tok::End) fail(lex_.peek(), "unterminated loop body");
      statement();
    }
    Token close = lex_.take();
    if (ir_.body.empty()) fail(close, "empty loop body");
    if (!acc_assigned_) return;  // diagnosed at end of parse
    if (ir_.body.back().target != ir_.acc.name)
      fail(ir_.body.empty() ? close : Token{Tok::Ident, "", ir_.body.back().line,
                                            ir_.body.back().col},
           "accumulator must be updated by the last statement in the loop");
  }

  void statement() {
    Token name = expect_ident("an assignment target");
    if (name.text == "loop") fail(name, "unsupported: nested loops");
    if (std::any_of(ir_.sensors.begin(), ir_.sensors.end(),
                    [&](const SensorDecl& s) { return s.name == name.text; }))
      fail(name, "cannot assign to sensor '" + name.text + "'");
    if (std::any_of(ir_.constants.begin(), ir_.constants.end(),
                    [&](const ConstDecl& c) { return c.name == name.text; }))
      fail(name, "cannot assign to constant '" + name.text + "'");
    bool is_acc = name.text == ir_.acc.name;
    if (is_acc) {
      if (acc_assigned_)
        fail(name, "accumulator must be assigned exactly once per iteration");
      acc_assigned_ = true;
    } else {
      if (temps_.count(name.text))
        fail(name, "temporary '" + name.text + "' assigned more than once");
    }
    expect("=");
    int root = expr();
    expect(";");
    if (!is_acc) temps_.insert(name.text);
    ir_.body.push_back({name.text, root, name.line, name.col});
  }

  int make(ExprNode n) {
    ir_.nodes.push_back(std::move(n));
    return static_cast<int>(ir_.nodes.size()) - 1;
  }

  int expr() {
    int left = term();
    while (lex_.peek().kind == Tok::Punct &&
           (lex_.peek().text == "+" || lex_.peek().text == "-")) {
      Token op = lex_.take();
      int right = term();
      ExprNode n;
      n.kind = op.text == "+" ? ExprKind::Add : ExprKind::Sub;
      n.lhs = left;
      n.rhs = right;
      n.line = op.line;
      n.col = op.col;
      left = make(std::move(n));
    }
    return left;
  }

  int term() {
    int left = factor();
    while (lex_.peek().kind == Tok::Punct && lex_.peek().text == "*") {
      Token op = lex_.take();
      int right = factor();
      ExprNode n;
      n.kind = ExprKind::Mul;
      n.lhs = left;
      n.rhs = right;
      n.line = op.line;
      n.col = op.col;
      left = make(std::move(n));
    }
    return left;
  }

  int factor() {
    Token t = lex_.peek();
    if (t.kind == Tok::Punct && t.text == "-") {
      lex_.take();
      int operand = factor();
      ExprNode zero;
      zero.kind = ExprKind::Const;
      zero.value = 0;
      zero.line = t.line;
      zero.col = t.col;
      int z = make(std::move(zero));
      ExprNode n;
      n.kind = ExprKind::Sub;
      n.lhs = z;
      n.rhs = operand;
      n.line = t.line;
      n.col = t.col;
      return make(std::move(n));
    }
    if (t.kind == Tok::Punct && t.text == "(") {
      lex_.take();
      int inner = expr();
      expect(")");
      return inner;
    }
    if (t.kind == Tok::Number) {
      lex_.take();
      ExprNode n;
      n.kind = ExprKind::Const;
      try {
        n.value = parse_number(t.text);
      } catch (const Error& e) {
        fail(t, e.what());
      }
      n.line = t.line;
      n.col = t.col;
      return make(std::move(n));
    }
    if (t.kind != Tok::Ident) fail(t, "expected an expression");
    lex_.take();
    if (t.text == "loop") fail(t, "unsupported: nested loops");
    if (t.text == "narrow") {
      expect("(");
      int inner = expr();
      expect(",");
      NumberFormat f = format();
      expect(")");
      ExprNode n;
      n.kind = ExprKind::Narrow;
      n.lhs = inner;
      n.format = f;
      n.line = t.line;
      n.col = t.col;
      return make(std::move(n));
    }
    ExprNode n;
    n.line = t.line;
    n.col = t.col;
    n.name = t.text;
    if (std::any_of(ir_.sensors.begin(), ir_.sensors.end(),
                    [&](const SensorDecl& s) { return s.name == t.text; })) {
      n.kind = ExprKind::SensorRef;
    } else if (auto it = std::find_if(ir_.constants.begin(), ir_.constants.end(),
                                      [&](const ConstDecl& c) { return c.name == t.text; });
               it != ir_.constants.end()) {
      n.kind = ExprKind::Const;
      n.value = it->value;
    } else if (saw_acc_ && t.text == ir_.acc.name) {
      n.kind = ExprKind::AccRef;
    } else if (temps_.count(t.text)) {
      n.kind = ExprKind::TempRef;
    } else {
      fail(t, "undefined name '" + t.text + "'");
    }
    return make(std::move(n));
  }

  Lexer lex_;
  ProgramIR ir_;
  std::set<std::string> names_;
  std::set<std::string> temps_;
  bool saw_acc_ = false;
  bool acc_assigned_ = false;
};

}  // namespace

ProgramIR parse_program(const std::string& text) { return Parser(text).run(); }

// ==================== range propagation =====================

namespace {

/// Value enclosure linear in the accumulator: value in coeff*A + rem for
/// every accumulator value A in its invariant range.
struct Affine {
  Interval coeff{Rational(0), Rational(0)};
  Interval rem{Rational(0), Rational(0)};
};

Interval concretize(const Affine& a, const Interval& acc_range) {
  return iv_add(iv_mul(a.coeff, acc_range), a.rem);
}

bool zero_coeff(const Affine& a) {
  return a.coeff.lo == 0 && a.coeff.hi == 0;
}

Affine affine_of(const ProgramIR& ir, int idx, const std::map<std::string, Affine>& temps,
                 std::vector<Affine>& memo) {
  const ExprNode& n = ir.nodes[static_cast<std::size_t>(idx)];
  Affine out;
  switch (n.kind) {
    case ExprKind::Const:
      out.rem = Interval::point(n.value);
      break;
    case ExprKind::SensorRef:
      out.rem = ir.find_sensor(n.name)->range;
      break;
    case ExprKind::AccRef:
      out.coeff = Interval::point(Rational(1));
      break;
    case ExprKind::TempRef:
      out = temps.at(n.name);
      break;
    case ExprKind::Add: {
      Affine a = affine_of(ir, n.lhs, temps, memo);
      Affine b = affine_of(ir, n.rhs, temps, memo);
      out.coeff = iv_add(a.coeff, b.coeff);
      out.rem = iv_add(a.rem, b.rem);
      break;
    }
    case ExprKind::Sub: {
      Affine a = affine_of(ir, n.lhs, temps, memo);
      Affine b = affine_of(ir, n.rhs, temps, memo);
      out.coeff = iv_sub(a.coeff, b.coeff);
      out.rem = iv_sub(a.rem, b.rem);
      break;
    }
    case ExprKind::Mul: {
      Affine a = affine_of(ir, n.lhs, temps, memo);
      Affine b = affine_of(ir, n.rhs, temps, memo);
      if (zero_coeff(a)) {
        out.coeff = iv_mul(a.rem, b.coeff);
        out.rem = iv_mul(a.rem, b.rem);
      } else if (zero_coeff(b)) {
        out.coeff = iv_mul(b.rem, a.coeff);
        out.rem = iv_mul(b.rem, a.rem);
      } else {
        // nonlinear in the accumulator: collapse to a plain enclosure
        out.rem = iv_mul(concretize(a, ir.acc.range), concretize(b, ir.acc.range));
      }
      break;
    }
    case ExprKind::Narrow:
      out = affine_of(ir, n.lhs, temps, memo);
      break;
  }
  memo[static_cast<std::size_t>(n.site)] = out;
  return out;
}

}  // namespace

RangeMap propagate_ranges(const ProgramIR& ir) {
  std::vector<Affine> by_site(static_cast<std::size_t>(ir.site_count));
  std::map<std::string, Affine> temps;
  Affine update;
  for (const Statement& s : ir.body) {
    Affine a = affine_of(ir, s.root, temps, by_site);
    if (s.target == ir.acc.name) update = a;
    else temps[s.target] = a;
  }

  const Interval& declared = ir.acc.range;
  Interval mapped = concretize(update, declared);
  bool pure = update.coeff.lo == 1 && update.coeff.hi == 1;
  bool stable = declared.encloses(mapped);
  if (!stable && pure) {
    // pure accumulation: after i steps the value is init + sum of i
    // increments, each inside update.rem
    Rational steps(ir.loop_count);
    Rational lo = ir.acc.init + std::min(Rational(steps * update.rem.lo), Rational(0));
    Rational hi = ir.acc.init + std::max(Rational(steps * update.rem.hi), Rational(0));
    stable = declared.encloses(Interval(lo, hi));
  }
  if (!stable) throw Error("range divergence: declare a wider invariant range");

  RangeMap out;
  out.acc_range = declared;
  out.loop_coefficient = update.coeff;
  out.pure_accumulation = pure;
  out.by_site.reserve(by_site.size());
  for (const Affine& a : by_site) out.by_site.push_back(concretize(a, declared));
  return out;
}

// ==================== error accounting =====================

namespace {

// Grid exponent of values known to be integer multiples of 2^g. kGridAny
// marks exact zero (on every grid).
constexpr int kGridAny = 1 << 20;
using Grid = std::optional<int>;

Grid grid_of_value(const Rational& v) {
  if (v == 0) return kGridAny;
  if (!is_dyadic(v)) return std::nullopt;
  return static_cast<int>(dyadic_lsb(v));
}

Grid grid_min(const Grid& a, const Grid& b) {
  if (!a || !b) return std::nullopt;
  return std::min(*a, *b);
}

Grid grid_sum(const Grid& a, const Grid& b) {
  if (!a || !b) return std::nullopt;
  if (*a == kGridAny || *b == kGridAny) return kGridAny;
  return *a + *b;
}

/// Whether every possible value (on grid g, inside range) is exactly
/// representable in f, so rounding to f is the identity.
bool grid_exact(const Grid& g, const NumberFormat& f, const Interval& range) {
  if (!g) return false;
  if (*g == kGridAny) return true;
  if (f.is_fixed()) return *g >= f.lsb_exponent;
  // float: k*2^g with |k*2^g| <= 2^(g+p) fits in p significand bits
  return iv_mag(range) <= pow2(static_cast<long>(*g) + f.precision);
}

/// Magnitude bound on a node's error as a polynomial in E, the error carried
/// by the accumulator at iteration entry: err <= c[0] + c[1]*E + c[2]*E^2.
struct ErrPoly {
  Rational c[3]{Rational(0), Rational(0), Rational(0)};

  ErrPoly& operator+=(const ErrPoly& o) {
    for (int i = 0; i < 3; ++i) c[i] += o.c[i];
    return *this;
  }
  ErrPoly scaled(const Rational& k) const {
    ErrPoly r;
    for (int i = 0; i < 3; ++i) r.c[i] = k * c[i];
    return r;
  }
  bool is_zero() const { return c[0] == 0 && c[1] == 0 && c[2] == 0; }
  Rational eval(const Rational& e) const { return c[0] + c[1] * e + c[2] * e * e; }
};

ErrPoly errpoly_mul(const ErrPoly& a, const ErrPoly& b) {
  ErrPoly r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (a.c[i] == 0 || b.c[j] == 0) continue;
      if (i + j > 2) throw Error("error interaction order too high");
      r.c[i + j] += a.c[i] * b.c[j];
    }
  return r;
}

struct NodeFacts {
  Grid grid;
  bool in_format = false;  // value as computed lands in the working format
  ErrPoly err;
};

struct LedgerBuilder {
  const ProgramIR& ir;
  const RangeMap& ranges;
  const AnalysisOptions& options;
  bool used_floor = false;

  std::vector<NodeFacts> facts;
  std::vector<Interval> adjoint;
  std::vector<ErrorEvent> events;          // op events, sensor events appended later
  std::map<std::string, NodeFacts> temp_facts;
  std::map<std::string, Interval> temp_adj;
  std::map<std::string, Interval> sensor_adj;
  std::map<std::string, int> sensor_first_site;
  Interval lambda{Rational(0), Rational(0)};

  explicit LedgerBuilder(const ProgramIR& ir_, const RangeMap& r, const AnalysisOptions& o)
      : ir(ir_), ranges(r), options(o) {
    facts.resize(ir.nodes.size());
    adjoint.assign(ir.nodes.size(), Interval::point(Rational(0)));
  }

  const Interval& range_at(int idx) const {
    return ranges.by_site[static_cast<std::size_t>(
        ir.nodes[static_cast<std::size_t>(idx)].site)];
  }

  /// Rounding/quantization model with the magnitude-floor fallback: a float
  /// range that reaches zero is admitted only when the author supplied a
  /// floor, and using it is recorded.
  ErrorTerm floored_model(OpKind op, const NumberFormat& f, const Interval& range) {
    try {
      return rounding_error_model(op, f, range);
    } catch (const Error&) {
      if (!options.magnitude_floor) throw;
      ErrorTerm t = rounding_error_model(op, f, range, options.magnitude_floor);
      used_floor = true;
      return t;
    }
  }

  ErrorTerm floored_quantization(const NumberFormat& f, const Interval& range) {
    try {
      return quantization_error_model(f, range);
    } catch (const Error&) {
      if (!options.magnitude_floor) throw;
      ErrorTerm t = quantization_error_model(f, range, options.magnitude_floor);
      used_floor = true;
      return t;
    }
  }

  void charge(const ExprNode& n, const std::string& label, const ErrorTerm& term) {
    events.push_back({n.site, label, term, Interval::point(Rational(0))});
  }

  // ---- forward pass: grids, exactness, per-node events, error polynomials

  NodeFacts forward(int idx) {
    const ExprNode& n = ir.nodes[static_cast<std::size_t>(idx)];
    const NumberFormat& F = ir.acc.format;
    NodeFacts out;
    switch (n.kind) {
      case ExprKind::Const: {
        out.grid = grid_of_value(n.value);
        const ConstDecl* d = ir.find_const(n.name);
        out.in_format = d && d->format && *d->format == F;
        if (!grid_exact(out.grid, F, Interval::point(n.value)))
          throw ParseError("constant not exact in the loop's working format", n.line, n.col);
        break;
      }
      case ExprKind::SensorRef: {
        const SensorDecl* s = ir.find_sensor(n.name);
        out.grid = s->format.is_fixed() ? Grid(s->format.lsb_exponent) : Grid();
        out.in_format = s->format == F;
        ErrorTerm q = floored_quantization(s->format, s->range);
        out.err.c[0] = q.worst_case;
        if (!sensor_first_site.count(n.name)) sensor_first_site[n.name] = n.site;
        break;
      }
      case ExprKind::AccRef:
        out.grid = F.is_fixed() ? Grid(F.lsb_exponent) : Grid();
        out.in_format = true;
        out.err.c[1] = 1;
        break;
      case ExprKind::TempRef:
        out = temp_facts.at(n.name);
        break;
      case ExprKind::Add:
      case ExprKind::Sub: {
        NodeFacts a = forward(n.lhs);
        NodeFacts b = forward(n.rhs);
        out.err = a.err;
        out.err += b.err;
        Grid gs = grid_min(a.grid, b.grid);
        if (F.is_fixed()) {
          // wide-accumulator model: fixed add/sub is exact; rounding is
          // charged at an explicit narrow or at the store boundary
          out.grid = gs;
        } else if (grid_exact(gs, F, range_at(idx))) {
          out.grid = gs;
          out.in_format = true;
        } else {
          ErrorTerm t = floored_model(n.kind == ExprKind::Add ? OpKind::Add : OpKind::Sub, F,
                                      range_at(idx));
          charge(n, n.kind == ExprKind::Add ? "add rounding" : "sub rounding", t);
          out.err.c[0] += t.worst_case;
          out.grid = Grid();
          out.in_format = true;
        }
        break;
      }
      case ExprKind::Mul: {
        NodeFacts a = forward(n.lhs);
        NodeFacts b = forward(n.rhs);
        out.in_format = true;
        ErrPoly cross;
        if (!a.err.is_zero() && !b.err.is_zero()) cross = errpoly_mul(a.err, b.err);
        out.err = a.err.scaled(iv_mag(range_at(n.rhs)));
        out.err += b.err.scaled(iv_mag(range_at(n.lhs)));
        out.err += cross;
        if (!cross.is_zero()) {
          ErrPoly weighted = cross;  // adjoint weight applied after reverse pass
          cross_sites.push_back({n.site, weighted});
        }
        Grid gs = grid_sum(a.grid, b.grid);
        if (grid_exact(gs, F, range_at(idx))) {
          out.grid = gs;
        } else {
          ErrorTerm t = floored_model(OpKind::Mul, F, range_at(idx));
          charge(n, "mul rounding", t);
          out.err.c[0] += t.worst_case;
          out.grid = F.is_fixed() ? Grid(F.lsb_exponent) : Grid();
        }
        break;
      }
      case ExprKind::Narrow: {
        NodeFacts a = forward(n.lhs);
        out.err = a.err;
        out.in_format = n.format == F;
        if (grid_exact(a.grid, n.format, range_at(idx))) {
          out.grid = a.grid;
        } else {
          ErrorTerm t = floored_model(OpKind::Narrow, n.format, range_at(idx));
          charge(n, "narrow rounding", t);
          out.err.c[0] += t.worst_case;
          out.grid = n.format.is_fixed() ? Grid(n.format.lsb_exponent) : Grid();
        }
        break;
      }
    }
    facts[static_cast<std::size_t>(idx)] = out;
    return out;
  }

  /// Store of a value into the working format: exact when the producing node
  /// already computes in it or the value provably sits on its grid.
  void charge_store(const Statement& st, NodeFacts& root_facts) {
    const ExprNode& root = ir.nodes[static_cast<std::size_t>(st.root)];
    const NumberFormat& F = ir.acc.format;
    if (root_facts.in_format || grid_exact(root_facts.grid, F, range_at(st.root))) return;
    ErrorTerm t = floored_model(OpKind::Narrow, F, range_at(st.root));
    charge(root, "store rounding", t);
    root_facts.err.c[0] += t.worst_case;
    root_facts.grid = F.is_fixed() ? Grid(F.lsb_exponent) : Grid();
    root_facts.in_format = true;
  }

  // ---- reverse pass: adjoints of every node w.r.t. the iteration output

  void reverse(int idx, const Interval& seed) {
    const ExprNode& n = ir.nodes[static_cast<std::size_t>(idx)];
    Interval& a = adjoint[static_cast<std::size_t>(idx)];
    a = iv_add(a, seed);
    switch (n.kind) {
      case ExprKind::Const:
        break;
      case ExprKind::SensorRef: {
        auto it = sensor_adj.find(n.name);
        if (it == sensor_adj.end()) sensor_adj.emplace(n.name, a);
        else it->second = iv_add(it->second, a);
        break;
      }
      case ExprKind::AccRef:
        lambda = iv_add(lambda, a);
        break;
      case ExprKind::TempRef: {
        auto it = temp_adj.find(n.name);
        if (it == temp_adj.end()) temp_adj.emplace(n.name, a);
        else it->second = iv_add(it->second, a);
        break;
      }
      case ExprKind::Add:
        reverse(n.lhs, a);
        reverse(n.rhs, a);
        break;
      case ExprKind::Sub:
        reverse(n.lhs, a);
        reverse(n.rhs, iv_neg(a));
        break;
      case ExprKind::Mul:
        reverse(n.lhs, iv_mul(a, range_at(n.rhs)));
        reverse(n.rhs, iv_mul(a, range_at(n.lhs)));
        break;
      case ExprKind::Narrow:
        reverse(n.lhs, a);
        break;
    }
  }

  std::vector<std::pair<int, ErrPoly>> cross_sites;
};

/// Smallest dyadic with 128 fractional bits at or above x (x >= 0): keeps
/// iterated drift recursions exactly bounded without rational blowup.
Rational round_up_dyadic(const Rational& x) {
  if (x == 0) return x;
  static const BigInt scale = BigInt(1) << 128;
  BigInt num = numerator(x) * scale;
  BigInt den = denominator(x);
  BigInt q = (num + den - 1) / den;
  return Rational(q, scale);
}

}  // namespace

AnalysisResult build_ledger(const ProgramIR& ir, const RangeMap& ranges,
                            const AnalysisOptions& options) {
  LedgerBuilder b(ir, ranges, options);

  // forward: exactness, events, error polynomials; store rounding at each
  // assignment boundary
  for (const Statement& st : ir.body) {
    NodeFacts f = b.forward(st.root);
    b.charge_store(st, f);
    if (st.target != ir.acc.name) b.temp_facts[st.target] = f;
  }

  // reverse: seed the accumulator update with 1, temporaries with their
  // accumulated adjoints, walking statements backwards
  for (auto it = ir.body.rbegin(); it != ir.body.rend(); ++it) {
    Interval seed = it->target == ir.acc.name
                        ? Interval::point(Rational(1))
                        : (b.temp_adj.count(it->target) ? b.temp_adj[it->target]
                                                        : Interval::point(Rational(0)));
    b.reverse(it->root, seed);
  }

  // attach coefficients to op events; collect sensor events
  for (ErrorEvent& e : b.events) {
    for (std::size_t i = 0; i < ir.nodes.size(); ++i)
      if (ir.nodes[i].site == e.site) {
        e.loop_coefficient = b.adjoint[i];
        break;
      }
  }
  for (const SensorDecl& s : ir.sensors) {
    auto it = b.sensor_adj.find(s.name);
    if (it == b.sensor_adj.end()) continue;  // sensor never read
    ErrorTerm q = b.floored_quantization(s.format, s.range);
    int site = b.sensor_first_site.count(s.name) ? b.sensor_first_site[s.name] : -1;
    b.events.push_back({site, "sensor " + s.name + " quantization", q, it->second});
  }

  // higher-order products reach the output through their node's adjoint
  ErrPoly hot;
  for (const auto& [site, poly] : b.cross_sites) {
    for (std::size_t i = 0; i < ir.nodes.size(); ++i)
      if (ir.nodes[i].site == site) {
        hot += poly.scaled(iv_mag(b.adjoint[i]));
        break;
      }
  }

  // per-step first-order moments
  Rational step_variance(0), step_worst(0);
  bool zero_mean = true;
  for (const ErrorEvent& e : b.events) {
    Rational m = iv_mag(e.loop_coefficient);
    step_variance += m * m * e.term.variance_bound;
    step_worst += m * e.term.worst_case;
    if (e.term.mean != 0 && m != 0) zero_mean = false;
  }

  // drift: per-iteration decay of carried error plus higher-order products,
  // summed over the loop via closed forms where the recursion allows.
  // Carried error obeys E_{i+1} <= R(E_i), E_0 = 0: one iteration scales it
  // by the loop coefficient (reverse pass, so sign cancellation counts),
  // adds the fresh worst cases, and adds the error-product terms.
  ErrPoly R = hot;
  R.c[0] += step_worst;
  R.c[1] += iv_mag(b.lambda);
  Rational lam_gap = iv_mag(iv_sub(b.lambda, Interval::point(Rational(1))));
  auto ydrift = [&](const Rational& e) { return lam_gap * e + hot.eval(e); };
  Rational drift(0);
  Rational n_rat(ir.loop_count);
  bool drift_needed = lam_gap != 0 || !hot.is_zero();
  if (drift_needed) {
    if (R.c[0] == 0) {
      drift = n_rat * ydrift(Rational(0));
    } else if (R.c[2] == 0 && R.c[1] == 1) {
      // E_i = i * r0: sum i over 0..n-1 and i^2 likewise
      Rational sum_i = n_rat * (n_rat - 1) / 2;
      Rational sum_i2 = (n_rat - 1) * n_rat * (2 * n_rat - 1) / 6;
      drift = n_rat * hot.c[0] + (lam_gap + hot.c[1]) * R.c[0] * sum_i +
              hot.c[2] * R.c[0] * R.c[0] * sum_i2;
    } else {
      // look for a verified stationary bound M with R(M) <= M
      bool bounded = false;
      if (R.c[1] < 1) {
        Rational m = R.c[0] / (1 - R.c[1]);
        for (int k = 0; k < 80 && !bounded; ++k) {
          if (R.eval(m) <= m) {
            drift = n_rat * ydrift(m);
            bounded = true;
          }
          m *= 2;
        }
      }
      if (!bounded) {
        if (ir.loop_count > 10000)
          throw Error(
              "higher-order drift grows with the trajectory; supported up to 10000 steps "
              "for this program shape");
        static const Rational cap = Rational(BigInt(1) << 128);
        Rational e(0);
        for (std::uint64_t i = 0; i < ir.loop_count; ++i) {
          drift += ydrift(e);
          e = round_up_dyadic(R.eval(e));
          if (e > cap) throw Error("higher-order drift diverges for this program");
        }
      }
    }
  }

  AnalysisResult out;
  out.ledger = VarianceLedger::uniform_steps(step_variance, step_worst, ir.loop_count);
  out.ledger.drift_worst_case = drift;
  out.ledger.zero_mean_certified = zero_mean;
  out.ledger.independence_certified =
      (b.lambda == Interval::point(Rational(1))) || ir.assume_conditional_zero_mean;
  out.events = std::move(b.events);
  out.loop_coefficient = b.lambda;

  for (const SensorDecl& s : ir.sensors) {
    if (!b.sensor_adj.count(s.name)) continue;
    ErrorTerm q = b.floored_quantization(s.format, s.range);
    if (s.format.rounding == RoundingMode::Truncate)
      out.assumptions.push_back("sensor " + s.name +
                                ": one-sided truncation reading error, magnitude up to " +
                                to_exact_string(q.worst_case));
    else
      out.assumptions.push_back("sensor " + s.name + ": uniform reading error within +/-" +
                                to_exact_string(q.worst_case));
  }
  if (!out.events.empty())
    out.assumptions.push_back("rounding and reading errors independent across iterations");
  if (ir.assume_conditional_zero_mean)
    out.assumptions.push_back("author assumption: conditional_zero_mean");
  if (b.used_floor)
    out.assumptions.push_back("live magnitudes assumed no smaller than " +
                              to_exact_string(*options.magnitude_floor));
  return out;
}

AnalysisResult analyze_program(const ProgramIR& ir, const AnalysisOptions& options) {
  return build_ledger(ir, propagate_ranges(ir), options);
}

}  // namespace roundcert
