#include "roundcert/cli.hpp"

#include "roundcert/analyzer.hpp"
#include "roundcert/bounds.hpp"
#include "roundcert/montecarlo.hpp"
#include "roundcert/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace roundcert {
namespace {

// ==================== small helpers =====================

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + "  " : s + std::string(width - s.size(), ' ');
}

void write_output(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write file: " + path);
}

Rational parse_flag_number(const std::string& text, const char* flag) {
  try {
    return parse_number(text);
  } catch (const Error& e) {
    throw Error(std::string(flag) + ": " + e.what());
  }
}

std::vector<Rational> parse_grid(const std::string& text) {
  std::vector<Rational> grid;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t a = item.find_first_not_of(" \t");
    std::size_t b = item.find_last_not_of(" \t");
    if (a == std::string::npos) throw Error("--eps-grid: empty entry");
    grid.push_back(parse_flag_number(item.substr(a, b - a + 1), "--eps-grid"));
  }
  if (grid.empty()) throw Error("--eps-grid: no entries");
  return grid;
}

// Default worker count when --threads is absent; 0 keeps hardware autodetect.
unsigned env_threads() {
  const char* v = std::getenv("ROUNDCERT_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  unsigned long n = std::strtoul(v, &end, 10);
  if (end == v || *end != '\0' || n > 1024) return 0;
  return static_cast<unsigned>(n);
}

// ==================== analyze =====================

struct AnalyzeArgs {
  std::string program;
  std::string epsilon;
  std::string p_fail;
  std::string query;
  std::string floor;
  std::string out_path;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (a.epsilon.empty() == a.p_fail.empty())
    throw Error("exactly one of --epsilon or --p-fail is required");
  if (!a.p_fail.empty() && a.query.empty()) throw Error("--p-fail requires --query epsilon");
  if (!a.p_fail.empty() && a.query != "epsilon")
    throw Error("unknown query '" + a.query + "' (supported: epsilon)");
  if (!a.epsilon.empty() && !a.query.empty()) throw Error("--query only applies with --p-fail");

  std::string text = read_file(a.program);
  ProgramIR ir = parse_program(text);

  AnalysisOptions opts;
  if (!a.floor.empty()) {
    Rational floor = parse_flag_number(a.floor, "--magnitude-floor");
    if (floor <= 0) throw Error("--magnitude-floor must be positive");
    opts.magnitude_floor = floor;
  }
  AnalysisResult ar = analyze_program(ir, opts);

  Rational epsilon;
  std::string params;
  if (!a.epsilon.empty()) {
    epsilon = parse_flag_number(a.epsilon, "--epsilon");
    if (epsilon <= 0) throw Error("--epsilon must be positive");
    params = "epsilon=" + to_exact_string(epsilon);
  } else {
    Rational budget = parse_flag_number(a.p_fail, "--p-fail");
    if (budget <= 0 || budget >= 1) throw Error("--p-fail must be in (0, 1)");
    bool admissible = ar.ledger.zero_mean_certified && ar.ledger.independence_certified;
    if (admissible) {
      epsilon = from_double(required_epsilon(ar.ledger, budget));
    } else {
      // No stochastic claim exists; the deterministic envelope meets any
      // budget. Answer with the smallest double strictly above it.
      Rational wall = ar.ledger.worst_case_total() + ar.ledger.drift_worst_case;
      double e = to_double(wall);
      while (from_double(e) <= wall)
        e = std::nextafter(e, std::numeric_limits<double>::infinity());
      epsilon = from_double(e);
    }
    params = "p-fail=" + to_exact_string(budget) + " query=epsilon";
  }
  if (opts.magnitude_floor)
    params += " magnitude-floor=" + to_exact_string(*opts.magnitude_floor);

  Certificate cert = make_certificate(ar.ledger, epsilon, ar.assumptions);
  RunManifest manifest = make_manifest(text, "analyze", params);
  write_output(certificate_to_json(cert, manifest), a.out_path, out);
  if (!a.out_path.empty())
    out << "certificate written: " << a.out_path << " (mode " << to_string(cert.mode)
        << ", epsilon " << fmt6(to_double(cert.epsilon)) << ", failure bound <= "
        << fmt6(to_double(cert.failure_bound)) << ")\n";
  return cert.mode == CertificateMode::WorstCaseOnly ? 2 : 0;
}

// ==================== simulate =====================

struct SimulateArgs {
  std::string program;
  std::string cert_path;
  std::string mode = "concrete";
  std::string grid_text;
  std::string floor;
  std::string out_path;
  std::uint64_t trials = 100000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  bool threads_given = false;
  int truth_lsb = -40;
};

int cmd_simulate(const SimulateArgs& s, std::ostream& out, std::ostream& err) {
  std::string text = read_file(s.program);
  RunManifest cert_manifest;
  Certificate cert = certificate_from_json(read_file(s.cert_path), &cert_manifest);
  if (to_hex(fnv1a64(text)) != cert_manifest.program_digest) {
    err << "error: certificate does not match program\n";
    return 1;
  }
  ProgramIR ir = parse_program(text);

  SimConfig cfg;
  cfg.trials = s.trials;
  cfg.seed = s.seed;
  cfg.threads = s.threads_given ? s.threads : env_threads();
  cfg.truth_lsb = s.truth_lsb;
  if (!s.floor.empty()) {
    Rational floor = parse_flag_number(s.floor, "--magnitude-floor");
    if (floor <= 0) throw Error("--magnitude-floor must be positive");
    cfg.analysis.magnitude_floor = floor;
  }
  cfg.epsilon_grid =
      s.grid_text.empty() ? std::vector<Rational>{cert.epsilon} : parse_grid(s.grid_text);

  // The audited claim is the certificate's own bound at its epsilon; other
  // grid points get freshly priced bounds so the whole curve is checked.
  AnalysisResult ar = analyze_program(ir, cfg.analysis);
  std::vector<Rational> claimed;
  claimed.reserve(cfg.epsilon_grid.size());
  for (const Rational& e : cfg.epsilon_grid) {
    if (e == cert.epsilon)
      claimed.push_back(cert.failure_bound);
    else
      claimed.push_back(make_certificate(ar.ledger, e, {}).failure_bound);
  }

  SimReport rep = s.mode == "abstract" ? simulate_abstract(ar.ledger, cfg, &claimed)
                                       : simulate_concrete(ir, cfg, std::nullopt, &claimed);

  std::string params = "certificate=" + s.cert_path + " mode=" + s.mode +
                       " trials=" + std::to_string(s.trials) +
                       " seed=" + std::to_string(s.seed) +
                       " truth-lsb=" + std::to_string(s.truth_lsb);
  if (cfg.analysis.magnitude_floor)
    params += " magnitude-floor=" + to_exact_string(*cfg.analysis.magnitude_floor);
  params += " grid=";
  for (std::size_t i = 0; i < cfg.epsilon_grid.size(); ++i)
    params += (i ? "," : "") + to_exact_string(cfg.epsilon_grid[i]);

  RunManifest manifest = make_manifest(text, "simulate", params);
  write_output(simreport_to_json(rep, manifest), s.out_path, out);

  bool violated = false;
  for (const GridRow& row : rep.rows) violated = violated || row.verdict == GridVerdict::Violated;
  if (!s.out_path.empty())
    out << "simulation report written: " << s.out_path << " ("
        << (violated ? "a bound was VIOLATED" : "no bound violated") << ")\n";
  return violated ? 3 : 0;
}

// ==================== report =====================

struct ReportArgs {
  std::string cert_path;
  std::string sim_path;
  std::string out_path;
};

std::string safe_steps_cell(std::uint64_t n) {
  return n == std::numeric_limits<std::uint64_t>::max() ? "no finite limit"
                                                        : std::to_string(n);
}

int cmd_report(const ReportArgs& r, std::ostream& out, std::ostream& err) {
  RunManifest cm;
  Certificate cert = certificate_from_json(read_file(r.cert_path), &cm);
  std::optional<SimReport> sim;
  if (!r.sim_path.empty()) {
    RunManifest sm;
    sim = simreport_from_json(read_file(r.sim_path), &sm);
    if (sm.program_digest != cm.program_digest) {
      err << "error: certificate and simulation report describe different programs\n";
      return 1;
    }
  }

  std::ostringstream t;
  t << "round-off error certificate\n";
  t << "  program digest:  " << cm.program_digest << "\n";
  t << "  produced by:     roundcert " << cm.command << " [" << cm.parameters << "] v"
    << cm.tool_version << ", " << cm.timestamp << "\n";
  t << "  steps:           " << cert.steps << "\n";
  t << "  mode:            " << to_string(cert.mode) << "\n";
  t << "  binding bound:   " << to_string(cert.binding) << "\n";
  t << "  epsilon:         " << fmt6(to_double(cert.epsilon)) << " (exact "
    << to_exact_string(cert.epsilon) << ")\n";
  t << "  failure bound:   <= " << fmt6(to_double(cert.failure_bound)) << " (exact "
    << to_exact_string(cert.failure_bound) << ")\n";
  t << "  success bound:   >= " << fmt6(to_double(cert.success_bound)) << "\n";
  t << "  total variance:  " << fmt6(to_double(cert.total_variance)) << "\n";
  t << "  worst case:      " << fmt6(to_double(cert.worst_case_total)) << " plus drift "
    << fmt6(to_double(cert.drift_worst_case)) << "\n";
  if (!cert.assumptions.empty()) {
    t << "  assumptions:\n";
    for (const std::string& a : cert.assumptions) t << "    - " << a << "\n";
  }

  if (cert.mode == CertificateMode::Stochastic && cert.steps > 0 && cert.total_variance > 0) {
    Rational avg = cert.total_variance / Rational(BigInt(cert.steps));
    t << "\nsafe step horizons at epsilon " << fmt6(to_double(cert.epsilon))
      << ", by the stochastic bound alone (average per-step variance "
      << fmt6(to_double(avg)) << ")\n";
    const Rational budgets[] = {Rational(1, 1000), Rational(1, 1000000),
                                Rational(1, 1000000000)};
    for (const Rational& p : budgets)
      t << "  p_fail <= " << fmt6(to_double(p)) << ": "
        << safe_steps_cell(max_safe_steps(avg, cert.epsilon, p)) << " steps\n";
  }

  if (sim) {
    t << "\nsimulation (" << to_string(sim->mode) << ", " << sim->trials << " trials, seed "
      << sim->seed << ", " << sim->steps << " steps)\n";
    t << "  " << pad("epsilon", 15) << pad("bound", 15) << pad("empirical", 15)
      << pad("stderr", 13) << "verdict\n";
    for (const GridRow& row : sim->rows)
      t << "  " << pad(fmt6(to_double(row.epsilon)), 15) << pad(fmt6(to_double(row.bound)), 15)
        << pad(fmt6(row.frequency), 15) << pad(fmt6(row.stderr_value), 13)
        << to_string(row.verdict) << "\n";
    t << "  sample final variance " << fmt6(sim->sample_final_variance) << " (model bound "
      << fmt6(sim->model_final_variance) << ")\n";
    t << "  mean final error " << fmt6(sim->mean_final_error) << " within drift budget "
      << fmt6(sim->drift_bound) << ": " << (sim->drift_consistent ? "yes" : "NO") << "\n";
  }

  t << "\n";
  if (sim) {
    t << "# PLOT epsilon bound empirical stderr\n";
    for (const GridRow& row : sim->rows)
      t << fmt9(to_double(row.epsilon)) << " " << fmt9(to_double(row.bound)) << " "
        << fmt9(row.frequency) << " " << fmt9(row.stderr_value) << "\n";
  } else {
    t << "# PLOT epsilon bound\n";
    t << fmt9(to_double(cert.epsilon)) << " " << fmt9(to_double(cert.failure_bound)) << "\n";
  }

  write_output(t.str(), r.out_path, out);
  if (!r.out_path.empty()) out << "report written: " << r.out_path << "\n";
  return 0;
}

}  // namespace

// ==================== driver =====================

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"certifies accumulated round-off error of sensor loops"};
  app.name("roundcert");

  AnalyzeArgs aa;
  SimulateArgs sa;
  ReportArgs ra;

  CLI::App* an = app.add_subcommand("analyze", "build a certificate for a program");
  an->add_option("program", aa.program, "program file")->required();
  an->add_option("--epsilon", aa.epsilon, "error threshold to certify");
  an->add_option("--p-fail", aa.p_fail,
                 "failure budget; with --query epsilon, solves for the threshold");
  an->add_option("--query", aa.query, "quantity to solve for (epsilon)");
  an->add_option("--magnitude-floor", aa.floor,
                 "smallest live magnitude the program vouches for");
  an->add_option("--out", aa.out_path, "write the certificate here instead of stdout");

  CLI::App* si = app.add_subcommand("simulate", "check a certificate empirically");
  si->add_option("program", sa.program, "program file")->required();
  si->add_option("--certificate", sa.cert_path, "certificate to audit")->required();
  si->add_option("--mode", sa.mode, "concrete (bit-accurate emulation) or abstract (model walk)")
      ->check(CLI::IsMember({"concrete", "abstract"}));
  si->add_option("--trials", sa.trials, "number of trials");
  CLI::Option* threads_opt =
      si->add_option("--threads", sa.threads, "worker threads (0: all cores; default from "
                                              "ROUNDCERT_THREADS when set)");
  si->add_option("--seed", sa.seed, "random seed");
  si->add_option("--eps-grid", sa.grid_text,
                 "comma-separated thresholds (default: the certificate epsilon)");
  si->add_option("--truth-lsb", sa.truth_lsb, "grid exponent of true sensor values");
  si->add_option("--magnitude-floor", sa.floor, "forwarded to the internal analysis");
  si->add_option("--out", sa.out_path, "write the report here instead of stdout");

  CLI::App* re = app.add_subcommand("report", "render documents for humans, with plot data");
  re->add_option("--certificate", ra.cert_path, "certificate file")->required();
  re->add_option("--simreport", ra.sim_path, "simulation report to fold in");
  re->add_option("--out", ra.out_path, "write the text here instead of stdout");

  app.require_subcommand(1);

  try {
    // CLI11 consumes a reversed argv-style vector.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }
  sa.threads_given = threads_opt->count() > 0;

  try {
    if (an->parsed()) return cmd_analyze(aa, out);
    if (si->parsed()) return cmd_simulate(sa, out, err);
    return cmd_report(ra, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace roundcert
