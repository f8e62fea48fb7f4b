#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "roundcert/cli.hpp"
#include "roundcert/serialize.hpp"

using namespace roundcert;

namespace {

std::string prog(const std::string& name) {
  return std::string(ROUNDCERT_SOURCE_DIR) + "/programs/" + name;
}

std::filesystem::path work_dir() {
  auto dir = std::filesystem::temp_directory_path() / "roundcert_cli_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string work_file(const std::string& name) { return (work_dir() / name).string(); }

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

// In-process CLI invocation with a pinned timestamp so emitted documents
// are byte-reproducible across runs.
RunResult run(const std::vector<std::string>& args) {
  setenv("ROUNDCERT_TIMESTAMP", "2026-01-01T00:00:00Z", 1);
  std::ostringstream out, err;
  RunResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) { return read_file(path); }

}  // namespace

// ==================== analyze =====================

TEST_CASE("analyze certifies the million-step accumulator") {
  RunResult r = run({"analyze", prog("sum_n1e6.prog"), "--epsilon", "0.01"});
  REQUIRE(r.code == 0);
  RunManifest m;
  Certificate c = certificate_from_json(r.out, &m);
  CHECK(c.steps == 1000000);
  CHECK(c.mode == CertificateMode::Stochastic);
  CHECK(c.binding == BindingBound::Stochastic);
  CHECK(c.epsilon == Rational(1, 100));
  CHECK(c.failure_bound == Rational(9765625, 50331648));
  CHECK(c.total_variance == Rational(15625, 805306368));
  CHECK(c.success_bound == Rational(1) - Rational(9765625, 50331648));
  CHECK(m.program_digest == to_hex(fnv1a64(slurp(prog("sum_n1e6.prog")))));
  CHECK(m.command == "analyze");
  CHECK(m.timestamp == "2026-01-01T00:00:00Z");
}

TEST_CASE("analyze downgrades truncating programs to worst-case-only, exit 2") {
  RunResult r = run({"analyze", prog("sum_trunc.prog"), "--epsilon", "0.5"});
  REQUIRE(r.code == 2);
  Certificate c = certificate_from_json(r.out);
  CHECK(c.mode == CertificateMode::WorstCaseOnly);
  CHECK(c.binding == BindingBound::Deterministic);
  CHECK(c.failure_bound == 1);
  bool flagged = false;
  for (const std::string& a : c.assumptions)
    flagged = flagged || a.find("nonzero mean") != std::string::npos;
  CHECK(flagged);
}

TEST_CASE("epsilon query returns the smallest threshold meeting the budget") {
  RunResult r = run({"analyze", prog("flight.prog"), "--p-fail", "1e-9", "--query", "epsilon"});
  REQUIRE(r.code == 0);
  Certificate c = certificate_from_json(r.out);
  CHECK(c.total_variance == Rational(1, 100663296));
  // The exact guarantee the query promises: variance / epsilon^2 <= budget.
  Rational budget(1, 1000000000);
  CHECK(c.total_variance <= budget * c.epsilon * c.epsilon);
  CHECK(to_double(c.epsilon) == doctest::Approx(3.151841916).epsilon(1e-6));
  // 3.15 exceeds the worst case of 1.0, so the hard envelope binds first.
  CHECK(c.binding == BindingBound::Deterministic);
  CHECK(c.worst_case_total == 1);
}

TEST_CASE("analyze flag validation") {
  CHECK(run({"analyze", prog("sum_n1e6.prog")}).code == 1);
  CHECK(run({"analyze", prog("sum_n1e6.prog"), "--epsilon", "0.01", "--p-fail", "0.5"}).code == 1);
  CHECK(run({"analyze", prog("sum_n1e6.prog"), "--p-fail", "0.5"}).code == 1);
  CHECK(run({"analyze", prog("sum_n1e6.prog"), "--p-fail", "0.5", "--query", "steps"}).code == 1);
  CHECK(run({"analyze", prog("sum_n1e6.prog"), "--epsilon", "0"}).code == 1);
  CHECK(run({"analyze", prog("sum_n1e6.prog"), "--epsilon", "0.01", "--query", "epsilon"}).code ==
        1);
  RunResult missing = run({"analyze", work_file("no_such.prog"), "--epsilon", "0.01"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("cannot read file") != std::string::npos);
}

// ==================== simulate =====================

TEST_CASE("simulate audits the certificate bound at its own epsilon") {
  std::string cert_path = work_file("sum_cert.json");
  REQUIRE(run({"analyze", prog("sum_n1e4.prog"), "--epsilon", "0.001", "--out", cert_path}).code ==
          0);

  std::string sim_path = work_file("sum_sim.json");
  RunResult r = run({"simulate", prog("sum_n1e4.prog"), "--certificate", cert_path, "--trials",
                     "400", "--seed", "3", "--threads", "2", "--out", sim_path});
  REQUIRE(r.code == 0);
  RunManifest m;
  SimReport rep = simreport_from_json(slurp(sim_path), &m);
  CHECK(m.program_digest == to_hex(fnv1a64(slurp(prog("sum_n1e4.prog")))));
  REQUIRE(rep.rows.size() == 1);  // grid defaults to the certificate epsilon
  CHECK(rep.rows[0].epsilon == Rational(1, 1000));
  CHECK(rep.rows[0].bound == Rational(9765625, 50331648));
  CHECK(rep.rows[0].verdict == GridVerdict::Sound);
  CHECK(rep.mode == SimMode::Concrete);
  CHECK(rep.trials == 400);

  SUBCASE("a corrupted bound is detected, exit 3") {
    RunManifest cm;
    Certificate c = certificate_from_json(slurp(cert_path), &cm);
    c.failure_bound = Rational(1, 10000);  // far below what the walk actually does
    std::string bad_path = work_file("bad_cert.json");
    std::ofstream(bad_path) << certificate_to_json(c, cm);
    RunResult bad = run({"simulate", prog("sum_n1e4.prog"), "--certificate", bad_path, "--trials",
                         "400", "--seed", "3", "--threads", "2"});
    CHECK(bad.code == 3);
    SimReport brep = simreport_from_json(bad.out);
    REQUIRE(brep.rows.size() == 1);
    CHECK(brep.rows[0].bound == Rational(1, 10000));
    CHECK(brep.rows[0].verdict == GridVerdict::Violated);
  }

  SUBCASE("a certificate for different program text is rejected, exit 1") {
    RunResult bad = run({"simulate", prog("sum_n1e6.prog"), "--certificate", cert_path});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("certificate does not match program") != std::string::npos);
  }

  SUBCASE("an explicit grid prices fresh bounds at the other points") {
    RunResult g = run({"simulate", prog("sum_n1e4.prog"), "--certificate", cert_path, "--trials",
                      "400", "--seed", "3", "--threads", "2", "--eps-grid", "0.001, 0.1"});
    REQUIRE(g.code == 0);
    SimReport grep_ = simreport_from_json(g.out);
    REQUIRE(grep_.rows.size() == 2);
    CHECK(grep_.rows[0].bound == Rational(9765625, 50331648));
    CHECK(grep_.rows[1].bound == 0);  // 0.1 exceeds the worst case: certified impossible
    CHECK(grep_.rows[1].frequency == 0.0);
  }
}

TEST_CASE("simulate is reproducible and thread-count invariant via the environment") {
  std::string cert_path = work_file("sum_cert2.json");
  REQUIRE(run({"analyze", prog("sum_n1e4.prog"), "--epsilon", "0.001", "--out", cert_path}).code ==
          0);
  setenv("ROUNDCERT_THREADS", "2", 1);
  RunResult a = run({"simulate", prog("sum_n1e4.prog"), "--certificate", cert_path, "--mode",
                     "abstract", "--trials", "300", "--seed", "11"});
  setenv("ROUNDCERT_THREADS", "5", 1);
  RunResult b = run({"simulate", prog("sum_n1e4.prog"), "--certificate", cert_path, "--mode",
                     "abstract", "--trials", "300", "--seed", "11"});
  unsetenv("ROUNDCERT_THREADS");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);  // byte-identical documents, thread count notwithstanding
  SimReport rep = simreport_from_json(a.out);
  CHECK(rep.mode == SimMode::Abstract);
  CHECK(rep.steps == 10000);
}

// ==================== report =====================

TEST_CASE("report renders both documents with plot-ready columns") {
  std::string cert_path = work_file("rep_cert.json");
  std::string sim_path = work_file("rep_sim.json");
  REQUIRE(run({"analyze", prog("sum_n1e4.prog"), "--epsilon", "0.001", "--out", cert_path}).code ==
          0);
  REQUIRE(run({"simulate", prog("sum_n1e4.prog"), "--certificate", cert_path, "--trials", "400",
               "--seed", "3", "--threads", "2", "--out", sim_path})
              .code == 0);

  RunResult r = run({"report", "--certificate", cert_path, "--simreport", sim_path});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("failure bound:   <= 0.194026") != std::string::npos);
  CHECK(r.out.find("safe step horizons") != std::string::npos);
  CHECK(r.out.find("# PLOT epsilon bound empirical stderr") != std::string::npos);
  CHECK(r.out.find("\n0.001 0.194025536 ") != std::string::npos);
  CHECK(r.out.find("sound") != std::string::npos);

  SUBCASE("certificate-only report still plots the bound") {
    RunResult c = run({"report", "--certificate", cert_path});
    REQUIRE(c.code == 0);
    CHECK(c.out.find("# PLOT epsilon bound\n0.001 0.194025536\n") != std::string::npos);
  }

  SUBCASE("documents for different programs are rejected") {
    std::string other_cert = work_file("other_cert.json");
    REQUIRE(
        run({"analyze", prog("sum_n1e6.prog"), "--epsilon", "0.01", "--out", other_cert}).code ==
        0);
    RunResult bad = run({"report", "--certificate", other_cert, "--simreport", sim_path});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("describe different programs") != std::string::npos);
  }
}

// ==================== parser and serialization edges =====================

TEST_CASE("help exits 0, parse errors exit 1") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"--help"}).out.find("analyze") != std::string::npos);
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"simulate", prog("sum_n1e4.prog")}).code == 1);  // --certificate required
  CHECK(run({"analyze", prog("sum_n1e6.prog"), "--epsilon", "0.01", "--bogus"}).code == 1);
  CHECK(run({"simulate", prog("sum_n1e4.prog"), "--certificate", work_file("sum_cert.json"),
             "--mode", "psychic"})
            .code == 1);
}

TEST_CASE("documents round-trip exactly, including non-dyadic rationals") {
  Certificate c;
  c.epsilon = Rational(1, 3);
  c.steps = 7;
  c.failure_bound = Rational(22, 7);
  c.success_bound = 0;
  c.total_variance = Rational(1, 1000000007);
  c.drift_worst_case = Rational(5, 16);
  c.worst_case_total = Rational(12345, 4096);
  c.mode = CertificateMode::WorstCaseOnly;
  c.binding = BindingBound::Deterministic;
  c.assumptions = {"alpha", "beta"};
  RunManifest m = make_manifest("program text", "analyze", "epsilon=1/3");

  RunManifest m2;
  Certificate c2 = certificate_from_json(certificate_to_json(c, m), &m2);
  CHECK(c2.epsilon == c.epsilon);
  CHECK(c2.steps == c.steps);
  CHECK(c2.failure_bound == c.failure_bound);
  CHECK(c2.total_variance == c.total_variance);
  CHECK(c2.drift_worst_case == c.drift_worst_case);
  CHECK(c2.worst_case_total == c.worst_case_total);
  CHECK(c2.mode == c.mode);
  CHECK(c2.binding == c.binding);
  CHECK(c2.assumptions == c.assumptions);
  CHECK(m2.program_digest == m.program_digest);
  CHECK(m2.parameters == m.parameters);

  SimReport r;
  r.mode = SimMode::Concrete;
  r.trials = 9;
  r.steps = 4;
  r.seed = 77;
  GridRow row;
  row.epsilon = Rational(3, 7);
  row.bound = Rational(1, 6);
  row.frequency = 0.125;
  row.stderr_value = 0.03125;
  row.verdict = GridVerdict::Inconclusive;
  r.rows = {row};
  r.sample_final_variance = 1.5;
  r.model_final_variance = 2.5;
  r.mean_final_error = -0.25;
  r.drift_bound = 0.5;
  r.drift_consistent = false;
  SimReport r2 = simreport_from_json(simreport_to_json(r, m));
  CHECK(r2.mode == r.mode);
  CHECK(r2.trials == r.trials);
  REQUIRE(r2.rows.size() == 1);
  CHECK(r2.rows[0].epsilon == row.epsilon);
  CHECK(r2.rows[0].bound == row.bound);
  CHECK(r2.rows[0].frequency == row.frequency);
  CHECK(r2.rows[0].verdict == row.verdict);
  CHECK(r2.drift_consistent == false);
}

TEST_CASE("malformed documents are rejected with a reason") {
  CHECK_THROWS_WITH(certificate_from_json("not json at all"),
                    doctest::Contains("malformed certificate document"));
  CHECK_THROWS_WITH(certificate_from_json("{\"schema\": \"something-else\"}"),
                    doctest::Contains("schema mismatch"));
  CHECK_THROWS_WITH(simreport_from_json("{\"schema\": \"roundcert-certificate-1\"}"),
                    doctest::Contains("schema mismatch"));
  Certificate c;
  c.epsilon = Rational(1, 100);
  std::string good = certificate_to_json(c, make_manifest("x", "analyze", "p"));
  CHECK_THROWS_WITH(simreport_from_json(good), doctest::Contains("schema mismatch"));
}
