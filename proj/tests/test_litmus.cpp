#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pclab/litmus.hpp"

using namespace pclab;
namespace fs = std::filesystem;

namespace {

const char* kSB = R"(name sb
model pram
proc 0
W x 1
R y
proc 1
W y 1
R x
outcome allowed 0:0=0 1:0=0
)";

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<fs::path> corpus() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(PCLAB_LITMUS_DIR))
    if (e.path().extension() == ".litmus") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t total_reads(const SpecProgram& p) {
  std::size_t n = 0;
  for (const auto& [proc, code] : p.procs)
    for (const auto& i : code) n += i.kind == SpecInstr::Kind::read;
  return n;
}

// The complete computation in which every read returns the outcome's value.
Computation computation_for(const SpecProgram& p, const Outcome& o) {
  Computation c;
  for (const auto& [var, v] : p.initial) c.set_initial(var, v);
  for (const auto& [proc, code] : p.procs) {
    c.declare_thread(proc, 0);
    std::size_t k = 0;
    for (const auto& i : code) {
      if (i.kind == SpecInstr::Kind::write) c.add(proc, 0, op::Write{i.var, i.value});
      else c.add(proc, 0, op::Read{i.var, o.reads.at({proc, k++})});
    }
  }
  return c;
}

std::vector<std::uint64_t> range(std::uint64_t a, std::uint64_t b) {
  std::vector<std::uint64_t> out;
  for (auto s = a; s <= b; ++s) out.push_back(s);
  return out;
}

}  // namespace

TEST_CASE("corpus expectations agree with the checker") {
  auto files = corpus();
  REQUIRE(files.size() >= 8);
  for (const auto& f : files) {
    CAPTURE(f.filename().string());
    LitmusCase c = parse_litmus(slurp(f));
    CHECK(!c.name.empty());
    REQUIRE(!c.outcomes.empty());
    for (const auto& o : c.outcomes) {
      CAPTURE(o.condition.str());
      REQUIRE(o.condition.reads.size() == total_reads(c.program));
      Verdict v = check_pc(computation_for(c.program, o.condition), c.partition());
      CHECK(!v.undecided());
      CHECK(v.satisfied() == (o.expect != Expectation::forbidden));
    }
  }
}

TEST_CASE("textbook verdicts") {
  auto sb = parse_litmus(kSB);
  Outcome zeros = parse_outcome("0:0=0 1:0=0", sb.program);
  CHECK(check_pc(computation_for(sb.program, zeros), model_partition(ModelName::parse("sc"), sb.program.usage()))
            .state == VerdictState::unsatisfied);
  CHECK(check_pc(computation_for(sb.program, zeros), sb.partition()).satisfied());
}

TEST_CASE("corpus runs on every stack without violations") {
  for (const auto& f : corpus()) {
    CAPTURE(f.filename().string());
    LitmusCase c = parse_litmus(slurp(f));
    RunOptions opts;
    opts.check = Level::spec;
    opts.jobs = 4;
    for (const auto& s : Stack::all()) {
      CAPTURE(s.str());
      RunReport r = run_case(c, s, range(0, 29), opts);
      CHECK(r.completed == 30);
      CHECK(r.violations.empty());
      CHECK(!r.failed());
      CHECK(r.verdicts["satisfied"] == 30);
    }
  }
}

TEST_CASE("litmus format") {
  LitmusCase c = parse_litmus(kSB);
  CHECK(c.name == "sb");
  CHECK(c.model.kind == Model::pram);
  CHECK(c.program.n_procs() == 2);
  REQUIRE(c.outcomes.size() == 1);
  CHECK(c.outcomes[0].expect == Expectation::allowed);
  CHECK(c.outcomes[0].condition.str() == "0:0=0 1:0=0");
  CHECK(parse_litmus(format_litmus(c)).outcomes[0].condition == c.outcomes[0].condition);
  CHECK(format_litmus(parse_litmus(format_litmus(c))) == format_litmus(c));

  SUBCASE("errors carry line numbers") {
    auto line_of = [](const std::string& text) -> std::size_t {
      try {
        parse_litmus(text);
      } catch (const ParseError& e) {
        return e.line();
      }
      return 0;
    };
    CHECK(line_of("model sc\nproc 0\nR x\noutcome maybe 0:0=1\n") == 4);
    CHECK(line_of("model sc\nproc 0\nR x\noutcome allowed 0:1=1\n") == 4);
    CHECK(line_of("model sc\nproc 0\nR x\noutcome allowed 1:0=1\n") == 4);
    CHECK(line_of("model sc\nproc 0\nR x\noutcome allowed 0:0\n") == 4);
    CHECK(line_of("model sc\nproc 0\nR x\noutcome allowed 0:0=1 0:0=2\n") == 4);
    CHECK(line_of("name a\nmodel sc\nproc 0\nX x\n") == 4);
    CHECK(line_of("model tso\nproc 0\nR x\n") == 1);
    CHECK(line_of("name\nproc 0\nR x\n") == 1);
  }
  SUBCASE("structural errors") {
    CHECK_THROWS_AS(parse_litmus("proc 0\nR x\n"), DomainError);
    CHECK_THROWS_AS(parse_litmus("model sc\nvars x\nproc 0\nR y\n"), DomainError);
    CHECK_THROWS_AS(parse_litmus("model sc\nproc 1\nR x\n"), DomainError);
  }
  SUBCASE("empty cases") {
    LitmusCase e = parse_litmus("");
    CHECK(e.program.procs.empty());
    CHECK(e.outcomes.empty());
    CHECK(parse_litmus("# nothing\nmodel pram\n").model.kind == Model::pram);
    RunReport r = run_case(e, {Variant::swfr, Backend::timestamp}, {0, 1, 2});
    CHECK(r.completed == 3);
    CHECK(r.histogram["-"] == 3);
    CHECK(r.violations.empty());
  }
  SUBCASE("long expectation name") {
    auto u = parse_litmus("model pram\nproc 0\nR x\noutcome spec-allowed-impl-unreachable 0:0=1\n");
    CHECK(u.outcomes[0].expect == Expectation::unreachable);
  }
  SUBCASE("model names") {
    for (auto m : {"SC", "P-RAM", "pcg", "PC-G", "weaksc", "WeakPC-G"})
      CHECK_NOTHROW(parse_litmus(std::string("model ") + m + "\nproc 0\nR x\n"));
  }
}

TEST_CASE("outcomes") {
  auto p = parse_spec_program("proc 0\nR x\nW x 1\nR y\nproc 1\nW y 2\n");
  CHECK(parse_outcome("-", p).reads.empty());
  CHECK(parse_outcome("", p).str() == "-");
  Outcome o = parse_outcome("0:1=2  0:0=0", p);
  CHECK(o.str() == "0:0=0 0:1=2");
  Outcome part = parse_outcome("0:1=2", p);
  CHECK(part.matched_by(o));
  CHECK(!o.matched_by(part));
  CHECK(Outcome{}.matched_by(o));
  CHECK(!parse_outcome("0:1=0", p).matched_by(o));
  CHECK_THROWS_AS(parse_outcome("1:0=0", p), DomainError);
  CHECK_THROWS_AS(parse_outcome("0:2=0", p), DomainError);
  CHECK_THROWS_AS(parse_outcome("0:-1=0", p), DomainError);
  CHECK_THROWS_AS(parse_outcome("a:0=0", p), DomainError);
  CHECK_THROWS_AS(parse_outcome("0=0:0", p), DomainError);
  CHECK_THROWS_AS(parse_outcome("0:0=x", p), DomainError);
  CHECK(parse_expectation("unreachable") == Expectation::unreachable);
  CHECK_THROWS_AS(parse_expectation("never"), DomainError);
}

TEST_CASE("seed ranges") {
  CHECK(parse_seed_range("3") == std::vector<std::uint64_t>{3});
  CHECK(parse_seed_range("2..4") == std::vector<std::uint64_t>{2, 3, 4});
  CHECK(parse_seed_range("5..5").size() == 1);
  CHECK_THROWS_AS(parse_seed_range("4..2"), DomainError);
  CHECK_THROWS_AS(parse_seed_range("a..2"), DomainError);
  CHECK_THROWS_AS(parse_seed_range("-1"), DomainError);
  CHECK_THROWS_AS(parse_seed_range("1..."), DomainError);
}

TEST_CASE("a run's outcome lists every read in program order") {
  LitmusCase c = parse_litmus(kSB);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeedRun r = run_seed(c, {Variant::fwsr, Backend::timestamp}, seed);
    REQUIRE(r.status == RunStatus::quiescent);
    REQUIRE(r.outcome.reads.size() == 2);
    Computation spec = interpret(c.program, r.trace);
    CHECK(std::get<op::Read>(spec.at({0, 0, 1}).kind).value == r.outcome.reads.at({0, 0}));
    CHECK(std::get<op::Read>(spec.at({1, 0, 1}).kind).value == r.outcome.reads.at({1, 0}));
    CHECK(r.trace.meta_value("case") == "sb");
  }
}

TEST_CASE("run reports") {
  LitmusCase c = parse_litmus(kSB);
  Stack s{Variant::swfr, Backend::token};
  auto seeds = range(0, 59);

  SUBCASE("histogram conserves completed runs") {
    RunReport r = run_case(c, s, seeds);
    std::uint64_t sum = 0;
    for (const auto& [o, n] : r.histogram) sum += n;
    CHECK(sum == r.completed);
    CHECK(r.completed + r.nonquiescent.size() == r.seeds_requested);
    CHECK(r.expectations.at(0).second == r.histogram["0:0=0 1:0=0"]);
    CHECK(r.expectations.at(0).second > 0);
    CHECK(r.monitors.size() >= 5);
    for (const auto& [name, pf] : r.monitors) CHECK(pf.first + pf.second == 60);
  }
  SUBCASE("deterministic and independent of parallelism") {
    RunOptions one, many;
    one.check = many.check = Level::spec;
    many.jobs = 8;
    auto a = run_case(c, s, seeds, one);
    auto b = run_case(c, s, seeds, one);
    auto d = run_case(c, s, seeds, many);
    CHECK(format_reports({a}) == format_reports({b}));
    CHECK(format_reports({a}) == format_reports({d}));
    CHECK(reports_json({a}) == reports_json({d}));
  }
  SUBCASE("nonquiescent runs are listed, not counted") {
    RunOptions opts;
    opts.sim.max_steps = 5;
    RunReport r = run_case(c, s, range(0, 9), opts);
    CHECK(r.completed == 0);
    CHECK(r.histogram.empty());
    REQUIRE(r.nonquiescent.size() == 10);
    CHECK(r.nonquiescent[0].second == RunStatus::budget_exhausted);
  }
  SUBCASE("forbidden observations fail the report and keep their trace") {
    LitmusCase strict = c;
    strict.outcomes[0].expect = Expectation::forbidden;
    auto dir = fs::temp_directory_path() / "pclab-litmus-test";
    fs::remove_all(dir);
    RunOptions opts;
    opts.violation_dir = dir.string();
    RunReport r = run_case(strict, s, seeds, opts);
    REQUIRE(!r.violations.empty());
    CHECK(r.failed());
    for (const auto& v : r.violations) {
      CHECK(v.kind == "forbidden");
      REQUIRE(fs::exists(v.trace_path));
      Trace t = parse_trace(slurp(v.trace_path));
      CHECK(outcome_of(strict.program, t).str() == "0:0=0 1:0=0");
      SeedRun again = run_seed(strict, s, v.seed);
      CHECK(format_trace(again.trace) == slurp(v.trace_path));
    }
    CHECK(format_reports({r}).find("result FAIL") != std::string::npos);
    fs::remove_all(dir);
  }
  SUBCASE("unreachable observations are reported but do not fail") {
    LitmusCase u = c;
    u.outcomes[0].expect = Expectation::unreachable;
    RunReport r = run_case(u, s, seeds);
    REQUIRE(!r.violations.empty());
    CHECK(r.violations[0].kind == "unreachable");
    CHECK(!r.failed());
  }
  SUBCASE("json mirrors the text") {
    RunOptions opts;
    opts.check = Level::pob;
    auto reports = std::vector<RunReport>{run_case(c, s, seeds, opts), run_case(c, {Variant::fwsr, Backend::token}, seeds, opts)};
    auto j = nlohmann::json::parse(reports_json(reports));
    REQUIRE(j.size() == 2);
    CHECK(j[0]["stack"] == "swfr/token");
    CHECK(j[1]["stack"] == "fwsr/token");
    CHECK(j[0]["completed"] == reports[0].completed);
    CHECK(j[0]["check"]["verdicts"]["satisfied"] == 60);
    CHECK(j[0]["failed"] == false);
  }
  SUBCASE("text layout") {
    RunOptions opts;
    opts.check = Level::spec;
    auto single = format_reports({run_case(c, s, seeds, opts)});
    CHECK(single.rfind("case sb model pram stack swfr/token\nseeds 60 completed 60 nonquiescent 0\noutcomes\n", 0) == 0);
    CHECK(single.find("expectations\n  allowed 0:0=0 1:0=0  observed ") != std::string::npos);
    CHECK(single.find("check pc satisfied 60 unsatisfied 0 undecided 0\n") != std::string::npos);
    CHECK(single.find("  fifo pass 60 fail 0\n") != std::string::npos);
    CHECK(single.ends_with("violations 0\nresult ok\n"));

    std::vector<RunReport> matrix;
    for (const auto& st : Stack::all()) matrix.push_back(run_case(c, st, seeds, opts));
    auto text = format_reports(matrix);
    std::size_t blocks = 0;
    for (std::size_t pos = 0; (pos = text.find("case sb ", pos)) != std::string::npos; ++pos) ++blocks;
    CHECK(blocks == 4);
    CHECK(text.find("\n\ncase sb model pram stack fwsr/timestamp\n") != std::string::npos);
    CHECK(text.rfind(single, 0) == 0);
  }
  CHECK(format_reports({}) == "no runs\n");
}

TEST_CASE("seed search") {
  LitmusCase c = parse_litmus(kSB);
  Outcome zeros = parse_outcome("0:0=0 1:0=0", c.program);
  for (const auto& s : Stack::all()) {
    CAPTURE(s.str());
    CHECK(!seed_search(c, zeros, 0, s));
    auto seed = seed_search(c, zeros, 10000, s);
    REQUIRE(seed);
    CHECK(run_seed(c, s, *seed).outcome.str() == "0:0=0 1:0=0");
    for (std::uint64_t earlier = 0; earlier < *seed; ++earlier)
      CHECK(!zeros.matched_by(run_seed(c, s, earlier).outcome));
    CHECK(!seed_search(c, zeros, *seed, s));
  }
  LitmusCase sc = c;
  sc.model = ModelName::parse("sc");
  CHECK(!seed_search(sc, zeros, 300, {Variant::swfr, Backend::timestamp}));
}

TEST_CASE("check_trace") {
  LitmusCase c = parse_litmus(kSB);
  Stack s{Variant::swfr, Backend::timestamp};
  Outcome zeros = parse_outcome("0:0=0 1:0=0", c.program);
  auto seed = seed_search(c, zeros, 10000, s);
  REQUIRE(seed);
  Trace t = run_seed(c, s, *seed).trace;
  CheckParams params;
  params.partition = c.partition();
  CHECK(check_trace(t, Level::network, params).satisfied());
  CHECK(check_trace(t, Level::pob, params).satisfied());
  CHECK(check_trace(t, Level::spec, params).satisfied());
  params.program = c.program;
  CHECK(check_trace(t, Level::spec, params).satisfied());
  // The run was produced for P-RAM; judged against SC it fails.
  params.partition = model_partition(ModelName::parse("sc"), c.program.usage());
  CHECK(check_trace(t, Level::spec, params).state == VerdictState::unsatisfied);
  params.program.reset();
  CHECK(check_trace(t, Level::spec, params).state == VerdictState::unsatisfied);
  // SC runs broadcast under label 1.
  LitmusCase sc = c;
  sc.model = ModelName::parse("sc");
  Trace labeled = run_seed(sc, s, 0).trace;
  params.labels = {};
  CHECK(check_trace(labeled, Level::pob, params).satisfied());
  params.labels = {Label(1)};
  CHECK(check_trace(labeled, Level::pob, params).satisfied());
  params.labels = {Label(7)};
  CHECK_THROWS_AS(check_trace(labeled, Level::pob, params), DomainError);
}
