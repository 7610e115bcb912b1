#include "pclab/litmus.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "text_util.hpp"

namespace pclab {

Expectation parse_expectation(std::string_view s) {
  if (s == "allowed") return Expectation::allowed;
  if (s == "forbidden") return Expectation::forbidden;
  if (s == "unreachable" || s == "spec-allowed-impl-unreachable") return Expectation::unreachable;
  throw DomainError("unknown expectation '" + std::string(s) + "'");
}

std::string_view expectation_name(Expectation e) {
  switch (e) {
    case Expectation::allowed: return "allowed";
    case Expectation::forbidden: return "forbidden";
    case Expectation::unreachable: return "unreachable";
  }
  return "?";
}

std::string Outcome::str() const {
  if (reads.empty()) return "-";
  std::string out;
  for (const auto& [pos, v] : reads) {
    if (!out.empty()) out += ' ';
    out += std::to_string(pos.first) + ':' + std::to_string(pos.second) + '=' + std::to_string(v);
  }
  return out;
}

bool Outcome::matched_by(const Outcome& observed) const {
  for (const auto& [pos, v] : reads) {
    auto it = observed.reads.find(pos);
    if (it == observed.reads.end() || it->second != v) return false;
  }
  return true;
}

namespace {

std::size_t read_count(const SpecProgram& p, ProcId proc) {
  auto it = p.procs.find(proc);
  if (it == p.procs.end()) return 0;
  return static_cast<std::size_t>(std::count_if(it->second.begin(), it->second.end(),
                                                [](const SpecInstr& i) { return i.kind == SpecInstr::Kind::read; }));
}

Outcome parse_terms(const std::vector<std::string_view>& terms, const SpecProgram& p) {
  Outcome out;
  for (auto term : terms) {
    auto colon = term.find(':');
    auto eq = term.find('=');
    if (colon == std::string_view::npos || eq == std::string_view::npos || eq < colon)
      throw DomainError("malformed outcome term '" + std::string(term) + "', expected p:k=v");
    auto proc = detail::to_int(term.substr(0, colon));
    auto idx = detail::to_int(term.substr(colon + 1, eq - colon - 1));
    auto val = detail::to_int(term.substr(eq + 1));
    if (!proc || !idx || !val || *proc < 0 || *idx < 0)
      throw DomainError("malformed outcome term '" + std::string(term) + "', expected p:k=v");
    auto pos = std::make_pair(static_cast<ProcId>(*proc), static_cast<std::size_t>(*idx));
    if (pos.second >= read_count(p, pos.first))
      throw DomainError("process " + std::to_string(pos.first) + " has no read " + std::to_string(pos.second));
    auto [it, fresh] = out.reads.emplace(pos, *val);
    if (!fresh && it->second != *val) throw DomainError("conflicting values in '" + std::string(term) + "'");
  }
  return out;
}

}  // namespace

Outcome parse_outcome(std::string_view expr, const SpecProgram& p) {
  auto terms = detail::tokenize(expr);
  if (terms.size() == 1 && terms[0] == "-") terms.clear();
  return parse_terms(terms, p);
}

Outcome outcome_of(const SpecProgram& p, const Trace& t) {
  Outcome out;
  Computation c = interpret(p, t);
  for (const auto& [key, ops] : c.threads()) {
    std::size_t k = 0;
    for (const auto& o : ops)
      if (const auto* r = std::get_if<op::Read>(&o.kind)) out.reads[{key.first, k++}] = r->value;
  }
  return out;
}

LitmusCase parse_litmus(std::string_view text) {
  LitmusCase c;
  bool have_model = false;
  struct Pending {
    std::size_t line;
    Expectation expect;
    std::vector<std::string_view> terms;
  };
  std::vector<Pending> pending;
  // Directive lines are blanked so the program parser reports the same line numbers.
  std::string program;
  std::size_t line_no = 0;
  for (auto line : detail::lines(text)) {
    ++line_no;
    auto tok = detail::tokenize(line);
    bool directive = !tok.empty() && (tok[0] == "name" || tok[0] == "model" || tok[0] == "outcome");
    if (!directive) {
      program.append(line);
      program += '\n';
      continue;
    }
    program += '\n';
    try {
      if (tok[0] == "name") {
        if (tok.size() != 2) throw ParseError(line_no, "expected 'name <id>'");
        c.name = std::string(tok[1]);
      } else if (tok[0] == "model") {
        if (tok.size() != 2) throw ParseError(line_no, "expected 'model <name>'");
        c.model = ModelName::parse(tok[1]);
        have_model = true;
      } else {
        if (tok.size() < 2) throw ParseError(line_no, "expected 'outcome <expectation> p:k=v ...'");
        pending.push_back({line_no, parse_expectation(tok[1]), {tok.begin() + 2, tok.end()}});
      }
    } catch (const DomainError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  c.program = parse_spec_program(program);
  if (!have_model && !c.program.procs.empty()) throw DomainError("litmus case has no 'model' line");
  for (auto& p : pending) {
    try {
      c.outcomes.push_back({parse_terms(p.terms, c.program), p.expect});
    } catch (const DomainError& e) {
      throw ParseError(p.line, e.what());
    }
  }
  return c;
}

std::string format_litmus(const LitmusCase& c) {
  std::ostringstream out;
  if (!c.name.empty()) out << "name " << c.name << '\n';
  out << "model " << c.model.str() << '\n';
  out << format_spec_program(c.program);
  for (const auto& o : c.outcomes) {
    out << "outcome " << expectation_name(o.expect);
    if (!o.condition.reads.empty()) out << ' ' << o.condition.str();
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------- runs

bool RunReport::failed() const {
  return std::any_of(violations.begin(), violations.end(),
                     [](const Violation& v) { return v.kind == "forbidden" || v.kind.starts_with("monitor:"); });
}

SeedRun run_seed(const LitmusCase& c, const Stack& stack, std::uint64_t seed, const SimConfig& base) {
  SimConfig cfg = base;
  cfg.seed = seed;
  cfg.record_trace = true;
  auto sim = instantiate(c.program, c.partition(), stack, cfg, c.model.str());
  if (!c.name.empty()) sim->add_meta("case", c.name);
  SeedRun out;
  out.status = sim->run_to_quiescence();
  out.trace = sim->take_trace();
  out.outcome = outcome_of(c.program, out.trace);
  return out;
}

namespace {

std::string stack_slug(const Stack& s) {
  auto str = s.str();
  std::replace(str.begin(), str.end(), '/', '-');
  return str;
}

std::string save_trace(const std::string& dir, const LitmusCase& c, const Stack& s, std::uint64_t seed,
                       const Trace& t) {
  std::filesystem::create_directories(dir);
  auto name = (c.name.empty() ? std::string("case") : c.name) + "." + stack_slug(s) + "." + std::to_string(seed) + ".trace";
  auto path = (std::filesystem::path(dir) / name).string();
  std::ofstream f(path);
  f << format_trace(t);
  if (!f) throw std::runtime_error("cannot write " + path);
  return path;
}

std::string_view verdict_name(VerdictState s) {
  switch (s) {
    case VerdictState::satisfied: return "satisfied";
    case VerdictState::unsatisfied: return "unsatisfied";
    case VerdictState::undecided: return "undecided";
  }
  return "?";
}

std::string_view level_name(Level l) {
  switch (l) {
    case Level::network: return "nw";
    case Level::pob: return "pob";
    case Level::spec: return "pc";
  }
  return "?";
}

// Everything one seed contributes to a report.
struct SeedResult {
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::running;
  std::string outcome;
  std::vector<std::size_t> matched;  // indices into the case's outcomes
  std::optional<VerdictState> verdict;
  std::string verdict_reason;
  std::vector<MonitorResult> monitors;
  std::string trace_path;
  std::vector<Violation> violations;
};

SeedResult evaluate(const LitmusCase& c, const Stack& stack, std::uint64_t seed, const RunOptions& opts) {
  SeedResult r;
  r.seed = seed;
  SeedRun run = run_seed(c, stack, seed, opts.sim);
  r.status = run.status;
  bool quiescent = run.status == RunStatus::quiescent;
  if (quiescent) {
    r.outcome = run.outcome.str();
    for (std::size_t i = 0; i < c.outcomes.size(); ++i) {
      const auto& spec = c.outcomes[i];
      if (!spec.condition.matched_by(run.outcome)) continue;
      r.matched.push_back(i);
      if (spec.expect != Expectation::allowed)
        r.violations.push_back({seed, std::string(expectation_name(spec.expect)), r.outcome, {}});
    }
    if (opts.check) {
      CheckParams params;
      params.partition = c.partition();
      params.program = c.program;
      params.options = opts.check_options;
      Verdict v = check_trace(run.trace, *opts.check, params);
      r.verdict = v.state;
      if (v.state == VerdictState::unsatisfied)
        r.violations.push_back({seed, "check", std::string(level_name(*opts.check)) + " unsatisfied", {}});
    }
  }
  if (opts.monitors) {
    r.monitors = run_monitors(run.trace);
    for (const auto& m : r.monitors)
      if (!m.passed) r.violations.push_back({seed, "monitor:" + m.name, m.detail, {}});
  }
  if (!opts.trace_dir.empty()) {
    r.trace_path = save_trace(opts.trace_dir, c, stack, seed, run.trace);
  } else if (!r.violations.empty() && !opts.violation_dir.empty()) {
    r.trace_path = save_trace(opts.violation_dir, c, stack, seed, run.trace);
  }
  for (auto& v : r.violations) v.trace_path = r.trace_path;
  return r;
}

}  // namespace

RunReport run_case(const LitmusCase& c, const Stack& stack, const std::vector<std::uint64_t>& seeds,
                   const RunOptions& opts) {
  std::vector<SeedResult> results(seeds.size());
  unsigned jobs = std::max(1u, std::min<unsigned>(opts.jobs, static_cast<unsigned>(seeds.size())));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) results[i] = evaluate(c, stack, seeds[i], opts);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) {
      pool.emplace_back([&, j] {
        try {
          for (std::size_t i; (i = next++) < seeds.size();) results[i] = evaluate(c, stack, seeds[i], opts);
        } catch (...) {
          errors[j] = std::current_exception();
          next = seeds.size();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  RunReport rep;
  rep.case_name = c.name;
  rep.model = c.model.str();
  rep.stack = stack.str();
  rep.seeds_requested = seeds.size();
  if (opts.check) rep.check_level = level_name(*opts.check);
  for (const auto& o : c.outcomes) rep.expectations.push_back({o, 0});
  for (const auto& r : results) {
    if (r.status == RunStatus::quiescent) {
      ++rep.completed;
      ++rep.histogram[r.outcome];
      for (auto i : r.matched) ++rep.expectations[i].second;
    } else {
      rep.nonquiescent.push_back({r.seed, r.status});
    }
    if (r.verdict) ++rep.verdicts[std::string(verdict_name(*r.verdict))];
    for (const auto& m : r.monitors) {
      auto& [pass, fail] = rep.monitors[m.name];
      ++(m.passed ? pass : fail);
    }
    rep.violations.insert(rep.violations.end(), r.violations.begin(), r.violations.end());
  }
  return rep;
}

std::optional<std::uint64_t> seed_search(const LitmusCase& c, const Outcome& target, std::uint64_t budget,
                                         const Stack& stack, const SimConfig& base) {
  for (std::uint64_t seed = 0; seed < budget; ++seed) {
    SeedRun run = run_seed(c, stack, seed, base);
    if (run.status == RunStatus::quiescent && target.matched_by(run.outcome)) return seed;
  }
  return std::nullopt;
}

Verdict check_trace(const Trace& t, Level level, const CheckParams& params) {
  switch (level) {
    case Level::network: return check_nw(extract_computation(t, Level::network), params.options);
    case Level::pob: {
      Computation c = extract_computation(t, Level::pob);
      std::set<Label> labels = params.labels;
      if (labels.empty()) {
        for (const auto& [key, ops] : c.threads())
          for (const auto& o : ops) {
            if (const auto* b = std::get_if<op::Bcast>(&o.kind)) labels.insert(b->label);
            if (const auto* d = std::get_if<op::Deliver>(&o.kind)) labels.insert(d->label);
          }
      }
      return check_pob(c, labels, params.options);
    }
    case Level::spec: {
      if (!params.program) return check_pc(extract_computation(t, Level::spec), params.partition, params.options);
      CheckOptions opts = params.options;
      if (opts.hints.empty()) opts.hints = interpret_hints(*params.program, t);
      return check_pc(interpret(*params.program, t), params.partition, opts);
    }
  }
  throw DomainError("unknown level");
}

// ------------------------------------------------------------- rendering

std::string format_reports(const std::vector<RunReport>& reports) {
  if (reports.empty()) return "no runs\n";
  std::ostringstream out;
  bool first = true;
  for (const auto& r : reports) {
    if (!first) out << '\n';
    first = false;
    out << "case " << (r.case_name.empty() ? "-" : r.case_name) << " model " << r.model << " stack " << r.stack
        << '\n';
    out << "seeds " << r.seeds_requested << " completed " << r.completed << " nonquiescent "
        << r.nonquiescent.size() << '\n';
    for (const auto& [seed, st] : r.nonquiescent) out << "  seed " << seed << ' ' << run_status_name(st) << '\n';
    out << "outcomes\n";
    for (const auto& [o, n] : r.histogram) out << "  " << n << "  " << o << '\n';
    if (!r.expectations.empty()) {
      out << "expectations\n";
      for (const auto& [spec, n] : r.expectations)
        out << "  " << expectation_name(spec.expect) << ' ' << spec.condition.str() << "  observed " << n << '\n';
    }
    if (!r.check_level.empty()) {
      out << "check " << r.check_level;
      for (auto s : {"satisfied", "unsatisfied", "undecided"}) {
        auto it = r.verdicts.find(s);
        out << ' ' << s << ' ' << (it == r.verdicts.end() ? 0 : it->second);
      }
      out << '\n';
    }
    if (!r.monitors.empty()) {
      out << "monitors\n";
      for (const auto& [name, pf] : r.monitors)
        out << "  " << name << " pass " << pf.first << " fail " << pf.second << '\n';
    }
    out << "violations " << r.violations.size() << '\n';
    for (const auto& v : r.violations) {
      out << "  seed " << v.seed << ' ' << v.kind << ": " << v.detail;
      if (!v.trace_path.empty()) out << "  trace " << v.trace_path;
      out << '\n';
    }
    out << "result " << (r.failed() ? "FAIL" : "ok") << '\n';
  }
  return out.str();
}

std::string reports_json(const std::vector<RunReport>& reports) {
  using nlohmann::ordered_json;
  ordered_json arr = ordered_json::array();
  for (const auto& r : reports) {
    ordered_json j;
    j["case"] = r.case_name;
    j["model"] = r.model;
    j["stack"] = r.stack;
    j["seeds"] = r.seeds_requested;
    j["completed"] = r.completed;
    ordered_json nq = ordered_json::array();
    for (const auto& [seed, st] : r.nonquiescent) nq.push_back({{"seed", seed}, {"status", run_status_name(st)}});
    j["nonquiescent"] = nq;
    ordered_json hist = ordered_json::object();
    for (const auto& [o, n] : r.histogram) hist[o] = n;
    j["outcomes"] = hist;
    ordered_json exp = ordered_json::array();
    for (const auto& [spec, n] : r.expectations)
      exp.push_back({{"expect", expectation_name(spec.expect)}, {"condition", spec.condition.str()}, {"observed", n}});
    j["expectations"] = exp;
    if (!r.check_level.empty()) {
      ordered_json v = ordered_json::object();
      for (auto s : {"satisfied", "unsatisfied", "undecided"}) {
        auto it = r.verdicts.find(s);
        v[s] = it == r.verdicts.end() ? 0 : it->second;
      }
      j["check"] = {{"level", r.check_level}, {"verdicts", v}};
    }
    ordered_json mon = ordered_json::object();
    for (const auto& [name, pf] : r.monitors) mon[name] = {{"pass", pf.first}, {"fail", pf.second}};
    j["monitors"] = mon;
    ordered_json viol = ordered_json::array();
    for (const auto& v : r.violations)
      viol.push_back({{"seed", v.seed}, {"kind", v.kind}, {"detail", v.detail}, {"trace", v.trace_path}});
    j["violations"] = viol;
    j["failed"] = r.failed();
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<std::uint64_t> parse_seed_range(std::string_view s) {
  auto bad = [&] { return DomainError("bad seed range '" + std::string(s) + "', expected A..B or N"); };
  auto dots = s.find("..");
  auto num = [&](std::string_view t) {
    auto v = detail::to_int(t);
    if (!v || *v < 0) throw bad();
    return static_cast<std::uint64_t>(*v);
  };
  if (dots == std::string_view::npos) return {num(s)};
  auto a = num(s.substr(0, dots));
  auto b = num(s.substr(dots + 2));
  if (b < a) throw bad();
  std::vector<std::uint64_t> out;
  for (auto x = a;; ++x) {
    out.push_back(x);
    if (x == b) break;
  }
  return out;
}

}  // namespace pclab
