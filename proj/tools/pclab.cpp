// pclab: run litmus cases on the simulated stacks, check computations and
// traces, search for seeds.

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "pclab/litmus.hpp"

using namespace pclab;

namespace {

// Exit codes shared by the subcommands.
constexpr int kOk = 0;
constexpr int kNegative = 1;  // forbidden outcome / unsatisfied / not found
constexpr int kInputError = 2;
constexpr int kUndecided = 3;

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<Stack> stacks_of(const std::string& transform, const std::string& pob) {
  std::vector<Variant> vs;
  std::vector<Backend> bs;
  if (transform == "all") vs = {Variant::swfr, Variant::fwsr};
  else vs = {parse_variant(transform)};
  if (pob == "all") bs = {Backend::token, Backend::timestamp};
  else bs = {parse_backend(pob)};
  std::vector<Stack> out;
  for (auto v : vs)
    for (auto b : bs) out.push_back({v, b});
  return out;
}

LitmusCase load_case(const std::string& path, const std::string& model) {
  LitmusCase c = parse_litmus(slurp(path));
  if (!model.empty()) c.model = ModelName::parse(model);
  return c;
}

int verdict_exit(const Verdict& v) {
  switch (v.state) {
    case VerdictState::satisfied: return kOk;
    case VerdictState::unsatisfied: return kNegative;
    case VerdictState::undecided: return kUndecided;
  }
  return kInputError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pclab: partitioned consistency over simulated broadcast"};
  app.require_subcommand(1);

  std::string case_path, model, transform = "swfr", pob = "token", seeds = "0..99", check, trace_dir, json_path;
  std::string fairness = "fair";
  std::uint64_t max_steps = SimConfig{}.max_steps;
  unsigned jobs = 1;
  bool no_monitors = false;

  auto* run = app.add_subcommand("run", "run a litmus case across seeds");
  run->add_option("--case", case_path, "litmus file")->required();
  run->add_option("--model", model, "override the case's model (sc, pram, pcg, weaksc, weakpcg)");
  run->add_option("--transform", transform, "swfr, fwsr or all")->capture_default_str();
  run->add_option("--pob", pob, "token, timestamp or all")->capture_default_str();
  run->add_option("--seeds", seeds, "A..B inclusive, or N")->capture_default_str();
  run->add_option("--check", check, "check every completed run: pc, pob or nw");
  run->add_option("--trace-dir", trace_dir, "write every trace here (violating traces always go here, default ./traces)");
  run->add_option("--json", json_path, "also write the report as JSON");
  run->add_option("--jobs", jobs, "seeds simulated concurrently (0 = hardware threads)")->capture_default_str();
  run->add_option("--max-steps", max_steps, "step budget per run")->capture_default_str();
  run->add_option("--fairness", fairness, "fair, random or rr")->capture_default_str();
  run->add_flag("--no-monitors", no_monitors, "skip the trace monitors");

  std::string computation_path, trace_path, level = "pc";
  std::uint64_t node_budget = SearchOptions{}.node_budget;
  auto* chk = app.add_subcommand("check", "check a computation or a recorded trace");
  auto* comp_opt = chk->add_option("--computation", computation_path, "computation file (read/write ops)");
  auto* trace_opt = chk->add_option("--trace", trace_path, "trace file");
  comp_opt->excludes(trace_opt);
  chk->add_option("--model", model, "model for pc checks");
  chk->add_option("--level", level, "trace level: pc, pob or nw")->capture_default_str();
  chk->add_option("--case", case_path, "interpret a trace against this litmus case's program");
  chk->add_option("--budget", node_budget, "search node budget")->capture_default_str();

  std::string outcome;
  std::uint64_t budget = 10000;
  auto* search = app.add_subcommand("search", "find the first seed producing an outcome");
  search->add_option("--case", case_path, "litmus file")->required();
  search->add_option("--outcome", outcome, "p:k=v terms, e.g. \"0:0=0 1:0=0\"")->required();
  search->add_option("--budget", budget, "seeds to try, from 0")->capture_default_str();
  search->add_option("--model", model, "override the case's model");
  search->add_option("--transform", transform, "swfr or fwsr")->capture_default_str();
  search->add_option("--pob", pob, "token or timestamp")->capture_default_str();
  search->add_option("--max-steps", max_steps, "step budget per run")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      LitmusCase c = load_case(case_path, model);
      RunOptions opts;
      opts.sim.max_steps = max_steps;
      opts.sim.fairness = fairness;
      opts.monitors = !no_monitors;
      if (!check.empty()) opts.check = parse_level(check);
      opts.trace_dir = trace_dir;
      opts.violation_dir = trace_dir.empty() ? "traces" : trace_dir;
      opts.jobs = jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : jobs;
      auto seed_list = parse_seed_range(seeds);
      std::vector<RunReport> reports;
      for (const auto& s : stacks_of(transform, pob)) reports.push_back(run_case(c, s, seed_list, opts));
      std::cout << format_reports(reports);
      if (!json_path.empty()) {
        std::ofstream f(json_path);
        f << reports_json(reports);
        if (!f) throw std::runtime_error("cannot write " + json_path);
      }
      for (const auto& r : reports)
        if (r.failed()) return kNegative;
      return kOk;
    }

    if (*chk) {
      CheckOptions copts;
      copts.search.node_budget = node_budget;
      if (!computation_path.empty()) {
        if (model.empty()) throw std::runtime_error("--model is required with --computation");
        Computation c = parse_computation(slurp(computation_path));
        Verdict v = check_pc(c, model_partition(ModelName::parse(model), VariableUsage::of(c)), copts);
        std::cout << format_verdict(c, v);
        return verdict_exit(v);
      }
      if (trace_path.empty()) throw std::runtime_error("one of --computation or --trace is required");
      Trace t = parse_trace(slurp(trace_path));
      Level lv = parse_level(level);
      CheckParams params;
      params.options = copts;
      Computation shown;
      if (lv == Level::spec) {
        std::string m = model.empty() ? t.meta_value("model") : model;
        if (m.empty()) throw std::runtime_error("--model is required: the trace does not name one");
        if (!case_path.empty()) {
          LitmusCase lc = load_case(case_path, m);
          params.program = lc.program;
          params.partition = lc.partition();
          shown = interpret(lc.program, t);
        } else {
          shown = extract_computation(t, Level::spec);
          params.partition = model_partition(ModelName::parse(m), VariableUsage::of(shown));
        }
      } else {
        shown = extract_computation(t, lv);
      }
      Verdict v = check_trace(t, lv, params);
      std::cout << format_verdict(shown, v);
      return verdict_exit(v);
    }

    if (*search) {
      LitmusCase c = load_case(case_path, model);
      Outcome target = parse_outcome(outcome, c.program);
      auto stacks = stacks_of(transform, pob);
      if (stacks.size() != 1) throw std::runtime_error("search takes a single stack");
      SimConfig cfg;
      cfg.max_steps = max_steps;
      auto seed = seed_search(c, target, budget, stacks[0], cfg);
      if (!seed) {
        std::cout << "not found in " << budget << " seeds\n";
        return kNegative;
      }
      std::cout << "seed " << *seed << '\n';
      return kOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "pclab: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
