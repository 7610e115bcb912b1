#pragma once

// Litmus cases: a specification program, a model and expectations about
// read outcomes, run across seeds on a transformation stack.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pclab/checker.hpp"
#include "pclab/monitors.hpp"
#include "pclab/simnet.hpp"
#include "pclab/transform.hpp"

namespace pclab {

/// allowed: the model admits it. forbidden: the model rejects it.
/// unreachable: the model admits it but the implementations never produce it.
enum class Expectation { allowed, forbidden, unreachable };
Expectation parse_expectation(std::string_view s);
std::string_view expectation_name(Expectation e);

/// Values returned by reads, keyed by (process, index among that process's
/// reads). A run's outcome lists every read; a condition lists some.
struct Outcome {
  std::map<std::pair<ProcId, std::size_t>, Value> reads;

  /// `p:k=v` terms separated by spaces; "-" when empty.
  std::string str() const;
  /// Every read in this condition has the same value in `observed`.
  bool matched_by(const Outcome& observed) const;
  bool operator==(const Outcome&) const = default;
};

/// Throws DomainError on malformed terms or positions that `p` lacks.
Outcome parse_outcome(std::string_view expr, const SpecProgram& p);
/// Outcome of a run: the reads of interpret(p, t) in program order.
Outcome outcome_of(const SpecProgram& p, const Trace& t);

struct OutcomeSpec {
  Outcome condition;
  Expectation expect = Expectation::allowed;
};

struct LitmusCase {
  std::string name;
  SpecProgram program;
  ModelName model;
  std::vector<OutcomeSpec> outcomes;

  PartitionSpec partition() const { return model_partition(model, program.usage()); }
};

/// Program lines as in the specification program format, plus
/// `name N`, `model M` and `outcome allowed|forbidden|unreachable p:k=v ...`.
/// The model line may only be left out of an empty case (which means sc).
/// Throws ParseError (with the line) or DomainError.
LitmusCase parse_litmus(std::string_view text);
std::string format_litmus(const LitmusCase& c);

// ---------------------------------------------------------------- runs

struct RunOptions {
  SimConfig sim;  // seed is overridden per run
  /// Check each completed run at this level against the case's model.
  std::optional<Level> check;
  CheckOptions check_options;
  bool monitors = true;
  /// Every trace is written here when set.
  std::string trace_dir;
  /// Traces of violating runs are written here when set.
  std::string violation_dir;
  /// Seeds simulated concurrently.
  unsigned jobs = 1;
};

struct Violation {
  std::uint64_t seed = 0;
  /// forbidden, unreachable, check or monitor:<name>
  std::string kind;
  std::string detail;
  std::string trace_path;
};

struct RunReport {
  std::string case_name;
  std::string model;
  std::string stack;
  std::uint64_t seeds_requested = 0;
  std::uint64_t completed = 0;
  std::vector<std::pair<std::uint64_t, RunStatus>> nonquiescent;
  std::map<std::string, std::uint64_t> histogram;
  /// Observation count per expectation, in case order.
  std::vector<std::pair<OutcomeSpec, std::uint64_t>> expectations;
  std::string check_level;
  std::map<std::string, std::uint64_t> verdicts;
  /// name -> (passed, failed)
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> monitors;
  std::vector<Violation> violations;

  /// A forbidden outcome was observed or a monitor failed.
  bool failed() const;
};

struct SeedRun {
  RunStatus status = RunStatus::running;
  Outcome outcome;
  Trace trace;
};

/// One seed of a case on a stack.
SeedRun run_seed(const LitmusCase& c, const Stack& stack, std::uint64_t seed, const SimConfig& base = {});

RunReport run_case(const LitmusCase& c, const Stack& stack, const std::vector<std::uint64_t>& seeds,
                   const RunOptions& opts = {});

/// First seed in 0..budget-1 whose run exhibits `target`.
std::optional<std::uint64_t> seed_search(const LitmusCase& c, const Outcome& target, std::uint64_t budget,
                                         const Stack& stack, const SimConfig& base = {});

struct CheckParams {
  PartitionSpec partition;  // pc
  std::set<Label> labels;   // pob; empty means the labels the trace uses
  /// pc: when set, reads are interpreted against this program and the
  /// replica order is used as a search hint.
  std::optional<SpecProgram> program;
  CheckOptions options;
};

/// Extracts the level's computation and runs the matching checker.
Verdict check_trace(const Trace& t, Level level, const CheckParams& params);

/// Stable text rendering; reports are listed in the given order.
std::string format_reports(const std::vector<RunReport>& reports);
/// Same content as JSON.
std::string reports_json(const std::vector<RunReport>& reports);

/// `A..B` (inclusive) or a single seed.
std::vector<std::uint64_t> parse_seed_range(std::string_view s);

}  // namespace pclab
