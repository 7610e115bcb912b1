#pragma once

// Read/write specification programs, their transformation onto a
// partial-order broadcast endpoint, and the interpretation of target traces
// back into specification computations.

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pclab/checker.hpp"
#include "pclab/computation.hpp"
#include "pclab/pob.hpp"
#include "pclab/simnet.hpp"

namespace pclab {

struct SpecInstr {
  enum class Kind { read, write } kind = Kind::read;
  std::string var;
  Value value = 0;  // writes only

  bool operator==(const SpecInstr&) const = default;
};

/// One thread per process; process ids are 0..n-1.
struct SpecProgram {
  std::map<ProcId, std::vector<SpecInstr>> procs;
  std::set<std::string> universe;
  std::map<std::string, Value> initial;

  int n_procs() const { return static_cast<int>(procs.size()); }
  Value initial_value(const std::string& var) const;
  /// Throws DomainError on non-contiguous ids or variables outside the universe.
  void validate() const;
  VariableUsage usage() const;
  bool operator==(const SpecProgram&) const = default;
};

/// `proc N` headers followed by `W var val` / `R var` lines; `init var val`
/// sets initial values and an optional `vars a b ...` line fixes the
/// universe (otherwise it is every variable mentioned).
SpecProgram parse_spec_program(std::string_view text);
std::string format_spec_program(const SpecProgram& p);

enum class Variant { swfr, fwsr };

struct Stack {
  Variant variant = Variant::swfr;
  Backend backend = Backend::token;

  /// `swfr/token`, `fwsr/timestamp`, ...
  static Stack parse(std::string_view s);
  std::string str() const;
  static std::vector<Stack> all();
  bool operator==(const Stack&) const = default;
};

Variant parse_variant(std::string_view s);

inline Label label_of(const std::string& var, const PartitionSpec& k) { return k.label_of(var); }

// Target-process variables.
std::string replica_var(const std::string& var);
inline const std::string kWritesRequested = "writes_requested";
inline const std::string kWritesProcessed = "writes_processed";
inline constexpr ThreadId kMainThread = 0;
inline constexpr ThreadId kDeliveryThread = 1;

struct TargetProgram {
  std::vector<ProcessSpec> processes;
  std::map<std::string, Value> spec_initial;
};

/// Main thread per process (spec reads and writes replaced by the variant's
/// subroutines), a delivery thread applying updates to the replica, plus
/// whatever threads the backend needs.
TargetProgram transform(const SpecProgram& p, const PartitionSpec& k, const Stack& stack, const PobOptions& opts = {});

/// Transforms and spawns; the trace header records stack and model.
std::unique_ptr<Simulator> instantiate(const SpecProgram& p, const PartitionSpec& k, const Stack& stack,
                                       const SimConfig& cfg, const std::string& model_name = {},
                                       const PobOptions& opts = {});

/// Specification computation of a transformed run: per process the program's
/// operations in order, reads carrying the values the run returned. Only
/// completed operations are included. Throws DomainError when the trace does
/// not belong to `p`.
Computation interpret(const SpecProgram& p, const Trace& t);

/// Exploration hints for checking interpret(p, t): each view is ordered the
/// way its process applied updates to its replica.
std::map<ProcId, std::map<OperationId, std::int64_t>> interpret_hints(const SpecProgram& p, const Trace& t);

}  // namespace pclab
