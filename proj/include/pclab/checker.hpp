#pragma once

// Decision procedures for PC[K], POB[L] and NW by witness-sequence search.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pclab/computation.hpp"

namespace pclab {

/// One valid total order per process, written as the realizing sequence.
struct WitnessSet {
  std::map<ProcId, std::vector<OperationId>> views;

  OrderRelation view_relation(ProcId p) const;
  bool operator==(const WitnessSet&) const = default;
};

enum class VerdictState { satisfied, unsatisfied, undecided };

struct Verdict {
  VerdictState state = VerdictState::unsatisfied;
  std::optional<WitnessSet> witnesses;
  struct Stats {
    std::uint64_t nodes = 0;
    /// The input had a process with several threads (PC on such inputs
    /// applies the definition literally).
    bool multithreaded = false;
    std::string reason;
  } stats;

  bool satisfied() const { return state == VerdictState::satisfied; }
  bool undecided() const { return state == VerdictState::undecided; }
};

struct CausalityRelations {
  OrderRelation message_order;
  OrderRelation fifo_channel;
  OrderRelation writes_into;
  OrderRelation happens_before;
};

enum class Model { sc, pram, pcg, weaksc, weakpcg, custom };

struct ModelName {
  Model kind = Model::sc;
  PartitionSpec custom;

  static ModelName parse(std::string_view name);
  std::string str() const;
  bool operator==(const ModelName&) const = default;
};

/// Which variables exist and which processes (syntactically) write them.
struct VariableUsage {
  std::set<std::string> universe;
  std::map<std::string, std::set<ProcId>> writers;

  static VariableUsage of(const Computation& c);
};

std::set<std::string> multi_writer_vars(const VariableUsage& usage);
PartitionSpec model_partition(const ModelName& m, const VariableUsage& usage);

// ------------------------------------------------------------ search engine

struct SearchView {
  ProcId proc = 0;
  std::vector<OperationId> domain;
  /// Must-precede pairs; need not be transitively closed.
  std::vector<std::pair<OperationId, OperationId>> base;
  /// Optional exploration priority (lower first); unranked operations come
  /// after ranked ones, in OperationId order.
  std::map<OperationId, std::int64_t> hint;
};

/// Operations mapped to shared keys; every pair of views must order the keys
/// they both contain identically.
struct AgreementClass {
  std::map<OperationId, std::string> key_of;
};

struct SearchOptions {
  std::uint64_t node_budget = 20'000'000;
};

struct SearchResult {
  enum class Status { found, none, budget_exhausted } status = Status::none;
  std::optional<WitnessSet> witnesses;
  std::uint64_t nodes = 0;
};

/// Finds a valid total extension of each view's base order such that all
/// views agree on every agreement class. Deterministic for a given input.
SearchResult witness_search(const Computation& c, std::span<const SearchView> views,
                            std::span<const AgreementClass> agreement, const SearchOptions& opts = {});

// --------------------------------------------------------------- predicates

struct CheckOptions {
  SearchOptions search;
  /// Per-process exploration hints forwarded to the search.
  std::map<ProcId, std::map<OperationId, std::int64_t>> hints;
};

/// PC[K]. Throws DomainError on non read/write operations.
Verdict check_pc(const Computation& c, const PartitionSpec& k, const CheckOptions& opts = {});
/// POB[L]. Throws DomainError on send/recv operations or labels outside L.
Verdict check_pob(const Computation& c, const std::set<Label>& labels, const CheckOptions& opts = {});
/// NW. Throws DomainError on bcast/deliver operations or duplicate sends.
Verdict check_nw(const Computation& c, const CheckOptions& opts = {});

/// deliver(u1) -> deliver(u2) at each process whenever bcast(u1) -> bcast(u2)
/// in program order.
OrderRelation del_order(const Computation& c);
CausalityRelations causality(const Computation& c);

/// Happens-before acyclicity without materializing the closure; suitable
/// for long traces.
bool happens_before_acyclic(const Computation& c);

// Independent re-validation of a witness against each definition's clauses.
bool verify_pc(const Computation& c, const PartitionSpec& k, const WitnessSet& w);
bool verify_pob(const Computation& c, const std::set<Label>& labels, const WitnessSet& w);
bool verify_nw(const Computation& c, const WitnessSet& w);

/// `verdict satisfied|unsatisfied|undecided` followed by witness views.
std::string format_verdict(const Computation& c, const Verdict& v);

}  // namespace pclab
