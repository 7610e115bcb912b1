#pragma once

// Operations, computations and the relation predicates every consistency
// definition is built from.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace pclab {

using ProcId = int;
using ThreadId = int;
using Value = std::int64_t;

/// Raised when an input violates a structural precondition (bad partition,
/// wrong operation kinds for a predicate, duplicate message ids, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by the text parsers; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Broadcast label: a class index 1..m of a partition, or the null label.
class Label {
 public:
  constexpr Label() = default;
  constexpr explicit Label(int index) : index_(index) {}
  static constexpr Label none() { return Label{}; }

  constexpr bool is_null() const { return index_ == 0; }
  constexpr int index() const { return index_; }
  auto operator<=>(const Label&) const = default;

  std::string str() const { return is_null() ? "_" : std::to_string(index_); }
  static Label parse(std::string_view token);

 private:
  int index_ = 0;
};

struct OperationId {
  ProcId proc = 0;
  ThreadId thread = 0;
  std::size_t index = 0;

  auto operator<=>(const OperationId&) const = default;
  std::string str() const;
};

namespace op {
struct Read {
  std::string var;
  Value value = 0;
  bool operator==(const Read&) const = default;
};
struct Write {
  std::string var;
  Value value = 0;
  bool operator==(const Write&) const = default;
};
struct Bcast {
  std::string update;
  Label label;
  bool operator==(const Bcast&) const = default;
};
struct Deliver {
  std::string update;
  Label label;
  bool operator==(const Deliver&) const = default;
};
struct Send {
  ProcId src = 0;
  ProcId dst = 0;
  std::string msg;
  bool operator==(const Send&) const = default;
};
struct Recv {
  ProcId src = 0;
  ProcId dst = 0;
  std::string msg;
  bool operator==(const Recv&) const = default;
};
}  // namespace op

using OperationKind = std::variant<op::Read, op::Write, op::Bcast, op::Deliver, op::Send, op::Recv>;

struct Operation {
  OperationId id;
  OperationKind kind;

  bool is_read() const { return std::holds_alternative<op::Read>(kind); }
  bool is_write() const { return std::holds_alternative<op::Write>(kind); }
  bool is_bcast() const { return std::holds_alternative<op::Bcast>(kind); }
  bool is_deliver() const { return std::holds_alternative<op::Deliver>(kind); }
  bool is_send() const { return std::holds_alternative<op::Send>(kind); }
  bool is_recv() const { return std::holds_alternative<op::Recv>(kind); }

  /// Variable touched by a read or write, empty otherwise.
  const std::string* variable() const;

  bool operator==(const Operation&) const = default;
};

/// The payload of a write update: [x, v, source] plus the issuing process's
/// request count, which makes every update unique.
struct Update {
  std::string var;
  Value value = 0;
  ProcId source = 0;
  std::uint64_t seq = 0;

  bool operator==(const Update&) const = default;
  /// `var:value:source:seq`
  std::string key() const;
  static std::optional<Update> parse(std::string_view key);
};

using ThreadKey = std::pair<ProcId, ThreadId>;

class Computation {
 public:
  /// Appends an operation to the given thread, assigning the next index.
  const Operation& add(ProcId proc, ThreadId thread, OperationKind kind);
  /// Registers a (possibly empty) thread so that its process exists.
  void declare_thread(ProcId proc, ThreadId thread);
  void set_initial(const std::string& var, Value v) { initial_values_[var] = v; }

  Value initial(const std::string& var) const;
  const std::map<std::string, Value>& initial_values() const { return initial_values_; }
  const std::map<ThreadKey, std::vector<Operation>>& threads() const { return threads_; }

  std::set<ProcId> processes() const;
  std::vector<Operation> operations() const;
  std::set<OperationId> operation_ids() const;
  const Operation& at(const OperationId& id) const;
  const Operation* find(const OperationId& id) const;
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  bool multithreaded() const;

  /// Throws DomainError if an operation id does not match its position.
  void validate() const;

 private:
  std::map<ThreadKey, std::vector<Operation>> threads_;
  std::map<std::string, Value> initial_values_;
};

/// K = {V_1..V_m}: disjoint nonempty classes over a universe V. Label i is
/// the 1-based class index.
struct PartitionSpec {
  std::vector<std::set<std::string>> classes;
  std::set<std::string> universe;

  /// Throws DomainError when classes overlap, are empty, or escape V.
  void validate() const;
  Label label_of(const std::string& var) const;
  std::set<Label> labels() const;
  const std::set<std::string>& class_at(Label l) const;
  bool operator==(const PartitionSpec&) const = default;
  std::string str() const;
};

/// Relation on operation ids. Pairs are stored as given; ordered() answers
/// queries on the transitive closure.
class OrderRelation {
 public:
  OrderRelation() = default;
  explicit OrderRelation(std::set<OperationId> domain) : domain_(std::move(domain)) {}

  /// Chain through `seq` in sequence order (stored as consecutive pairs).
  static OrderRelation from_sequence(std::span<const OperationId> seq);

  void add(const OperationId& a, const OperationId& b);
  void add_to_domain(const OperationId& a) { domain_.insert(a); }

  const std::set<OperationId>& domain() const { return domain_; }
  const std::set<std::pair<OperationId, OperationId>>& pairs() const { return pairs_; }
  bool empty() const { return pairs_.empty(); }

  bool contains(const OperationId& a, const OperationId& b) const { return pairs_.contains({a, b}); }
  /// a reaches b through one or more pairs.
  bool ordered(const OperationId& a, const OperationId& b) const;

  OrderRelation closure() const;
  OrderRelation reduction() const;
  OrderRelation restricted(const std::set<OperationId>& subset) const;
  bool is_acyclic() const;
  /// Strict total order on the whole domain once closed.
  bool is_total() const;
  /// Topological sequence of the domain; empty optional if cyclic.
  std::optional<std::vector<OperationId>> linearize() const;

  bool operator==(const OrderRelation&) const = default;

 private:
  std::map<OperationId, std::vector<OperationId>> successors() const;

  std::set<OperationId> domain_;
  std::set<std::pair<OperationId, OperationId>> pairs_;
};

/// Union over threads of their issue-sequence total orders.
OrderRelation program_order(const Computation& c);

namespace select {
struct ByProcess {
  ProcId proc;
};
struct AllWrites {};
struct WritesToClass {
  Label cls;
};
struct LabeledDelivers {
  Label label;
};
}  // namespace select

using Selector = std::variant<select::ByProcess, select::AllWrites, select::WritesToClass,
                              select::LabeledDelivers>;

/// O|sel. WritesToClass needs the partition and throws DomainError on an
/// unknown class index.
std::set<OperationId> project(const Computation& c, const std::set<OperationId>& ops,
                              const Selector& sel, const PartitionSpec* k = nullptr);

/// Per-object sequential validity of `seq`. Variables read the most recent
/// write or their initial value (default 0); messages are sent and received
/// at most once; an update is never delivered twice or before its bcast.
bool valid_sequence(std::span<const Operation> seq, const std::map<std::string, Value>& initial_values);

/// Extends[A, R, T]: every T-ordered pair in A is R-ordered the same way.
bool extends(const std::set<OperationId>& a, const OrderRelation& r, const OrderRelation& t);
/// Agree[A, R, T]: R and T order every pair in A identically.
bool agree(const std::set<OperationId>& a, const OrderRelation& r, const OrderRelation& t);

// Text format: one record per line, `proc thread index kind args`, with
// kinds R var val | W var val | B upd label | D upd label | S src dst msg |
// V src dst msg. `init var val` sets an initial value and `thread p t`
// declares a thread that may have no operations. `#` starts a comment.
Computation parse_computation(std::string_view text);
std::string format_operation(const Operation& o);
std::string format_computation(const Computation& c);

}  // namespace pclab
