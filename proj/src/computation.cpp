#include "pclab/computation.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <sstream>

#include "text_util.hpp"

namespace pclab {

Label Label::parse(std::string_view token) {
  if (token == "_") return Label::none();
  int v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size() || v <= 0)
    throw DomainError("bad label '" + std::string(token) + "'");
  return Label{v};
}

std::string OperationId::str() const {
  return std::to_string(proc) + "." + std::to_string(thread) + "." + std::to_string(index);
}

const std::string* Operation::variable() const {
  if (auto* r = std::get_if<op::Read>(&kind)) return &r->var;
  if (auto* w = std::get_if<op::Write>(&kind)) return &w->var;
  return nullptr;
}

std::string Update::key() const {
  return var + ":" + std::to_string(value) + ":" + std::to_string(source) + ":" + std::to_string(seq);
}

std::optional<Update> Update::parse(std::string_view key) {
  auto parts = detail::split(key, ':');
  if (parts.size() != 4 || parts[0].empty()) return std::nullopt;
  Update u;
  u.var = std::string(parts[0]);
  auto value = detail::to_int(parts[1]);
  auto source = detail::to_int(parts[2]);
  auto seq = detail::to_int(parts[3]);
  if (!value || !source || !seq || *seq < 0) return std::nullopt;
  u.value = *value;
  u.source = static_cast<ProcId>(*source);
  u.seq = static_cast<std::uint64_t>(*seq);
  return u;
}

// ---------------------------------------------------------------- Computation

const Operation& Computation::add(ProcId proc, ThreadId thread, OperationKind kind) {
  auto& seq = threads_[{proc, thread}];
  seq.push_back(Operation{OperationId{proc, thread, seq.size()}, std::move(kind)});
  return seq.back();
}

void Computation::declare_thread(ProcId proc, ThreadId thread) { threads_[{proc, thread}]; }

Value Computation::initial(const std::string& var) const {
  auto it = initial_values_.find(var);
  return it == initial_values_.end() ? 0 : it->second;
}

std::set<ProcId> Computation::processes() const {
  std::set<ProcId> out;
  for (const auto& [key, ops] : threads_) out.insert(key.first);
  return out;
}

std::vector<Operation> Computation::operations() const {
  std::vector<Operation> out;
  for (const auto& [key, ops] : threads_) out.insert(out.end(), ops.begin(), ops.end());
  return out;
}

std::set<OperationId> Computation::operation_ids() const {
  std::set<OperationId> out;
  for (const auto& [key, ops] : threads_)
    for (const auto& o : ops) out.insert(o.id);
  return out;
}

const Operation* Computation::find(const OperationId& id) const {
  auto it = threads_.find({id.proc, id.thread});
  if (it == threads_.end() || id.index >= it->second.size()) return nullptr;
  return &it->second[id.index];
}

const Operation& Computation::at(const OperationId& id) const {
  const Operation* o = find(id);
  if (!o) throw DomainError("no operation " + id.str());
  return *o;
}

std::size_t Computation::size() const {
  std::size_t n = 0;
  for (const auto& [key, ops] : threads_) n += ops.size();
  return n;
}

bool Computation::multithreaded() const {
  std::map<ProcId, int> count;
  for (const auto& [key, ops] : threads_)
    if (++count[key.first] > 1) return true;
  return false;
}

void Computation::validate() const {
  for (const auto& [key, ops] : threads_) {
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const auto& id = ops[i].id;
      if (id.proc != key.first || id.thread != key.second || id.index != i)
        throw DomainError("operation id " + id.str() + " does not match its position");
    }
  }
}

// -------------------------------------------------------------- PartitionSpec

void PartitionSpec::validate() const {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].empty()) throw DomainError("partition class " + std::to_string(i + 1) + " is empty");
    for (const auto& v : classes[i]) {
      if (!universe.contains(v)) throw DomainError("variable '" + v + "' is outside the universe");
      if (!seen.insert(v).second) throw DomainError("variable '" + v + "' appears in two classes");
    }
  }
}

Label PartitionSpec::label_of(const std::string& var) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i].contains(var)) return Label{static_cast<int>(i + 1)};
  return Label::none();
}

std::set<Label> PartitionSpec::labels() const {
  std::set<Label> out;
  for (std::size_t i = 0; i < classes.size(); ++i) out.insert(Label{static_cast<int>(i + 1)});
  return out;
}

const std::set<std::string>& PartitionSpec::class_at(Label l) const {
  if (l.is_null() || static_cast<std::size_t>(l.index()) > classes.size())
    throw DomainError("unknown partition class " + l.str());
  return classes[l.index() - 1];
}

std::string PartitionSpec::str() const {
  std::string out = "{";
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (i) out += ",";
    out += "{";
    bool first = true;
    for (const auto& v : classes[i]) {
      if (!first) out += ",";
      out += v;
      first = false;
    }
    out += "}";
  }
  return out + "}";
}

// -------------------------------------------------------------- OrderRelation

OrderRelation OrderRelation::from_sequence(std::span<const OperationId> seq) {
  OrderRelation r(std::set<OperationId>(seq.begin(), seq.end()));
  for (std::size_t i = 1; i < seq.size(); ++i) r.add(seq[i - 1], seq[i]);
  return r;
}

void OrderRelation::add(const OperationId& a, const OperationId& b) {
  domain_.insert(a);
  domain_.insert(b);
  pairs_.insert({a, b});
}

std::map<OperationId, std::vector<OperationId>> OrderRelation::successors() const {
  std::map<OperationId, std::vector<OperationId>> succ;
  for (const auto& [a, b] : pairs_) succ[a].push_back(b);
  return succ;
}

bool OrderRelation::ordered(const OperationId& a, const OperationId& b) const {
  auto succ = successors();
  std::set<OperationId> seen;
  std::deque<OperationId> work{a};
  while (!work.empty()) {
    auto cur = work.front();
    work.pop_front();
    auto it = succ.find(cur);
    if (it == succ.end()) continue;
    for (const auto& n : it->second) {
      if (n == b) return true;
      if (seen.insert(n).second) work.push_back(n);
    }
  }
  return false;
}

OrderRelation OrderRelation::closure() const {
  auto succ = successors();
  OrderRelation out(domain_);
  for (const auto& a : domain_) {
    std::set<OperationId> seen;
    std::deque<OperationId> work{a};
    while (!work.empty()) {
      auto cur = work.front();
      work.pop_front();
      auto it = succ.find(cur);
      if (it == succ.end()) continue;
      for (const auto& n : it->second)
        if (seen.insert(n).second) work.push_back(n);
    }
    for (const auto& b : seen) out.pairs_.insert({a, b});
  }
  return out;
}

OrderRelation OrderRelation::reduction() const {
  // Only meaningful for acyclic relations: drop pairs implied by a longer path.
  OrderRelation closed = closure();
  OrderRelation out(domain_);
  for (const auto& [a, b] : closed.pairs_) {
    bool implied = false;
    for (const auto& c : domain_) {
      if (c == a || c == b) continue;
      if (closed.contains(a, c) && closed.contains(c, b)) {
        implied = true;
        break;
      }
    }
    if (!implied) out.pairs_.insert({a, b});
  }
  return out;
}

OrderRelation OrderRelation::restricted(const std::set<OperationId>& subset) const {
  OrderRelation closed = closure();
  OrderRelation out;
  for (const auto& a : domain_)
    if (subset.contains(a)) out.domain_.insert(a);
  for (const auto& [a, b] : closed.pairs_)
    if (subset.contains(a) && subset.contains(b)) out.pairs_.insert({a, b});
  return out;
}

std::optional<std::vector<OperationId>> OrderRelation::linearize() const {
  std::map<OperationId, int> indegree;
  for (const auto& a : domain_) indegree[a] = 0;
  for (const auto& [a, b] : pairs_) ++indegree[b];
  auto succ = successors();
  std::set<OperationId> ready;
  for (const auto& [a, d] : indegree)
    if (d == 0) ready.insert(a);
  std::vector<OperationId> out;
  while (!ready.empty()) {
    auto cur = *ready.begin();
    ready.erase(ready.begin());
    out.push_back(cur);
    for (const auto& n : succ[cur])
      if (--indegree[n] == 0) ready.insert(n);
  }
  if (out.size() != indegree.size()) return std::nullopt;
  return out;
}

bool OrderRelation::is_acyclic() const { return linearize().has_value(); }

bool OrderRelation::is_total() const {
  if (!is_acyclic()) return false;
  OrderRelation closed = closure();
  std::vector<OperationId> dom(domain_.begin(), domain_.end());
  for (std::size_t i = 0; i < dom.size(); ++i)
    for (std::size_t j = i + 1; j < dom.size(); ++j)
      if (!closed.contains(dom[i], dom[j]) && !closed.contains(dom[j], dom[i])) return false;
  return true;
}

// ------------------------------------------------------------------ relations

OrderRelation program_order(const Computation& c) {
  OrderRelation r(c.operation_ids());
  for (const auto& [key, ops] : c.threads())
    for (std::size_t i = 1; i < ops.size(); ++i) r.add(ops[i - 1].id, ops[i].id);
  return r;
}

std::set<OperationId> project(const Computation& c, const std::set<OperationId>& ops, const Selector& sel,
                              const PartitionSpec* k) {
  const std::set<std::string>* cls = nullptr;
  if (auto* w = std::get_if<select::WritesToClass>(&sel)) {
    if (!k) throw DomainError("writes-to-class selector needs a partition");
    cls = &k->class_at(w->cls);
  }
  std::set<OperationId> out;
  for (const auto& id : ops) {
    const Operation& o = c.at(id);
    bool keep = std::visit(
        [&](const auto& s) -> bool {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, select::ByProcess>) {
            return o.id.proc == s.proc;
          } else if constexpr (std::is_same_v<S, select::AllWrites>) {
            return o.is_write();
          } else if constexpr (std::is_same_v<S, select::WritesToClass>) {
            return o.is_write() && cls->contains(std::get<op::Write>(o.kind).var);
          } else {
            if (s.label.is_null() || !o.is_deliver()) return false;
            return std::get<op::Deliver>(o.kind).label == s.label;
          }
        },
        sel);
    if (keep) out.insert(id);
  }
  return out;
}

bool valid_sequence(std::span<const Operation> seq, const std::map<std::string, Value>& initial_values) {
  std::map<std::string, Value> current(initial_values);
  std::set<std::string> sent;
  std::set<std::string> received;
  std::set<std::string> delivered;
  for (const auto& o : seq) {
    bool ok = std::visit(
        [&](const auto& k) -> bool {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, op::Read>) {
            auto it = current.find(k.var);
            return (it == current.end() ? 0 : it->second) == k.value;
          } else if constexpr (std::is_same_v<K, op::Write>) {
            current[k.var] = k.value;
            return true;
          } else if constexpr (std::is_same_v<K, op::Send>) {
            return sent.insert(k.msg).second;
          } else if constexpr (std::is_same_v<K, op::Recv>) {
            return received.insert(k.msg).second;
          } else if constexpr (std::is_same_v<K, op::Bcast>) {
            return !delivered.contains(k.update);
          } else {
            return delivered.insert(k.update).second;
          }
        },
        o.kind);
    if (!ok) return false;
  }
  return true;
}

namespace {

// Reachability over a relation restricted to the queried set's closure.
class Reach {
 public:
  explicit Reach(const OrderRelation& r) : closed_(r.closure()) {}
  bool operator()(const OperationId& a, const OperationId& b) const { return closed_.contains(a, b); }

 private:
  OrderRelation closed_;
};

}  // namespace

bool extends(const std::set<OperationId>& a, const OrderRelation& r, const OrderRelation& t) {
  Reach rr(r), tt(t);
  for (const auto& x : a)
    for (const auto& y : a)
      if (x != y && tt(x, y) && !rr(x, y)) return false;
  return true;
}

bool agree(const std::set<OperationId>& a, const OrderRelation& r, const OrderRelation& t) {
  Reach rr(r), tt(t);
  for (const auto& x : a)
    for (const auto& y : a)
      if (x != y && rr(x, y) != tt(x, y)) return false;
  return true;
}

// ---------------------------------------------------------------- text format

namespace {

Value parse_value(std::size_t line, std::string_view tok) {
  auto v = detail::to_int(tok);
  if (!v) throw ParseError(line, "bad integer '" + std::string(tok) + "'");
  return *v;
}

Label parse_label(std::size_t line, std::string_view tok) {
  try {
    return Label::parse(tok);
  } catch (const DomainError& e) {
    throw ParseError(line, e.what());
  }
}

}  // namespace

Computation parse_computation(std::string_view text) {
  Computation c;
  std::size_t lineno = 0;
  for (auto line : detail::lines(text)) {
    ++lineno;
    auto toks = detail::tokenize(line);
    if (toks.empty()) continue;
    if (toks[0] == "init") {
      if (toks.size() != 3) throw ParseError(lineno, "expected 'init var val'");
      c.set_initial(std::string(toks[1]), parse_value(lineno, toks[2]));
      continue;
    }
    if (toks[0] == "thread") {
      if (toks.size() != 3) throw ParseError(lineno, "expected 'thread proc thread'");
      c.declare_thread(static_cast<ProcId>(parse_value(lineno, toks[1])),
                       static_cast<ThreadId>(parse_value(lineno, toks[2])));
      continue;
    }
    if (toks.size() < 4) throw ParseError(lineno, "record too short");
    auto proc = static_cast<ProcId>(parse_value(lineno, toks[0]));
    auto thread = static_cast<ThreadId>(parse_value(lineno, toks[1]));
    auto index = parse_value(lineno, toks[2]);
    std::string_view kind = toks[3];
    auto need = [&](std::size_t n) {
      if (toks.size() != 4 + n) throw ParseError(lineno, "kind " + std::string(kind) + " takes " + std::to_string(n) + " args");
    };
    OperationKind k;
    if (kind == "R") {
      need(2);
      k = op::Read{std::string(toks[4]), parse_value(lineno, toks[5])};
    } else if (kind == "W") {
      need(2);
      k = op::Write{std::string(toks[4]), parse_value(lineno, toks[5])};
    } else if (kind == "B") {
      need(2);
      k = op::Bcast{std::string(toks[4]), parse_label(lineno, toks[5])};
    } else if (kind == "D") {
      need(2);
      k = op::Deliver{std::string(toks[4]), parse_label(lineno, toks[5])};
    } else if (kind == "S" || kind == "V") {
      need(3);
      auto src = static_cast<ProcId>(parse_value(lineno, toks[4]));
      auto dst = static_cast<ProcId>(parse_value(lineno, toks[5]));
      if (kind == "S")
        k = op::Send{src, dst, std::string(toks[6])};
      else
        k = op::Recv{src, dst, std::string(toks[6])};
    } else {
      throw ParseError(lineno, "unknown kind '" + std::string(kind) + "'");
    }
    const auto& added = c.add(proc, thread, std::move(k));
    if (static_cast<Value>(added.id.index) != index)
      throw ParseError(lineno, "index " + std::to_string(index) + " out of sequence (expected " +
                                   std::to_string(added.id.index) + ")");
  }
  return c;
}

std::string format_operation(const Operation& o) {
  std::ostringstream out;
  out << o.id.proc << ' ' << o.id.thread << ' ' << o.id.index << ' ';
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, op::Read>) out << "R " << k.var << ' ' << k.value;
        else if constexpr (std::is_same_v<K, op::Write>) out << "W " << k.var << ' ' << k.value;
        else if constexpr (std::is_same_v<K, op::Bcast>) out << "B " << k.update << ' ' << k.label.str();
        else if constexpr (std::is_same_v<K, op::Deliver>) out << "D " << k.update << ' ' << k.label.str();
        else if constexpr (std::is_same_v<K, op::Send>) out << "S " << k.src << ' ' << k.dst << ' ' << k.msg;
        else out << "V " << k.src << ' ' << k.dst << ' ' << k.msg;
      },
      o.kind);
  return out.str();
}

std::string format_computation(const Computation& c) {
  std::string out;
  for (const auto& [var, v] : c.initial_values()) out += "init " + var + " " + std::to_string(v) + "\n";
  for (const auto& [key, ops] : c.threads()) {
    if (ops.empty()) out += "thread " + std::to_string(key.first) + " " + std::to_string(key.second) + "\n";
    for (const auto& o : ops) out += format_operation(o) + "\n";
  }
  return out;
}

}  // namespace pclab
