#include "pclab/checker.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <sstream>

namespace pclab {

OrderRelation WitnessSet::view_relation(ProcId p) const {
  auto it = views.find(p);
  if (it == views.end()) return {};
  return OrderRelation::from_sequence(it->second);
}

// --------------------------------------------------------------------- models

ModelName ModelName::parse(std::string_view raw) {
  // SC, P-RAM, PC-G, ... are accepted too
  std::string name;
  for (char ch : raw)
    if (ch != '-' && ch != '_') name += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (name == "sc") return {Model::sc, {}};
  if (name == "pram") return {Model::pram, {}};
  if (name == "pcg") return {Model::pcg, {}};
  if (name == "weaksc") return {Model::weaksc, {}};
  if (name == "weakpcg") return {Model::weakpcg, {}};
  throw DomainError("unknown model '" + std::string(raw) + "'");
}

std::string ModelName::str() const {
  switch (kind) {
    case Model::sc: return "sc";
    case Model::pram: return "pram";
    case Model::pcg: return "pcg";
    case Model::weaksc: return "weaksc";
    case Model::weakpcg: return "weakpcg";
    case Model::custom: return "custom" + custom.str();
  }
  return "?";
}

VariableUsage VariableUsage::of(const Computation& c) {
  VariableUsage u;
  for (const auto& [var, v] : c.initial_values()) u.universe.insert(var);
  for (const auto& o : c.operations()) {
    if (const std::string* var = o.variable()) {
      u.universe.insert(*var);
      if (o.is_write()) u.writers[*var].insert(o.id.proc);
    }
  }
  return u;
}

std::set<std::string> multi_writer_vars(const VariableUsage& usage) {
  std::set<std::string> out;
  for (const auto& [var, procs] : usage.writers)
    if (procs.size() >= 2) out.insert(var);
  return out;
}

PartitionSpec model_partition(const ModelName& m, const VariableUsage& usage) {
  PartitionSpec k;
  k.universe = usage.universe;
  switch (m.kind) {
    case Model::sc:
      if (!usage.universe.empty()) k.classes.push_back(usage.universe);
      break;
    case Model::pram:
      break;
    case Model::pcg:
      for (const auto& v : usage.universe) k.classes.push_back({v});
      break;
    case Model::weaksc: {
      auto multi = multi_writer_vars(usage);
      if (!multi.empty()) k.classes.push_back(multi);
      break;
    }
    case Model::weakpcg:
      for (const auto& v : multi_writer_vars(usage)) k.classes.push_back({v});
      break;
    case Model::custom:
      k = m.custom;
      for (const auto& v : usage.universe) k.universe.insert(v);
      break;
  }
  k.validate();
  return k;
}

// ----------------------------------------------------------------- relations

namespace {

// Consecutive pairs of each thread restricted to `domain`.
void add_thread_chains(const Computation& c, ProcId only_proc, const std::set<OperationId>& domain,
                       std::vector<std::pair<OperationId, OperationId>>& out) {
  for (const auto& [key, ops] : c.threads()) {
    if (only_proc >= 0 && key.first != only_proc) continue;
    const Operation* prev = nullptr;
    for (const auto& o : ops) {
      if (!domain.contains(o.id)) continue;
      if (prev) out.emplace_back(prev->id, o.id);
      prev = &o;
    }
  }
}

std::set<OperationId> ops_of(const Computation& c, ProcId p) {
  std::set<OperationId> out;
  for (const auto& [key, ops] : c.threads())
    if (key.first == p)
      for (const auto& o : ops) out.insert(o.id);
  return out;
}

Verdict finish(const Computation& c, const SearchResult& r) {
  Verdict v;
  v.stats.nodes = r.nodes;
  v.stats.multithreaded = c.multithreaded();
  switch (r.status) {
    case SearchResult::Status::found:
      v.state = VerdictState::satisfied;
      v.witnesses = r.witnesses;
      break;
    case SearchResult::Status::none:
      v.state = VerdictState::unsatisfied;
      v.stats.reason = "no witness";
      break;
    case SearchResult::Status::budget_exhausted:
      v.state = VerdictState::undecided;
      v.stats.reason = "budget exhausted";
      break;
  }
  return v;
}

Verdict rejected(const Computation& c, std::string reason) {
  Verdict v;
  v.state = VerdictState::unsatisfied;
  v.stats.multithreaded = c.multithreaded();
  v.stats.reason = std::move(reason);
  return v;
}

std::set<std::pair<std::string, Label>> bcast_set(const Computation& c) {
  std::set<std::pair<std::string, Label>> out;
  for (const auto& o : c.operations())
    if (auto* b = std::get_if<op::Bcast>(&o.kind)) out.insert({b->update, b->label});
  return out;
}

bool pob_matching(const Computation& c) {
  auto bcasts = bcast_set(c);
  for (ProcId p : c.processes()) {
    std::set<std::pair<std::string, Label>> dels;
    for (const auto& id : ops_of(c, p))
      if (auto* d = std::get_if<op::Deliver>(&c.at(id).kind)) dels.insert({d->update, d->label});
    if (dels != bcasts) return false;
  }
  return true;
}

bool nw_matching(const Computation& c) {
  std::set<std::tuple<ProcId, ProcId, std::string>> sends, recvs;
  for (const auto& o : c.operations()) {
    if (auto* s = std::get_if<op::Send>(&o.kind)) sends.insert({s->src, s->dst, s->msg});
    if (auto* r = std::get_if<op::Recv>(&o.kind)) recvs.insert({r->src, r->dst, r->msg});
  }
  return sends == recvs;
}

void require_kinds(const Computation& c, bool rw, bool pob, bool net, const char* pred) {
  for (const auto& o : c.operations()) {
    bool ok = ((o.is_read() || o.is_write()) && rw) || ((o.is_bcast() || o.is_deliver()) && pob) ||
              ((o.is_send() || o.is_recv()) && net);
    if (!ok) throw DomainError(std::string(pred) + ": operation " + format_operation(o) + " not allowed");
  }
}

// Dense causal graph over a computation's operations. Edges form a
// generating set of happens-before: consecutive program order, message
// order, consecutive FIFO pairs, and writes-into within a process.
struct CausalGraph {
  std::vector<OperationId> ids;
  std::map<OperationId, int> index;
  std::vector<std::vector<int>> succ;
  std::optional<std::vector<int>> topo;

  explicit CausalGraph(const Computation& c) {
    for (const auto& [key, ops] : c.threads())
      for (const auto& o : ops) {
        index[o.id] = static_cast<int>(ids.size());
        ids.push_back(o.id);
      }
    succ.resize(ids.size());
    auto edge = [&](const OperationId& a, const OperationId& b) { succ[index[a]].push_back(index[b]); };

    std::map<std::string, OperationId> send_of, recv_of;
    std::map<std::pair<ProcId, std::pair<std::string, Value>>, std::vector<OperationId>> writes;
    for (const auto& [key, ops] : c.threads()) {
      for (std::size_t i = 0; i < ops.size(); ++i) {
        const auto& o = ops[i];
        if (i) edge(ops[i - 1].id, o.id);
        if (auto* s = std::get_if<op::Send>(&o.kind)) {
          if (!send_of.emplace(s->msg, o.id).second) throw DomainError("message '" + s->msg + "' sent twice");
        } else if (auto* r = std::get_if<op::Recv>(&o.kind)) {
          recv_of.emplace(r->msg, o.id);
        } else if (auto* w = std::get_if<op::Write>(&o.kind)) {
          writes[{o.id.proc, {w->var, w->value}}].push_back(o.id);
        }
      }
    }
    for (const auto& [msg, s] : send_of)
      if (auto it = recv_of.find(msg); it != recv_of.end()) edge(s, it->second);
    // FIFO: per thread and destination, successive sends' receipts.
    for (const auto& [key, ops] : c.threads()) {
      std::map<ProcId, OperationId> last_recv;
      for (const auto& o : ops) {
        auto* s = std::get_if<op::Send>(&o.kind);
        if (!s) continue;
        auto r = recv_of.find(s->msg);
        if (r == recv_of.end()) continue;
        if (auto prev = last_recv.find(s->dst); prev != last_recv.end()) edge(prev->second, r->second);
        last_recv[s->dst] = r->second;
      }
    }
    for (const auto& [key, ops] : c.threads())
      for (const auto& o : ops)
        if (auto* r = std::get_if<op::Read>(&o.kind))
          if (auto it = writes.find({o.id.proc, {r->var, r->value}}); it != writes.end())
            for (const auto& w : it->second) edge(w, o.id);

    std::vector<int> indeg(ids.size(), 0);
    for (const auto& s : succ)
      for (int b : s) ++indeg[b];
    std::vector<int> order;
    std::deque<int> ready;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (!indeg[i]) ready.push_back(static_cast<int>(i));
    while (!ready.empty()) {
      int a = ready.front();
      ready.pop_front();
      order.push_back(a);
      for (int b : succ[a])
        if (--indeg[b] == 0) ready.push_back(b);
    }
    if (order.size() == ids.size()) topo = std::move(order);
  }

  // Pairs (a, b) of p's operations with a ->HB b. Requires acyclicity.
  std::vector<std::pair<OperationId, OperationId>> restricted_pairs(const std::set<OperationId>& ops) const {
    std::vector<int> local(ids.size(), -1);
    std::vector<OperationId> members;
    for (const auto& id : ops) {
      local[index.at(id)] = static_cast<int>(members.size());
      members.push_back(id);
    }
    const std::size_t words = (members.size() + 63) / 64;
    std::vector<std::vector<std::uint64_t>> reach(ids.size(), std::vector<std::uint64_t>(words, 0));
    for (auto it = topo->rbegin(); it != topo->rend(); ++it) {
      int a = *it;
      for (int b : succ[a]) {
        for (std::size_t w = 0; w < words; ++w) reach[a][w] |= reach[b][w];
        if (local[b] >= 0) reach[a][local[b] / 64] |= 1ULL << (local[b] % 64);
      }
    }
    std::vector<std::pair<OperationId, OperationId>> out;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& r = reach[index.at(members[i])];
      for (std::size_t j = 0; j < members.size(); ++j)
        if (r[j / 64] >> (j % 64) & 1ULL) out.emplace_back(members[i], members[j]);
    }
    return out;
  }
};

}  // namespace

OrderRelation del_order(const Computation& c) {
  OrderRelation r;
  // delivers per process, keyed by (update, label)
  std::map<ProcId, std::map<std::pair<std::string, Label>, std::vector<OperationId>>> dels;
  for (const auto& o : c.operations())
    if (auto* d = std::get_if<op::Deliver>(&o.kind)) dels[o.id.proc][{d->update, d->label}].push_back(o.id);
  for (const auto& [key, ops] : c.threads()) {
    std::vector<const op::Bcast*> bcasts;
    for (const auto& o : ops)
      if (auto* b = std::get_if<op::Bcast>(&o.kind)) bcasts.push_back(b);
    for (std::size_t i = 0; i < bcasts.size(); ++i)
      for (std::size_t j = i + 1; j < bcasts.size(); ++j)
        for (const auto& [p, m] : dels) {
          auto a = m.find({bcasts[i]->update, bcasts[i]->label});
          auto b = m.find({bcasts[j]->update, bcasts[j]->label});
          if (a == m.end() || b == m.end()) continue;
          for (const auto& x : a->second)
            for (const auto& y : b->second) r.add(x, y);
        }
  }
  return r;
}

CausalityRelations causality(const Computation& c) {
  require_kinds(c, true, false, true, "causality");
  CausalityRelations out;
  auto all = c.operation_ids();
  out.message_order = OrderRelation(all);
  out.fifo_channel = OrderRelation(all);
  out.writes_into = OrderRelation(all);

  std::map<std::string, const Operation*> send_of;
  std::map<std::string, const Operation*> recv_of;
  for (const auto& [key, ops] : c.threads())
    for (const auto& o : ops) {
      if (auto* s = std::get_if<op::Send>(&o.kind)) {
        if (!send_of.emplace(s->msg, &o).second) throw DomainError("message '" + s->msg + "' sent twice");
      } else if (auto* r = std::get_if<op::Recv>(&o.kind)) {
        recv_of.emplace(r->msg, &o);
      }
    }
  for (const auto& [msg, s] : send_of) {
    auto it = recv_of.find(msg);
    if (it == recv_of.end()) continue;
    const auto& sk = std::get<op::Send>(s->kind);
    const auto& rk = std::get<op::Recv>(it->second->kind);
    if (sk.src == rk.src && sk.dst == rk.dst) out.message_order.add(s->id, it->second->id);
  }
  for (const auto& [key, ops] : c.threads()) {
    for (std::size_t i = 0; i < ops.size(); ++i) {
      auto* s1 = std::get_if<op::Send>(&ops[i].kind);
      if (!s1) continue;
      for (std::size_t j = i + 1; j < ops.size(); ++j) {
        auto* s2 = std::get_if<op::Send>(&ops[j].kind);
        if (!s2 || s2->dst != s1->dst || s2->src != s1->src) continue;
        auto r1 = recv_of.find(s1->msg), r2 = recv_of.find(s2->msg);
        if (r1 != recv_of.end() && r2 != recv_of.end()) out.fifo_channel.add(r1->second->id, r2->second->id);
      }
    }
  }
  for (const auto& w : c.operations()) {
    auto* wk = std::get_if<op::Write>(&w.kind);
    if (!wk) continue;
    for (const auto& r : c.operations()) {
      auto* rk = std::get_if<op::Read>(&r.kind);
      if (rk && r.id.proc == w.id.proc && rk->var == wk->var && rk->value == wk->value) out.writes_into.add(w.id, r.id);
    }
  }
  OrderRelation all_rel = program_order(c);
  for (const auto* rel : {&out.message_order, &out.fifo_channel, &out.writes_into})
    for (const auto& [a, b] : rel->pairs()) all_rel.add(a, b);
  out.happens_before = all_rel.closure();
  return out;
}

bool happens_before_acyclic(const Computation& c) { return CausalGraph(c).topo.has_value(); }

// ----------------------------------------------------------------- predicates

Verdict check_pc(const Computation& c, const PartitionSpec& k, const CheckOptions& opts) {
  require_kinds(c, true, false, false, "check_pc");
  k.validate();
  std::set<OperationId> writes;
  for (const auto& o : c.operations())
    if (o.is_write()) writes.insert(o.id);

  std::vector<SearchView> views;
  for (ProcId p : c.processes()) {
    SearchView v;
    v.proc = p;
    std::set<OperationId> dom = ops_of(c, p);
    dom.insert(writes.begin(), writes.end());
    v.domain.assign(dom.begin(), dom.end());
    add_thread_chains(c, -1, dom, v.base);
    if (auto h = opts.hints.find(p); h != opts.hints.end()) v.hint = h->second;
    views.push_back(std::move(v));
  }
  std::vector<AgreementClass> classes(k.classes.size());
  for (const auto& id : writes) {
    Label l = k.label_of(std::get<op::Write>(c.at(id).kind).var);
    if (!l.is_null()) classes[l.index() - 1].key_of[id] = id.str();
  }
  return finish(c, witness_search(c, views, classes, opts.search));
}

Verdict check_pob(const Computation& c, const std::set<Label>& labels, const CheckOptions& opts) {
  require_kinds(c, true, true, false, "check_pob");
  for (const auto& o : c.operations()) {
    Label l = o.is_bcast() ? std::get<op::Bcast>(o.kind).label
              : o.is_deliver() ? std::get<op::Deliver>(o.kind).label
                               : Label::none();
    if (!l.is_null() && !labels.contains(l)) throw DomainError("label " + l.str() + " is not in L");
  }
  if (!pob_matching(c)) return rejected(c, "bcast/deliver sets differ");

  OrderRelation dord = del_order(c);
  std::vector<SearchView> views;
  for (ProcId p : c.processes()) {
    SearchView v;
    v.proc = p;
    std::set<OperationId> dom = ops_of(c, p);
    v.domain.assign(dom.begin(), dom.end());
    add_thread_chains(c, p, dom, v.base);
    for (const auto& [a, b] : dord.pairs())
      if (a.proc == p && b.proc == p) v.base.emplace_back(a, b);
    if (auto h = opts.hints.find(p); h != opts.hints.end()) v.hint = h->second;
    views.push_back(std::move(v));
  }
  std::map<Label, std::size_t> slot;
  std::vector<AgreementClass> classes;
  for (Label l : labels) {
    if (l.is_null()) continue;
    slot[l] = classes.size();
    classes.emplace_back();
  }
  for (const auto& o : c.operations())
    if (auto* d = std::get_if<op::Deliver>(&o.kind); d && !d->label.is_null())
      classes[slot.at(d->label)].key_of[o.id] = d->update;
  return finish(c, witness_search(c, views, classes, opts.search));
}

Verdict check_nw(const Computation& c, const CheckOptions& opts) {
  require_kinds(c, true, false, true, "check_nw");
  CausalGraph g(c);  // throws on duplicate sends
  if (!nw_matching(c)) return rejected(c, "send/recv sets differ");
  if (!g.topo) return rejected(c, "happens-before is cyclic");
  std::vector<SearchView> views;
  for (ProcId p : c.processes()) {
    SearchView v;
    v.proc = p;
    std::set<OperationId> dom = ops_of(c, p);
    v.domain.assign(dom.begin(), dom.end());
    v.base = g.restricted_pairs(dom);
    if (auto h = opts.hints.find(p); h != opts.hints.end()) v.hint = h->second;
    views.push_back(std::move(v));
  }
  return finish(c, witness_search(c, views, {}, opts.search));
}

// -------------------------------------------------------------- verification

namespace {

bool view_shape_ok(const Computation& c, const WitnessSet& w, ProcId p, const std::set<OperationId>& expected,
                   std::vector<Operation>& seq) {
  auto it = w.views.find(p);
  if (it == w.views.end()) return false;
  std::set<OperationId> got(it->second.begin(), it->second.end());
  if (got.size() != it->second.size() || got != expected) return false;
  seq.clear();
  for (const auto& id : it->second) seq.push_back(c.at(id));
  return valid_sequence(seq, c.initial_values());
}

}  // namespace

bool verify_pc(const Computation& c, const PartitionSpec& k, const WitnessSet& w) {
  std::set<OperationId> all = c.operation_ids();
  std::set<OperationId> writes = project(c, all, select::AllWrites{});
  OrderRelation prog = program_order(c);
  if (w.views.size() != c.processes().size()) return false;
  std::vector<Operation> seq;
  for (ProcId p : c.processes()) {
    std::set<OperationId> dom = project(c, all, select::ByProcess{p});
    dom.insert(writes.begin(), writes.end());
    if (!view_shape_ok(c, w, p, dom, seq)) return false;
    if (!extends(dom, w.view_relation(p), prog)) return false;
  }
  for (std::size_t i = 0; i < k.classes.size(); ++i) {
    auto cls = project(c, all, select::WritesToClass{Label{static_cast<int>(i + 1)}}, &k);
    for (ProcId p : c.processes())
      for (ProcId q : c.processes())
        if (p < q && !agree(cls, w.view_relation(p), w.view_relation(q))) return false;
  }
  return true;
}

bool verify_pob(const Computation& c, const std::set<Label>& labels, const WitnessSet& w) {
  if (!pob_matching(c)) return false;
  std::set<OperationId> all = c.operation_ids();
  OrderRelation base = program_order(c);
  OrderRelation del = del_order(c);
  for (const auto& [a, b] : del.pairs()) base.add(a, b);
  if (w.views.size() != c.processes().size()) return false;
  std::vector<Operation> seq;
  for (ProcId p : c.processes()) {
    std::set<OperationId> dom = project(c, all, select::ByProcess{p});
    if (!view_shape_ok(c, w, p, dom, seq)) return false;
    if (!extends(dom, w.view_relation(p), base)) return false;
  }
  // Delivers of one update at different processes are compared through the
  // id of the update's bcast.
  std::map<std::string, OperationId> bcast_of;
  for (const auto& o : c.operations())
    if (auto* b = std::get_if<op::Bcast>(&o.kind)) bcast_of.emplace(b->update, o.id);
  for (Label l : labels) {
    if (l.is_null()) continue;
    std::map<ProcId, OrderRelation> rel;
    std::map<ProcId, std::set<OperationId>> members;
    for (ProcId p : c.processes()) {
      std::vector<OperationId> reps;
      for (const auto& id : w.views.at(p)) {
        auto* d = std::get_if<op::Deliver>(&c.at(id).kind);
        if (d && d->label == l) reps.push_back(bcast_of.at(d->update));
      }
      rel[p] = OrderRelation::from_sequence(reps);
      members[p] = std::set<OperationId>(reps.begin(), reps.end());
    }
    for (ProcId p : c.processes())
      for (ProcId q : c.processes()) {
        if (p >= q) continue;
        std::set<OperationId> common;
        std::set_intersection(members[p].begin(), members[p].end(), members[q].begin(), members[q].end(),
                              std::inserter(common, common.begin()));
        if (!agree(common, rel[p], rel[q])) return false;
      }
  }
  return true;
}

bool verify_nw(const Computation& c, const WitnessSet& w) {
  if (!nw_matching(c)) return false;
  CausalityRelations rel = causality(c);
  if (!rel.happens_before.is_acyclic()) return false;
  std::set<OperationId> all = c.operation_ids();
  if (w.views.size() != c.processes().size()) return false;
  std::vector<Operation> seq;
  for (ProcId p : c.processes()) {
    std::set<OperationId> dom = project(c, all, select::ByProcess{p});
    if (!view_shape_ok(c, w, p, dom, seq)) return false;
    if (!extends(dom, w.view_relation(p), rel.happens_before)) return false;
  }
  return true;
}

std::string format_verdict(const Computation& c, const Verdict& v) {
  std::ostringstream out;
  out << "verdict "
      << (v.state == VerdictState::satisfied ? "satisfied"
          : v.state == VerdictState::undecided ? "undecided"
                                               : "unsatisfied")
      << '\n';
  out << "# nodes " << v.stats.nodes << '\n';
  if (!v.stats.reason.empty()) out << "# reason " << v.stats.reason << '\n';
  if (v.stats.multithreaded) out << "# note multithreaded process\n";
  if (v.witnesses) {
    for (const auto& [p, seq] : v.witnesses->views) {
      out << "view " << p << '\n';
      for (const auto& id : seq) out << format_operation(c.at(id)) << '\n';
    }
  }
  return out.str();
}

}  // namespace pclab
