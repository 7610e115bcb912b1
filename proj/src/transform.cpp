#include "pclab/transform.hpp"

#include <sstream>

#include "text_util.hpp"

namespace pclab {

// ------------------------------------------------------------ programs

Value SpecProgram::initial_value(const std::string& var) const {
  auto it = initial.find(var);
  return it == initial.end() ? 0 : it->second;
}

void SpecProgram::validate() const {
  ProcId expect = 0;
  for (const auto& [p, code] : procs) {
    if (p != expect++) throw DomainError("process ids must be 0..n-1");
    for (const auto& ins : code)
      if (!universe.contains(ins.var)) throw DomainError("undeclared variable '" + ins.var + "'");
  }
  for (const auto& [var, v] : initial)
    if (!universe.contains(var)) throw DomainError("undeclared variable '" + var + "'");
}

VariableUsage SpecProgram::usage() const {
  VariableUsage u;
  u.universe = universe;
  for (const auto& [p, code] : procs)
    for (const auto& ins : code)
      if (ins.kind == SpecInstr::Kind::write) u.writers[ins.var].insert(p);
  return u;
}

SpecProgram parse_spec_program(std::string_view text) {
  SpecProgram out;
  std::optional<std::set<std::string>> declared;
  std::vector<std::string> mentioned;
  std::vector<ProcId> order;
  std::vector<SpecInstr>* current = nullptr;
  std::size_t line_no = 0;
  for (auto line : detail::lines(text)) {
    ++line_no;
    auto tok = detail::tokenize(line);
    if (tok.empty()) continue;
    auto num = [&](std::string_view s) {
      auto v = detail::to_int(s);
      if (!v) throw ParseError(line_no, "expected an integer, got '" + std::string(s) + "'");
      return *v;
    };
    auto arity = [&](std::size_t n) {
      if (tok.size() != n) throw ParseError(line_no, "expected " + std::to_string(n - 1) + " arguments");
    };
    if (tok[0] == "proc") {
      arity(2);
      ProcId p = static_cast<ProcId>(num(tok[1]));
      if (out.procs.contains(p)) throw ParseError(line_no, "duplicate process " + std::to_string(p));
      current = &out.procs[p];
      order.push_back(p);
    } else if (tok[0] == "vars") {
      declared.emplace();
      for (std::size_t i = 1; i < tok.size(); ++i) declared->insert(std::string(tok[i]));
    } else if (tok[0] == "init") {
      arity(3);
      out.initial[std::string(tok[1])] = num(tok[2]);
      mentioned.emplace_back(tok[1]);
    } else if (tok[0] == "W" || tok[0] == "R") {
      if (!current) throw ParseError(line_no, "operation before any 'proc' header");
      if (tok[0] == "W") {
        arity(3);
        current->push_back({SpecInstr::Kind::write, std::string(tok[1]), num(tok[2])});
      } else {
        arity(2);
        current->push_back({SpecInstr::Kind::read, std::string(tok[1]), 0});
      }
      mentioned.emplace_back(tok[1]);
    } else {
      throw ParseError(line_no, "unknown directive '" + std::string(tok[0]) + "'");
    }
  }
  if (declared) {
    for (const auto& v : mentioned)
      if (!declared->contains(v)) throw DomainError("undeclared variable '" + v + "'");
    out.universe = *declared;
  } else {
    out.universe.insert(mentioned.begin(), mentioned.end());
  }
  ProcId expect = 0;
  for (const auto& [p, code] : out.procs)
    if (p != expect++) throw DomainError("process ids must be 0..n-1");
  return out;
}

std::string format_spec_program(const SpecProgram& p) {
  std::ostringstream out;
  out << "vars";
  for (const auto& v : p.universe) out << ' ' << v;
  out << '\n';
  for (const auto& [var, v] : p.initial) out << "init " << var << ' ' << v << '\n';
  for (const auto& [proc, code] : p.procs) {
    out << "proc " << proc << '\n';
    for (const auto& ins : code) {
      if (ins.kind == SpecInstr::Kind::write)
        out << "W " << ins.var << ' ' << ins.value << '\n';
      else
        out << "R " << ins.var << '\n';
    }
  }
  return out.str();
}

// --------------------------------------------------------------- stacks

Variant parse_variant(std::string_view s) {
  if (s == "swfr") return Variant::swfr;
  if (s == "fwsr") return Variant::fwsr;
  throw DomainError("unknown transform variant '" + std::string(s) + "'");
}

Stack Stack::parse(std::string_view s) {
  auto slash = s.find('/');
  if (slash == std::string_view::npos) throw DomainError("stack must look like swfr/token");
  return Stack{parse_variant(s.substr(0, slash)), parse_backend(s.substr(slash + 1))};
}

std::string Stack::str() const {
  return std::string(variant == Variant::swfr ? "swfr" : "fwsr") + "/" + std::string(backend_name(backend));
}

std::vector<Stack> Stack::all() {
  return {{Variant::swfr, Backend::token},
          {Variant::swfr, Backend::timestamp},
          {Variant::fwsr, Backend::token},
          {Variant::fwsr, Backend::timestamp}};
}

std::string replica_var(const std::string& var) { return "Memory." + var; }

// ------------------------------------------------------------ transform

namespace {

Task<> wait_writes_complete(ThreadCtx& ctx) {
  // while writes_processed < writes_requested skip; writes_requested only
  // changes in this thread, so one read of it suffices.
  Value requested = co_await ctx.read(kWritesRequested, Layer::app);
  std::function<bool(Value)> done = [requested](Value v) { return v >= requested; };
  co_await ctx.await_local(kWritesProcessed, done, Layer::app);
}

Task<> main_thread(ThreadCtx& ctx, std::vector<SpecInstr> code, PartitionSpec k, Variant v,
                   std::shared_ptr<PobEndpoint> ep) {
  for (const SpecInstr& ins : code) {
    if (ins.kind == SpecInstr::Kind::read) {
      if (v == Variant::fwsr) co_await wait_writes_complete(ctx);
      const std::string replica = replica_var(ins.var);
      Value x = co_await ctx.read(replica, Layer::app);
      ctx.mark_spec_read(ins.var, x);
    } else {
      Value requested = co_await ctx.read(kWritesRequested, Layer::app);
      co_await ctx.write(kWritesRequested, requested + 1, Layer::app);
      ctx.mark_spec_write(ins.var, ins.value);
      Update u{ins.var, ins.value, ctx.proc(), static_cast<std::uint64_t>(requested + 1)};
      const std::string key = u.key();
      co_await ep->bcast(ctx, key, label_of(ins.var, k));
      if (v == Variant::swfr) co_await wait_writes_complete(ctx);
    }
  }
}

Task<> apply_write(ThreadCtx& ctx, PobEndpoint& ep) {
  Delivery d = co_await ep.deliver(ctx);
  auto u = Update::parse(d.update);
  if (!u) throw SimError("delivered update is not [x,v,source]: " + d.update);
  const std::string replica = replica_var(u->var);
  co_await ctx.write(replica, u->value, Layer::app);
  if (u->source == ctx.proc()) {
    Value processed = co_await ctx.read(kWritesProcessed, Layer::app);
    co_await ctx.write(kWritesProcessed, processed + 1, Layer::app);
  }
}

Task<> delivery_thread(ThreadCtx& ctx, std::shared_ptr<PobEndpoint> ep) {
  while (true) co_await apply_write(ctx, *ep);
}

}  // namespace

TargetProgram transform(const SpecProgram& p, const PartitionSpec& k, const Stack& stack, const PobOptions& opts) {
  p.validate();
  k.validate();
  TargetProgram out;
  out.spec_initial = p.initial;
  std::set<Label> labels;
  for (const auto& v : p.universe)
    if (Label l = label_of(v, k); !l.is_null()) labels.insert(l);
  for (const auto& [proc, code] : p.procs) {
    PobProcess pob = make_pob_process(stack.backend, proc, p.n_procs(), labels, kDeliveryThread + 1, opts);
    ProcessSpec ps;
    ps.id = proc;
    ps.locals = pob.locals;
    for (const auto& v : p.universe) ps.locals[replica_var(v)] = p.initial_value(v);
    ps.locals[kWritesRequested] = 0;
    ps.locals[kWritesProcessed] = 0;
    auto ep = pob.endpoint;
    ps.threads.push_back(ThreadSpec{kMainThread, ThreadRole::main,
                                    [code, k, v = stack.variant, ep](ThreadCtx& ctx) {
                                      return main_thread(ctx, code, k, v, ep);
                                    }});
    ps.threads.push_back(
        ThreadSpec{kDeliveryThread, ThreadRole::service, [ep](ThreadCtx& ctx) { return delivery_thread(ctx, ep); }});
    for (auto& t : pob.threads) ps.threads.push_back(std::move(t));
    out.processes.push_back(std::move(ps));
  }
  return out;
}

std::unique_ptr<Simulator> instantiate(const SpecProgram& p, const PartitionSpec& k, const Stack& stack,
                                       const SimConfig& cfg, const std::string& model_name, const PobOptions& opts) {
  TargetProgram t = transform(p, k, stack, opts);
  // An empty program is a run that is quiescent from the start.
  auto sim = t.processes.empty() ? std::make_unique<Simulator>(std::move(t.processes), cfg)
                                 : spawn(std::move(t.processes), cfg);
  sim->add_meta("stack", stack.str());
  if (!model_name.empty()) sim->add_meta("model", model_name);
  sim->add_meta("partition", k.str());
  sim->declare_level("pob");
  sim->declare_level("spec");
  sim->set_spec_initial(t.spec_initial);
  return sim;
}

// --------------------------------------------------------- interpretation

namespace {

// Position of the spec operation behind each trace marker.
using Alignment = std::vector<std::pair<OperationId, const TraceEvent*>>;

Alignment align(const SpecProgram& p, const Trace& t) {
  if (!t.recorded) throw DomainError("trace was recorded without events");
  if (!t.levels.contains("spec")) throw DomainError("trace has no spec-level annotations");
  Alignment a;
  std::map<ProcId, std::size_t> next;
  for (const auto& e : t.events) {
    if (e.kind != EventKind::spec_read && e.kind != EventKind::spec_write) continue;
    auto it = p.procs.find(e.proc);
    if (it == p.procs.end() || e.thread != kMainThread) throw DomainError("trace does not belong to this program");
    std::size_t& i = next[e.proc];
    if (i >= it->second.size() || e.args.size() < 2) throw DomainError("trace does not belong to this program");
    const SpecInstr& ins = it->second[i];
    bool is_read = e.kind == EventKind::spec_read;
    if (is_read != (ins.kind == SpecInstr::Kind::read) || e.args[0] != ins.var ||
        (!is_read && e.args[1] != std::to_string(ins.value)))
      throw DomainError("trace does not belong to this program");
    a.emplace_back(OperationId{e.proc, kMainThread, i}, &e);
    ++i;
  }
  return a;
}

}  // namespace

Computation interpret(const SpecProgram& p, const Trace& t) {
  Computation c;
  for (const auto& [var, v] : p.initial) c.set_initial(var, v);
  for (const auto& [proc, code] : p.procs) c.declare_thread(proc, kMainThread);
  for (const auto& [id, e] : align(p, t)) {
    const SpecInstr& ins = p.procs.at(id.proc)[id.index];
    if (ins.kind == SpecInstr::Kind::read) {
      auto v = detail::to_int(e->args[1]);
      if (!v) throw DomainError("malformed read value in trace");
      c.add(id.proc, kMainThread, op::Read{ins.var, *v});
    } else {
      c.add(id.proc, kMainThread, op::Write{ins.var, ins.value});
    }
  }
  return c;
}

std::map<ProcId, std::map<OperationId, std::int64_t>> interpret_hints(const SpecProgram& p, const Trace& t) {
  // k-th write (1-based) of each process, matching the update's sequence number
  std::map<std::pair<ProcId, std::uint64_t>, OperationId> write_by_seq;
  for (const auto& [proc, code] : p.procs) {
    std::uint64_t seq = 0;
    for (std::size_t i = 0; i < code.size(); ++i)
      if (code[i].kind == SpecInstr::Kind::write) write_by_seq[{proc, ++seq}] = OperationId{proc, kMainThread, i};
  }
  std::map<ProcId, std::map<OperationId, std::int64_t>> hints;
  for (const auto& [id, e] : align(p, t))
    if (e->kind == EventKind::spec_read) hints[id.proc][id] = static_cast<std::int64_t>(e->step);
  for (const auto& e : t.events) {
    if (e.kind != EventKind::deliver || e.args.empty()) continue;
    auto u = Update::parse(e.args[0]);
    if (!u) continue;
    auto it = write_by_seq.find({u->source, u->seq});
    if (it != write_by_seq.end()) hints[e.proc][it->second] = static_cast<std::int64_t>(e.step);
  }
  return hints;
}

}  // namespace pclab
