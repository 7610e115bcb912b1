#include "pclab/simnet.hpp"

#include <algorithm>
#include <sstream>

#include "text_util.hpp"

namespace pclab {

namespace {

std::string layer_name(Layer l) { return l == Layer::app ? "app" : "proto"; }

std::string_view role_name(ThreadRole r) {
  switch (r) {
    case ThreadRole::main: return "main";
    case ThreadRole::service: return "service";
    case ThreadRole::background: return "background";
  }
  return "main";
}

}  // namespace

std::string_view event_code(EventKind k) {
  switch (k) {
    case EventKind::read: return "R";
    case EventKind::write: return "W";
    case EventKind::send: return "S";
    case EventKind::recv: return "V";
    case EventKind::bcast: return "B";
    case EventKind::deliver: return "D";
    case EventKind::spec_read: return "SR";
    case EventKind::spec_write: return "SW";
    case EventKind::note: return "X";
  }
  return "X";
}

std::string_view run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::running: return "running";
    case RunStatus::quiescent: return "quiescent";
    case RunStatus::budget_exhausted: return "budget";
    case RunStatus::deadlock: return "deadlock";
  }
  return "running";
}

std::string Trace::meta_value(std::string_view key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  return {};
}

// ------------------------------------------------------------ ThreadCtx

int ThreadCtx::n_procs() const { return sim_->n_procs(); }

ThreadCtx::ValueAwaiter ThreadCtx::read(const std::string& var, Layer layer) {
  pending_ = Pending{};
  pending_.op = Op::read;
  pending_.var = var;
  pending_.layer = layer;
  return {{this}};
}

ThreadCtx::StepAwaiter ThreadCtx::write(const std::string& var, Value v, Layer layer) {
  pending_ = Pending{};
  pending_.op = Op::write;
  pending_.var = var;
  pending_.value = v;
  pending_.layer = layer;
  return {this};
}

ThreadCtx::StepAwaiter ThreadCtx::send(ProcId dst, const Message& m) {
  if (dst < 0 || dst >= n_procs()) throw SimError("send to unknown process " + std::to_string(dst));
  pending_ = Pending{};
  pending_.op = Op::send;
  pending_.dst = dst;
  pending_.msg = m;
  return {this};
}

ThreadCtx::RecvAwaiter ThreadCtx::recv(const Pattern& pattern) {
  pending_ = Pending{};
  pending_.op = Op::recv;
  pending_.pattern = pattern;
  return {{this}};
}

ThreadCtx::ValueAwaiter ThreadCtx::await_local(const std::string& var, const std::function<bool(Value)>& pred, Layer layer) {
  pending_ = Pending{};
  pending_.op = Op::await;
  pending_.var = var;
  pending_.pred = pred;
  pending_.layer = layer;
  return {{this}};
}

void ThreadCtx::mark_bcast(const std::string& update, Label l) {
  sim_->emit(*this, EventKind::bcast, {update, l.str()});
}

void ThreadCtx::mark_deliver(const std::string& update, Label l, std::string aux) {
  sim_->emit(*this, EventKind::deliver, {update, l.str()}, std::move(aux));
}

void ThreadCtx::mark_spec_read(const std::string& var, Value v) {
  sim_->emit(*this, EventKind::spec_read, {var, std::to_string(v)});
}

void ThreadCtx::mark_spec_write(const std::string& var, Value v) {
  sim_->emit(*this, EventKind::spec_write, {var, std::to_string(v)});
}

void ThreadCtx::note(std::vector<std::string> args) { sim_->emit(*this, EventKind::note, std::move(args)); }

// ------------------------------------------------------------ Simulator

Simulator::Simulator(std::vector<ProcessSpec> procs, const SimConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
  if (cfg.max_steps == 0) throw SimError("max_steps must be positive");
  if (cfg.fairness != "fair" && cfg.fairness != "random" && cfg.fairness != "rr")
    throw SimError("unknown fairness policy '" + cfg.fairness + "'");
  std::sort(procs.begin(), procs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < procs.size(); ++i) {
    if (i > 0 && procs[i].id == procs[i - 1].id) throw SimError("duplicate process id " + std::to_string(procs[i].id));
    if (procs[i].id != static_cast<ProcId>(i)) throw SimError("process ids must be 0..n-1");
  }
  trace_.recorded = cfg.record_trace;
  add_meta("seed", std::to_string(cfg.seed));
  add_meta("policy", cfg.fairness);

  procs_.resize(procs.size());
  for (std::size_t i = 0; i < procs.size(); ++i) {
    Process& p = procs_[i];
    p.id = procs[i].id;
    for (const auto& [var, v] : procs[i].locals) p.store[var] = Slot{v, 0};
    if (!procs[i].locals.empty()) trace_.locals[p.id] = procs[i].locals;
    std::sort(procs[i].threads.begin(), procs[i].threads.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t j = 0; j < procs[i].threads.size(); ++j) {
      const ThreadSpec& ts = procs[i].threads[j];
      if (j > 0 && ts.id == procs[i].threads[j - 1].id)
        throw SimError("duplicate thread id " + std::to_string(ts.id) + " in process " + std::to_string(p.id));
      auto t = std::unique_ptr<ThreadCtx>(new ThreadCtx());
      t->sim_ = this;
      t->proc_ = p.id;
      t->thread_ = ts.id;
      t->role_ = ts.role;
      trace_.threads[{p.id, ts.id}] = ts.role;
      all_threads_.push_back(t.get());
      p.threads.push_back(std::move(t));
    }
  }
  for (const auto& a : procs_)
    for (const auto& b : procs_) channels_[{a.id, b.id}];
  for (std::size_t i = 0; i < procs.size(); ++i)
    for (std::size_t j = 0; j < procs[i].threads.size(); ++j) {
      ThreadCtx& t = *procs_[i].threads[j];
      t.body_ = procs[i].threads[j].body(t);
      start(t);
    }
}

std::unique_ptr<Simulator> spawn(std::vector<ProcessSpec> procs, const SimConfig& cfg) {
  if (procs.empty()) throw SimError("at least one process is required");
  return std::make_unique<Simulator>(std::move(procs), cfg);
}

std::size_t Simulator::in_flight() const {
  std::size_t n = 0;
  for (const auto& [key, q] : channels_) n += q.size();
  return n;
}

void Simulator::add_meta(std::string key, std::string value) {
  for (auto& [k, v] : trace_.meta)
    if (k == key) {
      v = std::move(value);
      return;
    }
  trace_.meta.emplace_back(std::move(key), std::move(value));
}

Value Simulator::local(ProcId p, const std::string& var) const {
  if (p < 0 || p >= n_procs()) throw SimError("unknown process " + std::to_string(p));
  auto it = procs_[p].store.find(var);
  if (it == procs_[p].store.end()) throw SimError("unknown variable '" + var + "' at process " + std::to_string(p));
  return it->second.value;
}

bool Simulator::thread_done(ProcId p, ThreadId t) const {
  for (const auto& th : procs_.at(p).threads)
    if (th->thread_ == t) return th->done_;
  throw SimError("unknown thread");
}

void Simulator::start(ThreadCtx& t) {
  t.resume_ = t.body_.handle();
  resume(t);
}

void Simulator::resume(ThreadCtx& t) {
  auto h = t.resume_;
  t.resume_ = {};
  t.pending_.op = ThreadCtx::Op::none;
  h.resume();
  if (t.body_.done()) {
    t.done_ = true;
    if (auto e = t.body_.error()) std::rethrow_exception(e);
  } else if (t.pending_.op == ThreadCtx::Op::none) {
    throw SimError("thread suspended without a pending action");
  }
}

Simulator::Slot& Simulator::slot(ProcId p, const std::string& var) {
  auto it = procs_[p].store.find(var);
  if (it == procs_[p].store.end()) throw SimError("unknown variable '" + var + "' at process " + std::to_string(p));
  return it->second;
}

void Simulator::emit(const ThreadCtx& t, EventKind kind, std::vector<std::string> args, std::string aux) {
  if (!cfg_.record_trace) return;
  trace_.events.push_back(TraceEvent{next_event_++, t.proc_, t.thread_, kind, std::move(args), std::move(aux)});
}

std::deque<Simulator::InFlight>* Simulator::match(const ThreadCtx& t) const {
  std::deque<InFlight>* best = nullptr;
  for (const auto& src : procs_) {
    auto& q = channels_.at({src.id, t.proc_});
    if (q.empty() || !t.pending_.pattern(src.id, q.front().msg)) continue;
    if (!best || q.front().seq < best->front().seq) best = &q;
  }
  return best;
}

bool Simulator::enabled(const ThreadCtx& t) const {
  if (t.done_) return false;
  switch (t.pending_.op) {
    case ThreadCtx::Op::none: return false;
    case ThreadCtx::Op::recv: return match(t) != nullptr;
    case ThreadCtx::Op::await: {
      auto it = procs_[t.proc_].store.find(t.pending_.var);
      if (it == procs_[t.proc_].store.end()) return true;  // fails loudly when executed
      return t.pending_.pred(it->second.value);
    }
    default: return true;
  }
}

void Simulator::execute(ThreadCtx& t) {
  auto& pend = t.pending_;
  switch (pend.op) {
    case ThreadCtx::Op::read:
    case ThreadCtx::Op::await: {
      Slot& s = slot(t.proc_, pend.var);
      t.value_ = s.value;
      emit(t, EventKind::read, {pend.var, std::to_string(s.value), std::to_string(s.version), layer_name(pend.layer)});
      resume(t);
      break;
    }
    case ThreadCtx::Op::write: {
      Slot& s = slot(t.proc_, pend.var);
      s.value = pend.value;
      ++s.version;
      emit(t, EventKind::write, {pend.var, std::to_string(s.value), std::to_string(s.version), layer_name(pend.layer)});
      const std::string var = pend.var;
      // Immediate wake of busy-waiters whose condition just became true.
      for (auto& other : procs_[t.proc_].threads) {
        ThreadCtx& o = *other;
        if (&o == &t || o.done_ || o.pending_.op != ThreadCtx::Op::await || o.pending_.var != var) continue;
        if (!o.pending_.pred(s.value)) continue;
        ++steps_;
        o.age_ = 0;
        execute(o);
      }
      resume(t);
      break;
    }
    case ThreadCtx::Op::send: {
      Process& p = procs_[t.proc_];
      std::string id = std::to_string(t.proc_) + "." + std::to_string(p.next_msg++);
      emit(t, EventKind::send, {std::to_string(pend.dst), id, pend.msg.body});
      channels_[{t.proc_, pend.dst}].push_back(InFlight{id, std::move(pend.msg), next_send_++});
      resume(t);
      break;
    }
    case ThreadCtx::Op::recv: {
      auto* q = match(t);
      if (!q) throw SimError("receive executed without a matching message");
      ProcId src = -1;
      for (const auto& [key, ch] : channels_)
        if (&ch == q) src = key.first;
      InFlight m = std::move(q->front());
      q->pop_front();
      emit(t, EventKind::recv, {std::to_string(src), m.id, m.msg.body});
      t.received_ = Received{src, std::move(m.id), std::move(m.msg)};
      resume(t);
      break;
    }
    case ThreadCtx::Op::none:
      throw SimError("thread has no pending action");
  }
}

ThreadCtx* Simulator::pick(const std::vector<ThreadCtx*>& runnable) {
  if (cfg_.fairness == "rr") {
    // next runnable thread after the cursor in global thread order
    for (std::size_t k = 0; k < all_threads_.size(); ++k) {
      ThreadCtx* t = all_threads_[(rr_cursor_ + k) % all_threads_.size()];
      if (std::find(runnable.begin(), runnable.end(), t) != runnable.end()) {
        rr_cursor_ = (rr_cursor_ + k + 1) % all_threads_.size();
        return t;
      }
    }
  }
  if (cfg_.fairness == "fair") {
    const std::uint64_t window = 16 * all_threads_.size();
    ThreadCtx* starved = nullptr;
    for (ThreadCtx* t : runnable)
      if (t->age_ >= window && (!starved || t->age_ > starved->age_)) starved = t;
    if (starved) return starved;
  }
  return runnable[rng_() % runnable.size()];
}

// Fills `runnable` with the threads allowed to move and reports whether the
// run is over.
RunStatus Simulator::classify(std::vector<ThreadCtx*>& runnable) {
  runnable.clear();
  bool mains_done = true, service_enabled = false, foreground = false;
  for (ThreadCtx* t : all_threads_) {
    if (t->role_ == ThreadRole::main && !t->done_) mains_done = false;
    if (t->role_ == ThreadRole::service && enabled(*t)) service_enabled = true;
  }
  for (const auto& [key, q] : channels_)
    for (const auto& m : q)
      if (!m.msg.background) foreground = true;

  if (mains_done && !service_enabled && !foreground) {
    // Only background traffic is left: let it settle without starting new
    // sends so that every message sent is also received.
    for (ThreadCtx* t : all_threads_)
      if (t->role_ == ThreadRole::background && t->pending_.op != ThreadCtx::Op::send && enabled(*t))
        runnable.push_back(t);
    if (runnable.empty()) return in_flight() == 0 ? RunStatus::quiescent : RunStatus::deadlock;
    return RunStatus::running;
  }
  for (ThreadCtx* t : all_threads_)
    if (enabled(*t)) runnable.push_back(t);
  return runnable.empty() ? RunStatus::deadlock : RunStatus::running;
}

bool Simulator::step() {
  if (trace_.status != RunStatus::running) return false;
  std::vector<ThreadCtx*> runnable;
  RunStatus s = classify(runnable);
  if (s != RunStatus::running) {
    trace_.status = s;
    trace_.steps = steps_;
    return false;
  }
  if (steps_ >= cfg_.max_steps) {
    trace_.status = RunStatus::budget_exhausted;
    trace_.steps = steps_;
    return false;
  }
  ThreadCtx* t = pick(runnable);
  // Age counts consecutive steps a thread was runnable without running.
  for (ThreadCtx* u : all_threads_)
    u->age_ = std::find(runnable.begin(), runnable.end(), u) != runnable.end() ? u->age_ + 1 : 0;
  t->age_ = 0;
  ++steps_;
  execute(*t);
  trace_.steps = steps_;
  return true;
}

RunStatus Simulator::run_to_quiescence() {
  while (step()) {
  }
  return trace_.status;
}

// ------------------------------------------------------------ trace text

std::string format_trace(const Trace& t) {
  std::ostringstream out;
  for (const auto& [k, v] : t.meta) out << "meta " << k << ' ' << v << '\n';
  out << "levels";
  for (const auto& l : t.levels) out << ' ' << l;
  out << '\n';
  for (const auto& [key, role] : t.threads) out << "thread " << key.first << ' ' << key.second << ' ' << role_name(role) << '\n';
  for (const auto& [p, vars] : t.locals)
    for (const auto& [var, v] : vars) out << "init " << p << ' ' << var << ' ' << v << '\n';
  for (const auto& [var, v] : t.spec_initial) out << "specinit " << var << ' ' << v << '\n';
  if (!t.recorded) out << "unrecorded\n";
  for (const auto& e : t.events) {
    out << e.step << ' ' << e.proc << ' ' << e.thread << ' ' << event_code(e.kind);
    for (const auto& a : e.args) out << ' ' << a;
    if (!e.aux.empty()) out << " | " << e.aux;
    out << '\n';
  }
  out << "end " << run_status_name(t.status) << ' ' << t.steps << '\n';
  return out.str();
}

Trace parse_trace(std::string_view text) {
  Trace t;
  t.levels.clear();
  std::size_t line_no = 0;
  for (const auto& raw : detail::lines(text)) {
    ++line_no;
    std::string line(raw);
    std::string aux;
    if (auto bar = line.find(" | "); bar != std::string::npos) {
      aux = line.substr(bar + 3);
      line.resize(bar);
    }
    std::vector<std::string> tok;
    for (auto sv : detail::tokenize(line)) tok.emplace_back(sv);
    if (tok.empty()) continue;
    auto num = [&](const std::string& s) {
      auto v = detail::to_int(s);
      if (!v) throw ParseError(line_no, "expected an integer, got '" + s + "'");
      return *v;
    };
    auto need = [&](std::size_t n) {
      if (tok.size() < n) throw ParseError(line_no, "too few fields");
    };
    const std::string& head = tok[0];
    if (head == "meta") {
      need(2);
      std::string value;
      for (std::size_t i = 2; i < tok.size(); ++i) value += (i > 2 ? " " : "") + tok[i];
      t.meta.emplace_back(tok[1], value);
    } else if (head == "levels") {
      t.levels.insert(tok.begin() + 1, tok.end());
    } else if (head == "thread") {
      need(4);
      ThreadRole r = tok[3] == "service" ? ThreadRole::service
                     : tok[3] == "background" ? ThreadRole::background
                     : tok[3] == "main" ? ThreadRole::main
                                        : throw ParseError(line_no, "unknown thread role '" + tok[3] + "'");
      t.threads[{static_cast<ProcId>(num(tok[1])), static_cast<ThreadId>(num(tok[2]))}] = r;
    } else if (head == "init") {
      need(4);
      t.locals[static_cast<ProcId>(num(tok[1]))][tok[2]] = num(tok[3]);
    } else if (head == "specinit") {
      need(3);
      t.spec_initial[tok[1]] = num(tok[2]);
    } else if (head == "unrecorded") {
      t.recorded = false;
    } else if (head == "end") {
      need(3);
      const std::string& s = tok[1];
      t.status = s == "quiescent" ? RunStatus::quiescent
                 : s == "budget"  ? RunStatus::budget_exhausted
                 : s == "deadlock" ? RunStatus::deadlock
                 : s == "running"  ? RunStatus::running
                                   : throw ParseError(line_no, "unknown run status '" + s + "'");
      t.steps = static_cast<std::uint64_t>(num(tok[2]));
    } else {
      need(4);
      TraceEvent e;
      e.step = static_cast<std::uint64_t>(num(tok[0]));
      e.proc = static_cast<ProcId>(num(tok[1]));
      e.thread = static_cast<ThreadId>(num(tok[2]));
      static const std::map<std::string, EventKind> codes{
          {"R", EventKind::read},   {"W", EventKind::write},       {"S", EventKind::send},
          {"V", EventKind::recv},   {"B", EventKind::bcast},       {"D", EventKind::deliver},
          {"SR", EventKind::spec_read}, {"SW", EventKind::spec_write}, {"X", EventKind::note}};
      auto it = codes.find(tok[3]);
      if (it == codes.end()) throw ParseError(line_no, "unknown event code '" + tok[3] + "'");
      e.kind = it->second;
      e.args.assign(tok.begin() + 4, tok.end());
      e.aux = aux;
      if (!t.events.empty() && e.step <= t.events.back().step) throw ParseError(line_no, "steps must increase");
      t.events.push_back(std::move(e));
    }
  }
  if (t.levels.empty()) t.levels.insert("network");
  return t;
}

// ------------------------------------------------------------ extraction

Level parse_level(std::string_view s) {
  if (s == "network" || s == "nw") return Level::network;
  if (s == "pob") return Level::pob;
  if (s == "spec" || s == "pc") return Level::spec;
  throw DomainError("unknown level '" + std::string(s) + "'");
}

Computation extract_computation(const Trace& t, Level level) {
  static const char* names[] = {"network", "pob", "spec"};
  const char* name = names[static_cast<int>(level)];
  if (!t.recorded) throw DomainError("trace was recorded without events");
  if (!t.levels.contains(name)) throw DomainError(std::string("trace has no ") + name + "-level annotations");

  Computation c;
  auto value = [](const std::string& s) {
    auto v = detail::to_int(s);
    if (!v) throw DomainError("malformed trace value '" + s + "'");
    return *v;
  };
  auto qualify = [](const std::string& var, ProcId p) { return var + "@" + std::to_string(p); };

  if (level == Level::pob)
    for (const auto& [p, vars] : t.locals)
      for (const auto& [var, v] : vars) c.set_initial(qualify(var, p), v);
  if (level == Level::spec)
    for (const auto& [var, v] : t.spec_initial) c.set_initial(var, v);
  for (const auto& [key, role] : t.threads)
    if (level != Level::spec || role == ThreadRole::main) c.declare_thread(key.first, key.second);

  for (const auto& e : t.events) {
    const auto& a = e.args;
    auto arity = [&](std::size_t n) {
      if (a.size() < n) throw DomainError("malformed trace event at step " + std::to_string(e.step));
    };
    switch (level) {
      case Level::network:
        if (e.kind == EventKind::read || e.kind == EventKind::write) {
          arity(3);
          Value version = value(a[2]);
          if (e.kind == EventKind::read)
            c.add(e.proc, e.thread, op::Read{a[0], version});
          else
            c.add(e.proc, e.thread, op::Write{a[0], version});
        } else if (e.kind == EventKind::send) {
          arity(2);
          c.add(e.proc, e.thread, op::Send{e.proc, static_cast<ProcId>(value(a[0])), a[1]});
        } else if (e.kind == EventKind::recv) {
          arity(2);
          c.add(e.proc, e.thread, op::Recv{static_cast<ProcId>(value(a[0])), e.proc, a[1]});
        }
        break;
      case Level::pob:
        if ((e.kind == EventKind::read || e.kind == EventKind::write) && a.size() >= 4 && a[3] == "app") {
          Value v = value(a[1]);
          if (e.kind == EventKind::read)
            c.add(e.proc, e.thread, op::Read{qualify(a[0], e.proc), v});
          else
            c.add(e.proc, e.thread, op::Write{qualify(a[0], e.proc), v});
        } else if (e.kind == EventKind::bcast || e.kind == EventKind::deliver) {
          arity(2);
          Label l = Label::parse(a[1]);
          if (e.kind == EventKind::bcast)
            c.add(e.proc, e.thread, op::Bcast{a[0], l});
          else
            c.add(e.proc, e.thread, op::Deliver{a[0], l});
        }
        break;
      case Level::spec:
        if (e.kind == EventKind::spec_read) {
          arity(2);
          c.add(e.proc, e.thread, op::Read{a[0], value(a[1])});
        } else if (e.kind == EventKind::spec_write) {
          arity(2);
          c.add(e.proc, e.thread, op::Write{a[0], value(a[1])});
        }
        break;
    }
  }
  return c;
}

}  // namespace pclab
