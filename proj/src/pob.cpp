// Wire encoding and both broadcast backends.

#include "pclab/pob.hpp"

#include "text_util.hpp"

namespace pclab {

// ------------------------------------------------------------------ wire

namespace {

std::string join(std::initializer_list<std::string> fields) {
  std::string out = "[";
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out += ',';
    out += f;
    first = false;
  }
  return out + "]";
}

}  // namespace

Message encode(const WireMessage& m) {
  return std::visit(
      [](const auto& w) -> Message {
        using W = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<W, wire::Data>) {
          return {join({"MESSAGE", w.update, w.label.str()})};
        } else if constexpr (std::is_same_v<W, wire::Ack>) {
          return {"[ACK]"};
        } else if constexpr (std::is_same_v<W, wire::Token>) {
          return {join({"TOKEN", w.label.str()}), true};
        } else if constexpr (std::is_same_v<W, wire::LocalBroadcastRequest>) {
          return {join({"LBR", w.update, w.label.str()})};
        } else if constexpr (std::is_same_v<W, wire::OrdMsg>) {
          return {join({"ORD", w.label.str(), w.qe.update, std::to_string(w.qe.ts), std::to_string(w.qe.counter),
                        std::to_string(w.qe.src)})};
        } else {
          return {join({"TSU", std::to_string(w.ts), std::to_string(w.proc)})};
        }
      },
      m);
}

std::string_view wire_tag(std::string_view body) {
  if (body.size() < 2 || body.front() != '[') return {};
  auto end = body.find_first_of(",]");
  if (end == std::string_view::npos) return {};
  return body.substr(1, end - 1);
}

WireMessage decode(std::string_view body) {
  if (body.size() < 2 || body.front() != '[' || body.back() != ']') throw SimError("malformed message " + std::string(body));
  auto f = detail::split(body.substr(1, body.size() - 2), ',');
  auto fail = [&]() -> SimError { return SimError("malformed message " + std::string(body)); };
  auto num = [&](std::string_view s) {
    auto v = detail::to_int(s);
    if (!v) throw fail();
    return *v;
  };
  auto label = [&](std::string_view s) {
    try {
      return Label::parse(s);
    } catch (const DomainError&) {
      throw fail();
    }
  };
  const std::string_view tag = f[0];
  if (tag == "MESSAGE" && f.size() == 3) return wire::Data{std::string(f[1]), label(f[2])};
  if (tag == "ACK" && f.size() == 1) return wire::Ack{};
  if (tag == "TOKEN" && f.size() == 2) return wire::Token{label(f[1])};
  if (tag == "LBR" && f.size() == 3) return wire::LocalBroadcastRequest{std::string(f[1]), label(f[2])};
  if (tag == "ORD" && f.size() == 6)
    return wire::OrdMsg{label(f[1]),
                        QueueElement{std::string(f[2]), num(f[3]), num(f[4]), static_cast<ProcId>(num(f[5]))}};
  if (tag == "TSU" && f.size() == 3) return wire::TsUpdate{num(f[1]), static_cast<ProcId>(num(f[2]))};
  throw fail();
}

Backend parse_backend(std::string_view s) {
  if (s == "token") return Backend::token;
  if (s == "timestamp" || s == "ts") return Backend::timestamp;
  throw DomainError("unknown broadcast backend '" + std::string(s) + "'");
}

std::string_view backend_name(Backend b) { return b == Backend::token ? "token" : "timestamp"; }

std::string need_token_var(Label l) { return "needToken." + l.str(); }
std::string door_open_var(Label l) { return "doorOpen." + l.str(); }

namespace {

bool has_tag(const Message& m, std::string_view tag) { return wire_tag(m.body) == tag; }

// Remembers which thread calls bcast and which calls deliver.
struct ThreadWiring {
  std::optional<ThreadId> bcast_thread, deliver_thread;

  void on_bcast(const ThreadCtx& ctx, bool separate) {
    if (separate && deliver_thread == ctx.thread())
      throw SimError("bcast and deliver must be invoked by separate threads");
    bcast_thread = ctx.thread();
  }
  void on_deliver(const ThreadCtx& ctx, bool separate) {
    if (deliver_thread && *deliver_thread != ctx.thread())
      throw SimError("at most one thread per process may call deliver");
    if (separate && bcast_thread == ctx.thread())
      throw SimError("bcast and deliver must be invoked by separate threads");
    deliver_thread = ctx.thread();
  }
};

// ---------------------------------------------------------------- token

class TokenEndpoint : public PobEndpoint {
 public:
  Task<> bcast(ThreadCtx& ctx, const std::string& update, Label l) override {
    wiring_.on_bcast(ctx, true);
    ctx.mark_bcast(update, l);
    if (!l.is_null())
      co_await protected_bcast(ctx, update, l);
    else
      co_await bcastop(ctx, update, l);
  }

  Task<Delivery> deliver(ThreadCtx& ctx) override {
    wiring_.on_deliver(ctx, true);
    Pattern is_data = [](ProcId, const Message& m) { return has_tag(m, "MESSAGE"); };
    Received r = co_await ctx.recv(is_data);
    auto d = std::get<wire::Data>(decode(r.msg.body));
    if (!d.label.is_null()) {
      Message ack = encode(wire::Ack{});
      co_await ctx.send(r.src, ack);
    }
    ctx.mark_deliver(d.update, d.label);
    co_return Delivery{d.update, d.label};
  }

  static Task<> token_thread(ThreadCtx& ctx, Label l) {
    const ProcId next = next_proc(ctx.proc(), ctx.n_procs());
    const Message token = encode(wire::Token{l});
    if (ctx.proc() == 0) co_await ctx.send(next, token);
    while (true) co_await pass_token(ctx, l, next, token);
  }

 private:
  Task<> protected_bcast(ThreadCtx& ctx, const std::string& update, Label l) {
    const std::string need = need_token_var(l), door = door_open_var(l);
    std::function<bool(Value)> open = [](Value v) { return v != 0; };
    co_await ctx.write(need, 1);
    co_await ctx.await_local(door, open);
    co_await bcastop(ctx, update, l);
    co_await ctx.write(door, 0);
    co_await ctx.write(need, 0);
  }

  Task<> bcastop(ThreadCtx& ctx, const std::string& update, Label l) {
    const Message data = encode(wire::Data{update, l});
    for (ProcId q = 0; q < ctx.n_procs(); ++q) co_await ctx.send(q, data);
    if (l.is_null()) co_return;
    for (ProcId q = 0; q < ctx.n_procs(); ++q) {
      Pattern ack_from = [q](ProcId src, const Message& m) { return src == q && has_tag(m, "ACK"); };
      co_await ctx.recv(ack_from);
    }
  }

  static Task<> pass_token(ThreadCtx& ctx, Label l, ProcId next, const Message& token) {
    const std::string need_var = need_token_var(l), door = door_open_var(l);
    Pattern is_token = [body = token.body](ProcId, const Message& m) { return m.body == body; };
    std::function<bool(Value)> released = [](Value v) { return v == 0; };
    co_await ctx.recv(is_token);
    Value need = co_await ctx.read(need_var);
    if (need != 0) {
      co_await ctx.write(door, 1);
      co_await ctx.await_local(need_var, released);
    }
    co_await ctx.send(next, token);
  }

  ThreadWiring wiring_;
};

// ------------------------------------------------------------ timestamp

class TsEndpoint : public PobEndpoint {
 public:
  TsEndpoint(ProcId p, int n, bool strict) : st_(p, n, strict) {}

  Task<> bcast(ThreadCtx& ctx, const std::string& update, Label l) override {
    wiring_.on_bcast(ctx, false);
    ctx.mark_bcast(update, l);
    Message lbr = encode(wire::LocalBroadcastRequest{update, l});
    co_await ctx.send(ctx.proc(), lbr);
  }

  Task<Delivery> deliver(ThreadCtx& ctx) override {
    wiring_.on_deliver(ctx, false);
    std::optional<std::pair<QueueElement, Label>> got;
    while (!(got = st_.dequeue_eligible())) co_await handle_message(ctx);
    const auto& [qe, l] = *got;
    ctx.note({"counter", std::to_string(qe.src), std::to_string(qe.counter)});
    ctx.mark_deliver(qe.update, l,
                     "ts=" + std::to_string(qe.ts) + " src=" + std::to_string(qe.src) + " ctr=" + std::to_string(qe.counter));
    co_return Delivery{qe.update, l};
  }

 private:
  Task<> handle_message(ThreadCtx& ctx) {
    Pattern any = [](ProcId, const Message&) { return true; };
    Received r = co_await ctx.recv(any);
    TsState::Effects fx = st_.handle(decode(r.msg.body), r.src);
    for (const auto& [q, v] : fx.t_writes) ctx.note({"T", std::to_string(q), std::to_string(v)});
    if (fx.broadcast) {
      Message m = encode(*fx.broadcast);
      co_await fifo_broadcast(ctx, m);
    }
  }

  static Task<> fifo_broadcast(ThreadCtx& ctx, const Message& m) {
    for (ProcId q = 0; q < ctx.n_procs(); ++q)
      if (q != ctx.proc()) co_await ctx.send(q, m);
  }

  TsState st_;
  ThreadWiring wiring_;
};

}  // namespace

PobProcess make_pob_process(Backend b, ProcId p, int n_procs, const std::set<Label>& labels, ThreadId first_thread,
                            const PobOptions& opts) {
  PobProcess out;
  if (b == Backend::timestamp) {
    out.endpoint = std::make_shared<TsEndpoint>(p, n_procs, opts.strict_extract);
    return out;
  }
  auto ep = std::make_shared<TokenEndpoint>();
  out.endpoint = ep;
  ThreadId next = first_thread;
  for (Label l : labels) {
    if (l.is_null()) continue;
    // Both handshake variables start FALSE so a label nobody broadcasts on
    // never holds the token.
    out.locals[need_token_var(l)] = 0;
    out.locals[door_open_var(l)] = 0;
    out.threads.push_back(ThreadSpec{next++, ThreadRole::background,
                                     [l](ThreadCtx& ctx) { return TokenEndpoint::token_thread(ctx, l); }});
  }
  return out;
}

// ------------------------------------------------------------- TsState

TsState::TsState(ProcId self_, int n_procs, bool strict_)
    : self(self_), T(n_procs, 0), counter(n_procs, 0), fifo_q(n_procs), strict(strict_) {}

bool TsState::can_extract(Label l) const {
  auto it = priority_q.find(l);
  if (it == priority_q.end() || it->second.empty()) return false;
  const QueueElement& qe = *it->second.begin();
  if (qe.counter != counter.at(qe.src) + 1) return false;
  for (Value t : T)
    if (strict ? !(qe.ts < t) : !(qe.ts <= t)) return false;
  return true;
}

bool TsState::can_dequeue(ProcId src) const {
  const auto& q = fifo_q.at(src);
  if (q.empty()) return false;
  return q.front().counter == counter.at(q.front().src) + 1;
}

void TsState::process_queue_element(const QueueElement& qe, Label l, ProcId source) {
  if (!l.is_null())
    priority_q[l].insert(qe);
  else
    fifo_q.at(source).push_back(qe);
}

TsState::Effects TsState::handle(const WireMessage& m, ProcId from) {
  Effects fx;
  auto set_T = [&](ProcId q, Value v) {
    T.at(q) = v;
    fx.t_writes.emplace_back(q, v);
  };
  if (auto* lbr = std::get_if<wire::LocalBroadcastRequest>(&m)) {
    if (from != self) throw SimError("protocol error: local-broadcast-request from another process");
    set_T(self, T[self] + 1);
    ++local_counter;
    QueueElement qe{lbr->update, T[self], local_counter, self};
    process_queue_element(qe, lbr->label, self);
    fx.broadcast = wire::OrdMsg{lbr->label, qe};
  } else if (auto* tsu = std::get_if<wire::TsUpdate>(&m)) {
    if (tsu->proc < 0 || tsu->proc >= static_cast<ProcId>(T.size()))
      throw SimError("protocol error: ts-update for unknown process");
    set_T(tsu->proc, tsu->ts);
  } else if (auto* ord = std::get_if<wire::OrdMsg>(&m)) {
    set_T(from, ord->qe.ts);
    process_queue_element(ord->qe, ord->label, from);
    if (ord->qe.ts > T[self]) {
      set_T(self, ord->qe.ts);
      fx.broadcast = wire::TsUpdate{T[self], self};
    }
  } else {
    throw SimError("protocol error: unexpected message " + encode(m).body);
  }
  return fx;
}

std::optional<std::pair<QueueElement, Label>> TsState::dequeue_eligible() {
  std::optional<Label> best;
  for (const auto& [l, q] : priority_q)
    if (can_extract(l) && (!best || ByTsSrc{}(*q.begin(), *priority_q.at(*best).begin()))) best = l;
  if (best) {
    auto& q = priority_q.at(*best);
    QueueElement qe = *q.begin();
    q.erase(q.begin());
    counter.at(qe.src) = qe.counter;
    return std::pair{qe, *best};
  }
  for (ProcId s = 0; s < static_cast<ProcId>(fifo_q.size()); ++s)
    if (can_dequeue(s)) {
      QueueElement qe = fifo_q[s].front();
      fifo_q[s].pop_front();
      counter.at(qe.src) = qe.counter;
      return std::pair{qe, Label::none()};
    }
  return std::nullopt;
}

}  // namespace pclab
