#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "pclab/checker.hpp"
#include "pclab/monitors.hpp"
#include "pclab/pob.hpp"

using namespace pclab;

namespace {

using Script = std::vector<std::pair<std::string, Label>>;

Task<> broadcaster(ThreadCtx& ctx, std::shared_ptr<PobEndpoint> ep, Script script) {
  for (const auto& [u, l] : script) co_await ep->bcast(ctx, u, l);
}

Task<> deliverer(ThreadCtx& ctx, std::shared_ptr<PobEndpoint> ep, std::vector<Delivery>* out) {
  while (true) out->push_back(co_await ep->deliver(ctx));
}

Task<> bcast_then_deliver(ThreadCtx& ctx, std::shared_ptr<PobEndpoint> ep) {
  std::vector<Delivery> sink;
  const std::string u = "u";
  co_await ep->bcast(ctx, u, Label::none());
  co_await deliverer(ctx, ep, &sink);
}

struct Run {
  std::unique_ptr<Simulator> sim;
  std::vector<std::vector<Delivery>> delivered;
  RunStatus status = RunStatus::running;

  const std::vector<TraceEvent>& events() const { return sim->trace().events; }
};

// Thread 0 broadcasts the process's script, thread 1 delivers, backend
// threads follow.
std::unique_ptr<Run> run(Backend b, const std::vector<Script>& scripts, std::uint64_t seed = 0) {
  auto r = std::make_unique<Run>();
  const int n = static_cast<int>(scripts.size());
  r->delivered.resize(n);
  std::set<Label> labels;
  for (const auto& s : scripts)
    for (const auto& [u, l] : s)
      if (!l.is_null()) labels.insert(l);
  std::vector<ProcessSpec> procs;
  for (ProcId p = 0; p < n; ++p) {
    PobProcess pob = make_pob_process(b, p, n, labels, 2);
    ProcessSpec ps{p, pob.locals, {}};
    auto ep = pob.endpoint;
    auto* out = &r->delivered[p];
    Script script = scripts[p];
    ps.threads.push_back({0, ThreadRole::main, [ep, script](ThreadCtx& c) { return broadcaster(c, ep, script); }});
    ps.threads.push_back({1, ThreadRole::service, [ep, out](ThreadCtx& c) { return deliverer(c, ep, out); }});
    for (auto& t : pob.threads) ps.threads.push_back(std::move(t));
    procs.push_back(std::move(ps));
  }
  SimConfig cfg;
  cfg.seed = seed;
  r->sim = spawn(std::move(procs), cfg);
  r->sim->add_meta("stack", std::string("harness/") + std::string(backend_name(b)));
  r->sim->declare_level("pob");
  r->status = r->sim->run_to_quiescence();
  return r;
}

int count(const std::vector<TraceEvent>& ev, EventKind k, std::string_view tag, std::optional<ProcId> proc = {},
          std::optional<ThreadId> thread = {}) {
  int n = 0;
  for (const auto& e : ev)
    if (e.kind == k && e.args.size() >= 3 && wire_tag(e.args[2]) == tag && (!proc || e.proc == *proc) &&
        (!thread || e.thread == *thread))
      ++n;
  return n;
}

const Label L1{1}, L2{2};

}  // namespace

TEST_CASE("wire encoding") {
  std::vector<WireMessage> all{wire::Data{"x:1:0:1", L1},
                               wire::Data{"x:1:0:1", Label::none()},
                               wire::Ack{},
                               wire::Token{L2},
                               wire::LocalBroadcastRequest{"u", L1},
                               wire::OrdMsg{L1, QueueElement{"u", 5, 8, 2}},
                               wire::TsUpdate{9, 1}};
  for (const auto& m : all) {
    Message enc = encode(m);
    CHECK(encode(decode(enc.body)).body == enc.body);
    CHECK(enc.background == std::holds_alternative<wire::Token>(m));
  }
  CHECK(encode(wire::Data{"u", L1}).body == "[MESSAGE,u,1]");
  CHECK(encode(wire::Data{"u", Label::none()}).body == "[MESSAGE,u,_]");
  CHECK(encode(wire::OrdMsg{L1, QueueElement{"u", 5, 8, 2}}).body == "[ORD,1,u,5,8,2]");
  CHECK(wire_tag("[TOKEN,1]") == "TOKEN");
  CHECK(wire_tag("junk") == "");
  CHECK_THROWS_AS(decode("[NOPE]"), SimError);
  CHECK_THROWS_AS(decode("[ORD,1,u,x,8,2]"), SimError);
  CHECK_THROWS_AS(decode("MESSAGE,u,1"), SimError);
  CHECK(parse_backend("ts") == Backend::timestamp);
  CHECK_THROWS_AS(parse_backend("paxos"), DomainError);
}

TEST_CASE("token ring") {
  CHECK(next_proc(0, 3) == 1);
  CHECK(next_proc(2, 3) == 0);
  CHECK(next_proc(0, 1) == 0);
}

TEST_CASE("token bcast") {
  SUBCASE("unlabeled: one send per process, no acks") {
    auto r = run(Backend::token, {{{"u", Label::none()}}, {}, {}});
    CHECK(r->status == RunStatus::quiescent);
    CHECK(count(r->events(), EventKind::send, "MESSAGE", 0, 0) == 3);
    CHECK(count(r->events(), EventKind::recv, "ACK") == 0);
    CHECK(count(r->events(), EventKind::send, "ACK") == 0);
    for (const auto& d : r->delivered) CHECK(d.size() == 1);
  }
  SUBCASE("labeled: sends then acks, inside the handshake") {
    auto r = run(Backend::token, {{{"u", L1}}, {}, {}});
    CHECK(r->status == RunStatus::quiescent);
    // the main thread's own actions in order
    std::vector<std::string> seq;
    for (const auto& e : r->events()) {
      if (e.proc != 0 || e.thread != 0) continue;
      if (e.kind == EventKind::send || e.kind == EventKind::recv)
        seq.push_back(std::string(event_code(e.kind)) + std::string(wire_tag(e.args[2])));
      if (e.kind == EventKind::write || e.kind == EventKind::read) seq.push_back(std::string(event_code(e.kind)) + e.args[0] + "=" + e.args[1]);
    }
    std::vector<std::string> expect{"WneedToken.1=1", "RdoorOpen.1=1", "SMESSAGE", "SMESSAGE", "SMESSAGE",
                                    "VACK",           "VACK",          "VACK",     "WdoorOpen.1=0", "WneedToken.1=0"};
    CHECK(seq == expect);
    CHECK(count(r->events(), EventKind::send, "ACK") == 3);
    CHECK(r->sim->local(0, door_open_var(L1)) == 0);
    CHECK(r->sim->local(0, need_token_var(L1)) == 0);
  }
  SUBCASE("single process") {
    auto r = run(Backend::token, {{{"a", L1}, {"b", Label::none()}, {"c", L1}}});
    CHECK(r->status == RunStatus::quiescent);
    CHECK(r->delivered[0].size() == 3);
    // the token alternates on the self channel
    std::vector<EventKind> tok;
    for (const auto& e : r->events())
      if ((e.kind == EventKind::send || e.kind == EventKind::recv) && wire_tag(e.args[2]) == "TOKEN") {
        CHECK(e.args[0] == "0");
        tok.push_back(e.kind);
      }
    REQUIRE(tok.size() >= 2);
    for (std::size_t i = 0; i < tok.size(); ++i) CHECK(tok[i] == (i % 2 == 0 ? EventKind::send : EventKind::recv));
  }
  SUBCASE("back-to-back labeled bcasts acquire the token twice") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto r = run(Backend::token, {{{"a", L1}, {"b", L1}}, {}, {}}, seed);
      CHECK(r->status == RunStatus::quiescent);
      int grants = 0;
      for (const auto& e : r->events())
        if (e.proc == 0 && e.kind == EventKind::write && e.args[0] == door_open_var(L1) && e.args[1] == "1") ++grants;
      CHECK(grants == 2);
    }
  }
  SUBCASE("an idle token is forwarded without opening the door") {
    auto r = run(Backend::token, {{{"u", L1}}, {}, {}}, 4);
    const auto& ev = r->events();
    int inspected = 0;
    for (std::size_t i = 0; i < ev.size(); ++i) {
      const auto& e = ev[i];
      if (e.proc == 0 || e.kind != EventKind::recv || wire_tag(e.args[2]) != "TOKEN") continue;
      // next actions of the same token thread: read needToken=0, then send
      std::vector<const TraceEvent*> next;
      for (std::size_t j = i + 1; j < ev.size() && next.size() < 2; ++j)
        if (ev[j].proc == e.proc && ev[j].thread == e.thread) next.push_back(&ev[j]);
      if (next.size() < 2) continue;
      CHECK(next[0]->kind == EventKind::read);
      CHECK(next[0]->args[1] == "0");
      CHECK(next[1]->kind == EventKind::send);
      ++inspected;
    }
    CHECK(inspected >= 2);
  }
  SUBCASE("a lone bcaster finishes within one circulation") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto r = run(Backend::token, {{}, {{"u", L1}}, {}}, seed);
      std::optional<std::uint64_t> start, end;
      for (const auto& e : r->events()) {
        if (e.proc == 1 && e.kind == EventKind::bcast) start = e.step;
        if (e.proc == 1 && e.thread == 0 && e.kind == EventKind::write && e.args[0] == need_token_var(L1) &&
            e.args[1] == "0")
          end = e.step;
      }
      REQUIRE(start);
      REQUIRE(end);
      int arrivals = 0;
      for (const auto& e : r->events())
        if (e.proc == 1 && e.step > *start && e.step < *end && e.kind == EventKind::recv &&
            wire_tag(e.args[2]) == "TOKEN")
          ++arrivals;
      CHECK(arrivals <= 2);
    }
  }
  SUBCASE("deliver ignores tokens") {
    auto r = run(Backend::token, {{{"u", L1}}, {}});
    // nothing but the token moves after the broadcast; deliverers stay blocked
    CHECK(r->status == RunStatus::quiescent);
    CHECK_FALSE(r->sim->thread_done(0, 1));
    for (const auto& d : r->delivered) CHECK(d.size() == 1);
  }
  SUBCASE("deliver acks labeled messages to their sender") {
    auto r = run(Backend::token, {{{"u", L2}}, {{"v", Label::none()}}, {}});
    int acks_to_0 = 0, acks_to_1 = 0;
    for (const auto& e : r->events())
      if (e.kind == EventKind::send && wire_tag(e.args[2]) == "ACK") (e.args[0] == "0" ? acks_to_0 : acks_to_1)++;
    CHECK(acks_to_0 == 3);
    CHECK(acks_to_1 == 0);
  }
  SUBCASE("bcast and deliver on one thread is rejected") {
    PobProcess pob = make_pob_process(Backend::token, 0, 1, {L1}, 2);
    auto ep = pob.endpoint;
    ProcessSpec ps{0, pob.locals, {}};
    ps.threads.push_back({0, ThreadRole::main, [ep](ThreadCtx& c) { return bcast_then_deliver(c, ep); }});
    auto sim = spawn({ps});
    CHECK_THROWS_AS(sim->run_to_quiescence(), SimError);
  }
}

TEST_CASE("timestamp state") {
  // process 0 of 3; the element comes from process 1
  TsState st(0, 3);
  const QueueElement head{"u", 5, 2, 1};
  st.process_queue_element(head, L1, 1);

  SUBCASE("can_extract") {
    st.T = {5, 6, 7};
    st.counter[1] = 1;
    CHECK(st.can_extract(L1));
    st.counter[1] = 0;
    CHECK_FALSE(st.can_extract(L1));
    st.counter[1] = 1;
    st.T = {5, 4, 7};
    CHECK_FALSE(st.can_extract(L1));
    CHECK_FALSE(st.can_extract(L2));
  }
  SUBCASE("strict comparison variant") {
    TsState strict(0, 3, true);
    strict.process_queue_element(head, L1, 1);
    strict.counter[1] = 1;
    strict.T = {5, 6, 7};
    CHECK_FALSE(strict.can_extract(L1));
    strict.T = {6, 6, 7};
    CHECK(strict.can_extract(L1));
  }
  SUBCASE("can_dequeue") {
    CHECK_FALSE(st.can_dequeue(2));
    st.process_queue_element(QueueElement{"v", 1, 1, 2}, Label::none(), 2);
    CHECK(st.can_dequeue(2));
    TsState other(0, 3);
    other.process_queue_element(QueueElement{"w", 1, 3, 2}, Label::none(), 2);
    other.counter[2] = 1;
    CHECK_FALSE(other.can_dequeue(2));
  }
  SUBCASE("routing") {
    CHECK(st.priority_q[L1].size() == 1);
    st.process_queue_element(QueueElement{"v", 3, 1, 2}, L2, 2);
    CHECK(st.priority_q[L2].size() == 1);
    st.process_queue_element(QueueElement{"w", 3, 1, 2}, Label::none(), 2);
    CHECK(st.fifo_q[2].size() == 1);
  }
  SUBCASE("priority queues order by (ts, src)") {
    st.process_queue_element(QueueElement{"a", 5, 1, 0}, L1, 0);
    st.process_queue_element(QueueElement{"b", 4, 1, 2}, L1, 2);
    std::vector<std::string> order;
    for (const auto& qe : st.priority_q[L1]) order.push_back(qe.update);
    CHECK(order == std::vector<std::string>{"b", "a", "u"});
  }
  SUBCASE("choice rule and counter update") {
    st.T = {9, 9, 9};
    st.counter[1] = 1;
    st.process_queue_element(QueueElement{"f", 1, 1, 2}, Label::none(), 2);
    st.process_queue_element(QueueElement{"g", 4, 1, 0}, L2, 0);
    auto first = st.dequeue_eligible();
    REQUIRE(first);
    CHECK(first->first.update == "g");  // least (ts, src) among eligible labeled heads
    CHECK(st.counter[0] == 1);
    auto second = st.dequeue_eligible();
    REQUIRE(second);
    CHECK(second->first.update == "u");
    CHECK(st.counter[1] == 2);
    auto third = st.dequeue_eligible();
    REQUIRE(third);
    CHECK(third->first.update == "f");
    CHECK(third->second.is_null());
    CHECK_FALSE(st.dequeue_eligible());
  }
  SUBCASE("delivering counter 3 sets counter to 3") {
    TsState s(0, 2);
    s.counter[1] = 2;
    s.process_queue_element(QueueElement{"z", 1, 3, 1}, Label::none(), 1);
    REQUIRE(s.dequeue_eligible());
    CHECK(s.counter[1] == 3);
  }
}

TEST_CASE("timestamp handle_message") {
  SUBCASE("local broadcast request") {
    TsState st(2, 3);
    st.T[2] = 4;
    st.local_counter = 7;
    auto fx = st.handle(wire::LocalBroadcastRequest{"u", L1}, 2);
    const QueueElement expect{"u", 5, 8, 2};
    CHECK(st.priority_q[L1].count(expect) == 1);
    REQUIRE(fx.broadcast);
    CHECK(encode(*fx.broadcast).body == encode(wire::OrdMsg{L1, expect}).body);
    CHECK(fx.t_writes == std::vector<std::pair<ProcId, Value>>{{2, 5}});
    CHECK_THROWS_AS(st.handle(wire::LocalBroadcastRequest{"u", L1}, 1), SimError);
  }
  SUBCASE("ord-msg raising the local clock") {
    TsState st(0, 3);
    st.T[0] = 6;
    auto fx = st.handle(wire::OrdMsg{L1, QueueElement{"u", 9, 1, 1}}, 1);
    CHECK(st.T[1] == 9);
    CHECK(st.T[0] == 9);
    REQUIRE(fx.broadcast);
    CHECK(encode(*fx.broadcast).body == "[TSU,9,0]");
  }
  SUBCASE("ord-msg below the local clock") {
    TsState st(0, 3);
    st.T[0] = 6;
    auto fx = st.handle(wire::OrdMsg{L1, QueueElement{"u", 3, 1, 1}}, 1);
    CHECK(st.T[1] == 3);
    CHECK(st.T[0] == 6);
    CHECK_FALSE(fx.broadcast);
  }
  SUBCASE("ts-update") {
    TsState st(0, 3);
    auto fx = st.handle(wire::TsUpdate{4, 2}, 2);
    CHECK(st.T[2] == 4);
    CHECK_FALSE(fx.broadcast);
    CHECK_THROWS_AS(st.handle(wire::TsUpdate{4, 7}, 2), SimError);
  }
  SUBCASE("messages of the other backend") {
    TsState st(0, 3);
    CHECK_THROWS_AS(st.handle(wire::Ack{}, 1), SimError);
    CHECK_THROWS_AS(st.handle(wire::Data{"u", L1}, 1), SimError);
  }
}

TEST_CASE("timestamp bcast and deliver") {
  SUBCASE("bcast is one self send and touches no state") {
    auto r = run(Backend::timestamp, {{{"a", L1}, {"b", Label::none()}}, {}, {}});
    CHECK(r->status == RunStatus::quiescent);
    std::vector<std::string> main_ops;
    for (const auto& e : r->events())
      if (e.proc == 0 && e.thread == 0 && e.kind != EventKind::bcast) {
        CHECK(e.kind == EventKind::send);
        CHECK(e.args[0] == "0");
        main_ops.push_back(e.args[2]);
      }
    CHECK(main_ops == std::vector<std::string>{"[LBR,a,1]", "[LBR,b,_]"});
  }
  SUBCASE("fifo broadcast reaches every other process") {
    auto r = run(Backend::timestamp, {{{"a", L1}}, {}, {}, {}});
    int ords = 0;
    for (const auto& e : r->events())
      if (e.kind == EventKind::send && wire_tag(e.args[2]) == "ORD") {
        CHECK(e.args[0] != "0");
        ++ords;
      }
    CHECK(ords == 3);
  }
  SUBCASE("deliver notes the counter it sets") {
    auto r = run(Backend::timestamp, {{{"a", L1}, {"b", L1}, {"c", Label::none()}}, {}});
    std::vector<std::string> at1;
    for (const auto& e : r->events())
      if (e.proc == 1 && e.kind == EventKind::note && e.args[0] == "counter") at1.push_back(e.args[2]);
    CHECK(at1 == std::vector<std::string>{"1", "2", "3"});
  }
}

TEST_CASE("broadcast properties on random scripts") {
  // random scripts over up to 3 processes and 2 labels, every backend:
  // quiescence, POB[L] on the extracted computation, all monitors
  std::mt19937 rng(7);
  int checked = 0;
  for (int round = 0; round < 60; ++round) {
    const int n = 1 + static_cast<int>(rng() % 3);
    std::vector<Script> scripts(n);
    int next = 0;
    for (auto& s : scripts) {
      const int k = static_cast<int>(rng() % 4);
      for (int i = 0; i < k; ++i) s.push_back({"u" + std::to_string(next++), Label(static_cast<int>(rng() % 3))});
    }
    for (Backend b : {Backend::token, Backend::timestamp}) {
      auto r = run(b, scripts, round);
      REQUIRE(r->status == RunStatus::quiescent);
      for (const auto& m : run_monitors(r->sim->trace())) {
        INFO(m.name << ": " << m.detail);
        CHECK(m.passed);
      }
      Computation c = extract_computation(r->sim->trace(), Level::pob);
      std::set<Label> labels{L1, L2};
      CHECK(check_pob(c, labels).satisfied());
      for (const auto& d : r->delivered) CHECK(static_cast<int>(d.size()) == next);
      ++checked;
    }
  }
  CHECK(checked == 120);
}
