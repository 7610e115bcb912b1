#pragma once

// Deterministic simulator of the message-passing network: processes made of
// cooperatively stepped threads, a sequentially consistent local store per
// process, and reliable FIFO channels between every ordered pair of
// processes (self included).
//
// Each scheduler step performs one atomic action of one thread: a local
// read, a local write, a send or the consumption of one message. Code
// between actions (protocol bookkeeping, trace markers) is free.

#include <coroutine>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pclab/computation.hpp"
#include "pclab/task.hpp"

namespace pclab {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  std::uint64_t seed = 0;
  std::uint64_t max_steps = 2'000'000;
  /// fair (seeded random with a round-robin floor), random, rr
  std::string fairness = "fair";
  bool record_trace = true;
};

enum class Layer { app, proto };
/// Quiescence ignores background threads (and their messages) as long as
/// they are parked; service threads must be blocked on a receive.
enum class ThreadRole { main, service, background };

struct Message {
  std::string body;
  bool background = false;
};

struct Received {
  ProcId src = 0;
  std::string id;
  Message msg;
};

using Pattern = std::function<bool(ProcId src, const Message&)>;

// ------------------------------------------------------------------- trace

enum class EventKind { read, write, send, recv, bcast, deliver, spec_read, spec_write, note };

std::string_view event_code(EventKind k);

/// Arguments by kind:
///   read/write  var value version layer
///   send        dst id payload        recv   src id payload
///   bcast       update label          deliver update label
///   spec_read   var value             spec_write var value
///   note        key args...
struct TraceEvent {
  std::uint64_t step = 0;
  ProcId proc = 0;
  ThreadId thread = 0;
  EventKind kind = EventKind::note;
  std::vector<std::string> args;
  std::string aux;

  bool operator==(const TraceEvent&) const = default;
};

enum class RunStatus { running, quiescent, budget_exhausted, deadlock };
std::string_view run_status_name(RunStatus s);

struct Trace {
  std::vector<std::pair<std::string, std::string>> meta;
  /// Extraction levels the producer annotated: network, pob, spec.
  std::set<std::string> levels{"network"};
  std::map<std::pair<ProcId, ThreadId>, ThreadRole> threads;
  std::map<ProcId, std::map<std::string, Value>> locals;
  std::map<std::string, Value> spec_initial;
  std::vector<TraceEvent> events;
  RunStatus status = RunStatus::running;
  std::uint64_t steps = 0;
  bool recorded = true;

  std::string meta_value(std::string_view key) const;
  bool operator==(const Trace&) const = default;
};

std::string format_trace(const Trace& t);
/// Throws ParseError.
Trace parse_trace(std::string_view text);

enum class Level { network, pob, spec };
Level parse_level(std::string_view s);

/// network: reads/writes (values replaced by write versions, so writes-into
/// is unambiguous) plus sends and receives. pob: transform-layer reads and
/// writes, with variables qualified by process, plus bcast/deliver markers.
/// spec: the specification-level reads and writes of main threads.
Computation extract_computation(const Trace& t, Level level);

// --------------------------------------------------------------- simulator

class Simulator;

class ThreadCtx {
 public:
  struct StepAwaiter {
    ThreadCtx* ctx;
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h) noexcept { ctx->resume_ = h; }
    void await_resume() const noexcept {}
  };
  struct ValueAwaiter : StepAwaiter {
    Value await_resume() const noexcept { return ctx->value_; }
  };
  struct RecvAwaiter : StepAwaiter {
    Received await_resume() noexcept { return std::move(ctx->received_); }
  };

  ProcId proc() const { return proc_; }
  ThreadId thread() const { return thread_; }
  int n_procs() const;

  ValueAwaiter read(const std::string& var, Layer layer = Layer::proto);
  StepAwaiter write(const std::string& var, Value v, Layer layer = Layer::proto);
  StepAwaiter send(ProcId dst, const Message& m);
  /// Consumes the oldest channel head (by send order) that matches.
  RecvAwaiter recv(const Pattern& pattern);
  /// Busy-wait on a local variable, modeled as one read that happens as soon
  /// as `pred` holds. A write that makes `pred` true wakes the waiter
  /// immediately, so transient values are never missed.
  ValueAwaiter await_local(const std::string& var, const std::function<bool(Value)>& pred, Layer layer = Layer::proto);

  // Free trace markers.
  void mark_bcast(const std::string& update, Label l);
  void mark_deliver(const std::string& update, Label l, std::string aux = {});
  void mark_spec_read(const std::string& var, Value v);
  void mark_spec_write(const std::string& var, Value v);
  void note(std::vector<std::string> args);

 private:
  friend class Simulator;
  enum class Op { none, read, write, send, recv, await };
  struct Pending {
    Op op = Op::none;
    std::string var;
    Value value = 0;
    Layer layer = Layer::proto;
    ProcId dst = 0;
    Message msg;
    Pattern pattern;
    std::function<bool(Value)> pred;
  };

  Simulator* sim_ = nullptr;
  ProcId proc_ = 0;
  ThreadId thread_ = 0;
  ThreadRole role_ = ThreadRole::main;
  Pending pending_;
  std::coroutine_handle<> resume_;
  Value value_ = 0;
  Received received_;
  Task<> body_;
  bool done_ = false;
  std::uint64_t age_ = 0;

  ThreadCtx() : body_(idle()) {}
  static Task<> idle() { co_return; }
};

struct ThreadSpec {
  ThreadId id = 0;
  ThreadRole role = ThreadRole::main;
  std::function<Task<>(ThreadCtx&)> body;
};

struct ProcessSpec {
  ProcId id = 0;
  std::map<std::string, Value> locals;
  std::vector<ThreadSpec> threads;
};

class Simulator {
 public:
  Simulator(std::vector<ProcessSpec> procs, const SimConfig& cfg);
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  int n_procs() const { return static_cast<int>(procs_.size()); }
  std::size_t channel_count() const { return channels_.size(); }
  std::size_t in_flight() const;

  void add_meta(std::string key, std::string value);
  void declare_level(const std::string& level) { trace_.levels.insert(level); }
  void set_spec_initial(std::map<std::string, Value> init) { trace_.spec_initial = std::move(init); }

  /// Performs one atomic action; false when nothing may run.
  bool step();
  RunStatus run_to_quiescence();
  RunStatus status() const { return trace_.status; }
  std::uint64_t steps() const { return steps_; }

  Value local(ProcId p, const std::string& var) const;
  bool thread_done(ProcId p, ThreadId t) const;

  const Trace& trace() const { return trace_; }
  Trace take_trace() { return std::move(trace_); }

 private:
  friend class ThreadCtx;
  struct Slot {
    Value value = 0;
    std::uint64_t version = 0;
  };
  struct InFlight {
    std::string id;
    Message msg;
    std::uint64_t seq = 0;
  };
  struct Process {
    ProcId id = 0;
    std::map<std::string, Slot> store;
    std::vector<std::unique_ptr<ThreadCtx>> threads;
    std::uint64_t next_msg = 1;
  };

  void start(ThreadCtx& t);
  void resume(ThreadCtx& t);
  bool enabled(const ThreadCtx& t) const;
  std::deque<InFlight>* match(const ThreadCtx& t) const;
  void execute(ThreadCtx& t);
  Slot& slot(ProcId p, const std::string& var);
  void emit(const ThreadCtx& t, EventKind kind, std::vector<std::string> args, std::string aux = {});
  ThreadCtx* pick(const std::vector<ThreadCtx*>& runnable);
  RunStatus classify(std::vector<ThreadCtx*>& runnable);

  SimConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<Process> procs_;
  std::vector<ThreadCtx*> all_threads_;
  mutable std::map<std::pair<ProcId, ProcId>, std::deque<InFlight>> channels_;
  std::uint64_t steps_ = 0;
  std::uint64_t next_event_ = 0;
  std::uint64_t next_send_ = 0;
  std::size_t rr_cursor_ = 0;
  Trace trace_;
};

/// Validates the specs (at least one process, ids 0..n-1 without
/// duplicates) and starts every thread.
std::unique_ptr<Simulator> spawn(std::vector<ProcessSpec> procs, const SimConfig& cfg = {});

}  // namespace pclab
