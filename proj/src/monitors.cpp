#include "pclab/monitors.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "pclab/checker.hpp"
#include "pclab/pob.hpp"
#include "pclab/transform.hpp"
#include "text_util.hpp"

namespace pclab {

namespace {

MonitorResult pass(std::string name) { return {std::move(name), true, {}}; }
MonitorResult fail(std::string name, std::string detail) { return {std::move(name), false, std::move(detail)}; }

std::string at(const TraceEvent& e) {
  return "step " + std::to_string(e.step) + " (process " + std::to_string(e.proc) + ")";
}

Value num(const std::string& s) {
  auto v = detail::to_int(s);
  if (!v) throw DomainError("malformed trace value '" + s + "'");
  return *v;
}

bool quiescent(const Trace& t) { return t.status == RunStatus::quiescent; }

int n_procs(const Trace& t) {
  std::set<ProcId> procs;
  for (const auto& [key, role] : t.threads) procs.insert(key.first);
  return static_cast<int>(procs.size());
}

// Payload of a send/recv event.
const std::string& payload(const TraceEvent& e) {
  static const std::string none;
  return e.args.size() >= 3 ? e.args[2] : none;
}

bool is_msg(const TraceEvent& e) { return e.kind == EventKind::send || e.kind == EventKind::recv; }

std::string stack_of(const Trace& t) { return t.meta_value("stack"); }

// (ts, src) from a timestamp-backend deliver annotation.
std::optional<std::pair<Value, Value>> ts_src(const std::string& aux) {
  std::optional<Value> ts, src;
  for (auto tok : detail::tokenize(aux)) {
    if (tok.starts_with("ts=")) ts = detail::to_int(tok.substr(3));
    if (tok.starts_with("src=")) src = detail::to_int(tok.substr(4));
  }
  if (!ts || !src) return std::nullopt;
  return std::pair{*ts, *src};
}

}  // namespace

// ------------------------------------------------------------- network

MonitorResult monitor_fifo(const Trace& t) {
  const std::string name = "fifo";
  std::map<std::pair<ProcId, ProcId>, std::vector<std::string>> sent;
  std::map<std::pair<ProcId, ProcId>, std::size_t> received;
  std::set<std::string> seen;
  for (const auto& e : t.events) {
    if (!is_msg(e)) continue;
    if (e.args.size() < 2) return fail(name, "malformed message event at " + at(e));
    ProcId other = static_cast<ProcId>(num(e.args[0]));
    if (e.kind == EventKind::send) {
      sent[{e.proc, other}].push_back(e.args[1]);
      continue;
    }
    if (!seen.insert(e.args[1]).second) return fail(name, "message " + e.args[1] + " received twice at " + at(e));
    auto key = std::pair{other, e.proc};
    std::size_t& i = received[key];
    const auto& s = sent[key];
    if (i >= s.size() || s[i] != e.args[1])
      return fail(name, "message " + e.args[1] + " received out of send order at " + at(e));
    ++i;
  }
  if (quiescent(t))
    for (const auto& [key, s] : sent)
      if (received[key] != s.size())
        return fail(name, "quiescent run left messages from " + std::to_string(key.first) + " to " +
                              std::to_string(key.second) + " unreceived");
  return pass(name);
}

MonitorResult monitor_hb_acyclic(const Trace& t) {
  const std::string name = "hb-acyclic";
  if (!happens_before_acyclic(extract_computation(t, Level::network)))
    return fail(name, "happens-before of the network computation has a cycle");
  return pass(name);
}

// ---------------------------------------------------------- broadcast

MonitorResult monitor_eventual_delivery(const Trace& t) {
  const std::string name = "eventual-delivery";
  if (!quiescent(t)) return pass(name);
  std::multiset<std::pair<std::string, std::string>> bcast;
  std::map<ProcId, std::multiset<std::pair<std::string, std::string>>> delivered;
  for (const auto& [key, role] : t.threads) delivered[key.first];
  for (const auto& e : t.events) {
    if (e.args.size() < 2) continue;
    if (e.kind == EventKind::bcast) bcast.insert({e.args[0], e.args[1]});
    if (e.kind == EventKind::deliver) delivered[e.proc].insert({e.args[0], e.args[1]});
  }
  for (const auto& [p, d] : delivered)
    if (d != bcast)
      return fail(name, "process " + std::to_string(p) + " delivered " + std::to_string(d.size()) + " of " +
                            std::to_string(bcast.size()) + " broadcasts or a different multiset");
  return pass(name);
}

MonitorResult monitor_labeled_agreement(const Trace& t) {
  const std::string name = "labeled-agreement";
  // label -> process -> updates in delivery order
  std::map<std::string, std::map<ProcId, std::vector<std::string>>> seqs;
  for (const auto& e : t.events)
    if (e.kind == EventKind::deliver && e.args.size() >= 2 && e.args[1] != "_")
      seqs[e.args[1]][e.proc].push_back(e.args[0]);
  for (const auto& [label, per] : seqs) {
    for (auto a = per.begin(); a != per.end(); ++a) {
      std::map<std::string, std::size_t> pos;
      for (std::size_t i = 0; i < a->second.size(); ++i) pos[a->second[i]] = i;
      for (auto b = std::next(a); b != per.end(); ++b) {
        std::optional<std::size_t> last;
        for (const auto& u : b->second) {
          auto it = pos.find(u);
          if (it == pos.end()) continue;
          if (last && it->second < *last)
            return fail(name, "processes " + std::to_string(a->first) + " and " + std::to_string(b->first) +
                                  " deliver label " + label + " in different orders");
          last = it->second;
        }
      }
    }
  }
  return pass(name);
}

MonitorResult monitor_token_chain(const Trace& t) {
  const std::string name = "token-chain";
  const int n = n_procs(t);
  std::map<std::string, std::vector<const TraceEvent*>> chains;
  for (const auto& e : t.events)
    if (is_msg(e) && wire_tag(payload(e)) == "TOKEN") chains[payload(e)].push_back(&e);
  for (const auto& [token, chain] : chains) {
    const TraceEvent* prev = nullptr;
    for (const TraceEvent* e : chain) {
      ProcId other = static_cast<ProcId>(num(e->args[0]));
      if (!prev) {
        if (e->kind != EventKind::send || e->proc != 0)
          return fail(name, token + " does not start with a send by process 0");
      } else if (e->kind == prev->kind) {
        return fail(name, token + " has two consecutive " + std::string(event_code(e->kind)) + " events at " + at(*e));
      } else if (e->kind == EventKind::recv) {
        if (e->args[1] != prev->args[1] || e->proc != num(prev->args[0]))
          return fail(name, token + " received at " + at(*e) + " is not the one last sent");
      } else if (e->proc != prev->proc || other != next_proc(e->proc, n)) {
        return fail(name, token + " forwarded incorrectly at " + at(*e));
      }
      prev = e;
    }
  }
  return pass(name);
}

MonitorResult monitor_acks_bracket(const Trace& t) {
  const std::string name = "acks-bracket";
  const int n = n_procs(t);
  struct Window {
    std::uint64_t open = 0;
    std::uint64_t close = std::numeric_limits<std::uint64_t>::max();
  };
  std::map<std::string, Window> windows;  // keyed by MESSAGE payload
  const auto& ev = t.events;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const TraceEvent& b = ev[i];
    if (b.kind != EventKind::bcast || b.args.size() < 2 || b.args[1] == "_") continue;
    const std::string data = encode(wire::Data{b.args[0], Label::parse(b.args[1])}).body;
    Window w;
    bool opened = false;
    int acks = 0;
    for (std::size_t j = i + 1; j < ev.size(); ++j) {
      const TraceEvent& e = ev[j];
      if (e.proc != b.proc || e.thread != b.thread) continue;
      if (!opened && e.kind == EventKind::send && payload(e) == data) {
        w.open = e.step;
        opened = true;
      } else if (opened && e.kind == EventKind::recv && wire_tag(payload(e)) == "ACK" && ++acks == n) {
        w.close = e.step;
        break;
      } else if (e.kind == EventKind::bcast) {
        break;
      }
    }
    if (opened) windows[data] = w;
  }
  for (const auto& e : ev) {
    if (e.kind != EventKind::recv || wire_tag(payload(e)) != "MESSAGE") continue;
    auto it = windows.find(payload(e));
    if (it == windows.end()) continue;
    if (e.step <= it->second.open || e.step >= it->second.close)
      return fail(name, payload(e) + " received outside its broadcast at " + at(e));
  }
  return pass(name);
}

MonitorResult monitor_ts_monotone(const Trace& t) {
  const std::string name = "ts-monotone";
  std::map<std::pair<ProcId, Value>, Value> last;
  for (const auto& e : t.events) {
    if (e.kind != EventKind::note || e.args.size() != 3 || e.args[0] != "T") continue;
    auto key = std::pair{e.proc, num(e.args[1])};
    Value v = num(e.args[2]);
    auto it = last.find(key);
    if (it != last.end() && v <= it->second)
      return fail(name, "T[" + e.args[1] + "] went from " + std::to_string(it->second) + " to " + std::to_string(v) +
                            " at " + at(e));
    last[key] = v;
  }
  return pass(name);
}

MonitorResult monitor_counters_consecutive(const Trace& t) {
  const std::string name = "counters-consecutive";
  std::map<std::pair<ProcId, Value>, Value> last;
  for (const auto& e : t.events) {
    if (e.kind != EventKind::note || e.args.size() != 3 || e.args[0] != "counter") continue;
    Value& c = last[{e.proc, num(e.args[1])}];
    Value v = num(e.args[2]);
    if (v != c + 1)
      return fail(name, "counter[" + e.args[1] + "] went from " + std::to_string(c) + " to " + std::to_string(v) +
                            " at " + at(e));
    c = v;
  }
  return pass(name);
}

MonitorResult monitor_ts_dequeue_order(const Trace& t) {
  const std::string name = "ts-dequeue-order";
  std::map<std::string, std::map<ProcId, std::vector<std::pair<Value, Value>>>> seqs;
  for (const auto& e : t.events) {
    if (e.kind != EventKind::deliver || e.args.size() < 2 || e.args[1] == "_") continue;
    auto ts = ts_src(e.aux);
    if (!ts) return fail(name, "deliver without (ts, src) annotation at " + at(e));
    auto& seq = seqs[e.args[1]][e.proc];
    if (!seq.empty() && !(seq.back() < *ts))
      return fail(name, "label " + e.args[1] + " dequeued out of (ts, src) order at " + at(e));
    seq.push_back(*ts);
  }
  const int n = n_procs(t);
  for (const auto& [label, per] : seqs) {
    const std::vector<std::pair<Value, Value>>* longest = nullptr;
    for (const auto& [p, seq] : per)
      if (!longest || seq.size() > longest->size()) longest = &seq;
    for (const auto& [p, seq] : per) {
      if (!std::equal(seq.begin(), seq.end(), longest->begin()))
        return fail(name, "process " + std::to_string(p) + " dequeues label " + label + " in a different sequence");
      if (quiescent(t) && seq.size() != longest->size())
        return fail(name, "process " + std::to_string(p) + " dequeued fewer label-" + label + " elements");
    }
    if (quiescent(t) && static_cast<int>(per.size()) != n)
      return fail(name, "some process dequeued nothing for label " + label);
  }
  return pass(name);
}

// ------------------------------------------------------ transformation

MonitorResult monitor_counter_safety(const Trace& t) {
  const std::string name = "counter-safety";
  std::map<ProcId, std::pair<Value, Value>> c;  // requested, processed
  for (const auto& [p, vars] : t.locals) {
    auto r = vars.find(kWritesRequested), d = vars.find(kWritesProcessed);
    if (r != vars.end() && d != vars.end()) c[p] = {r->second, d->second};
  }
  for (const auto& e : t.events) {
    if (e.kind != EventKind::write || e.args.size() < 2) continue;
    auto it = c.find(e.proc);
    if (it == c.end()) continue;
    if (e.args[0] == kWritesRequested) it->second.first = num(e.args[1]);
    if (e.args[0] == kWritesProcessed) it->second.second = num(e.args[1]);
    if (it->second.second > it->second.first) return fail(name, "writes_processed exceeds writes_requested at " + at(e));
  }
  if (quiescent(t))
    for (const auto& [p, rc] : c)
      if (rc.first != rc.second)
        return fail(name, "process " + std::to_string(p) + " ended with unprocessed writes");
  return pass(name);
}

MonitorResult monitor_replica_convergence(const Trace& t) {
  const std::string name = "replica-convergence";
  if (!quiescent(t)) return pass(name);
  // variable -> process -> last applied update value
  std::map<std::string, std::map<ProcId, Value>> last_applied;
  std::set<std::string> labeled;
  for (const auto& e : t.events) {
    if (e.kind != EventKind::deliver || e.args.size() < 2) continue;
    auto u = Update::parse(e.args[0]);
    if (!u) continue;
    last_applied[u->var][e.proc] = u->value;
    if (e.args[1] != "_") labeled.insert(u->var);
  }
  for (const auto& [p, vars] : t.locals) {
    for (const auto& [var, init] : vars) {
      if (!var.starts_with("Memory.")) continue;
      const std::string x = var.substr(7);
      Value expect = init;
      if (auto it = last_applied.find(x); it != last_applied.end())
        if (auto jt = it->second.find(p); jt != it->second.end()) expect = jt->second;
      Value final_value = init;
      for (const auto& e : t.events)
        if (e.proc == p && e.kind == EventKind::write && e.args.size() >= 2 && e.args[0] == var)
          final_value = num(e.args[1]);
      if (final_value != expect)
        return fail(name, "replica of " + x + " at process " + std::to_string(p) + " is not the last applied write");
    }
  }
  for (const auto& x : labeled) {
    const auto& per = last_applied.at(x);
    for (const auto& [p, v] : per)
      if (v != per.begin()->second) return fail(name, "replicas of " + x + " diverge");
  }
  return pass(name);
}

MonitorResult monitor_swfr_bracket(const Trace& t) {
  const std::string name = "swfr-bracket";
  const auto& ev = t.events;
  std::map<std::pair<ProcId, std::string>, std::uint64_t> own_delivery;
  for (const auto& e : ev)
    if (e.kind == EventKind::deliver && !e.args.empty()) own_delivery.emplace(std::pair{e.proc, e.args[0]}, e.step);
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const TraceEvent& b = ev[i];
    if (b.kind != EventKind::bcast || b.thread != kMainThread || b.args.empty()) continue;
    for (std::size_t j = i + 1; j < ev.size(); ++j) {
      const TraceEvent& e = ev[j];
      if (e.proc != b.proc || e.thread != b.thread) continue;
      if (e.kind == EventKind::read && !e.args.empty() && e.args[0] == kWritesProcessed) {
        auto it = own_delivery.find({b.proc, b.args[0]});
        if (it == own_delivery.end() || it->second > e.step)
          return fail(name, "write " + b.args[0] + " returned before its own delivery at " + at(e));
        break;
      }
    }
  }
  return pass(name);
}

// ------------------------------------------------------------ selection

std::vector<MonitorResult> run_monitors(const Trace& t) {
  std::vector<MonitorResult> out;
  if (!t.recorded) return out;
  out.push_back(monitor_fifo(t));
  if (t.levels.contains("network")) out.push_back(monitor_hb_acyclic(t));
  const std::string stack = stack_of(t);
  if (t.levels.contains("pob")) {
    out.push_back(monitor_eventual_delivery(t));
    out.push_back(monitor_labeled_agreement(t));
    if (stack.ends_with("/token")) {
      out.push_back(monitor_token_chain(t));
      out.push_back(monitor_acks_bracket(t));
    } else if (stack.ends_with("/timestamp")) {
      out.push_back(monitor_ts_monotone(t));
      out.push_back(monitor_counters_consecutive(t));
      out.push_back(monitor_ts_dequeue_order(t));
    }
  }
  if (t.levels.contains("spec")) {
    out.push_back(monitor_counter_safety(t));
    out.push_back(monitor_replica_convergence(t));
    if (stack.starts_with("swfr/")) out.push_back(monitor_swfr_bracket(t));
  }
  return out;
}

bool all_passed(const std::vector<MonitorResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

}  // namespace pclab
