#pragma once

// Trace-level invariant monitors for the network, the broadcast backends and
// the transformation. Each monitor reads only the trace.

#include <string>
#include <vector>

#include "pclab/simnet.hpp"

namespace pclab {

struct MonitorResult {
  std::string name;
  bool passed = true;
  /// First violation found, empty when passed.
  std::string detail;

  bool operator==(const MonitorResult&) const = default;
};

// Network.
MonitorResult monitor_fifo(const Trace& t);
MonitorResult monitor_hb_acyclic(const Trace& t);

// Broadcast layer.
MonitorResult monitor_eventual_delivery(const Trace& t);
MonitorResult monitor_labeled_agreement(const Trace& t);
MonitorResult monitor_token_chain(const Trace& t);
MonitorResult monitor_acks_bracket(const Trace& t);
MonitorResult monitor_ts_monotone(const Trace& t);
MonitorResult monitor_counters_consecutive(const Trace& t);
MonitorResult monitor_ts_dequeue_order(const Trace& t);

// Transformation.
MonitorResult monitor_counter_safety(const Trace& t);
MonitorResult monitor_replica_convergence(const Trace& t);
MonitorResult monitor_swfr_bracket(const Trace& t);

/// Every monitor that applies to the trace, chosen from its levels and its
/// `stack` header (the backend-specific ones need it).
std::vector<MonitorResult> run_monitors(const Trace& t);
bool all_passed(const std::vector<MonitorResult>& results);

}  // namespace pclab
