#pragma once

// Partial-order broadcast on the simulated network: a token-ring backend
// and a timestamp backend behind one endpoint interface.

#include <deque>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "pclab/simnet.hpp"

namespace pclab {

struct QueueElement {
  std::string update;
  Value ts = 0;
  Value counter = 0;
  ProcId src = 0;

  bool operator==(const QueueElement&) const = default;
};

/// Priority order of labeled queues: lexicographic by (ts, src).
struct ByTsSrc {
  bool operator()(const QueueElement& a, const QueueElement& b) const {
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.src != b.src) return a.src < b.src;
    return a.counter < b.counter;
  }
};

namespace wire {
struct Data {  // MESSAGE
  std::string update;
  Label label;
};
struct Ack {};
struct Token {
  Label label;
};
struct LocalBroadcastRequest {  // LBR
  std::string update;
  Label label;
};
struct OrdMsg {  // ORD
  Label label;
  QueueElement qe;
};
struct TsUpdate {  // TSU
  Value ts = 0;
  ProcId proc = 0;
};
}  // namespace wire

using WireMessage =
    std::variant<wire::Data, wire::Ack, wire::Token, wire::LocalBroadcastRequest, wire::OrdMsg, wire::TsUpdate>;

/// `[TAG,field,...]`; tokens are background traffic.
Message encode(const WireMessage& m);
/// Throws SimError on an unknown tag or malformed fields.
WireMessage decode(std::string_view body);
std::string_view wire_tag(std::string_view body);

struct Delivery {
  std::string update;
  Label label;
};

class PobEndpoint {
 public:
  virtual ~PobEndpoint() = default;
  /// Marks the bcast in the trace, then runs the backend's protocol.
  virtual Task<> bcast(ThreadCtx& ctx, const std::string& update, Label l) = 0;
  virtual Task<Delivery> deliver(ThreadCtx& ctx) = 0;
};

enum class Backend { token, timestamp };
Backend parse_backend(std::string_view s);
std::string_view backend_name(Backend b);

struct PobOptions {
  /// Timestamp backend: compare with "<" instead of "<=" in CanExtract.
  /// Known to be able to stall; kept for experiments only.
  bool strict_extract = false;
};

/// Endpoint plus the locals and extra threads one process needs.
struct PobProcess {
  std::shared_ptr<PobEndpoint> endpoint;
  std::map<std::string, Value> locals;
  std::vector<ThreadSpec> threads;
};

/// `first_thread` is the id given to the first extra (token) thread.
PobProcess make_pob_process(Backend b, ProcId p, int n_procs, const std::set<Label>& labels, ThreadId first_thread,
                            const PobOptions& opts = {});

// ------------------------------------------------------------ token backend

inline ProcId next_proc(ProcId p, int n_procs) { return (p + 1) % n_procs; }

std::string need_token_var(Label l);
std::string door_open_var(Label l);

// -------------------------------------------------------- timestamp backend

/// Deliver-thread state of the timestamp backend.
struct TsState {
  ProcId self = 0;
  std::vector<Value> T;
  std::vector<Value> counter;
  Value local_counter = 0;
  std::map<Label, std::multiset<QueueElement, ByTsSrc>> priority_q;
  std::vector<std::deque<QueueElement>> fifo_q;
  bool strict = false;

  TsState(ProcId self, int n_procs, bool strict = false);

  bool can_extract(Label l) const;
  bool can_dequeue(ProcId src) const;
  void process_queue_element(const QueueElement& qe, Label l, ProcId source);

  struct Effects {
    /// T entries written, in order.
    std::vector<std::pair<ProcId, Value>> t_writes;
    /// Message to send to every other process.
    std::optional<WireMessage> broadcast;
  };
  /// One HandleMessage step for a message received from `from`. Throws
  /// SimError on messages this backend does not use.
  Effects handle(const WireMessage& m, ProcId from);
  /// Choice rule when several queues are eligible: the labeled queue with
  /// the least (ts, src) head, otherwise the FIFO queue of the smallest
  /// source. Updates counter[src]; nullopt when nothing is eligible.
  std::optional<std::pair<QueueElement, Label>> dequeue_eligible();
};

}  // namespace pclab
