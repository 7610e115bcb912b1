// Backtracking search for per-process witness orders.
//
// Views are solved one after another. A completed view commits the relative
// order of its agreement keys; later views must respect every committed
// pair, and a failure in a later view backtracks into the earlier one. Each
// view memoizes failed states keyed by (placed set, variable values, order of
// agreement keys placed so far), which is everything the remaining search
// depends on.

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "pclab/checker.hpp"

namespace pclab {

namespace {

struct WordsHash {
  std::size_t operator()(const std::vector<std::uint64_t>& v) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto w : v) {
      h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct BudgetExhausted {};

enum class Kind { read, write, bcast, deliver, send, recv };

struct ViewData {
  ProcId proc = 0;
  std::vector<OperationId> ids;  // exploration order
  std::vector<Kind> kind;
  std::vector<int> object;        // variable, message or update object index
  std::vector<Value> value;       // read/write value
  std::vector<int> key;           // global agreement key, -1 if none
  std::vector<int> key_class;     // agreement class of `key`
  std::vector<std::vector<int>> succ;
  std::vector<int> pred_count;
  std::vector<std::vector<int>> same_class;  // other keyed ops of the same class
  std::vector<Value> var_initial;
  std::size_t n_messages = 0;
  std::size_t n_updates = 0;
  bool has_keys = false;
};

class Search {
 public:
  Search(const Computation& c, std::span<const SearchView> views, std::span<const AgreementClass> agreement,
         const SearchOptions& opts)
      : opts_(opts) {
    build_keys(agreement);
    for (const auto& v : views) views_.push_back(build_view(c, v));
    before_.assign(n_keys_, std::vector<char>(n_keys_, 0));
    orders_.resize(views_.size());
  }

  SearchResult run() {
    SearchResult result;
    try {
      bool ok = solve_view(0);
      result.status = ok ? SearchResult::Status::found : SearchResult::Status::none;
      if (ok) {
        WitnessSet w;
        for (std::size_t v = 0; v < views_.size(); ++v) {
          auto& seq = w.views[views_[v].proc];
          for (int i : orders_[v]) seq.push_back(views_[v].ids[i]);
        }
        result.witnesses = std::move(w);
      }
    } catch (const BudgetExhausted&) {
      result.status = SearchResult::Status::budget_exhausted;
    }
    result.nodes = nodes_;
    return result;
  }

 private:
  struct Frame {
    std::vector<char> placed;
    std::vector<std::uint64_t> bits;
    std::vector<int> remaining;
    std::vector<Value> values;
    std::vector<int> sent, received, delivered;
    std::vector<int> prefix;
    std::unordered_set<std::vector<std::uint64_t>, WordsHash> failed;
  };

  void build_keys(std::span<const AgreementClass> agreement) {
    for (std::size_t cls = 0; cls < agreement.size(); ++cls) {
      std::map<std::string, int> interned;
      for (const auto& [id, k] : agreement[cls].key_of) {
        auto [it, fresh] = interned.emplace(k, static_cast<int>(n_keys_));
        if (fresh) ++n_keys_;
        key_of_[id] = {it->second, static_cast<int>(cls)};
      }
    }
  }

  ViewData build_view(const Computation& c, const SearchView& v) {
    ViewData d;
    d.proc = v.proc;
    d.ids = v.domain;
    std::sort(d.ids.begin(), d.ids.end());
    d.ids.erase(std::unique(d.ids.begin(), d.ids.end()), d.ids.end());
    std::stable_sort(d.ids.begin(), d.ids.end(), [&](const OperationId& a, const OperationId& b) {
      auto ha = v.hint.find(a), hb = v.hint.find(b);
      bool ra = ha != v.hint.end(), rb = hb != v.hint.end();
      if (ra != rb) return ra;
      if (ra && ha->second != hb->second) return ha->second < hb->second;
      return a < b;
    });
    std::map<OperationId, int> local;
    for (std::size_t i = 0; i < d.ids.size(); ++i) local[d.ids[i]] = static_cast<int>(i);

    std::map<std::string, int> vars, msgs, upds;
    auto intern = [](std::map<std::string, int>& m, const std::string& s) {
      return m.emplace(s, static_cast<int>(m.size())).first->second;
    };
    const std::size_t n = d.ids.size();
    d.kind.resize(n);
    d.object.assign(n, -1);
    d.value.assign(n, 0);
    d.key.assign(n, -1);
    d.key_class.assign(n, -1);
    d.succ.resize(n);
    d.pred_count.assign(n, 0);
    d.same_class.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Operation& o = c.at(d.ids[i]);
      std::visit(
          [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, op::Read> || std::is_same_v<K, op::Write>) {
              d.kind[i] = std::is_same_v<K, op::Read> ? Kind::read : Kind::write;
              d.object[i] = intern(vars, k.var);
              d.value[i] = k.value;
            } else if constexpr (std::is_same_v<K, op::Send> || std::is_same_v<K, op::Recv>) {
              d.kind[i] = std::is_same_v<K, op::Send> ? Kind::send : Kind::recv;
              d.object[i] = intern(msgs, k.msg);
            } else {
              d.kind[i] = std::is_same_v<K, op::Bcast> ? Kind::bcast : Kind::deliver;
              d.object[i] = intern(upds, k.update);
            }
          },
          o.kind);
      if (auto it = key_of_.find(d.ids[i]); it != key_of_.end()) {
        d.key[i] = it->second.first;
        d.key_class[i] = it->second.second;
        d.has_keys = true;
      }
    }
    d.var_initial.resize(vars.size());
    for (const auto& [name, idx] : vars) d.var_initial[idx] = c.initial(name);
    d.n_messages = msgs.size();
    d.n_updates = upds.size();

    std::set<std::pair<int, int>> edges;
    for (const auto& [a, b] : v.base) {
      auto ia = local.find(a), ib = local.find(b);
      if (ia == local.end() || ib == local.end()) continue;
      edges.insert({ia->second, ib->second});
    }
    for (const auto& [a, b] : edges) {
      d.succ[a].push_back(b);
      ++d.pred_count[b];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (d.key[i] < 0) continue;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && d.key[j] >= 0 && d.key_class[j] == d.key_class[i]) d.same_class[i].push_back(static_cast<int>(j));
    }
    return d;
  }

  bool solve_view(std::size_t v) {
    if (v == views_.size()) return true;
    const ViewData& d = views_[v];
    Frame f;
    const std::size_t n = d.ids.size();
    f.placed.assign(n, 0);
    f.bits.assign((n + 63) / 64, 0);
    f.remaining = d.pred_count;
    f.values = d.var_initial;
    f.sent.assign(d.n_messages, 0);
    f.received.assign(d.n_messages, 0);
    f.delivered.assign(d.n_updates, 0);
    orders_[v].clear();
    return dfs(v, f);
  }

  std::vector<std::uint64_t> state_key(const Frame& f) const {
    std::vector<std::uint64_t> k(f.bits);
    k.push_back(0xfeedULL);
    for (auto x : f.values) k.push_back(static_cast<std::uint64_t>(x));
    k.push_back(0xbeefULL);
    for (auto x : f.prefix) k.push_back(static_cast<std::uint64_t>(x));
    return k;
  }

  bool dfs(std::size_t v, Frame& f) {
    if (++nodes_ > opts_.node_budget) throw BudgetExhausted{};
    const ViewData& d = views_[v];
    const std::size_t n = d.ids.size();
    auto& order = orders_[v];
    if (order.size() == n) return complete_view(v);

    auto key = state_key(f);
    if (f.failed.contains(key)) return false;

    for (std::size_t i = 0; i < n; ++i) {
      if (f.placed[i] || f.remaining[i] != 0) continue;
      if (!agreement_allows(d, f, static_cast<int>(i))) continue;
      Value saved = 0;
      if (!apply(d, f, i, saved)) continue;
      f.placed[i] = 1;
      f.bits[i / 64] |= (1ULL << (i % 64));
      for (int s : d.succ[i]) --f.remaining[s];
      order.push_back(static_cast<int>(i));
      if (d.key[i] >= 0) f.prefix.push_back(d.key[i]);

      if (dfs(v, f)) return true;

      if (d.key[i] >= 0) f.prefix.pop_back();
      order.pop_back();
      for (int s : d.succ[i]) ++f.remaining[s];
      f.bits[i / 64] &= ~(1ULL << (i % 64));
      f.placed[i] = 0;
      undo(d, f, i, saved);
    }
    f.failed.insert(std::move(key));
    return false;
  }

  bool agreement_allows(const ViewData& d, const Frame& f, int i) const {
    if (d.key[i] < 0) return true;
    for (int j : d.same_class[i])
      if (!f.placed[j] && before_[d.key[j]][d.key[i]]) return false;
    return true;
  }

  static bool apply(const ViewData& d, Frame& f, std::size_t i, Value& saved) {
    const int obj = d.object[i];
    switch (d.kind[i]) {
      case Kind::read:
        return f.values[obj] == d.value[i];
      case Kind::write:
        saved = f.values[obj];
        f.values[obj] = d.value[i];
        return true;
      case Kind::send:
        if (f.sent[obj]) return false;
        f.sent[obj] = 1;
        return true;
      case Kind::recv:
        if (f.received[obj]) return false;
        f.received[obj] = 1;
        return true;
      case Kind::bcast:
        return f.delivered[obj] == 0;
      case Kind::deliver:
        if (f.delivered[obj]) return false;
        f.delivered[obj] = 1;
        return true;
    }
    return false;
  }

  static void undo(const ViewData& d, Frame& f, std::size_t i, Value saved) {
    const int obj = d.object[i];
    switch (d.kind[i]) {
      case Kind::write: f.values[obj] = saved; break;
      case Kind::send: f.sent[obj] = 0; break;
      case Kind::recv: f.received[obj] = 0; break;
      case Kind::deliver: f.delivered[obj] = 0; break;
      default: break;
    }
  }

  bool complete_view(std::size_t v) {
    const ViewData& d = views_[v];
    std::vector<std::pair<int, int>> added;
    if (d.has_keys) {
      const auto& order = orders_[v];
      for (std::size_t a = 0; a < order.size(); ++a) {
        int ka = d.key[order[a]];
        if (ka < 0) continue;
        for (std::size_t b = a + 1; b < order.size(); ++b) {
          int kb = d.key[order[b]];
          if (kb < 0 || kb == ka || d.key_class[order[b]] != d.key_class[order[a]]) continue;
          if (!before_[ka][kb]) {
            before_[ka][kb] = 1;
            added.emplace_back(ka, kb);
          }
        }
      }
    }
    if (solve_view(v + 1)) return true;
    for (const auto& [a, b] : added) before_[a][b] = 0;
    return false;
  }

  SearchOptions opts_;
  std::map<OperationId, std::pair<int, int>> key_of_;
  std::size_t n_keys_ = 0;
  std::vector<ViewData> views_;
  std::vector<std::vector<char>> before_;
  std::vector<std::vector<int>> orders_;
  std::uint64_t nodes_ = 0;
};

}  // namespace

SearchResult witness_search(const Computation& c, std::span<const SearchView> views,
                            std::span<const AgreementClass> agreement, const SearchOptions& opts) {
  return Search(c, views, agreement, opts).run();
}

}  // namespace pclab
