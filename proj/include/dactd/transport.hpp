#pragma once

#include <algorithm>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "dactd/common.hpp"
#include "dactd/topology.hpp"

namespace dactd {

enum class DelayLaw {
  uniform,  ///< integer delay drawn uniformly from [0, T2]
  fixed,    ///< every delivery takes exactly T2 ticks
};

/// Communication medium parameters.
///
/// Over any T1+1 consecutive send attempts on an edge at least one succeeds:
/// the channel forces delivery after T1 consecutive drops. Every delivery
/// arrives at most T2 ticks after it was sent.
struct ChannelModel {
  int T1 = 0;
  int T2 = 1;
  double drop_prob = 0.0;
  DelayLaw delay_law = DelayLaw::uniform;
  std::uint64_t seed = 0;
  /// Optional adversary replacing the random drop decision. Forcing still applies.
  std::function<bool(const Edge&, Tick)> adversary;

  void validate() const;
};

template <typename Payload>
struct Message {
  AgentId src = 0;
  AgentId dst = 0;
  Payload payload{};
  Tick sent_tick = 0;
  Tick deliver_tick = 0;
};

/// One send attempt, kept for post-hoc guarantee checks and CSV dumps.
struct SendRecord {
  Edge edge;
  Tick sent_tick = 0;
  std::optional<Tick> deliver_tick;  ///< empty when dropped
  bool forced = false;
  std::uint64_t digest = 0;
};

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Checks that every window of T1+1 consecutive attempts on an edge holds a
/// success and that no delivery exceeds T2.
bool check_delivery_guarantee(const std::vector<SendRecord>& trace, int T1, int T2);

/// CSV of delivered messages: tick,src,dst,sent_tick,digest (agents from 1).
void write_trace_csv(std::ostream& out, const std::vector<SendRecord>& trace);

template <typename Payload>
class Channel {
public:
  using Digest = std::function<std::uint64_t(const Payload&)>;

  Channel(ChannelModel model, const GraphSchedule& graph, Digest digest = {})
      : model_(std::move(model)), graph_(&graph), digest_(std::move(digest)),
        rng_(model_.seed) {
    model_.validate();
  }

  const ChannelModel& model() const noexcept { return model_; }

  /// Returns the delivery tick, or nothing when the attempt was dropped.
  std::optional<Tick> attempt_send(const Edge& edge, Payload payload, Tick t) {
    if (!graph_->has_edge(edge, t))
      throw TransportError("edge " + std::to_string(edge.src) + "->" + std::to_string(edge.dst) +
                           " is not active at tick " + std::to_string(t));
    int& drops = consecutive_drops_[edge];
    // Draw unconditionally so the random stream does not depend on forcing.
    const bool random_drop = uniform01(rng_) < model_.drop_prob;
    const bool wants_drop = model_.adversary ? model_.adversary(edge, t) : random_drop;
    const bool forced = wants_drop && drops >= model_.T1;
    SendRecord rec{edge, t, std::nullopt, forced, digest_ ? digest_(payload) : 0};
    if (wants_drop && !forced) {
      ++drops;
      trace_.push_back(rec);
      return std::nullopt;
    }
    drops = 0;
    const Tick delay = model_.delay_law == DelayLaw::fixed ? model_.T2 : uniform_int(rng_, 0, model_.T2);
    rec.deliver_tick = t + delay;
    trace_.push_back(rec);
    pending_[edge.dst].emplace(t + delay,
                               Message<Payload>{edge.src, edge.dst, std::move(payload), t, t + delay});
    return t + delay;
  }

  /// Removes and returns every message for `dst` due at tick t, ordered by
  /// (src, sent_tick).
  std::vector<Message<Payload>> drain(AgentId dst, Tick t) {
    std::vector<Message<Payload>> out;
    auto q = pending_.find(dst);
    if (q == pending_.end()) return out;
    auto [lo, hi] = q->second.equal_range(t);
    for (auto it = lo; it != hi; ++it) out.push_back(std::move(it->second));
    q->second.erase(lo, hi);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return std::tie(a.src, a.sent_tick) < std::tie(b.src, b.sent_tick);
    });
    return out;
  }

  std::size_t pending_count() const {
    std::size_t n = 0;
    for (const auto& [dst, q] : pending_) n += q.size();
    return n;
  }

  const std::vector<SendRecord>& trace() const noexcept { return trace_; }

private:
  ChannelModel model_;
  const GraphSchedule* graph_;
  Digest digest_;
  Rng rng_;
  std::map<Edge, int> consecutive_drops_;
  std::map<AgentId, std::multimap<Tick, Message<Payload>>> pending_;
  std::vector<SendRecord> trace_;
};

}  // namespace dactd
