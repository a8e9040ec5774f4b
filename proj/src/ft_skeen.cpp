#include "wbcast/ft_skeen.hpp"

#include <algorithm>
#include <stdexcept>

namespace wbcast {

FtSkeenNode::FtSkeenNode(ProcessId self, GroupId group, Topology topology,
                         std::map<GroupId, ProcessId> leaders)
    : self_(self), group_(group), topo_(std::move(topology)), leaders_(std::move(leaders)) {}

Phase FtSkeenNode::phase_of(const MsgId& m) const {
  auto it = phase_.find(m);
  return it == phase_.end() ? Phase::start : it->second;
}

Timestamp FtSkeenNode::local_ts(const MsgId& m) const {
  auto it = local_ts_.find(m);
  return it == local_ts_.end() ? Timestamp::bottom() : it->second;
}

Timestamp FtSkeenNode::global_ts(const MsgId& m) const {
  auto it = global_ts_.find(m);
  return it == global_ts_.end() ? Timestamp::bottom() : it->second;
}

bool FtSkeenNode::delivered(const MsgId& m) const {
  auto it = delivered_.find(m);
  return it != delivered_.end() && it->second;
}

Effects FtSkeenNode::on_message(ProcessId from, const ProtocolMessage& msg) {
  return std::visit(
      [&](const auto& body) -> Effects {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, MulticastMsg>) {
          return handle_multicast(from, body.msg);
        } else if constexpr (std::is_same_v<T, PersistLtsMsg>) {
          return handle_persist_lts(from, body);
        } else if constexpr (std::is_same_v<T, PersistGtsMsg>) {
          return handle_persist_gts(from, body);
        } else if constexpr (std::is_same_v<T, PersistAckMsg>) {
          return handle_persist_ack(from, body);
        } else if constexpr (std::is_same_v<T, ProposeMsg>) {
          return handle_propose(body);
        } else if constexpr (std::is_same_v<T, DeliverMsg>) {
          return handle_deliver(body);
        } else {
          return {};
        }
      },
      msg);
}

Effects FtSkeenNode::handle_multicast(ProcessId from, const AppMessage& msg) {
  Effects fx;
  if (!msg.addressed_to(group_)) return fx;
  if (!is_leader()) {
    if (from != self_) fx.send(from, RedirectMsg{group_, leaders_.at(group_)});
    return fx;
  }
  const MsgId m = msg.id;
  if (phase_of(m) != Phase::start) return fx;
  messages_.emplace(m, msg);
  ++clock_;
  local_ts_[m] = Timestamp::of(clock_, group_);
  phase_[m] = Phase::proposed;
  for (ProcessId p : topo_.members(group_)) {
    fx.send(p, PersistLtsMsg{msg, local_ts_.at(m)});
  }
  return fx;
}

Effects FtSkeenNode::handle_persist_lts(ProcessId from, const PersistLtsMsg& msg) {
  Effects fx;
  const MsgId m = msg.msg.id;
  messages_.emplace(m, msg.msg);
  if (!is_leader()) {
    // Backup copy of the leader's assignment; the phase mirrors the leader so
    // snapshots stay comparable across the group.
    local_ts_[m] = msg.lts;
    if (phase_of(m) == Phase::start) phase_[m] = Phase::proposed;
  }
  fx.send(from, PersistAckMsg{m, PersistKind::lts});
  return fx;
}

Effects FtSkeenNode::handle_persist_gts(ProcessId from, const PersistGtsMsg& msg) {
  Effects fx;
  if (!is_leader()) global_ts_[msg.m] = msg.gts;
  fx.send(from, PersistAckMsg{msg.m, PersistKind::gts});
  return fx;
}

Effects FtSkeenNode::handle_persist_ack(ProcessId from, const PersistAckMsg& msg) {
  Effects fx;
  if (!is_leader()) return fx;
  const MsgId m = msg.m;
  if (msg.kind == PersistKind::lts) {
    lts_acks_[m].insert(from);
    if (lts_acks_.at(m).size() < topo_.quorum() || lts_persisted_.count(m)) return fx;
    lts_persisted_.insert(m);
    const AppMessage& app = messages_.at(m);
    for (GroupId g : app.dest) {
      fx.send(leaders_.at(g), ProposeMsg{app, group_, local_ts_.at(m)});
    }
  } else {
    gts_acks_[m].insert(from);
    if (gts_acks_.at(m).size() < topo_.quorum() || phase_of(m) == Phase::committed) return fx;
    // Only now, with the global timestamp stable on a quorum, may the clock
    // reflect it; advancing earlier would unblock later messages before the
    // decision survives a leader loss.
    const Timestamp gts = global_ts_.at(m);
    clock_ = std::max(clock_, gts.time_part());
    phase_[m] = Phase::committed;
    fx.committed.push_back({m, local_ts_.at(m), gts});
    run_delivery(fx);
  }
  return fx;
}

Effects FtSkeenNode::handle_propose(const ProposeMsg& msg) {
  Effects fx;
  if (!is_leader()) return fx;
  const MsgId m = msg.msg.id;
  messages_.emplace(m, msg.msg);
  proposals_[m][msg.group] = msg.lts;
  const AppMessage& app = messages_.at(m);
  const auto& got = proposals_.at(m);
  for (GroupId g : app.dest) {
    if (!got.count(g)) return fx;
  }
  if (gts_persisting_.count(m)) return fx;
  gts_persisting_.insert(m);
  LtsVector all;
  for (GroupId g : app.dest) all[g] = got.at(g);
  global_ts_[m] = merge_global(all);
  for (ProcessId p : topo_.members(group_)) {
    fx.send(p, PersistGtsMsg{m, global_ts_.at(m)});
  }
  return fx;
}

void FtSkeenNode::run_delivery(Effects& fx) {
  std::vector<std::pair<Timestamp, MsgId>> ready;
  for (const auto& [m, ph] : phase_) {
    if (ph != Phase::committed || delivered(m)) continue;
    const Timestamp gts = global_ts_.at(m);
    bool blocked = false;
    for (const auto& [m2, ph2] : phase_) {
      if (ph2 == Phase::proposed && !(local_ts_.at(m2) > gts)) {
        blocked = true;
        break;
      }
    }
    if (!blocked) ready.push_back({gts, m});
  }
  std::sort(ready.begin(), ready.end());
  for (const auto& [gts, m] : ready) {
    for (ProcessId p : topo_.members(group_)) {
      fx.send(p, DeliverMsg{messages_.at(m), Ballot::bottom(), local_ts_.at(m), gts});
    }
  }
}

Effects FtSkeenNode::handle_deliver(const DeliverMsg& msg) {
  Effects fx;
  const MsgId m = msg.msg.id;
  if (delivered(m)) return fx;
  messages_.emplace(m, msg.msg);
  const bool newly_committed = phase_of(m) != Phase::committed;
  phase_[m] = Phase::committed;
  local_ts_[m] = msg.lts;
  global_ts_[m] = msg.gts;
  if (!is_leader()) clock_ = std::max(clock_, msg.gts.time_part());
  delivered_[m] = true;
  if (newly_committed) fx.committed.push_back({m, msg.lts, msg.gts});
  fx.delivered.push_back({m, msg.lts, msg.gts});
  return fx;
}

StateSnapshot FtSkeenNode::snapshot() const {
  StateSnapshot s;
  s.clock = clock_;
  s.status = is_leader() ? "leader" : "follower";
  s.max_delivered_gts = Timestamp::bottom();
  s.phase = phase_;
  s.local_ts = local_ts_;
  s.global_ts = global_ts_;
  for (const auto& [m, d] : delivered_) {
    if (d) s.delivered.push_back(m);
  }
  return s;
}

}  // namespace wbcast
