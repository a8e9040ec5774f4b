#include "wbcast/skeen.hpp"

#include <algorithm>
#include <stdexcept>

namespace wbcast {

SkeenNode::SkeenNode(ProcessId self, GroupId group, Topology topology)
    : self_(self), group_(group), topo_(std::move(topology)) {
  if (topo_.members(group_).size() != 1)
    throw std::invalid_argument("singleton groups required");
}

Phase SkeenNode::phase_of(const MsgId& m) const {
  auto it = phase_.find(m);
  return it == phase_.end() ? Phase::start : it->second;
}

Timestamp SkeenNode::local_ts(const MsgId& m) const {
  auto it = local_ts_.find(m);
  return it == local_ts_.end() ? Timestamp::bottom() : it->second;
}

Timestamp SkeenNode::global_ts(const MsgId& m) const {
  auto it = global_ts_.find(m);
  return it == global_ts_.end() ? Timestamp::bottom() : it->second;
}

bool SkeenNode::delivered(const MsgId& m) const {
  auto it = delivered_.find(m);
  return it != delivered_.end() && it->second;
}

Effects SkeenNode::on_message(ProcessId, const ProtocolMessage& msg) {
  if (const auto* mc = std::get_if<MulticastMsg>(&msg)) return handle_multicast(mc->msg);
  if (const auto* pr = std::get_if<ProposeMsg>(&msg)) return handle_propose(*pr);
  return {};  // other traffic is not part of this protocol
}

Effects SkeenNode::handle_multicast(const AppMessage& msg) {
  Effects fx;
  if (!msg.addressed_to(group_)) return fx;
  messages_.emplace(msg.id, msg);
  if (phase_of(msg.id) == Phase::start) {
    ++clock_;
    local_ts_[msg.id] = Timestamp::of(clock_, group_);
    phase_[msg.id] = Phase::proposed;
  }
  // A duplicate re-emits the stored proposal; the clock moves only once.
  for (GroupId g : msg.dest)
    for (ProcessId p : topo_.members(g))
      fx.send(p, ProposeMsg{msg, group_, local_ts_[msg.id]});
  return fx;
}

Effects SkeenNode::handle_propose(const ProposeMsg& msg) {
  Effects fx;
  if (!msg.msg.addressed_to(group_)) return fx;
  if (phase_of(msg.msg.id) == Phase::committed) return fx;  // late duplicate
  messages_.emplace(msg.msg.id, msg.msg);
  proposals_[msg.msg.id][msg.group] = msg.lts;
  const auto& have = proposals_[msg.msg.id];
  for (GroupId g : msg.msg.dest)
    if (!have.count(g)) return fx;

  const Timestamp gts = merge_global(have);
  global_ts_[msg.msg.id] = gts;
  clock_ = std::max(clock_, gts.time_part());
  phase_[msg.msg.id] = Phase::committed;
  fx.committed.push_back({msg.msg.id, local_ts_[msg.msg.id], gts});
  run_delivery(fx);
  return fx;
}

void SkeenNode::run_delivery(Effects& fx) {
  // Committed, undelivered messages whose global timestamp is below every
  // still-proposed local timestamp, delivered in global-timestamp order.
  std::vector<MsgId> ready;
  for (const auto& [m, ph] : phase_) {
    if (ph != Phase::committed || delivered(m)) continue;
    const Timestamp gts = global_ts_.at(m);
    bool blocked = false;
    for (const auto& [other, oph] : phase_) {
      if (oph == Phase::proposed && !(gts < local_ts_.at(other))) {
        blocked = true;
        break;
      }
    }
    if (!blocked) ready.push_back(m);
  }
  std::sort(ready.begin(), ready.end(), [this](const MsgId& a, const MsgId& b) {
    return global_ts_.at(a) < global_ts_.at(b);
  });
  for (const MsgId& m : ready) {
    delivered_[m] = true;
    fx.delivered.push_back({m, local_ts_.at(m), global_ts_.at(m)});
  }
}

StateSnapshot SkeenNode::snapshot() const {
  StateSnapshot s;
  s.clock = clock_;
  s.phase = phase_;
  s.local_ts = local_ts_;
  s.global_ts = global_ts_;
  for (const auto& [m, d] : delivered_)
    if (d) s.delivered.push_back(m);
  return s;
}

json SkeenNode::debug_state() const {
  json j = snapshot().to_json();
  json props = json::object();
  for (const auto& [m, v] : proposals_) {
    json entry = json::object();
    for (const auto& [g, ts] : v) entry[std::to_string(g)] = to_string(ts);
    props[to_string(m)] = std::move(entry);
  }
  j["proposals"] = std::move(props);
  return j;
}

}  // namespace wbcast
