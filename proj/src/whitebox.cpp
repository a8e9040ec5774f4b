#include "wbcast/whitebox.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace wbcast {

std::string to_string(Status s) {
  switch (s) {
    case Status::leader: return "leader";
    case Status::follower: return "follower";
    case Status::recovering: return "recovering";
  }
  throw std::logic_error("bad status");
}

WhiteboxNode::WhiteboxNode(ProcessId self, GroupId group, Topology topology,
                           std::map<GroupId, ProcessId> initial_leaders,
                           Mutations mutations, SimTime retry_delay,
                           SimTime quorum_wait_delay)
    : self_(self),
      group_(group),
      topo_(std::move(topology)),
      mutations_(mutations),
      retry_delay_(retry_delay),
      quorum_wait_delay_(quorum_wait_delay),
      cur_leader_(std::move(initial_leaders)) {
  ProcessId lead = cur_leader_.at(group_);
  ballot_ = Ballot::of(1, lead);
  cballot_ = ballot_;
  status_ = lead == self_ ? Status::leader : Status::follower;
}

Phase WhiteboxNode::phase_of(const MsgId& m) const {
  auto it = phase_.find(m);
  return it == phase_.end() ? Phase::start : it->second;
}

Timestamp WhiteboxNode::local_ts(const MsgId& m) const {
  auto it = local_ts_.find(m);
  return it == local_ts_.end() ? Timestamp::bottom() : it->second;
}

Timestamp WhiteboxNode::global_ts(const MsgId& m) const {
  auto it = global_ts_.find(m);
  return it == global_ts_.end() ? Timestamp::bottom() : it->second;
}

bool WhiteboxNode::delivered(const MsgId& m) const {
  auto it = delivered_.find(m);
  return it != delivered_.end() && it->second;
}

Effects WhiteboxNode::on_message(ProcessId from, const ProtocolMessage& msg) {
  return std::visit(
      [&](const auto& body) -> Effects {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, MulticastMsg>) {
          return handle_multicast(from, body.msg);
        } else if constexpr (std::is_same_v<T, AcceptMsg>) {
          return handle_accept(body);
        } else if constexpr (std::is_same_v<T, AcceptAckMsg>) {
          return handle_accept_ack(from, body);
        } else if constexpr (std::is_same_v<T, DeliverMsg>) {
          return handle_deliver(body);
        } else if constexpr (std::is_same_v<T, NewLeaderMsg>) {
          return handle_newleader(from, body);
        } else if constexpr (std::is_same_v<T, NewLeaderAckMsg>) {
          return handle_newleader_ack(from, body);
        } else if constexpr (std::is_same_v<T, NewStateMsg>) {
          return handle_new_state(from, body);
        } else if constexpr (std::is_same_v<T, NewStateAckMsg>) {
          return handle_newstate_ack(from, body);
        } else if constexpr (std::is_same_v<T, RedirectMsg>) {
          cur_leader_[body.group] = body.leader;
          return {};
        } else {
          return {};  // PROPOSE / PERSIST_* belong to the other protocols
        }
      },
      msg);
}

Effects WhiteboxNode::handle_multicast(ProcessId from, const AppMessage& msg) {
  Effects fx;
  if (!msg.addressed_to(group_)) return fx;
  if (status_ != Status::leader) {
    if (from != self_) fx.send(from, RedirectMsg{group_, cur_leader_.at(group_)});
    return fx;
  }
  const MsgId m = msg.id;
  messages_.emplace(m, msg);
  if (phase_of(m) == Phase::start) {
    ++clock_;
    local_ts_[m] = Timestamp::of(clock_, group_);
    phase_[m] = Phase::proposed;
    fx.timers.push_back({retry_delay_, TimerKind::retry, m, Ballot::bottom()});
    fx.timers.push_back({quorum_wait_delay_, TimerKind::accept_quorum, m, Ballot::bottom()});
  }
  // Resent regardless of phase so client and leader retries re-drive the
  // accept round after crashes.
  for (GroupId g : msg.dest) {
    for (ProcessId p : topo_.members(g)) {
      fx.send(p, AcceptMsg{msg, group_, cballot_, local_ts_.at(m)});
    }
  }
  return fx;
}

Effects WhiteboxNode::handle_accept(const AcceptMsg& msg) {
  Effects fx;
  const MsgId m = msg.msg.id;
  if (!msg.msg.addressed_to(group_)) return fx;
  messages_.emplace(m, msg.msg);
  auto& slot = accept_buf_[m];
  auto it = slot.find(msg.group);
  if (it == slot.end() || it->second.first < msg.bal) {
    slot[msg.group] = {msg.bal, msg.lts};
  }
  try_process_accepts(m, fx);
  return fx;
}

void WhiteboxNode::try_process_accepts(const MsgId& m, Effects& fx) {
  if (status_ == Status::recovering) return;
  auto mit = messages_.find(m);
  if (mit == messages_.end()) return;
  const AppMessage& msg = mit->second;
  auto bit = accept_buf_.find(m);
  if (bit == accept_buf_.end()) return;
  const auto& slot = bit->second;
  for (GroupId g : msg.dest) {
    if (!slot.count(g)) return;
  }
  if (slot.at(group_).first != cballot_) return;

  Phase ph = phase_of(m);
  if (ph == Phase::start || ph == Phase::proposed) phase_[m] = Phase::accepted;
  local_ts_[m] = slot.at(group_).second;
  Timestamp max_lts = Timestamp::bottom();
  BalVector vec;
  for (GroupId g : msg.dest) {
    max_lts = std::max(max_lts, slot.at(g).second);
    vec[g] = slot.at(g).first;
  }
  if (!mutations_.disable_accept_clock_max) {
    clock_ = std::max(clock_, max_lts.time_part());
  }
  for (GroupId g : msg.dest) {
    fx.send(vec.at(g).leader(), AcceptAckMsg{m, group_, vec});
  }
}

Effects WhiteboxNode::handle_accept_ack(ProcessId from, const AcceptAckMsg& msg) {
  Effects fx;
  ack_tally_[{msg.m, msg.bal}].insert(from);
  try_commit(msg.m, msg.bal, fx);
  return fx;
}

bool WhiteboxNode::own_group_quorum_acked(const MsgId& m) const {
  for (const auto& [key, who] : ack_tally_) {
    if (key.first != m) continue;
    auto git = key.second.find(group_);
    if (git == key.second.end() || git->second != cballot_) continue;
    std::size_t own = 0;
    for (ProcessId p : who) {
      if (topo_.group_of(p) == group_) ++own;
    }
    if (own >= topo_.quorum()) return true;
  }
  return false;
}

void WhiteboxNode::try_commit(const MsgId& m, const BalVector& vec, Effects& fx) {
  if (status_ != Status::leader) return;
  auto git = vec.find(group_);
  if (git == vec.end() || git->second != cballot_) return;
  auto mit = messages_.find(m);
  if (mit == messages_.end()) return;
  const AppMessage& msg = mit->second;
  auto bit = accept_buf_.find(m);
  if (bit == accept_buf_.end()) return;
  const auto& slot = bit->second;
  // Commit only from the leader's own view of the accepted timestamps; the
  // ack vector must match it exactly, per destination group.
  for (GroupId g : msg.dest) {
    auto sit = slot.find(g);
    if (sit == slot.end() || !vec.count(g) || sit->second.first != vec.at(g)) return;
  }
  const auto& who = ack_tally_.at({m, vec});
  for (GroupId g : msg.dest) {
    std::size_t n = 0;
    for (ProcessId p : who) {
      if (topo_.group_of(p) == g) ++n;
    }
    if (n < topo_.quorum()) return;
  }
  if (phase_of(m) == Phase::committed) return;

  LtsVector all;
  for (GroupId g : msg.dest) all[g] = slot.at(g).second;
  global_ts_[m] = merge_global(all);
  phase_[m] = Phase::committed;
  fx.committed.push_back({m, local_ts_.at(m), global_ts_.at(m)});
  run_delivery(fx);
}

void WhiteboxNode::run_delivery(Effects& fx) {
  std::vector<std::pair<Timestamp, MsgId>> ready;
  for (const auto& [m, ph] : phase_) {
    if (ph != Phase::committed || delivered(m)) continue;
    const Timestamp gts = global_ts_.at(m);
    bool blocked = false;
    if (!mutations_.disable_deliver_blocker_guard) {
      for (const auto& [m2, ph2] : phase_) {
        if ((ph2 == Phase::proposed || ph2 == Phase::accepted) &&
            !(local_ts_.at(m2) > gts)) {
          blocked = true;
          break;
        }
      }
    }
    if (!blocked) ready.push_back({gts, m});
  }
  std::sort(ready.begin(), ready.end());
  for (const auto& [gts, m] : ready) {
    delivered_[m] = true;
    for (ProcessId p : topo_.members(group_)) {
      fx.send(p, DeliverMsg{messages_.at(m), cballot_, local_ts_.at(m), gts});
    }
  }
}

Effects WhiteboxNode::handle_deliver(const DeliverMsg& msg) {
  Effects fx;
  if (status_ == Status::recovering) return fx;
  if (msg.bal != cballot_) return fx;
  if (!(max_delivered_gts_ < msg.gts)) return fx;
  const MsgId m = msg.msg.id;
  messages_.emplace(m, msg.msg);
  const bool newly_committed = phase_of(m) != Phase::committed;
  phase_[m] = Phase::committed;
  local_ts_[m] = msg.lts;
  global_ts_[m] = msg.gts;
  clock_ = std::max(clock_, msg.gts.time_part());
  max_delivered_gts_ = msg.gts;
  delivered_[m] = true;
  if (newly_committed) fx.committed.push_back({m, msg.lts, msg.gts});
  fx.delivered.push_back({m, msg.lts, msg.gts});
  return fx;
}

Effects WhiteboxNode::recover() {
  Effects fx;
  Ballot next;
  if (ballot_.is_bottom()) {
    next = Ballot::of(1, self_);
  } else if (self_ > ballot_.owner) {
    next = Ballot::of(ballot_.round, self_);
  } else {
    next = Ballot::of(ballot_.round + 1, self_);
  }
  campaign_ballot_ = next;
  state_computed_ = false;
  reports_.clear();
  newstate_acks_.clear();
  for (ProcessId p : topo_.members(group_)) {
    fx.send(p, NewLeaderMsg{next});
  }
  fx.timers.push_back({quorum_wait_delay_, TimerKind::newleader_quorum, MsgId{}, next});
  return fx;
}

Effects WhiteboxNode::handle_newleader(ProcessId from, const NewLeaderMsg& msg) {
  Effects fx;
  if (!(msg.bal > ballot_)) return fx;
  status_ = Status::recovering;
  ballot_ = msg.bal;
  NewLeaderAckMsg ack;
  ack.bal = msg.bal;
  ack.cballot = cballot_;
  ack.clock = clock_;
  ack.phase = phase_;
  ack.local_ts = local_ts_;
  ack.global_ts = global_ts_;
  for (const auto& [m, ph] : phase_) ack.messages.emplace(m, messages_.at(m));
  fx.send(from, std::move(ack));
  fx.timers.push_back({quorum_wait_delay_, TimerKind::recovery_sync, MsgId{}, msg.bal});
  return fx;
}

Effects WhiteboxNode::handle_newleader_ack(ProcessId from, const NewLeaderAckMsg& msg) {
  Effects fx;
  if (status_ != Status::recovering || ballot_ != msg.bal ||
      campaign_ballot_ != msg.bal || state_computed_) {
    return fx;
  }
  reports_.emplace(from, msg);
  if (reports_.size() < topo_.quorum()) return fx;

  state_computed_ = true;
  phase_.clear();
  local_ts_.clear();
  global_ts_.clear();

  Ballot max_cballot;
  for (const auto& [p, rep] : reports_) max_cballot = std::max(max_cballot, rep.cballot);
  std::set<ProcessId> adopted_from;  // reporters whose accepted entries survive
  for (const auto& [p, rep] : reports_) {
    if (mutations_.disable_max_cballot_rule || rep.cballot == max_cballot) {
      adopted_from.insert(p);
    }
    for (const auto& [mid, am] : rep.messages) messages_.emplace(mid, am);
  }

  std::set<MsgId> ids;
  for (const auto& [p, rep] : reports_) {
    for (const auto& [m, ph] : rep.phase) ids.insert(m);
  }
  for (const MsgId& m : ids) {
    const NewLeaderAckMsg* committed_rep = nullptr;
    const NewLeaderAckMsg* accepted_rep = nullptr;
    for (const auto& [p, rep] : reports_) {
      auto it = rep.phase.find(m);
      if (it == rep.phase.end()) continue;
      if (it->second == Phase::committed && !committed_rep) committed_rep = &rep;
      if (it->second == Phase::accepted && !accepted_rep && adopted_from.count(p)) {
        accepted_rep = &rep;
      }
    }
    if (committed_rep) {
      phase_[m] = Phase::committed;
      local_ts_[m] = committed_rep->local_ts.at(m);
      global_ts_[m] = committed_rep->global_ts.at(m);
    } else if (accepted_rep) {
      phase_[m] = Phase::accepted;
      local_ts_[m] = accepted_rep->local_ts.at(m);
    }
    // Entries only ever proposed are dropped: no quorum can have accepted
    // them, so no commit anywhere can depend on their timestamp.
  }
  std::uint64_t clk = clock_;
  for (const auto& [p, rep] : reports_) clk = std::max(clk, rep.clock);
  clock_ = clk;
  cballot_ = msg.bal;
  purge_stale_buffers();

  NewStateMsg ns;
  ns.bal = msg.bal;
  ns.clock = clock_;
  ns.phase = phase_;
  ns.local_ts = local_ts_;
  ns.global_ts = global_ts_;
  for (const auto& [m, ph] : phase_) ns.messages.emplace(m, messages_.at(m));
  for (ProcessId p : topo_.members(group_)) {
    if (p != self_) fx.send(p, ns);
  }
  fx.timers.push_back({quorum_wait_delay_, TimerKind::newstate_quorum, MsgId{}, msg.bal});
  finish_recovery_if_acked(fx);
  return fx;
}

Effects WhiteboxNode::handle_new_state(ProcessId from, const NewStateMsg& msg) {
  Effects fx;
  if (status_ != Status::recovering || ballot_ != msg.bal) return fx;
  status_ = Status::follower;
  cballot_ = msg.bal;
  clock_ = msg.clock;
  phase_ = msg.phase;
  local_ts_ = msg.local_ts;
  global_ts_ = msg.global_ts;
  for (const auto& [mid, am] : msg.messages) messages_.emplace(mid, am);
  purge_stale_buffers();
  fx.send(from, NewStateAckMsg{msg.bal});
  reevaluate_buffers(fx);
  return fx;
}

Effects WhiteboxNode::handle_newstate_ack(ProcessId from, const NewStateAckMsg& msg) {
  Effects fx;
  if (status_ != Status::recovering || ballot_ != msg.bal ||
      campaign_ballot_ != msg.bal || !state_computed_) {
    return fx;
  }
  newstate_acks_.insert(from);
  finish_recovery_if_acked(fx);
  return fx;
}

void WhiteboxNode::finish_recovery_if_acked(Effects& fx) {
  if (newstate_acks_.size() + 1 < topo_.quorum()) return;
  status_ = Status::leader;
  cur_leader_[group_] = self_;
  reevaluate_buffers(fx);

  // Redeliver every committed entry, delivered ones included: followers that
  // adopted the committed state via NEW_STATE may not have delivered yet, and
  // max_delivered_gts deduplicates at each receiver. Only accepted entries
  // block; nothing is merely proposed after the state rebuild.
  std::vector<std::pair<Timestamp, MsgId>> ready;
  for (const auto& [m, ph] : phase_) {
    if (ph != Phase::committed) continue;
    const Timestamp gts = global_ts_.at(m);
    bool blocked = false;
    for (const auto& [m2, ph2] : phase_) {
      if (ph2 == Phase::accepted && !(local_ts_.at(m2) > gts)) {
        blocked = true;
        break;
      }
    }
    if (!blocked) ready.push_back({gts, m});
  }
  std::sort(ready.begin(), ready.end());
  for (const auto& [gts, m] : ready) {
    delivered_[m] = true;
    for (ProcessId p : topo_.members(group_)) {
      fx.send(p, DeliverMsg{messages_.at(m), cballot_, local_ts_.at(m), gts});
    }
  }
  for (const auto& [m, ph] : phase_) {
    if (ph == Phase::proposed || ph == Phase::accepted) {
      // Re-drive the accept round now, not at the first retry tick: the
      // quorum watchdog armed below assumes a round is already in flight,
      // as it is on the handle_multicast path.
      const AppMessage& msg = messages_.at(m);
      for (GroupId g : msg.dest) {
        for (ProcessId p : topo_.members(g)) {
          fx.send(p, AcceptMsg{msg, group_, cballot_, local_ts_.at(m)});
        }
      }
      fx.timers.push_back({retry_delay_, TimerKind::retry, m, Ballot::bottom()});
      fx.timers.push_back({quorum_wait_delay_, TimerKind::accept_quorum, m, Ballot::bottom()});
    }
  }
}

void WhiteboxNode::purge_stale_buffers() {
  for (auto& [m, slot] : accept_buf_) {
    auto it = slot.find(group_);
    if (it != slot.end() && it->second.first < cballot_) slot.erase(it);
  }
  for (auto it = ack_tally_.begin(); it != ack_tally_.end();) {
    auto git = it->first.second.find(group_);
    if (git != it->first.second.end() && git->second < cballot_) {
      it = ack_tally_.erase(it);
    } else {
      ++it;
    }
  }
}

void WhiteboxNode::reevaluate_buffers(Effects& fx) {
  std::vector<MsgId> ms;
  for (const auto& [m, slot] : accept_buf_) ms.push_back(m);
  for (const MsgId& m : ms) try_process_accepts(m, fx);
}

WhiteboxNode::TimerOutcome WhiteboxNode::on_timer(const TimerRequest& t) {
  TimerOutcome out;
  switch (t.kind) {
    case TimerKind::retry: {
      Phase ph = phase_of(t.m);
      if (ph != Phase::proposed && ph != Phase::accepted) break;
      const AppMessage& msg = messages_.at(t.m);
      for (GroupId g : msg.dest) {
        out.fx.send(cur_leader_.at(g), MulticastMsg{msg});
      }
      out.fx.timers.push_back({retry_delay_, TimerKind::retry, t.m, Ballot::bottom()});
      break;
    }
    case TimerKind::accept_quorum: {
      Phase ph = phase_of(t.m);
      if (status_ != Status::leader || (ph != Phase::proposed && ph != Phase::accepted)) break;
      if (!own_group_quorum_acked(t.m)) out.wants_recovery = true;
      out.fx.timers.push_back(
          {quorum_wait_delay_, TimerKind::accept_quorum, t.m, Ballot::bottom()});
      break;
    }
    case TimerKind::newleader_quorum:
      if (status_ == Status::recovering && ballot_ == t.bal &&
          campaign_ballot_ == t.bal && !state_computed_) {
        out.wants_recovery = true;
      }
      break;
    case TimerKind::newstate_quorum:
      if (status_ == Status::recovering && ballot_ == t.bal &&
          campaign_ballot_ == t.bal && state_computed_) {
        out.wants_recovery = true;
      }
      break;
    case TimerKind::recovery_sync:
      // Joiner-side watchdog: waits for the candidate's NEW_STATE. The
      // candidate of this very ballot is excluded — its campaign is watched
      // by newleader_quorum/newstate_quorum, and letting this timer fire on
      // the candidate would abandon a campaign whose final ack may arrive at
      // the same instant.
      if (status_ == Status::recovering && ballot_ == t.bal &&
          campaign_ballot_ != t.bal) {
        out.wants_recovery = true;
      }
      break;
    default:
      break;
  }
  return out;
}

StateSnapshot WhiteboxNode::snapshot() const {
  StateSnapshot s;
  s.clock = clock_;
  s.status = to_string(status_);
  s.ballot = ballot_;
  s.cballot = cballot_;
  s.max_delivered_gts = max_delivered_gts_;
  s.phase = phase_;
  s.local_ts = local_ts_;
  s.global_ts = global_ts_;
  for (const auto& [m, d] : delivered_) {
    if (d) s.delivered.push_back(m);
  }
  return s;
}

json WhiteboxNode::debug_state() const {
  json j = snapshot().to_json();
  j["self"] = self_;
  j["campaign_ballot"] = to_string(campaign_ballot_);
  j["state_computed"] = state_computed_;
  json buf = json::object();
  for (const auto& [m, slot] : accept_buf_) {
    json per = json::object();
    for (const auto& [g, bv] : slot) {
      per[std::to_string(g)] = {{"bal", to_string(bv.first)}, {"lts", to_string(bv.second)}};
    }
    buf[to_string(m)] = std::move(per);
  }
  j["accept_buf"] = std::move(buf);
  json tally = json::array();
  for (const auto& [key, who] : ack_tally_) {
    json vec = json::object();
    for (const auto& [g, b] : key.second) vec[std::to_string(g)] = to_string(b);
    tally.push_back({{"m", to_string(key.first)},
                     {"vec", std::move(vec)},
                     {"who", std::vector<ProcessId>(who.begin(), who.end())}});
  }
  j["ack_tally"] = std::move(tally);
  json known = json::array();
  for (const auto& [m, app] : messages_) known.push_back(to_string(m));
  j["known"] = std::move(known);
  return j;
}

}  // namespace wbcast
