#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "wbcast/core.hpp"
#include "wbcast/protocol.hpp"
#include "wbcast/trace.hpp"

namespace wbcast {

enum class Status { leader, follower, recovering };

std::string to_string(Status s);

// Genuine atomic multicast over passively replicated groups. Group leaders
// run the timestamp agreement directly on replicated state: an ACCEPT both
// proposes a local timestamp to the other destination groups and replicates
// it inside its own group; a quorum of ACCEPT_ACKs per destination group
// commits the message. Leader changes go through a ballot-ordered recovery
// round that rebuilds the maps from a quorum of reports.
class WhiteboxNode {
 public:
  WhiteboxNode(ProcessId self, GroupId group, Topology topology,
               std::map<GroupId, ProcessId> initial_leaders, Mutations mutations,
               SimTime retry_delay, SimTime quorum_wait_delay);

  Effects on_message(ProcessId from, const ProtocolMessage& msg);

  struct TimerOutcome {
    Effects fx;
    bool wants_recovery = false;  // a quorum wait expired; the driver decides
                                  // whether this process should campaign
  };
  TimerOutcome on_timer(const TimerRequest& t);

  // Start a leader-change campaign at the smallest own ballot above `ballot`.
  // Invoked by the driver on a leadership-oracle nomination or (gated) after
  // a quorum-wait timeout.
  Effects recover();

  // Leadership-oracle directory update.
  void set_cur_leader(GroupId g, ProcessId p) { cur_leader_[g] = p; }

  ProcessId self() const { return self_; }
  GroupId group() const { return group_; }
  Status status() const { return status_; }
  Ballot ballot() const { return ballot_; }
  Ballot cballot() const { return cballot_; }
  std::uint64_t clock() const { return clock_; }
  Timestamp max_delivered_gts() const { return max_delivered_gts_; }
  ProcessId cur_leader(GroupId g) const { return cur_leader_.at(g); }
  Phase phase_of(const MsgId& m) const;
  Timestamp local_ts(const MsgId& m) const;
  Timestamp global_ts(const MsgId& m) const;
  bool delivered(const MsgId& m) const;

  StateSnapshot snapshot() const;
  json debug_state() const;

 private:
  Effects handle_multicast(ProcessId from, const AppMessage& msg);
  Effects handle_accept(const AcceptMsg& msg);
  Effects handle_accept_ack(ProcessId from, const AcceptAckMsg& msg);
  Effects handle_deliver(const DeliverMsg& msg);
  Effects handle_newleader(ProcessId from, const NewLeaderMsg& msg);
  Effects handle_newleader_ack(ProcessId from, const NewLeaderAckMsg& msg);
  Effects handle_new_state(ProcessId from, const NewStateMsg& msg);
  Effects handle_newstate_ack(ProcessId from, const NewStateAckMsg& msg);

  void try_process_accepts(const MsgId& m, Effects& fx);
  void try_commit(const MsgId& m, const BalVector& vec, Effects& fx);
  void run_delivery(Effects& fx);
  void finish_recovery_if_acked(Effects& fx);
  void purge_stale_buffers();
  void reevaluate_buffers(Effects& fx);
  bool own_group_quorum_acked(const MsgId& m) const;

  ProcessId self_;
  GroupId group_;
  Topology topo_;
  Mutations mutations_;
  SimTime retry_delay_;
  SimTime quorum_wait_delay_;

  std::uint64_t clock_ = 0;
  std::map<MsgId, Phase> phase_;
  std::map<MsgId, Timestamp> local_ts_;
  std::map<MsgId, Timestamp> global_ts_;
  std::map<MsgId, bool> delivered_;
  Timestamp max_delivered_gts_ = Timestamp::bottom();
  Status status_ = Status::follower;
  Ballot cballot_;
  Ballot ballot_;
  std::map<GroupId, ProcessId> cur_leader_;

  std::map<MsgId, AppMessage> messages_;
  // Latest accept per (message, issuing group), monotone in ballot.
  std::map<MsgId, std::map<GroupId, std::pair<Ballot, Timestamp>>> accept_buf_;
  // Ack sets keyed by the exact ballot vector they acknowledge.
  std::map<std::pair<MsgId, BalVector>, std::set<ProcessId>> ack_tally_;

  // Campaign bookkeeping (meaningful while status_ == recovering).
  Ballot campaign_ballot_;
  bool state_computed_ = false;
  std::map<ProcessId, NewLeaderAckMsg> reports_;
  std::set<ProcessId> newstate_acks_;
};

}  // namespace wbcast
