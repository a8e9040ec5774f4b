#pragma once

#include <cstdint>
#include <map>
#include <set>

#include "wbcast/core.hpp"
#include "wbcast/protocol.hpp"
#include "wbcast/trace.hpp"

namespace wbcast {

// Black-box fault-tolerant baseline: each group replicates a classic
// singleton-group sequencer behind two persist rounds. The leader assigns the
// local timestamp, persists it on a quorum before exchanging proposals, then
// persists the merged global timestamp on a quorum before advancing its clock
// and committing. The late clock advance is what doubles the failure-free
// latency of concurrent messages relative to the white-box protocol.
// Leader changes are out of scope for this baseline; runs are crash-free.
class FtSkeenNode {
 public:
  FtSkeenNode(ProcessId self, GroupId group, Topology topology,
              std::map<GroupId, ProcessId> leaders);

  Effects on_message(ProcessId from, const ProtocolMessage& msg);

  ProcessId self() const { return self_; }
  GroupId group() const { return group_; }
  bool is_leader() const { return leaders_.at(group_) == self_; }
  std::uint64_t clock() const { return clock_; }
  Phase phase_of(const MsgId& m) const;
  Timestamp local_ts(const MsgId& m) const;
  Timestamp global_ts(const MsgId& m) const;
  bool delivered(const MsgId& m) const;

  StateSnapshot snapshot() const;

 private:
  Effects handle_multicast(ProcessId from, const AppMessage& msg);
  Effects handle_persist_lts(ProcessId from, const PersistLtsMsg& msg);
  Effects handle_persist_gts(ProcessId from, const PersistGtsMsg& msg);
  Effects handle_persist_ack(ProcessId from, const PersistAckMsg& msg);
  Effects handle_propose(const ProposeMsg& msg);
  Effects handle_deliver(const DeliverMsg& msg);
  void run_delivery(Effects& fx);

  ProcessId self_;
  GroupId group_;
  Topology topo_;
  std::map<GroupId, ProcessId> leaders_;

  std::uint64_t clock_ = 0;
  std::map<MsgId, Phase> phase_;
  std::map<MsgId, Timestamp> local_ts_;
  std::map<MsgId, Timestamp> global_ts_;
  std::map<MsgId, bool> delivered_;
  std::map<MsgId, AppMessage> messages_;

  std::map<MsgId, std::set<ProcessId>> lts_acks_;
  std::map<MsgId, std::set<ProcessId>> gts_acks_;
  std::set<MsgId> lts_persisted_;  // PROPOSE round already started
  std::map<MsgId, std::map<GroupId, Timestamp>> proposals_;
  std::set<MsgId> gts_persisting_;  // PERSIST_GTS round already started
};

}  // namespace wbcast
