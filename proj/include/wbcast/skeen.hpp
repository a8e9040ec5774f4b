#pragma once

#include <map>

#include "wbcast/core.hpp"
#include "wbcast/protocol.hpp"
#include "wbcast/trace.hpp"

namespace wbcast {

// Timestamp-agreement multicast between reliable singleton groups: each
// destination proposes (clock, group), the global timestamp is the max of the
// proposals, and a committed message is delivered once nothing still in the
// proposed phase could be ordered before it.
class SkeenNode {
 public:
  SkeenNode(ProcessId self, GroupId group, Topology topology);

  Effects on_message(ProcessId from, const ProtocolMessage& msg);

  std::uint64_t clock() const { return clock_; }
  Phase phase_of(const MsgId& m) const;
  Timestamp local_ts(const MsgId& m) const;
  Timestamp global_ts(const MsgId& m) const;
  bool delivered(const MsgId& m) const;

  StateSnapshot snapshot() const;
  json debug_state() const;

 private:
  Effects handle_multicast(const AppMessage& msg);
  Effects handle_propose(const ProposeMsg& msg);
  void run_delivery(Effects& fx);

  ProcessId self_;
  GroupId group_;
  Topology topo_;

  std::uint64_t clock_ = 0;
  std::map<MsgId, Phase> phase_;
  std::map<MsgId, Timestamp> local_ts_;
  std::map<MsgId, Timestamp> global_ts_;
  std::map<MsgId, bool> delivered_;
  std::map<MsgId, AppMessage> messages_;
  std::map<MsgId, LtsVector> proposals_;
};

}  // namespace wbcast
