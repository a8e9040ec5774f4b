#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wbcast/core.hpp"
#include "wbcast/time.hpp"

namespace wbcast {

// Test-only fault knobs. Each disables one load-bearing rule so the checker
// suite can demonstrate it would catch the regression.
struct Mutations {
  bool disable_accept_clock_max = false;    // skip the clock ⊔ time(gts) bump on accept
  bool disable_deliver_blocker_guard = false;  // deliver committed messages ignoring
                                               // smaller-timestamped pending ones
  bool disable_max_cballot_rule = false;    // recovery adopts accepted entries from
                                            // all reporters, not just the freshest
};

enum class TimerKind {
  retry,             // re-multicast a stuck message to the current leaders
  accept_quorum,     // leader waiting for accept acknowledgements
  newleader_quorum,  // candidate waiting for reports
  newstate_quorum,   // candidate waiting for state acks
  recovery_sync,     // joined a ballot, waiting for the candidate's state
  client_retry       // harness-level client retransmission
};

std::string to_string(TimerKind k);

struct TimerRequest {
  SimTime delay{0};  // relative to now
  TimerKind kind = TimerKind::retry;
  MsgId m;           // meaningful for retry/accept_quorum/client_retry
  Ballot bal;        // meaningful for the recovery timers
};

struct OutboundMessage {
  ProcessId to = 0;
  ProtocolMessage msg;
};

struct DeliveryRecord {
  MsgId m;
  Timestamp lts;
  Timestamp gts;
};

// What one handler invocation asks of its environment. Handlers mutate node
// state directly; the driver turns this into queue operations and trace rows.
struct Effects {
  std::vector<OutboundMessage> sends;
  std::vector<DeliveryRecord> delivered;   // application-level deliveries, in order
  std::vector<DeliveryRecord> committed;   // messages whose phase reached committed here
  std::vector<TimerRequest> timers;

  void send(ProcessId to, ProtocolMessage msg) {
    sends.push_back(OutboundMessage{to, std::move(msg)});
  }
  void merge(Effects&& other) {
    for (auto& s : other.sends) sends.push_back(std::move(s));
    for (auto& d : other.delivered) delivered.push_back(d);
    for (auto& c : other.committed) committed.push_back(c);
    for (auto& t : other.timers) timers.push_back(t);
  }
};

// Static group topology shared by every node of a run.
struct Topology {
  std::map<GroupId, std::vector<ProcessId>> groups;  // members sorted ascending
  std::uint32_t f = 0;

  bool is_member(ProcessId p) const;
  std::optional<GroupId> group_of(ProcessId p) const;
  const std::vector<ProcessId>& members(GroupId g) const;
  std::size_t quorum() const { return static_cast<std::size_t>(f) + 1; }
  ProcessId initial_leader(GroupId g) const;  // lowest id by convention
};

}  // namespace wbcast
