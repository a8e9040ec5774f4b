#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wbcast/core.hpp"
#include "wbcast/protocol.hpp"
#include "wbcast/time.hpp"

namespace wbcast {

// A process's externally visible state after handling one input. Emitted
// behind a config flag because snapshots dominate trace size; the invariant
// checks that need state history require them.
struct StateSnapshot {
  std::uint64_t clock = 0;
  std::string status;  // "leader" | "follower" | "recovering" (empty for baselines)
  Ballot ballot;
  Ballot cballot;
  Timestamp max_delivered_gts;
  std::map<MsgId, Phase> phase;
  std::map<MsgId, Timestamp> local_ts;
  std::map<MsgId, Timestamp> global_ts;
  std::vector<MsgId> delivered;

  json to_json() const;
  static StateSnapshot from_json(const json& j);
};

enum class EventKind {
  multicast,  // a sender injected a message (detail: msg id + dest)
  send,       // wire message departed (detail: to, per-channel seq, message)
  receive,    // wire message handled (detail: from, matching seq, message)
  deliver,    // application delivery (detail: msg id, gts)
  commit,     // phase reached committed at this process (detail: msg id, lts, gts)
  crash,      // process stopped
  nominate,   // leadership oracle suggested this process for a group
  timer       // a timer fired and acted (detail: kind, msg id)
};

std::string to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

struct TraceEvent {
  SimTime t{0};
  ProcessId p = 0;
  EventKind kind = EventKind::send;

  // send/receive
  ProcessId peer = 0;       // to (send) / from (receive)
  std::uint64_t seq = 0;    // per-(from,to) channel sequence, 1-based
  std::optional<ProtocolMessage> msg;

  // multicast/deliver/commit/timer
  std::optional<MsgId> m;
  std::vector<GroupId> dest;      // multicast only
  std::optional<Timestamp> lts;   // commit
  std::optional<Timestamp> gts;   // deliver/commit
  std::optional<GroupId> group;   // nominate
  std::string timer;              // timer kind name

  std::optional<StateSnapshot> state;  // post-handler state, when enabled

  json to_json() const;
  static TraceEvent from_json(const json& j);
};

struct Trace {
  json config;  // the run's configuration, embedded so checks are self-contained
  std::vector<TraceEvent> events;

  // JSON-lines: a header object {"format":1,"kind":"header","config":...}
  // followed by one object per event.
  std::string to_jsonl() const;
  static Trace from_jsonl(const std::string& text);
};

}  // namespace wbcast
