#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace wbcast {

using json = nlohmann::json;

using ProcessId = std::uint32_t;
using GroupId = std::uint32_t;

// Message identity: the multicasting process plus its per-sender counter.
struct MsgId {
  ProcessId sender = 0;
  std::uint64_t seq = 0;

  auto operator<=>(const MsgId&) const = default;
};

std::string to_string(const MsgId& id);          // "sender:seq"
MsgId msg_id_from_string(const std::string& s);

// Logical timestamp: either the minimal element ⊥ or a (time, group) pair.
// The order is strict and total: ⊥ first, then lexicographic, with the group
// id breaking ties between equal times.
struct Timestamp {
  bool has_value = false;
  std::uint64_t time = 0;
  GroupId group = 0;

  static Timestamp bottom() { return Timestamp{}; }
  static Timestamp of(std::uint64_t time, GroupId group) {
    return Timestamp{true, time, group};
  }

  bool is_bottom() const { return !has_value; }

  // time(⊥) must never be requested.
  std::uint64_t time_part() const {
    if (!has_value) throw std::logic_error("time of bottom timestamp");
    return time;
  }

  auto operator<=>(const Timestamp&) const = default;
};

bool ts_less(const Timestamp& a, const Timestamp& b);
std::string to_string(const Timestamp& ts);        // "(t,gN)" or "⊥"
Timestamp timestamp_from_string(const std::string& s);

// Ballot: either ⊥ or (round, process); lexicographic, process id breaking
// ties. The process component names the leader of the ballot.
struct Ballot {
  bool has_value = false;
  std::uint64_t round = 0;
  ProcessId owner = 0;

  static Ballot bottom() { return Ballot{}; }
  static Ballot of(std::uint64_t round, ProcessId owner) {
    return Ballot{true, round, owner};
  }

  bool is_bottom() const { return !has_value; }

  ProcessId leader() const {
    if (!has_value) throw std::logic_error("leader of bottom ballot");
    return owner;
  }

  auto operator<=>(const Ballot&) const = default;
};

bool ballot_less(const Ballot& a, const Ballot& b);
std::string to_string(const Ballot& b);            // "(n,pN)" or "⊥"
Ballot ballot_from_string(const std::string& s);

// An application message: identity, destination group set, opaque payload.
struct AppMessage {
  MsgId id;
  std::vector<GroupId> dest;  // sorted, unique, non-empty
  std::string payload;

  bool addressed_to(GroupId g) const;
};

// Per-group maps carried on the wire. Both are constrained to key exactly
// dest(m) of the message they accompany.
using BalVector = std::map<GroupId, Ballot>;
using LtsVector = std::map<GroupId, Timestamp>;

// Pointwise max of local timestamps; defined only for a non-empty vector of
// non-bottom entries.
Timestamp merge_global(const LtsVector& parts);

enum class Phase { start, proposed, accepted, committed };

std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

// Whether `to` is reachable from `from` without regressing. Phase only moves
// forward while cballot is unchanged; leader changes may rebuild the maps.
inline bool phase_lt(Phase a, Phase b) {
  return static_cast<int>(a) < static_cast<int>(b);
}

// ---------------------------------------------------------------------------
// Wire messages. One tagged union covers all three protocols plus the two
// advisory extensions (REDIRECT, the persist round of the replicated
// baseline). Payload-bearing variants carry the full AppMessage because
// recipients need dest(m) to know which groups participate.

struct MulticastMsg {
  AppMessage msg;
};

struct AcceptMsg {
  AppMessage msg;
  GroupId group = 0;     // issuing leader's group
  Ballot bal;            // issuing leader's cballot
  Timestamp lts;         // local timestamp issued for msg by that group
};

struct AcceptAckMsg {
  MsgId m;
  GroupId group = 0;     // acknowledging process's group
  BalVector bal;         // ballots of the accepted set, keyed by dest(m)
};

struct DeliverMsg {
  AppMessage msg;
  Ballot bal;
  Timestamp lts;
  Timestamp gts;
};

// Recovery: the candidate's ballot.
struct NewLeaderMsg {
  Ballot bal;
};

// A follower's full report. `messages` carries the bodies for every id that
// appears in `phase`, so a leader that never saw a message can still act on
// it after adopting the entry.
struct NewLeaderAckMsg {
  Ballot bal;       // ballot being acknowledged
  Ballot cballot;   // reporter's last synchronized ballot
  std::uint64_t clock = 0;
  std::map<MsgId, Phase> phase;
  std::map<MsgId, Timestamp> local_ts;
  std::map<MsgId, Timestamp> global_ts;
  std::map<MsgId, AppMessage> messages;
};

struct NewStateMsg {
  Ballot bal;
  std::uint64_t clock = 0;
  std::map<MsgId, Phase> phase;
  std::map<MsgId, Timestamp> local_ts;
  std::map<MsgId, Timestamp> global_ts;
  std::map<MsgId, AppMessage> messages;
};

struct NewStateAckMsg {
  Ballot bal;
};

// Classic timestamp agreement between singleton groups.
struct ProposeMsg {
  AppMessage msg;
  GroupId group = 0;
  Timestamp lts;
};

// Advisory reply to a MULTICAST that landed on a non-leader.
struct RedirectMsg {
  GroupId group = 0;
  ProcessId leader = 0;
};

// Replicated-baseline persist round: a leader replicates a timestamp to its
// group before releasing it.
struct PersistLtsMsg {
  AppMessage msg;
  Timestamp lts;
};

struct PersistGtsMsg {
  MsgId m;
  Timestamp gts;
};

enum class PersistKind { lts, gts };

struct PersistAckMsg {
  MsgId m;
  PersistKind kind = PersistKind::lts;
};

using ProtocolMessage =
    std::variant<MulticastMsg, AcceptMsg, AcceptAckMsg, DeliverMsg,
                 NewLeaderMsg, NewLeaderAckMsg, NewStateMsg, NewStateAckMsg,
                 ProposeMsg, RedirectMsg, PersistLtsMsg, PersistGtsMsg,
                 PersistAckMsg>;

// Tag string ("MULTICAST", "ACCEPT", ...) of a message.
std::string message_type(const ProtocolMessage& msg);

// The message id a wire message is about, if it is about a single one.
// Recovery messages reference whole maps; use referenced_msg_ids for those.
bool primary_msg_id(const ProtocolMessage& msg, MsgId* out);

// Every message id referenced anywhere in the payload (recovery maps
// included). Used by the participation check.
std::vector<MsgId> referenced_msg_ids(const ProtocolMessage& msg);

json to_json(const ProtocolMessage& msg);
ProtocolMessage protocol_message_from_json(const json& j);

json to_json(const AppMessage& msg);
AppMessage app_message_from_json(const json& j);

// Canonical text rendering helpers shared by traces and logs.
json timestamp_to_json(const Timestamp& ts);
Timestamp timestamp_from_json(const json& j);
json ballot_to_json(const Ballot& b);
Ballot ballot_from_json(const json& j);

}  // namespace wbcast
