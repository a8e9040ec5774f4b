#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wbcast/config.hpp"
#include "wbcast/core.hpp"
#include "wbcast/time.hpp"
#include "wbcast/trace.hpp"

namespace wbcast {

struct CheckIssue {
  std::string check;   // which verdict failed ("validity", "ordering", "I4", ...)
  std::string detail;  // human-readable, cites trace event indices
};

// Verdicts of one or more checks. `results` holds one line per check id:
// "pass", "fail: ...", "skipped: ...", or "inconclusive: ...".
struct CheckReport {
  bool pass = true;
  bool inconclusive = false;
  std::vector<CheckIssue> issues;
  std::map<std::string, std::string> results;

  void mark_pass(const std::string& check);
  void fail(const std::string& check, const std::string& detail);
  void skip(const std::string& check, const std::string& why);
  void merge(const CheckReport& other);
  json to_json() const;
  std::string table() const;
};

// Validity, Integrity and Ordering. Ordering is verified constructively: the
// unique global timestamps taken from commit events give the candidate total
// order, and each process's delivery sequence must embed into it (holes are
// legal at the horizon, inversions are not).
CheckReport check_safety(const Trace& trace);

// Only a message's sender and members of its destination groups may appear in
// send/receive/timer events referencing it.
CheckReport check_genuineness(const Trace& trace);

// Every message multicast by a correct sender or delivered anywhere must be
// delivered by a quorum of every destination group. Requires the horizon to
// leave a 20δ margin after max(gst, last multicast); otherwise inconclusive.
CheckReport check_termination(const Trace& trace);

// The protocol-specific invariants (leader-replication protocol only), on the
// message log and the per-event state snapshots. Skipped with a warning when
// the trace carries no snapshots.
CheckReport check_protocol_invariants(const Trace& trace);

// All of the above; protocol invariants included when applicable.
CheckReport check_trace(const Trace& trace);

struct MessageLatency {
  MsgId m;
  SimTime multicast_at{0};
  bool collision_free = false;
  bool partially_delivered = false;  // delivered in every destination group
  bool post_stabilization = false;
  std::map<GroupId, SimTime> delivery_latency;  // per dest group, in δ units
  std::map<GroupId, SimTime> commit_latency;    // first commit per group, in δ units
};

struct LatencyReport {
  SimTime delta{1};
  SimTime stabilization{0};  // t': first instant with no pre-t' message pending
  bool stabilized = true;    // false when some message never completed
  std::vector<MessageLatency> messages;
  // Aggregates over post-stabilization messages, in δ units. Empty when no
  // message qualifies. C is recovered from the FFL = C + CFL identity rather
  // than instrumented, so solo runs report 0.
  std::optional<SimTime> cfl;
  std::optional<SimTime> ffl;
  std::optional<SimTime> commit_latency_d;
  std::optional<SimTime> clock_update_latency_c;
  std::vector<MsgId> undelivered;  // excluded from aggregates

  json to_json() const;
  std::string table() const;
};

LatencyReport measure_latency(const Trace& trace);

}  // namespace wbcast
