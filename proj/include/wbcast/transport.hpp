#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wbcast/config.hpp"
#include "wbcast/core.hpp"
#include "wbcast/trace.hpp"

namespace wbcast {

struct MemberAddr {
  ProcessId id = 0;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

// Deployment document for socket runs: group membership with addresses, the
// initial leader directory, and the millisecond timeouts. Carries the same
// group arithmetic constraints as a simulator configuration. Only the
// leader-replicated protocol runs over sockets; it is the one with a
// recovery path, which liveness across process kills requires.
struct ClusterSpec {
  std::string protocol = "whitebox";
  std::uint32_t f = 1;
  std::map<GroupId, std::vector<MemberAddr>> groups;
  std::map<GroupId, ProcessId> initial_leaders;  // default: lowest id per group
  int retry_ms = 400;      // node-level re-multicast of stuck messages
  int election_ms = 800;   // base staleness bound; member rank staggers it
  int heartbeat_ms = 200;

  Topology topology() const;
  std::optional<MemberAddr> find_member(ProcessId p) const;
  ProcessId leader_of(GroupId g) const;
  void validate() const;

  // The simulator-config rendering embedded in trace headers so the safety
  // and genuineness checks can read topology from a merged trace. Carries
  // nominal delta/gst; latency metrics are simulator-only.
  json sim_config_json() const;

  json to_json() const;
  static ClusterSpec from_json(const json& j);
};

// Runs one protocol process: listens on its address, dials lower-id peers,
// retransmits unacknowledged frames on reconnect, deduplicates inbound frames
// per peer, feeds the state machine serially, appends trace rows (JSON lines,
// flushed per row) to trace_path, and campaigns for leadership when the
// group's leader goes silent past election_ms * (1 + member rank). Runs until
// *stop becomes true (or forever if stop is null). Returns a process exit
// code: 0 on clean shutdown, 1 on fatal setup errors (bind/spec).
int run_node(const ClusterSpec& spec, ProcessId id, const std::string& trace_path,
             const std::atomic<bool>* stop = nullptr);

struct ClientOptions {
  ProcessId id = 1000;
  std::vector<GroupId> dest;     // destination set of every message sent
  int count = 1;
  int timeout_ms = 30000;        // overall deadline for acknowledgement
  std::string payload_prefix = "payload";
};

// Multicasts `count` messages to the destination set: each is framed to the
// believed leader of every destination group, re-routed on REDIRECT, and
// re-sent round-robin when a target stops acknowledging. Logs one multicast
// trace row per message to trace_path. Returns 0 once every message was
// acknowledged by the current leader of every destination group, 1 on
// timeout or fatal setup errors.
int run_client(const ClusterSpec& spec, const ClientOptions& opt,
               const std::string& trace_path, const std::atomic<bool>* stop = nullptr);

// Merges per-process trace files (JSON lines, as written by run_node and
// run_client) into one checkable trace: rows sort by wall-clock time with
// multicast rows first among ties, preserving each file's internal order;
// unparseable tail lines (a killed process mid-write) are dropped. The merged
// config comes from the first readable header.
Trace merge_node_traces(const std::vector<std::string>& paths);

}  // namespace wbcast
