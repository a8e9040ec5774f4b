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

enum class ProtocolKind { skeen, ftskeen, whitebox };

std::string to_string(ProtocolKind p);
ProtocolKind protocol_kind_from_string(const std::string& s);

struct EdgeDelay {
  ProcessId from = 0;
  ProcessId to = 0;
  SimTime delay{0};
};

// How message transit times are chosen.
//  - uniform_delta: exactly δ between distinct processes, 0 to self.
//  - seeded_random: uniform in (0, δ] after gst and (0, 4δ] before it, drawn
//    from the run's seed; 0 to self.
//  - scripted: per-(from,to) constant delays with a default, for worst-case
//    schedules; delays of 0 are allowed and delivered inline.
struct DelayModel {
  enum class Kind { uniform_delta, seeded_random, scripted };
  Kind kind = Kind::uniform_delta;
  SimTime scripted_default{1};
  std::vector<EdgeDelay> edges;
};

struct CrashEntry {
  ProcessId process = 0;
  SimTime time{0};
};

struct ScriptedNomination {
  GroupId group = 0;
  SimTime time{0};
  ProcessId nominee = 0;
};

// Leadership oracle schedule. The built-in policy nominates the lowest-id
// alive member once a group's incumbent has been crashed for 2δ; scripted
// entries are merged in (they model pre-stabilization misbehavior).
struct LssSchedule {
  std::vector<ScriptedNomination> scripted;
};

struct WorkloadEntry {
  SimTime time{0};
  ProcessId sender = 0;
  std::vector<GroupId> dest;          // sorted unique non-empty
  std::string payload;
  std::optional<std::vector<GroupId>> sent_to;  // partial send: groups that
                                                // actually receive MULTICAST
                                                // (models a sender crashing
                                                // between its sends)
};

struct SimConfig {
  ProtocolKind protocol = ProtocolKind::whitebox;
  std::uint32_t f = 0;
  std::vector<std::vector<ProcessId>> groups;  // group g's sorted member list
  SimTime delta{1};
  SimTime gst{0};
  SimTime horizon{100};
  std::uint64_t seed = 0;
  DelayModel delay;
  std::vector<CrashEntry> crash_schedule;
  LssSchedule lss;
  std::vector<WorkloadEntry> workload;
  bool snapshots = false;
  Mutations mutations;
  // Timer scales, in multiples of δ.
  std::uint32_t retry_delta_multiple = 4;
  std::uint32_t quorum_wait_delta_multiple = 4;

  Topology topology() const;

  // Throws std::invalid_argument on structural problems: group sizes vs f,
  // overlapping groups, over-budget or post-gst crashes, unknown dest groups,
  // nonpositive δ, horizon before gst.
  void validate() const;

  json to_json() const;
  static SimConfig from_json(const json& j);
};

}  // namespace wbcast
