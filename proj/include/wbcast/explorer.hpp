#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wbcast/config.hpp"

namespace wbcast {

// Bounds for the exhaustive interleaving search. The pending cap is part of
// the model: successor states holding more schedulable events (in-flight
// messages plus not-yet-injected workload entries) are cut. max_states is a
// safety valve; tripping it marks the exploration incomplete.
struct ExploreLimits {
  std::size_t max_pending = 6;
  std::uint64_t max_states = 2'000'000;
};

struct ExploreReport {
  bool ok = false;           // complete && no violations
  bool complete = false;     // false if max_states tripped
  std::uint64_t states = 0;  // distinct states visited
  std::uint64_t transitions = 0;
  std::uint64_t pruned_pending = 0;  // successors cut by the pending cap
  std::uint64_t terminals = 0;       // drained states reached
  std::uint64_t deliveries = 0;      // deliver effects across all transitions
  std::vector<std::string> violations;
};

// Exhaustively enumerates arrival interleavings of the leader-replicated
// protocol under per-pair FIFO channels, with no crashes and no timers, and
// asserts on every transition that
//   - a message's global timestamp is identical wherever it commits or
//     delivers,
//   - distinct messages never share a global timestamp, and
//   - every process delivers in strictly increasing global-timestamp order,
// plus, at every fully drained state, that each workload message was
// delivered by every member of every destination group.
//
// cfg supplies groups, f, mutations, and the workload (entry times and the
// delay model are ignored; the search owns the schedule). States are
// deduplicated on the full node states plus channel contents.
ExploreReport explore(const SimConfig& cfg, const ExploreLimits& limits = {});

}  // namespace wbcast
