#pragma once

#include <string>
#include <vector>

#include "wbcast/checker.hpp"
#include "wbcast/config.hpp"
#include "wbcast/trace.hpp"

namespace wbcast {

// Frozen, hand-derived schedules that pin the protocols to their exact best-
// and worst-case delivery latencies, plus the crash/recovery scripts. Every
// builder returns a complete SimConfig, so the schedules double as regression
// fixtures: run_scenario executes one, runs all trace checks, and verifies the
// latency numbers the schedule was constructed to hit.

// One message to two groups over uniform δ links: the collision-free best
// case. Expected first delivery per destination group: skeen 2δ, whitebox 3δ
// (followers 4δ), ftskeen 6δ.
SimConfig solo_config(ProtocolKind protocol);

// A scripted worst case: a blocker message is proposed at one leader just
// before that leader's clock passes the victim's global timestamp, so the
// already-committed victim waits for the blocker's own commit. Expected worst
// per-group delivery latency: skeen 4δ, whitebox 5δ, ftskeen 12δ.
SimConfig convoy_config(ProtocolKind protocol);

// Whitebox only: the leader of one destination group crashes after sending
// ACCEPT but before gathering a quorum; the oracle nominates a follower, the
// new leader's retry re-multicasts, and the message commits in both groups.
SimConfig crash_recovery_config();

// Whitebox only: two successive leader crashes in a five-member group leave
// one member holding a message accepted under the first ballot while the
// second ballot reassigned its timestamp. The third leader's state rebuild
// must take entries only from reporters with the maximal cballot, so the
// stale timestamp stays dead.
SimConfig double_crash_config();

// Whitebox only: the sender crashes between its two MULTICAST sends, so one
// leader holds the message proposed while the other group never heard of it.
// Only the leader-side retry timer re-multicasts and unsticks delivery.
SimConfig stuck_proposed_config();

struct ScenarioOutcome {
  std::string name;
  SimConfig config;
  Trace trace;
  CheckReport checks;
  LatencyReport latency;
  bool ok = true;
  std::vector<std::string> notes;   // human-readable facts, e.g. "whitebox CFL = 3δ"
  std::vector<std::string> errors;  // expectation failures; empty when ok
};

// Runs a named scenario (solo, convoy, crash-recovery, stuck-proposed)
// end to end: simulate, check the trace, and verify the scenario's expected
// numbers. crash-recovery runs both the single-crash and the double-crash
// script; the stored trace is the single-crash one. Throws
// std::invalid_argument for an unknown name.
ScenarioOutcome run_scenario(const std::string& name, ProtocolKind protocol);

std::vector<std::string> scenario_names();

}  // namespace wbcast
