#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <vector>

#include "wbcast/config.hpp"
#include "wbcast/core.hpp"
#include "wbcast/ft_skeen.hpp"
#include "wbcast/skeen.hpp"
#include "wbcast/trace.hpp"
#include "wbcast/whitebox.hpp"

namespace wbcast {

// A group's leadership history as the oracle sees it: who it considers the
// incumbent at any time, given the crash schedule and scripted nominations.
// Computable up front because crashes are scheduled and the oracle's policy —
// nominate the lowest-id alive member 2δ after an incumbent's crash — depends
// on nothing else.
struct LeaderTimeline {
  std::vector<std::pair<SimTime, ProcessId>> changes;  // sorted by time
  ProcessId at(SimTime t) const;
};

struct OracleSchedule {
  std::map<GroupId, LeaderTimeline> incumbents;
  struct Nomination {
    SimTime t{0};
    GroupId group = 0;
    ProcessId nominee = 0;
  };
  std::vector<Nomination> nominations;  // sorted by time
};

OracleSchedule compute_oracle_schedule(const SimConfig& cfg);

// The oracle's nominee for a group given who is alive: the lowest-id living
// member, or nothing when the whole group is down. This is the policy the
// precomputed schedule applies 2δ after an incumbent crash.
std::optional<ProcessId> lss_nominate(const Topology& topo, GroupId group,
                                      const std::set<ProcessId>& alive);

// Discrete-event run of one configuration. Deterministic: the same config
// (seed included) yields a byte-identical trace.
class Simulation {
 public:
  explicit Simulation(SimConfig cfg);
  Trace run();

 private:
  struct Event {
    SimTime t{0};
    std::uint64_t seq = 0;
    enum class Kind { arrival, timer, workload, crash, nominate, client_retry } kind;
    // arrival
    ProcessId from = 0;
    ProcessId to = 0;
    std::uint64_t chan_seq = 0;
    std::shared_ptr<const ProtocolMessage> msg;
    // timer / client_retry owner
    ProcessId pid = 0;
    TimerRequest treq;
    // workload / client_retry
    std::size_t widx = 0;
    // nominate
    GroupId group = 0;
    ProcessId nominee = 0;
  };
  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t != b.t) return a.t > b.t;
      return a.seq > b.seq;
    }
  };

  void enqueue(Event e);
  void setup();
  void dispatch(const Event& e);
  void inject_workload(std::size_t widx, SimTime now, bool is_retry);
  void process_effects(ProcessId at, Effects fx, SimTime now);
  void dispatch_wire(ProcessId from, ProcessId to, std::uint64_t chan_seq,
                     const ProtocolMessage& msg, SimTime now);
  Effects node_on_message(ProcessId to, ProcessId from, const ProtocolMessage& msg);
  SimTime draw_arrival(ProcessId from, ProcessId to, SimTime now);
  bool is_member(ProcessId p) const { return topo_.is_member(p); }
  void append_row(TraceEvent row, bool with_state);
  void maybe_recover(ProcessId p, SimTime now);

  SimConfig cfg_;
  Topology topo_;
  OracleSchedule oracle_;
  std::mt19937_64 rng_;

  std::map<ProcessId, std::unique_ptr<SkeenNode>> skeen_;
  std::map<ProcessId, std::unique_ptr<FtSkeenNode>> ftskeen_;
  std::map<ProcessId, std::unique_ptr<WhiteboxNode>> whitebox_;

  struct Client {
    std::map<GroupId, ProcessId> cur_leader;
  };
  std::map<ProcessId, Client> clients_;
  std::map<MsgId, std::size_t> msg_to_widx_;
  std::vector<bool> partially_delivered_;  // per workload entry

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::uint64_t next_enqueue_seq_ = 0;
  std::map<std::pair<ProcessId, ProcessId>, std::uint64_t> next_chan_seq_;
  std::map<std::pair<ProcessId, ProcessId>, SimTime> last_arrival_;
  std::set<ProcessId> crashed_;
  std::vector<TraceEvent> rows_;
  std::uint64_t dispatched_ = 0;
};

Trace run_simulation(const SimConfig& cfg);

}  // namespace wbcast
