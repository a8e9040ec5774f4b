#include "wbcast/simnet.hpp"

#include <algorithm>
#include <stdexcept>

namespace wbcast {

namespace {
constexpr std::uint64_t kDelayGranularity = 8;  // random delays are δ·k/8
constexpr std::uint64_t kEventBudget = 5'000'000;
}  // namespace

std::optional<ProcessId> lss_nominate(const Topology& topo, GroupId group,
                                      const std::set<ProcessId>& alive) {
  for (ProcessId p : topo.members(group)) {  // members are sorted ascending
    if (alive.count(p)) return p;
  }
  return std::nullopt;
}

ProcessId LeaderTimeline::at(SimTime t) const {
  ProcessId cur = changes.empty() ? 0 : changes.front().second;
  for (const auto& [when, who] : changes) {
    if (when <= t) cur = who;
  }
  return cur;
}

OracleSchedule compute_oracle_schedule(const SimConfig& cfg) {
  const Topology topo = cfg.topology();
  OracleSchedule out;
  for (const auto& [g, members] : topo.groups) {
    out.incumbents[g].changes.push_back({SimTime{0}, topo.initial_leader(g)});
  }
  auto crash_time = [&](ProcessId p) -> std::optional<SimTime> {
    for (const auto& c : cfg.crash_schedule) {
      if (c.process == p) return c.time;
    }
    return std::nullopt;
  };
  auto alive_at = [&](ProcessId p, SimTime t) {
    auto ct = crash_time(p);
    return !ct || *ct > t;
  };

  // Chronological walk over crashes and nominations. A crash of a group's
  // incumbent schedules a nomination 2δ later for the lowest-id member alive
  // at that point; nominations (scheduled or scripted) move the incumbent,
  // which determines whether later crashes matter.
  struct Item {
    SimTime t;
    int pri;  // nominations before crashes at equal times
    GroupId g;
    ProcessId who;     // crash: who crashed; nomination: nominee
    bool is_crash;
  };
  std::vector<Item> pending;
  for (const auto& c : cfg.crash_schedule) {
    GroupId g = *topo.group_of(c.process);
    pending.push_back({c.time, 1, g, c.process, true});
  }
  for (const auto& n : cfg.lss.scripted) {
    pending.push_back({n.time, 0, n.group, n.nominee, false});
  }
  auto order = [](const Item& a, const Item& b) {
    return std::tie(a.t, a.pri) < std::tie(b.t, b.pri);
  };
  std::sort(pending.begin(), pending.end(), order);
  std::map<GroupId, ProcessId> incumbent;
  for (const auto& [g, members] : topo.groups) incumbent[g] = topo.initial_leader(g);

  for (std::size_t i = 0; i < pending.size(); ++i) {
    // Keep the list sorted as scheduled nominations are appended.
    std::sort(pending.begin() + static_cast<std::ptrdiff_t>(i), pending.end(), order);
    const Item it = pending[i];
    if (it.is_crash) {
      if (incumbent.at(it.g) != it.who) continue;
      const SimTime when = it.t + 2 * cfg.delta;
      std::set<ProcessId> alive;
      for (ProcessId p : topo.members(it.g)) {
        if (alive_at(p, when)) alive.insert(p);
      }
      if (auto nominee = lss_nominate(topo, it.g, alive)) {
        pending.push_back({when, 0, it.g, *nominee, false});
      }
    } else {
      incumbent[it.g] = it.who;
      out.incumbents[it.g].changes.push_back({it.t, it.who});
      out.nominations.push_back({it.t, it.g, it.who});
    }
  }
  std::sort(out.nominations.begin(), out.nominations.end(),
            [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

Simulation::Simulation(SimConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  topo_ = cfg_.topology();
  oracle_ = compute_oracle_schedule(cfg_);
  rng_.seed(cfg_.seed);
  for (const auto& w : cfg_.workload) {
    if (topo_.is_member(w.sender)) {
      throw std::invalid_argument("workload sender collides with a group member");
    }
  }
}

void Simulation::enqueue(Event e) {
  e.seq = next_enqueue_seq_++;
  queue_.push(std::move(e));
}

void Simulation::setup() {
  std::map<GroupId, ProcessId> leaders;
  for (const auto& [g, members] : topo_.groups) leaders[g] = topo_.initial_leader(g);
  const SimTime retry_delay = cfg_.retry_delta_multiple * cfg_.delta;
  const SimTime quorum_delay = cfg_.quorum_wait_delta_multiple * cfg_.delta;
  for (const auto& [g, members] : topo_.groups) {
    for (ProcessId p : members) {
      switch (cfg_.protocol) {
        case ProtocolKind::skeen:
          skeen_.emplace(p, std::make_unique<SkeenNode>(p, g, topo_));
          break;
        case ProtocolKind::ftskeen:
          ftskeen_.emplace(p, std::make_unique<FtSkeenNode>(p, g, topo_, leaders));
          break;
        case ProtocolKind::whitebox:
          whitebox_.emplace(p, std::make_unique<WhiteboxNode>(
                                   p, g, topo_, leaders, cfg_.mutations, retry_delay,
                                   quorum_delay));
          break;
      }
    }
  }
  partially_delivered_.assign(cfg_.workload.size(), false);
  std::map<ProcessId, std::uint64_t> per_sender;
  for (std::size_t i = 0; i < cfg_.workload.size(); ++i) {
    const auto& w = cfg_.workload[i];
    clients_.emplace(w.sender, Client{leaders});
    const MsgId id{w.sender, ++per_sender[w.sender]};
    msg_to_widx_[id] = i;
    Event e;
    e.t = w.time;
    e.kind = Event::Kind::workload;
    e.widx = i;
    enqueue(std::move(e));
  }
  for (const auto& c : cfg_.crash_schedule) {
    Event e;
    e.t = c.time;
    e.kind = Event::Kind::crash;
    e.pid = c.process;
    enqueue(std::move(e));
  }
  for (const auto& n : oracle_.nominations) {
    Event e;
    e.t = n.t;
    e.kind = Event::Kind::nominate;
    e.group = n.group;
    e.nominee = n.nominee;
    enqueue(std::move(e));
  }
}

SimTime Simulation::draw_arrival(ProcessId from, ProcessId to, SimTime now) {
  SimTime draw{0};
  bool gst_bound = false;
  if (from != to) {
    switch (cfg_.delay.kind) {
      case DelayModel::Kind::uniform_delta:
        draw = cfg_.delta;
        gst_bound = true;
        break;
      case DelayModel::Kind::seeded_random: {
        const std::uint64_t span =
            now < cfg_.gst ? 4 * kDelayGranularity : kDelayGranularity;
        const std::uint64_t k = rng_() % span + 1;
        draw = cfg_.delta * SimTime(static_cast<std::int64_t>(k),
                                    static_cast<std::int64_t>(kDelayGranularity));
        gst_bound = true;
        break;
      }
      case DelayModel::Kind::scripted: {
        draw = cfg_.delay.scripted_default;
        for (const auto& e : cfg_.delay.edges) {
          if (e.from == from && e.to == to) {
            draw = e.delay;
            break;
          }
        }
        break;  // scripted schedules control timing exactly; no bound applies
      }
    }
  }
  SimTime arrival = now + draw;
  if (gst_bound) arrival = std::min(arrival, std::max(now, cfg_.gst) + cfg_.delta);
  auto& last = last_arrival_[{from, to}];
  arrival = std::max(arrival, last);
  last = arrival;
  return arrival;
}

Effects Simulation::node_on_message(ProcessId to, ProcessId from, const ProtocolMessage& msg) {
  if (auto it = whitebox_.find(to); it != whitebox_.end()) return it->second->on_message(from, msg);
  if (auto it = ftskeen_.find(to); it != ftskeen_.end()) return it->second->on_message(from, msg);
  if (auto it = skeen_.find(to); it != skeen_.end()) return it->second->on_message(from, msg);
  if (auto it = clients_.find(to); it != clients_.end()) {
    if (const auto* r = std::get_if<RedirectMsg>(&msg)) {
      it->second.cur_leader[r->group] = r->leader;
    }
    return {};
  }
  return {};
}

void Simulation::append_row(TraceEvent row, bool with_state) {
  if (with_state && cfg_.snapshots && is_member(row.p)) {
    if (auto it = whitebox_.find(row.p); it != whitebox_.end()) {
      row.state = it->second->snapshot();
    } else if (auto it2 = ftskeen_.find(row.p); it2 != ftskeen_.end()) {
      row.state = it2->second->snapshot();
    } else if (auto it3 = skeen_.find(row.p); it3 != skeen_.end()) {
      row.state = it3->second->snapshot();
    }
  }
  rows_.push_back(std::move(row));
}

void Simulation::dispatch_wire(ProcessId from, ProcessId to, std::uint64_t chan_seq,
                               const ProtocolMessage& msg, SimTime now) {
  if (crashed_.count(to)) return;
  Effects fx = node_on_message(to, from, msg);
  TraceEvent row;
  row.t = now;
  row.p = to;
  row.kind = EventKind::receive;
  row.peer = from;
  row.seq = chan_seq;
  row.msg = msg;
  append_row(std::move(row), true);
  process_effects(to, std::move(fx), now);
}

void Simulation::process_effects(ProcessId at, Effects fx, SimTime now) {
  for (const auto& c : fx.committed) {
    TraceEvent row;
    row.t = now;
    row.p = at;
    row.kind = EventKind::commit;
    row.m = c.m;
    row.lts = c.lts;
    row.gts = c.gts;
    append_row(std::move(row), false);
  }
  for (const auto& d : fx.delivered) {
    TraceEvent row;
    row.t = now;
    row.p = at;
    row.kind = EventKind::deliver;
    row.m = d.m;
    row.gts = d.gts;
    append_row(std::move(row), false);
    if (auto it = msg_to_widx_.find(d.m); it != msg_to_widx_.end()) {
      partially_delivered_[it->second] = true;
    }
  }
  for (const auto& t : fx.timers) {
    const SimTime deadline = now + t.delay;
    if (deadline > cfg_.horizon) continue;
    Event e;
    e.t = deadline;
    e.kind = Event::Kind::timer;
    e.pid = at;
    e.treq = t;
    enqueue(std::move(e));
  }
  for (const auto& s : fx.sends) {
    const std::uint64_t chan_seq = ++next_chan_seq_[{at, s.to}];
    TraceEvent row;
    row.t = now;
    row.p = at;
    row.kind = EventKind::send;
    row.peer = s.to;
    row.seq = chan_seq;
    row.msg = s.msg;
    append_row(std::move(row), false);
    const SimTime arrival = draw_arrival(at, s.to, now);
    if (arrival == now) {
      dispatch_wire(at, s.to, chan_seq, s.msg, now);
    } else {
      Event e;
      e.t = arrival;
      e.kind = Event::Kind::arrival;
      e.from = at;
      e.to = s.to;
      e.chan_seq = chan_seq;
      e.msg = std::make_shared<const ProtocolMessage>(s.msg);
      enqueue(std::move(e));
    }
  }
}

void Simulation::inject_workload(std::size_t widx, SimTime now, bool is_retry) {
  const auto& w = cfg_.workload[widx];
  std::uint64_t seq = 0;
  for (std::size_t i = 0; i <= widx; ++i) {
    if (cfg_.workload[i].sender == w.sender) ++seq;
  }
  AppMessage msg{MsgId{w.sender, seq}, w.dest, w.payload};
  if (!is_retry) {
    TraceEvent row;
    row.t = now;
    row.p = w.sender;
    row.kind = EventKind::multicast;
    row.m = msg.id;
    row.dest = w.dest;
    append_row(std::move(row), false);
  }
  const std::vector<GroupId>& targets =
      (!is_retry && w.sent_to) ? *w.sent_to : w.dest;
  Effects fx;
  for (GroupId g : targets) {
    fx.send(clients_.at(w.sender).cur_leader.at(g), MulticastMsg{msg});
  }
  process_effects(w.sender, std::move(fx), now);
  if (cfg_.protocol == ProtocolKind::whitebox && !w.sent_to &&
      !partially_delivered_[widx]) {
    const SimTime deadline = now + cfg_.retry_delta_multiple * cfg_.delta;
    if (deadline <= cfg_.horizon) {
      Event e;
      e.t = deadline;
      e.kind = Event::Kind::client_retry;
      e.pid = w.sender;
      e.widx = widx;
      enqueue(std::move(e));
    }
  }
}

void Simulation::maybe_recover(ProcessId p, SimTime now) {
  if (crashed_.count(p)) return;
  auto it = whitebox_.find(p);
  if (it == whitebox_.end()) return;
  const GroupId g = it->second->group();
  if (oracle_.incumbents.at(g).at(now) != p) return;
  process_effects(p, it->second->recover(), now);
}

void Simulation::dispatch(const Event& e) {
  switch (e.kind) {
    case Event::Kind::arrival:
      dispatch_wire(e.from, e.to, e.chan_seq, *e.msg, e.t);
      break;
    case Event::Kind::workload:
      inject_workload(e.widx, e.t, false);
      break;
    case Event::Kind::client_retry: {
      if (crashed_.count(e.pid) || partially_delivered_[e.widx]) break;
      TraceEvent row;
      row.t = e.t;
      row.p = e.pid;
      row.kind = EventKind::timer;
      row.timer = to_string(TimerKind::client_retry);
      row.m = MsgId{e.pid, 0};
      std::uint64_t seq = 0;
      for (std::size_t i = 0; i <= e.widx; ++i) {
        if (cfg_.workload[i].sender == e.pid) ++seq;
      }
      row.m = MsgId{e.pid, seq};
      append_row(std::move(row), false);
      inject_workload(e.widx, e.t, true);
      break;
    }
    case Event::Kind::timer: {
      if (crashed_.count(e.pid)) break;
      auto it = whitebox_.find(e.pid);
      if (it == whitebox_.end()) break;
      WhiteboxNode::TimerOutcome out = it->second->on_timer(e.treq);
      const bool acted = !out.fx.sends.empty() || !out.fx.timers.empty() ||
                         !out.fx.committed.empty() || !out.fx.delivered.empty() ||
                         out.wants_recovery;
      if (!acted) break;
      TraceEvent row;
      row.t = e.t;
      row.p = e.pid;
      row.kind = EventKind::timer;
      row.timer = to_string(e.treq.kind);
      if (e.treq.kind == TimerKind::retry || e.treq.kind == TimerKind::accept_quorum) {
        row.m = e.treq.m;
      }
      append_row(std::move(row), true);
      process_effects(e.pid, std::move(out.fx), e.t);
      if (out.wants_recovery) maybe_recover(e.pid, e.t);
      break;
    }
    case Event::Kind::crash: {
      crashed_.insert(e.pid);
      TraceEvent row;
      row.t = e.t;
      row.p = e.pid;
      row.kind = EventKind::crash;
      append_row(std::move(row), false);
      break;
    }
    case Event::Kind::nominate: {
      TraceEvent row;
      row.t = e.t;
      row.p = e.nominee;
      row.kind = EventKind::nominate;
      row.group = e.group;
      append_row(std::move(row), false);
      for (auto& [p, node] : whitebox_) {
        if (!crashed_.count(p)) node->set_cur_leader(e.group, e.nominee);
      }
      for (auto& [p, cl] : clients_) cl.cur_leader[e.group] = e.nominee;
      if (crashed_.count(e.nominee)) break;
      auto it = whitebox_.find(e.nominee);
      if (it == whitebox_.end()) break;
      if (it->second->status() == Status::leader &&
          it->second->cballot().owner == e.nominee) {
        break;  // already leading on its own ballot; nothing to re-establish
      }
      process_effects(e.nominee, it->second->recover(), e.t);
      break;
    }
  }
}

Trace Simulation::run() {
  setup();
  while (!queue_.empty()) {
    Event e = queue_.top();
    queue_.pop();
    if (e.t > cfg_.horizon) break;
    if (++dispatched_ > kEventBudget) {
      throw std::runtime_error("simulation event budget exceeded; livelock?");
    }
    dispatch(e);
  }
  Trace tr;
  tr.config = cfg_.to_json();
  tr.events = std::move(rows_);
  return tr;
}

Trace run_simulation(const SimConfig& cfg) { return Simulation(cfg).run(); }

}  // namespace wbcast
