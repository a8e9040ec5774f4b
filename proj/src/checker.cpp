#include "wbcast/checker.hpp"

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <utility>
#include <variant>

namespace wbcast {

namespace {

std::string ev_ref(std::size_t idx) { return "event #" + std::to_string(idx); }

std::string pretty_time(const SimTime& t) {
  if (t.denominator() == 1) return std::to_string(t.numerator());
  return std::to_string(t.numerator()) + "/" + std::to_string(t.denominator());
}

std::optional<SimConfig> parse_config(const Trace& tr, std::string* err) {
  try {
    return SimConfig::from_json(tr.config);
  } catch (const std::exception& e) {
    if (err) *err = e.what();
    return std::nullopt;
  }
}

struct McInfo {
  std::size_t idx = 0;
  SimTime t{0};
  std::vector<GroupId> dest;
};

// First multicast row per message id. Inconsistent repeats are reported under
// `check` when a report is supplied.
std::map<MsgId, McInfo> collect_multicasts(const Trace& tr, CheckReport* rep,
                                           const std::string& check) {
  std::map<MsgId, McInfo> out;
  for (std::size_t i = 0; i < tr.events.size(); ++i) {
    const TraceEvent& e = tr.events[i];
    if (e.kind != EventKind::multicast || !e.m) continue;
    if (rep && e.m->sender != e.p) {
      rep->fail(check, "multicast of " + to_string(*e.m) + " logged at process " +
                           std::to_string(e.p) + ", not its sender (" + ev_ref(i) + ")");
    }
    auto [it, fresh] = out.emplace(*e.m, McInfo{i, e.t, e.dest});
    if (!fresh && rep && it->second.dest != e.dest) {
      rep->fail(check, "message " + to_string(*e.m) +
                           " multicast twice with different destinations (" +
                           ev_ref(it->second.idx) + ", " + ev_ref(i) + ")");
    }
  }
  return out;
}

bool group_in(const std::vector<GroupId>& dest, GroupId g) {
  return std::find(dest.begin(), dest.end(), g) != dest.end();
}

// Per-process list of (event index, snapshot), in trace order.
using SnapshotTimeline = std::map<ProcessId, std::vector<std::pair<std::size_t, const StateSnapshot*>>>;

SnapshotTimeline collect_snapshots(const Trace& tr) {
  SnapshotTimeline out;
  for (std::size_t i = 0; i < tr.events.size(); ++i) {
    if (tr.events[i].state) out[tr.events[i].p].emplace_back(i, &*tr.events[i].state);
  }
  return out;
}

// Latest snapshot of p at an event index <= idx, or nullptr.
const StateSnapshot* state_at(const SnapshotTimeline& tl, ProcessId p, std::size_t idx) {
  auto it = tl.find(p);
  if (it == tl.end()) return nullptr;
  const auto& v = it->second;
  auto pos = std::upper_bound(v.begin(), v.end(), idx,
                              [](std::size_t i, const auto& e) { return i < e.first; });
  if (pos == v.begin()) return nullptr;
  return std::prev(pos)->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// CheckReport

void CheckReport::mark_pass(const std::string& check) {
  results.emplace(check, "pass");  // keeps an existing fail/skip verdict
}

void CheckReport::fail(const std::string& check, const std::string& detail) {
  pass = false;
  issues.push_back(CheckIssue{check, detail});
  auto it = results.find(check);
  if (it == results.end() || it->second == "pass") {
    results[check] = "fail: " + detail;
  }
}

void CheckReport::skip(const std::string& check, const std::string& why) {
  results.emplace(check, "skipped: " + why);
}

void CheckReport::merge(const CheckReport& other) {
  pass = pass && other.pass;
  inconclusive = inconclusive || other.inconclusive;
  for (const auto& i : other.issues) issues.push_back(i);
  for (const auto& [k, v] : other.results) results.emplace(k, v);
}

json CheckReport::to_json() const {
  json j;
  j["pass"] = pass;
  j["inconclusive"] = inconclusive;
  j["results"] = json::object();
  for (const auto& [k, v] : results) j["results"][k] = v;
  j["issues"] = json::array();
  for (const auto& i : issues) j["issues"].push_back({{"check", i.check}, {"detail", i.detail}});
  return j;
}

std::string CheckReport::table() const {
  std::size_t width = 5;
  for (const auto& [k, v] : results) width = std::max(width, k.size());
  std::ostringstream os;
  for (const auto& [k, v] : results) {
    os << k << std::string(width - k.size() + 2, ' ') << v << "\n";
  }
  os << "overall" << std::string(width - 7 + 2, ' ')
     << (pass ? (inconclusive ? "pass (inconclusive)" : "pass") : "FAIL") << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Safety: Validity, Integrity, Ordering.

CheckReport check_safety(const Trace& tr) {
  CheckReport rep;
  std::string cfg_err;
  auto cfg = parse_config(tr, &cfg_err);
  if (!cfg) {
    rep.fail("validity", "unreadable trace config: " + cfg_err);
    return rep;
  }
  const Topology topo = cfg->topology();
  auto mc = collect_multicasts(tr, &rep, "validity");

  // One global timestamp per message, consistent across commit and deliver
  // rows; this is the total order the Ordering check embeds into.
  std::map<MsgId, std::pair<Timestamp, std::size_t>> gts_of;
  for (std::size_t i = 0; i < tr.events.size(); ++i) {
    const TraceEvent& e = tr.events[i];
    if ((e.kind != EventKind::deliver && e.kind != EventKind::commit) || !e.m) continue;
    if (!e.gts || e.gts->is_bottom()) {
      rep.fail("ordering", to_string(e.kind) + " of " + to_string(*e.m) +
                               " without a global timestamp (" + ev_ref(i) + ")");
      continue;
    }
    auto [it, fresh] = gts_of.emplace(*e.m, std::make_pair(*e.gts, i));
    if (!fresh && it->second.first != *e.gts) {
      rep.fail("ordering", "conflicting global timestamps for " + to_string(*e.m) + ": " +
                               to_string(it->second.first) + " (" + ev_ref(it->second.second) +
                               ") vs " + to_string(*e.gts) + " (" + ev_ref(i) + ")");
    }
  }
  // Distinct messages must not share a timestamp, or the total order is
  // ambiguous.
  {
    std::map<Timestamp, MsgId> owner;
    for (const auto& [m, g] : gts_of) {
      auto [it, fresh] = owner.emplace(g.first, m);
      if (!fresh) {
        rep.fail("ordering", "messages " + to_string(it->second) + " and " + to_string(m) +
                                 " share global timestamp " + to_string(g.first));
      }
    }
  }

  std::map<std::pair<ProcessId, MsgId>, std::size_t> seen_delivery;
  std::map<ProcessId, std::tuple<Timestamp, MsgId, std::size_t>> last_delivery;
  for (std::size_t i = 0; i < tr.events.size(); ++i) {
    const TraceEvent& e = tr.events[i];
    if (e.kind != EventKind::deliver || !e.m) continue;
    const MsgId m = *e.m;

    // Validity: only multicast messages, only at destination members.
    auto mit = mc.find(m);
    if (mit == mc.end()) {
      rep.fail("validity", "process " + std::to_string(e.p) + " delivered " + to_string(m) +
                               " which was never multicast (" + ev_ref(i) + ")");
    } else {
      if (mit->second.idx >= i) {
        rep.fail("validity", "delivery of " + to_string(m) + " (" + ev_ref(i) +
                                 ") precedes its multicast (" + ev_ref(mit->second.idx) + ")");
      }
      auto g = topo.group_of(e.p);
      if (!g || !group_in(mit->second.dest, *g)) {
        rep.fail("validity", "process " + std::to_string(e.p) + " delivered " + to_string(m) +
                                 " but is not in a destination group (" + ev_ref(i) + ")");
      }
    }

    // Integrity: at most once per process.
    auto [dit, fresh] = seen_delivery.emplace(std::make_pair(e.p, m), i);
    if (!fresh) {
      rep.fail("integrity", "process " + std::to_string(e.p) + " delivered " + to_string(m) +
                                " twice (" + ev_ref(dit->second) + ", " + ev_ref(i) + ")");
    }

    // Ordering: each process's deliveries carry strictly increasing global
    // timestamps. Combined with timestamp uniqueness this makes every
    // process's sequence an order-preserving subsequence of the global
    // timestamp order; holes at the horizon are legal, inversions are not.
    if (!e.gts || e.gts->is_bottom()) continue;
    auto lit = last_delivery.find(e.p);
    if (lit != last_delivery.end() && !(std::get<0>(lit->second) < *e.gts)) {
      rep.fail("ordering", "process " + std::to_string(e.p) + " delivered " +
                               to_string(std::get<1>(lit->second)) + " with gts " +
                               to_string(std::get<0>(lit->second)) + " (" +
                               ev_ref(std::get<2>(lit->second)) + ") before " + to_string(m) +
                               " with gts " + to_string(*e.gts) + " (" + ev_ref(i) + ")");
    }
    last_delivery[e.p] = std::make_tuple(*e.gts, m, i);
  }

  rep.mark_pass("validity");
  rep.mark_pass("integrity");
  rep.mark_pass("ordering");
  return rep;
}

// ---------------------------------------------------------------------------
// Genuineness: participation is limited to the sender and destination members.

CheckReport check_genuineness(const Trace& tr) {
  CheckReport rep;
  std::string cfg_err;
  auto cfg = parse_config(tr, &cfg_err);
  if (!cfg) {
    rep.fail("genuineness", "unreadable trace config: " + cfg_err);
    return rep;
  }
  const Topology topo = cfg->topology();
  auto mc = collect_multicasts(tr, nullptr, "");

  auto check_participant = [&](std::size_t i, const TraceEvent& e, const MsgId& id) {
    auto mit = mc.find(id);
    if (mit == mc.end()) {
      rep.fail("genuineness", to_string(e.kind) + " references " + to_string(id) +
                                  " which was never multicast (" + ev_ref(i) + ")");
      return;
    }
    if (e.p == id.sender) return;
    auto g = topo.group_of(e.p);
    if (g && group_in(mit->second.dest, *g)) return;
    rep.fail("genuineness", "process " + std::to_string(e.p) + " took part in " +
                                to_string(id) + " (" + to_string(e.kind) + ", " + ev_ref(i) +
                                ") but is neither its sender nor a destination member");
  };

  for (std::size_t i = 0; i < tr.events.size(); ++i) {
    const TraceEvent& e = tr.events[i];
    switch (e.kind) {
      case EventKind::send:
      case EventKind::receive:
        if (e.msg) {
          for (const MsgId& id : referenced_msg_ids(*e.msg)) check_participant(i, e, id);
        }
        break;
      case EventKind::timer:
      case EventKind::deliver:
      case EventKind::commit:
      case EventKind::multicast:
        if (e.m) check_participant(i, e, *e.m);
        break;
      case EventKind::crash:
      case EventKind::nominate:
        break;
    }
  }
  rep.mark_pass("genuineness");
  return rep;
}

// ---------------------------------------------------------------------------
// Termination: quorum delivery in every destination group.

CheckReport check_termination(const Trace& tr) {
  CheckReport rep;
  std::string cfg_err;
  auto cfg = parse_config(tr, &cfg_err);
  if (!cfg) {
    rep.fail("termination", "unreadable trace config: " + cfg_err);
    return rep;
  }
  const Topology topo = cfg->topology();

  SimTime last_multicast = cfg->gst;
  for (const auto& w : cfg->workload) last_multicast = std::max(last_multicast, w.time);
  const SimTime required = std::max(cfg->gst, last_multicast) + SimTime(20) * cfg->delta;
  if (cfg->horizon < required) {
    rep.inconclusive = true;
    rep.results["termination"] =
        "inconclusive: horizon " + pretty_time(cfg->horizon) + " leaves less than 20δ after " +
        pretty_time(std::max(cfg->gst, last_multicast)) + " (needs " + pretty_time(required) + ")";
    return rep;
  }

  std::set<ProcessId> crashed;
  for (const auto& c : cfg->crash_schedule) crashed.insert(c.process);

  // Reconstruct the workload's message ids: per-sender ordinals in config
  // order, matching how the run assigned them.
  struct Obligation {
    std::vector<GroupId> dest;
    bool correct_sender = false;
  };
  std::map<MsgId, Obligation> obliged;
  std::map<ProcessId, std::uint64_t> ordinal;
  for (const auto& w : cfg->workload) {
    MsgId id{w.sender, ++ordinal[w.sender]};
    obliged[id] = Obligation{w.dest, !w.sent_to && !crashed.count(w.sender)};
  }

  // Deliveries per message per group.
  std::map<MsgId, std::map<GroupId, std::set<ProcessId>>> deliverers;
  std::set<MsgId> delivered_somewhere;
  for (const TraceEvent& e : tr.events) {
    if (e.kind != EventKind::deliver || !e.m) continue;
    delivered_somewhere.insert(*e.m);
    if (auto g = topo.group_of(e.p)) deliverers[*e.m][*g].insert(e.p);
  }

  for (const auto& [m, ob] : obliged) {
    const bool must_finish = ob.correct_sender || delivered_somewhere.count(m);
    if (!must_finish) continue;
    for (GroupId g : ob.dest) {
      const std::size_t n = deliverers[m][g].size();
      if (n < topo.quorum()) {
        rep.fail("termination", "message " + to_string(m) + " delivered by " +
                                    std::to_string(n) + " member(s) of group " +
                                    std::to_string(g) + ", quorum is " +
                                    std::to_string(topo.quorum()));
      }
    }
  }
  rep.mark_pass("termination");
  return rep;
}

// ---------------------------------------------------------------------------
// Protocol invariants (leader-replication protocol).

namespace {

// The lts a group's leader attached to ACCEPT(m) on a given ballot, taken
// from send rows; value uniqueness is invariant I1.
using AcceptKey = std::tuple<MsgId, GroupId, Ballot>;

struct CertAcks {
  std::map<ProcessId, std::size_t> ackers;  // acker -> its first ack send row
};

std::string cert_name(const MsgId& m, GroupId g0, const BalVector& bal) {
  std::string s = "(m=" + to_string(m) + ", g" + std::to_string(g0) + ", [";
  bool first = true;
  for (const auto& [g, b] : bal) {
    if (!first) s += " ";
    first = false;
    s += "g" + std::to_string(g) + ":" + to_string(b);
  }
  return s + "])";
}

}  // namespace

CheckReport check_protocol_invariants(const Trace& tr) {
  CheckReport rep;
  std::string cfg_err;
  auto cfg = parse_config(tr, &cfg_err);
  if (!cfg) {
    rep.fail("invariants", "unreadable trace config: " + cfg_err);
    return rep;
  }
  if (cfg->protocol != ProtocolKind::whitebox) {
    rep.skip("invariants", "protocol " + to_string(cfg->protocol) +
                               " has no invariant instrumentation");
    return rep;
  }
  const Topology topo = cfg->topology();
  const SnapshotTimeline snapshots = collect_snapshots(tr);
  const bool have_snapshots = !snapshots.empty();

  // --- Message-log invariants -----------------------------------------------

  std::map<AcceptKey, std::pair<Timestamp, std::size_t>> accept_lts;
  std::map<std::pair<MsgId, GroupId>, std::pair<Timestamp, std::size_t>> deliver_lts;
  std::map<MsgId, std::pair<Timestamp, std::size_t>> deliver_gts;
  std::map<std::tuple<MsgId, GroupId, BalVector>, CertAcks> certs;
  // (from,to,seq) -> send row, and the latest send row each process has
  // handled from each peer; both feed the prefix invariant I16.
  std::map<std::tuple<ProcessId, ProcessId, std::uint64_t>, std::size_t> send_row;
  std::map<std::pair<ProcessId, ProcessId>, std::size_t> last_handled_from;
  struct AckSite {
    std::size_t idx;
    ProcessId acker;
    MsgId m;
    GroupId group;
    BalVector bal;
  };
  std::vector<AckSite> ack_sites;

  for (std::size_t i = 0; i < tr.events.size(); ++i) {
    const TraceEvent& e = tr.events[i];
    if (e.kind == EventKind::receive) {
      auto sit = send_row.find({e.peer, e.p, e.seq});
      if (sit != send_row.end()) last_handled_from[{e.p, e.peer}] = sit->second;
      continue;
    }
    if (e.kind != EventKind::send || !e.msg) continue;
    send_row[{e.p, e.peer, e.seq}] = i;

    if (const auto* acc = std::get_if<AcceptMsg>(&*e.msg)) {
      auto key = AcceptKey{acc->msg.id, acc->group, acc->bal};
      auto [it, fresh] = accept_lts.emplace(key, std::make_pair(acc->lts, i));
      if (!fresh && it->second.first != acc->lts) {
        rep.fail("I1", "two ACCEPTs for " + to_string(acc->msg.id) + " from group " +
                           std::to_string(acc->group) + " on ballot " + to_string(acc->bal) +
                           " carry different lts: " + to_string(it->second.first) + " (" +
                           ev_ref(it->second.second) + ") vs " + to_string(acc->lts) + " (" +
                           ev_ref(i) + ")");
      }
    } else if (const auto* del = std::get_if<DeliverMsg>(&*e.msg)) {
      if (auto g = topo.group_of(e.peer)) {
        auto key = std::make_pair(del->msg.id, *g);
        auto [it, fresh] = deliver_lts.emplace(key, std::make_pair(del->lts, i));
        if (!fresh && it->second.first != del->lts) {
          rep.fail("I3a", "DELIVERs of " + to_string(del->msg.id) + " into group " +
                              std::to_string(*g) + " disagree on lts: " +
                              to_string(it->second.first) + " (" + ev_ref(it->second.second) +
                              ") vs " + to_string(del->lts) + " (" + ev_ref(i) + ")");
        }
      }
      auto [it, fresh] = deliver_gts.emplace(del->msg.id, std::make_pair(del->gts, i));
      if (!fresh && it->second.first != del->gts) {
        rep.fail("I3b", "DELIVERs of " + to_string(del->msg.id) + " disagree on gts: " +
                            to_string(it->second.first) + " (" + ev_ref(it->second.second) +
                            ") vs " + to_string(del->gts) + " (" + ev_ref(i) + ")");
      }
    } else if (const auto* ack = std::get_if<AcceptAckMsg>(&*e.msg)) {
      auto& cert = certs[{ack->m, ack->group, ack->bal}];
      cert.ackers.emplace(e.p, i);
      ack_sites.push_back(AckSite{i, e.p, ack->m, ack->group, ack->bal});
    }
  }

  // I4: global timestamps are unique across messages.
  {
    std::map<Timestamp, std::pair<MsgId, std::size_t>> owner;
    for (const auto& [m, g] : deliver_gts) {
      auto [it, fresh] = owner.emplace(g.first, std::make_pair(m, g.second));
      if (!fresh && it->second.first != m) {
        rep.fail("I4", "messages " + to_string(it->second.first) + " (" +
                           ev_ref(it->second.second) + ") and " + to_string(m) + " (" +
                           ev_ref(g.second) + ") share global timestamp " + to_string(g.first));
      }
    }
    for (const TraceEvent& e : tr.events) {
      if (e.kind != EventKind::commit || !e.m || !e.gts) continue;
      auto it = deliver_gts.find(*e.m);
      if (it != deliver_gts.end() && it->second.first != *e.gts) {
        rep.fail("I4", "commit of " + to_string(*e.m) + " records gts " + to_string(*e.gts) +
                           ", DELIVER carries " + to_string(it->second.first));
      }
    }
  }
  rep.mark_pass("I1");
  rep.mark_pass("I3a");
  rep.mark_pass("I3b");
  rep.mark_pass("I4");

  // --- Snapshot invariants ---------------------------------------------------

  if (!have_snapshots) {
    for (const char* id : {"I9", "I10", "I11", "I12", "I13", "I14", "I15", "I16", "I20",
                           "I2", "I5"}) {
      rep.skip(id, "trace carries no state snapshots");
    }
    return rep;
  }

  for (const auto& [p, line] : snapshots) {
    const StateSnapshot* prev = nullptr;
    std::size_t prev_idx = 0;
    for (const auto& [idx, snap] : line) {
      // I10: cballot never exceeds ballot.
      if (snap->ballot < snap->cballot) {
        rep.fail("I10", "process " + std::to_string(p) + " has cballot " +
                            to_string(snap->cballot) + " above ballot " + to_string(snap->ballot) +
                            " (" + ev_ref(idx) + ")");
      }
      // I14/I15: committed messages sit at or below their global timestamp and
      // below the clock.
      for (const auto& [m, ph] : snap->phase) {
        if (ph != Phase::committed) continue;
        auto lts = snap->local_ts.find(m);
        auto gts = snap->global_ts.find(m);
        if (gts == snap->global_ts.end() || gts->second.is_bottom()) {
          rep.fail("I14", "process " + std::to_string(p) + " committed " + to_string(m) +
                              " without a global timestamp (" + ev_ref(idx) + ")");
          continue;
        }
        if (lts != snap->local_ts.end() && gts->second < lts->second) {
          rep.fail("I14", "process " + std::to_string(p) + " committed " + to_string(m) +
                              " with lts " + to_string(lts->second) + " above gts " +
                              to_string(gts->second) + " (" + ev_ref(idx) + ")");
        }
        if (snap->clock < gts->second.time_part()) {
          rep.fail("I15", "process " + std::to_string(p) + " committed " + to_string(m) +
                              " with gts " + to_string(gts->second) + " above its clock " +
                              std::to_string(snap->clock) + " (" + ev_ref(idx) + ")");
        }
      }
      // I20: assigned local timestamps are pairwise distinct.
      {
        std::map<Timestamp, MsgId> seen;
        for (const auto& [m, ts] : snap->local_ts) {
          if (ts.is_bottom()) continue;
          auto [it, fresh] = seen.emplace(ts, m);
          if (!fresh) {
            rep.fail("I20", "process " + std::to_string(p) + " holds local timestamp " +
                                to_string(ts) + " for both " + to_string(it->second) + " and " +
                                to_string(m) + " (" + ev_ref(idx) + ")");
          }
        }
      }
      if (prev) {
        // I9: ballots never decrease.
        if (snap->ballot < prev->ballot || snap->cballot < prev->cballot) {
          rep.fail("I9", "ballot regression at process " + std::to_string(p) + " between " +
                             ev_ref(prev_idx) + " and " + ev_ref(idx));
        }
        if (prev->cballot == snap->cballot) {
          // I12: clock monotone within a ballot.
          if (snap->clock < prev->clock) {
            rep.fail("I12", "clock regression at process " + std::to_string(p) + " between " +
                                ev_ref(prev_idx) + " and " + ev_ref(idx));
          }
          // I11: phase monotone within a ballot.
          for (const auto& [m, ph] : prev->phase) {
            auto it = snap->phase.find(m);
            if (it == snap->phase.end() || phase_lt(it->second, ph)) {
              rep.fail("I11", "phase of " + to_string(m) + " regressed at process " +
                                  std::to_string(p) + " between " + ev_ref(prev_idx) + " and " +
                                  ev_ref(idx));
            }
          }
          // I13: an assigned local timestamp is immutable within a ballot.
          for (const auto& [m, ts] : prev->local_ts) {
            auto it = snap->local_ts.find(m);
            if (it == snap->local_ts.end() || it->second != ts) {
              rep.fail("I13", "local timestamp of " + to_string(m) + " changed at process " +
                                  std::to_string(p) + " between " + ev_ref(prev_idx) + " and " +
                                  ev_ref(idx));
            }
          }
        }
      }
      prev = snap;
      prev_idx = idx;
    }
  }
  rep.mark_pass("I9");
  rep.mark_pass("I10");
  rep.mark_pass("I11");
  rep.mark_pass("I12");
  rep.mark_pass("I13");
  rep.mark_pass("I14");
  rep.mark_pass("I15");
  rep.mark_pass("I20");

  // I16: when a process acknowledges an ACCEPT, its local timestamps form a
  // sub-map of the issuing leader's at the latest send it handled from it.
  for (const AckSite& a : ack_sites) {
    auto bit = a.bal.find(a.group);
    if (bit == a.bal.end() || bit->second.is_bottom()) {
      rep.fail("I16", "ACCEPT_ACK " + cert_name(a.m, a.group, a.bal) +
                          " lacks a ballot for the acknowledging group (" + ev_ref(a.idx) + ")");
      continue;
    }
    const ProcessId leader = bit->second.leader();
    const StateSnapshot* own = state_at(snapshots, a.acker, a.idx);
    auto cur = last_handled_from.find({a.acker, leader});
    const StateSnapshot* leaders =
        (a.acker == leader)
            ? own
            : (cur == last_handled_from.end() ? nullptr
                                              : state_at(snapshots, leader, cur->second));
    if (!own || !leaders) continue;
    for (const auto& [m, ts] : own->local_ts) {
      auto it = leaders->local_ts.find(m);
      if (it == leaders->local_ts.end() || it->second != ts) {
        rep.fail("I16", "acknowledging process " + std::to_string(a.acker) +
                            " holds local timestamp " + to_string(ts) + " for " + to_string(m) +
                            " that leader " + std::to_string(leader) +
                            " had not issued by its latest handled send (" + ev_ref(a.idx) + ")");
        break;
      }
    }
  }
  rep.mark_pass("I16");

  // I2/I5: once a quorum of group g0 acknowledged ACCEPT(m) on a ballot
  // vector, every later-ballot state of a g0 member keeps m at phase >=
  // accepted with the certified lts, and a clock past the certified gts (I2);
  // if the quorum included the leader itself, small-timestamp entries are
  // frozen to the leader's map at its acknowledgement (I5).
  for (const auto& [key, cert] : certs) {
    const auto& [m, g0, bal] = key;
    if (cert.ackers.size() < topo.quorum()) continue;
    auto bit = bal.find(g0);
    if (bit == bal.end() || bit->second.is_bottom()) continue;
    const Ballot own_bal = bit->second;

    // The certified timestamps: one lts per destination group, max is the gts.
    LtsVector lts_by_group;
    bool complete = true;
    for (const auto& [g, b] : bal) {
      auto ait = accept_lts.find(AcceptKey{m, g, b});
      if (ait == accept_lts.end()) {
        complete = false;
        break;
      }
      lts_by_group[g] = ait->second.first;
    }
    if (!complete) continue;
    const Timestamp gts = merge_global(lts_by_group);
    const Timestamp lts0 = lts_by_group.at(g0);
    const std::string name = cert_name(m, g0, bal);

    // I5 base: the leader's own map when it acknowledged, projected to
    // entries below the certified gts.
    std::map<MsgId, Timestamp> frozen;
    bool have_frozen = false;
    auto lit = cert.ackers.find(own_bal.leader());
    if (lit != cert.ackers.end()) {
      if (const StateSnapshot* base = state_at(snapshots, own_bal.leader(), lit->second)) {
        have_frozen = true;
        for (const auto& [mid, ts] : base->local_ts) {
          auto ph = base->phase.find(mid);
          if (ph == base->phase.end() || ph->second == Phase::start) continue;
          if (ts < gts) frozen[mid] = ts;
        }
      }
    }

    for (ProcessId p : topo.members(g0)) {
      auto tit = snapshots.find(p);
      if (tit == snapshots.end()) continue;
      for (const auto& [idx, snap] : tit->second) {
        if (!(own_bal < snap->cballot)) continue;
        // I2a: the phase survived the leader change.
        auto ph = snap->phase.find(m);
        if (ph == snap->phase.end() || ph->second == Phase::start ||
            ph->second == Phase::proposed) {
          rep.fail("I2", "after quorum certificate " + name + ", process " + std::to_string(p) +
                             " on cballot " + to_string(snap->cballot) + " holds " + to_string(m) +
                             " below accepted (" + ev_ref(idx) + ")");
        }
        // I2b: with the certified local timestamp.
        auto lt = snap->local_ts.find(m);
        if (lt == snap->local_ts.end() || lt->second != lts0) {
          rep.fail("I2", "after quorum certificate " + name + ", process " + std::to_string(p) +
                             " lost the certified lts " + to_string(lts0) + " for " + to_string(m) +
                             " (" + ev_ref(idx) + ")");
        }
        // I2c: and a clock at or past the certified gts.
        if (snap->clock < gts.time_part()) {
          rep.fail("I2", "after quorum certificate " + name + ", process " + std::to_string(p) +
                             " has clock " + std::to_string(snap->clock) +
                             " below the certified gts " + to_string(gts) + " (" + ev_ref(idx) +
                             ")");
        }
        // I5: no new or changed entries below the certified gts.
        if (have_frozen) {
          for (const auto& [mid, ts] : snap->local_ts) {
            auto p2 = snap->phase.find(mid);
            if (p2 == snap->phase.end() || p2->second == Phase::start) continue;
            if (!(ts < gts)) continue;
            auto fit = frozen.find(mid);
            if (fit == frozen.end() || fit->second != ts) {
              rep.fail("I5", "after leader-inclusive certificate " + name + ", process " +
                                 std::to_string(p) + " holds " + to_string(mid) +
                                 " below the certified gts with timestamp " + to_string(ts) +
                                 " that the leader's map did not contain (" + ev_ref(idx) + ")");
            }
          }
        }
      }
    }
  }
  rep.mark_pass("I2");
  rep.mark_pass("I5");
  return rep;
}

CheckReport check_trace(const Trace& tr) {
  CheckReport rep;
  rep.merge(check_safety(tr));
  rep.merge(check_genuineness(tr));
  rep.merge(check_termination(tr));
  rep.merge(check_protocol_invariants(tr));
  return rep;
}

// ---------------------------------------------------------------------------
// Latency.

LatencyReport measure_latency(const Trace& tr) {
  LatencyReport rep;
  std::string cfg_err;
  auto cfg = parse_config(tr, &cfg_err);
  if (!cfg) throw std::invalid_argument("unreadable trace config: " + cfg_err);
  const Topology topo = cfg->topology();
  rep.delta = cfg->delta;

  auto mc = collect_multicasts(tr, nullptr, "");

  // Faulty senders: a crashed process, or a workload entry that only reached
  // part of its destinations.
  std::set<ProcessId> crashed;
  for (const auto& c : cfg->crash_schedule) crashed.insert(c.process);
  std::set<MsgId> faulty_sender;
  std::map<ProcessId, std::uint64_t> ordinal;
  for (const auto& w : cfg->workload) {
    MsgId id{w.sender, ++ordinal[w.sender]};
    if (w.sent_to || crashed.count(w.sender)) faulty_sender.insert(id);
  }

  // First delivery and first commit per message per group.
  std::map<MsgId, std::map<GroupId, SimTime>> first_delivery;
  std::map<MsgId, std::map<GroupId, SimTime>> first_commit;
  for (const TraceEvent& e : tr.events) {
    if (!e.m) continue;
    auto g = topo.group_of(e.p);
    if (!g) continue;
    if (e.kind == EventKind::deliver) {
      auto& slot = first_delivery[*e.m];
      if (!slot.count(*g)) slot[*g] = e.t;
    } else if (e.kind == EventKind::commit) {
      auto& slot = first_commit[*e.m];
      if (!slot.count(*g)) slot[*g] = e.t;
    }
  }

  // Completion per message: the last destination group's first commit (i.e.
  // when it stops blocking anything anywhere). Partial-delivery time: the
  // last destination group's first delivery.
  std::map<MsgId, std::optional<SimTime>> completion;
  std::map<MsgId, std::optional<SimTime>> partial_delivery;
  for (const auto& [m, info] : mc) {
    std::optional<SimTime> comp{SimTime(0)};
    std::optional<SimTime> pd{SimTime(0)};
    for (GroupId g : info.dest) {
      auto& commits = first_commit[m];
      auto& delivers = first_delivery[m];
      if (comp) {
        auto it = commits.find(g);
        if (it == commits.end()) comp.reset();
        else *comp = std::max(*comp, it->second);
      }
      if (pd) {
        auto it = delivers.find(g);
        if (it == delivers.end()) pd.reset();
        else *pd = std::max(*pd, it->second);
      }
    }
    completion[m] = comp;
    partial_delivery[m] = pd;
  }

  // Stabilization point t': past gst, and past the completion of everything
  // multicast earlier. A message that never completes pushes t' beyond the
  // horizon.
  std::vector<std::pair<SimTime, MsgId>> by_time;
  for (const auto& [m, info] : mc) by_time.emplace_back(info.t, m);
  std::sort(by_time.begin(), by_time.end());
  SimTime tprime = cfg->gst;
  bool stabilized = true;
  for (const auto& [t, m] : by_time) {
    if (!(t < tprime)) continue;
    const auto& comp = completion[m];
    if (!comp) {
      stabilized = false;
      break;
    }
    tprime = std::max(tprime, *comp);
  }
  rep.stabilized = stabilized;
  rep.stabilization = stabilized ? tprime : cfg->horizon;

  for (const auto& [t, m] : by_time) {
    const McInfo& info = mc.at(m);
    MessageLatency ml;
    ml.m = m;
    ml.multicast_at = info.t;
    ml.partially_delivered = partial_delivery[m].has_value();
    ml.post_stabilization = stabilized && !(info.t < tprime);

    // Collision-free: conflicts (shared destination group) with no concurrent
    // message from a correct sender. Two messages are concurrent when each
    // was multicast before the other was delivered in all its destinations.
    ml.collision_free = true;
    for (const auto& [t2, m2] : by_time) {
      if (m2 == m || faulty_sender.count(m2)) continue;
      const McInfo& info2 = mc.at(m2);
      bool conflicting = false;
      for (GroupId g : info.dest) conflicting = conflicting || group_in(info2.dest, g);
      if (!conflicting) continue;
      const auto& pd1 = partial_delivery[m];
      const auto& pd2 = partial_delivery[m2];
      const bool m2_before_m_done = !pd1 || info2.t < *pd1;
      const bool m_before_m2_done = !pd2 || info.t < *pd2;
      if (m2_before_m_done && m_before_m2_done) {
        ml.collision_free = false;
        break;
      }
    }

    for (GroupId g : info.dest) {
      auto dit = first_delivery[m].find(g);
      if (dit != first_delivery[m].end()) {
        ml.delivery_latency[g] = (dit->second - info.t) / cfg->delta;
      }
      auto cit = first_commit[m].find(g);
      if (cit != first_commit[m].end()) {
        ml.commit_latency[g] = (cit->second - info.t) / cfg->delta;
      }
    }
    if (!ml.partially_delivered) rep.undelivered.push_back(m);
    rep.messages.push_back(std::move(ml));
  }

  // Aggregates over post-stabilization, fully delivered messages.
  for (const MessageLatency& ml : rep.messages) {
    if (!ml.post_stabilization || !ml.partially_delivered) continue;
    SimTime worst{0};
    for (const auto& [g, l] : ml.delivery_latency) worst = std::max(worst, l);
    rep.ffl = rep.ffl ? std::max(*rep.ffl, worst) : worst;
    if (ml.collision_free) {
      rep.cfl = rep.cfl ? std::max(*rep.cfl, worst) : worst;
      SimTime worst_commit{0};
      for (const auto& [g, l] : ml.commit_latency) worst_commit = std::max(worst_commit, l);
      if (!ml.commit_latency.empty()) {
        rep.commit_latency_d =
            rep.commit_latency_d ? std::max(*rep.commit_latency_d, worst_commit) : worst_commit;
      }
    }
  }
  if (rep.ffl && rep.cfl) rep.clock_update_latency_c = *rep.ffl - *rep.cfl;
  return rep;
}

json LatencyReport::to_json() const {
  json j;
  j["delta"] = to_string(delta);
  j["stabilization"] = to_string(stabilization);
  j["stabilized"] = stabilized;
  auto opt = [](const std::optional<SimTime>& v) { return v ? json(to_string(*v)) : json(); };
  j["cfl"] = opt(cfl);
  j["ffl"] = opt(ffl);
  j["commit_latency"] = opt(commit_latency_d);
  j["clock_update_latency"] = opt(clock_update_latency_c);
  j["messages"] = json::array();
  for (const auto& ml : messages) {
    json e;
    e["m"] = to_string(ml.m);
    e["multicast_at"] = to_string(ml.multicast_at);
    e["collision_free"] = ml.collision_free;
    e["partially_delivered"] = ml.partially_delivered;
    e["post_stabilization"] = ml.post_stabilization;
    e["delivery_latency"] = json::object();
    for (const auto& [g, l] : ml.delivery_latency) {
      e["delivery_latency"][std::to_string(g)] = to_string(l);
    }
    e["commit_latency"] = json::object();
    for (const auto& [g, l] : ml.commit_latency) {
      e["commit_latency"][std::to_string(g)] = to_string(l);
    }
    j["messages"].push_back(std::move(e));
  }
  j["undelivered"] = json::array();
  for (const auto& m : undelivered) j["undelivered"].push_back(to_string(m));
  return j;
}

std::string LatencyReport::table() const {
  std::ostringstream os;
  auto opt = [](const std::optional<SimTime>& v) {
    return v ? pretty_time(*v) + "δ" : std::string("-");
  };
  os << "stabilization t' = " << pretty_time(stabilization)
     << (stabilized ? "" : " (never stabilized: some messages incomplete)") << "\n";
  os << "collision-free latency (CFL) = " << opt(cfl) << "\n";
  os << "failure-free latency  (FFL) = " << opt(ffl) << "\n";
  os << "commit latency          (D) = " << opt(commit_latency_d) << "\n";
  os << "clock-update latency    (C) = " << opt(clock_update_latency_c) << "\n";
  os << "message        at  cf  groups (delivery latency)\n";
  for (const auto& ml : messages) {
    os << to_string(ml.m) << "  " << pretty_time(ml.multicast_at) << "  "
       << (ml.collision_free ? "y" : "n") << "  ";
    if (!ml.partially_delivered) os << "UNDELIVERED ";
    bool first = true;
    for (const auto& [g, l] : ml.delivery_latency) {
      if (!first) os << " ";
      first = false;
      os << "g" << g << ":" << pretty_time(l) << "δ";
    }
    os << "\n";
  }
  if (!undelivered.empty()) {
    os << "excluded from aggregates (not delivered everywhere):";
    for (const auto& m : undelivered) os << " " << to_string(m);
    os << "\n";
  }
  return os.str();
}

}  // namespace wbcast
