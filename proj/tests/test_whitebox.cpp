// Leader-replication multicast node: accept round, commit, delivery,
// leader-change recovery.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <wbcast/whitebox.hpp>

#include <deque>
#include <map>
#include <tuple>
#include <vector>

using namespace wbcast;

namespace {

Topology two_groups() {
  Topology t;
  t.groups[0] = {0, 1, 2};
  t.groups[1] = {3, 4, 5};
  t.f = 1;
  return t;
}

std::map<GroupId, ProcessId> initial_leaders() { return {{0, 0}, {1, 3}}; }

WhiteboxNode make_node(ProcessId p, Mutations mu = {}) {
  return WhiteboxNode(p, p < 3 ? 0 : 1, two_groups(), initial_leaders(), mu,
                      SimTime{4}, SimTime{4});
}

template <typename T>
std::vector<std::pair<ProcessId, T>> picks(const Effects& fx) {
  std::vector<std::pair<ProcessId, T>> out;
  for (const auto& s : fx.sends)
    if (const T* b = std::get_if<T>(&s.msg)) out.push_back({s.to, *b});
  return out;
}

std::size_t timer_count(const Effects& fx, TimerKind k) {
  std::size_t n = 0;
  for (const auto& t : fx.timers) n += t.kind == k;
  return n;
}

// FIFO router for the hand-driven cluster tests; sends to absent processes
// (crashed, or clients) fall on the floor.
struct Cluster {
  std::map<ProcessId, WhiteboxNode*> nodes;
  std::deque<std::tuple<ProcessId, ProcessId, ProtocolMessage>> wire;
  std::map<ProcessId, std::vector<DeliveryRecord>> delivered;

  void push(ProcessId from, Effects fx) {
    for (auto& s : fx.sends) wire.push_back({from, s.to, std::move(s.msg)});
    for (const auto& d : fx.delivered) delivered[from].push_back(d);
  }

  void pump() {
    while (!wire.empty()) {
      auto [from, to, msg] = std::move(wire.front());
      wire.pop_front();
      auto it = nodes.find(to);
      if (it == nodes.end()) continue;
      push(to, it->second->on_message(from, msg));
    }
  }
};

const AppMessage kLocal{MsgId{100, 1}, {0}, "local"};
const AppMessage kCross{MsgId{100, 2}, {0, 1}, "cross"};

}  // namespace

TEST_CASE("construction: directory decides role, first ballot names the leader") {
  WhiteboxNode n0 = make_node(0), n1 = make_node(1), n3 = make_node(3);
  CHECK(n0.status() == Status::leader);
  CHECK(n1.status() == Status::follower);
  CHECK(n3.status() == Status::leader);
  CHECK(n0.ballot() == Ballot::of(1, 0));
  CHECK(n0.cballot() == Ballot::of(1, 0));
  CHECK(n1.ballot() == Ballot::of(1, 0));
  CHECK(n3.ballot() == Ballot::of(1, 3));
  CHECK(n0.cur_leader(1) == 3);
  CHECK(to_string(Status::leader) == "leader");
  CHECK(to_string(Status::recovering) == "recovering");
}

TEST_CASE("leader proposes once, fans the accept to every destination member") {
  WhiteboxNode n0 = make_node(0);
  Effects fx = n0.on_message(100, MulticastMsg{kCross});
  CHECK(n0.phase_of(kCross.id) == Phase::proposed);
  CHECK(n0.local_ts(kCross.id) == Timestamp::of(1, 0));
  CHECK(n0.clock() == 1);
  CHECK(timer_count(fx, TimerKind::retry) == 1);
  CHECK(timer_count(fx, TimerKind::accept_quorum) == 1);
  auto acc = picks<AcceptMsg>(fx);
  REQUIRE(acc.size() == 6);  // both groups, all members
  for (const auto& [to, a] : acc) {
    CHECK(a.group == 0);
    CHECK(a.bal == Ballot::of(1, 0));
    CHECK(a.lts == Timestamp::of(1, 0));
  }

  // A duplicate re-fans with the stored timestamp but neither reclocks nor
  // re-arms the watchdogs.
  Effects again = n0.on_message(100, MulticastMsg{kCross});
  CHECK(n0.clock() == 1);
  CHECK(again.timers.empty());
  CHECK(picks<AcceptMsg>(again).size() == 6);
  CHECK(picks<AcceptMsg>(again)[0].second.lts == Timestamp::of(1, 0));
}

TEST_CASE("a follower redirects clients to the current leader") {
  WhiteboxNode n1 = make_node(1);
  Effects fx = n1.on_message(100, MulticastMsg{kLocal});
  auto red = picks<RedirectMsg>(fx);
  REQUIRE(red.size() == 1);
  CHECK(red[0].first == 100);
  CHECK(red[0].second.group == 0);
  CHECK(red[0].second.leader == 0);
  CHECK(n1.phase_of(kLocal.id) == Phase::start);

  // Self-addressed retries (from the retry timer) are not answered.
  Effects self = n1.on_message(1, MulticastMsg{kLocal});
  CHECK(self.sends.empty());
}

TEST_CASE("redirect answers update the leader directory") {
  WhiteboxNode n0 = make_node(0);
  n0.on_message(4, RedirectMsg{1, 4});
  CHECK(n0.cur_leader(1) == 4);
}

TEST_CASE("acknowledging an accept waits for every destination group") {
  WhiteboxNode n1 = make_node(1);
  // Own group's accept alone is not enough for a cross-group message.
  Effects fx1 = n1.on_message(0, AcceptMsg{kCross, 0, Ballot::of(1, 0), Timestamp::of(1, 0)});
  CHECK(picks<AcceptAckMsg>(fx1).empty());
  CHECK(n1.phase_of(kCross.id) == Phase::start);

  // The other group's accept completes coverage: ack to both issuing leaders.
  Effects fx2 = n1.on_message(3, AcceptMsg{kCross, 1, Ballot::of(1, 3), Timestamp::of(2, 1)});
  auto acks = picks<AcceptAckMsg>(fx2);
  REQUIRE(acks.size() == 2);
  CHECK(acks[0].first == 0);
  CHECK(acks[1].first == 3);
  for (const auto& [to, a] : acks) {
    CHECK(a.m == kCross.id);
    CHECK(a.group == 0);
    CHECK(a.bal == BalVector{{0, Ballot::of(1, 0)}, {1, Ballot::of(1, 3)}});
  }
  CHECK(n1.phase_of(kCross.id) == Phase::accepted);
  CHECK(n1.local_ts(kCross.id) == Timestamp::of(1, 0));  // own group's timestamp
  CHECK(n1.clock() == 2);  // advanced to the maximum accepted time
}

TEST_CASE("clock advance on accept can be switched off for fault injection") {
  Mutations mu;
  mu.disable_accept_clock_max = true;
  WhiteboxNode n1 = make_node(1, mu);
  n1.on_message(0, AcceptMsg{kCross, 0, Ballot::of(1, 0), Timestamp::of(1, 0)});
  n1.on_message(3, AcceptMsg{kCross, 1, Ballot::of(1, 3), Timestamp::of(2, 1)});
  CHECK(n1.phase_of(kCross.id) == Phase::accepted);
  CHECK(n1.clock() == 0);  // the guard this mutation removes
}

TEST_CASE("accept buffer is monotone in ballot and pinned to the synced ballot") {
  WhiteboxNode n1 = make_node(1);
  Effects first = n1.on_message(0, AcceptMsg{kLocal, 0, Ballot::of(1, 0), Timestamp::of(1, 0)});
  REQUIRE(picks<AcceptAckMsg>(first).size() == 1);

  // A later accept on a higher ballot replaces the slot, but the node will
  // not acknowledge a ballot it has not synchronized to.
  Effects higher = n1.on_message(2, AcceptMsg{kLocal, 0, Ballot::of(2, 2), Timestamp::of(9, 0)});
  CHECK(picks<AcceptAckMsg>(higher).empty());

  // And the replacement is permanent: the old ballot cannot reclaim the slot.
  Effects stale = n1.on_message(0, AcceptMsg{kLocal, 0, Ballot::of(1, 0), Timestamp::of(1, 0)});
  CHECK(picks<AcceptAckMsg>(stale).empty());
}

TEST_CASE("commit needs a quorum of acks from every destination group") {
  WhiteboxNode n0 = make_node(0);
  Effects fxm = n0.on_message(100, MulticastMsg{kCross});
  // The leader processes its own accept plus the other group's.
  for (auto& [to, a] : picks<AcceptMsg>(fxm))
    if (to == 0) n0.on_message(0, a);
  Effects own = n0.on_message(3, AcceptMsg{kCross, 1, Ballot::of(1, 3), Timestamp::of(2, 1)});
  auto self_acks = picks<AcceptAckMsg>(own);
  REQUIRE(self_acks.size() == 2);
  CHECK(n0.phase_of(kCross.id) == Phase::accepted);

  const BalVector vec = self_acks[0].second.bal;
  Effects c1 = n0.on_message(0, self_acks[0].second);  // own ack
  CHECK(c1.committed.empty());
  Effects c2 = n0.on_message(1, AcceptAckMsg{kCross.id, 0, vec});  // own-group quorum
  CHECK(c2.committed.empty());  // the other group has not acked at all
  Effects c3 = n0.on_message(3, AcceptAckMsg{kCross.id, 1, vec});
  CHECK(c3.committed.empty());
  Effects c4 = n0.on_message(4, AcceptAckMsg{kCross.id, 1, vec});
  REQUIRE(c4.committed.size() == 1);
  CHECK(c4.committed[0].m == kCross.id);
  CHECK(c4.committed[0].gts == Timestamp::of(2, 1));  // max of (1,g0) and (2,g1)
  CHECK(n0.phase_of(kCross.id) == Phase::committed);
  CHECK(n0.global_ts(kCross.id) == Timestamp::of(2, 1));

  // Delivery fans to the node's own group only.
  auto del = picks<DeliverMsg>(c4);
  REQUIRE(del.size() == 3);
  for (const auto& [to, d] : del) {
    CHECK(to <= 2);
    CHECK(d.bal == Ballot::of(1, 0));
    CHECK(d.gts == Timestamp::of(2, 1));
  }
  CHECK(n0.delivered(kCross.id));

  // A straggler ack cannot commit twice.
  Effects c5 = n0.on_message(5, AcceptAckMsg{kCross.id, 1, vec});
  CHECK(c5.committed.empty());
  CHECK(c5.delivered.empty());
}

TEST_CASE("deliver applies once; stale, replayed and mismatched copies are dropped") {
  WhiteboxNode n2 = make_node(2);
  const DeliverMsg d{kCross, Ballot::of(1, 0), Timestamp::of(1, 0), Timestamp::of(2, 1)};
  Effects fx = n2.on_message(0, d);
  REQUIRE(fx.delivered.size() == 1);
  CHECK(fx.committed.size() == 1);
  CHECK(n2.delivered(kCross.id));
  CHECK(n2.clock() == 2);  // clock catches up to the delivered timestamp
  CHECK(n2.max_delivered_gts() == Timestamp::of(2, 1));

  // Replay: already at or below the high-water mark.
  CHECK(n2.on_message(0, d).delivered.empty());

  // Out-of-order: a smaller timestamp cannot land after a larger one.
  const DeliverMsg older{kLocal, Ballot::of(1, 0), Timestamp::of(1, 0), Timestamp::of(1, 0)};
  CHECK(n2.on_message(0, older).delivered.empty());
  CHECK_FALSE(n2.delivered(kLocal.id));

  // Wrong ballot: only the synchronized leader's deliveries count.
  const DeliverMsg wrong{AppMessage{MsgId{100, 3}, {0}, "x"},
                         Ballot::of(2, 1), Timestamp::of(5, 0), Timestamp::of(5, 0)};
  CHECK(n2.on_message(1, wrong).delivered.empty());
}

TEST_CASE("deliveries are ignored while the node is recovering") {
  WhiteboxNode n2 = make_node(2);
  n2.on_message(1, NewLeaderMsg{Ballot::of(1, 1)});
  CHECK(n2.status() == Status::recovering);
  const DeliverMsg d{kLocal, Ballot::of(1, 0), Timestamp::of(1, 0), Timestamp::of(1, 0)};
  CHECK(n2.on_message(0, d).delivered.empty());
  CHECK_FALSE(n2.delivered(kLocal.id));
}

TEST_CASE("leader change: campaign, rebuild, and re-driven accept round") {
  WhiteboxNode n1 = make_node(1), n2 = make_node(2);

  // The old leader (crashed, absent here) had replicated one accept.
  n1.on_message(0, AcceptMsg{kLocal, 0, Ballot::of(1, 0), Timestamp::of(1, 0)});
  CHECK(n1.phase_of(kLocal.id) == Phase::accepted);

  // Campaign at the smallest own ballot above (1,p0).
  Effects camp = n1.recover();
  auto nl = picks<NewLeaderMsg>(camp);
  REQUIRE(nl.size() == 3);
  CHECK(nl[0].second.bal == Ballot::of(1, 1));
  CHECK(timer_count(camp, TimerKind::newleader_quorum) == 1);

  // The candidate joins its own ballot and reports to itself.
  Effects join1 = n1.on_message(1, NewLeaderMsg{Ballot::of(1, 1)});
  CHECK(n1.status() == Status::recovering);
  CHECK(n1.ballot() == Ballot::of(1, 1));
  auto rep1 = picks<NewLeaderAckMsg>(join1);
  REQUIRE(rep1.size() == 1);
  CHECK(rep1[0].second.cballot == Ballot::of(1, 0));
  CHECK(rep1[0].second.phase.at(kLocal.id) == Phase::accepted);
  Effects after1 = n1.on_message(1, rep1[0].second);
  CHECK(after1.sends.empty());  // one report is below quorum

  // A peer joins and reports; quorum reached, state recomputed and shipped.
  Effects join2 = n2.on_message(1, NewLeaderMsg{Ballot::of(1, 1)});
  auto rep2 = picks<NewLeaderAckMsg>(join2);
  REQUIRE(rep2.size() == 1);
  Effects rebuilt = n1.on_message(2, rep2[0].second);
  CHECK(n1.cballot() == Ballot::of(1, 1));
  CHECK(n1.phase_of(kLocal.id) == Phase::accepted);  // survived the rebuild
  CHECK(n1.local_ts(kLocal.id) == Timestamp::of(1, 0));
  auto ns = picks<NewStateMsg>(rebuilt);
  REQUIRE(ns.size() == 2);  // everyone but the candidate itself
  CHECK(timer_count(rebuilt, TimerKind::newstate_quorum) == 1);
  CHECK(n1.status() == Status::recovering);  // not leader until acked

  // The peer adopts the new state wholesale.
  Effects adopted = n2.on_message(1, ns[0].second);
  CHECK(n2.status() == Status::follower);
  CHECK(n2.cballot() == Ballot::of(1, 1));
  CHECK(n2.phase_of(kLocal.id) == Phase::accepted);
  auto nsa = picks<NewStateAckMsg>(adopted);
  REQUIRE(nsa.size() == 1);

  // On the ack quorum the candidate takes over — and immediately re-drives
  // the accept round for surviving entries, so the quorum watchdog armed at
  // the same moment has a round in flight to watch.
  Effects done = n1.on_message(2, nsa[0].second);
  CHECK(n1.status() == Status::leader);
  CHECK(n1.cur_leader(0) == 1);
  auto refan = picks<AcceptMsg>(done);
  REQUIRE(refan.size() == 3);
  for (const auto& [to, a] : refan) {
    CHECK(a.bal == Ballot::of(1, 1));
    CHECK(a.lts == Timestamp::of(1, 0));  // the surviving timestamp, not a new one
  }
  CHECK(timer_count(done, TimerKind::retry) == 1);
  CHECK(timer_count(done, TimerKind::accept_quorum) == 1);

  // Let the re-driven round run to completion.
  Cluster cl;
  cl.nodes = {{1, &n1}, {2, &n2}};
  cl.push(1, std::move(done));
  cl.pump();
  CHECK(n1.delivered(kLocal.id));
  CHECK(n2.delivered(kLocal.id));
  CHECK(n1.global_ts(kLocal.id) == Timestamp::of(1, 0));
  CHECK(n2.global_ts(kLocal.id) == Timestamp::of(1, 0));
}

TEST_CASE("rebuild disregards accepted entries reported under stale sync ballots") {
  const MsgId m_old{100, 1}, m_a{100, 8}, m_b{100, 9};
  const AppMessage bodyA{m_a, {0, 1}, "a"}, bodyB{m_b, {0}, "b"};

  auto drive = [&](Mutations mu) {
    WhiteboxNode n2 = make_node(2, mu);
    // The node itself accepted m_old on the old sync ballot.
    n2.on_message(0, AcceptMsg{AppMessage{m_old, {0}, "old"}, 0, Ballot::of(1, 0),
                               Timestamp::of(2, 0)});
    REQUIRE(n2.phase_of(m_old) == Phase::accepted);

    n2.recover();
    Effects self_join = n2.on_message(2, NewLeaderMsg{Ballot::of(1, 2)});
    for (auto& [to, rep] : picks<NewLeaderAckMsg>(self_join))
      if (to == 2) n2.on_message(2, rep);

    // A peer that synchronized with a later ballot reports more state.
    NewLeaderAckMsg peer;
    peer.bal = Ballot::of(1, 2);
    peer.cballot = Ballot::of(1, 1);
    peer.clock = 7;
    peer.phase[m_a] = Phase::committed;
    peer.phase[m_b] = Phase::accepted;
    peer.local_ts[m_a] = Timestamp::of(1, 0);
    peer.local_ts[m_b] = Timestamp::of(5, 0);
    peer.global_ts[m_a] = Timestamp::of(4, 1);
    peer.messages[m_a] = bodyA;
    peer.messages[m_b] = bodyB;
    n2.on_message(1, peer);
    return n2;
  };

  SUBCASE("default: stale-ballot accepted entries are dropped") {
    WhiteboxNode n2 = drive({});
    CHECK(n2.phase_of(m_old) == Phase::start);          // disregarded
    CHECK(n2.local_ts(m_old).is_bottom());
    CHECK(n2.phase_of(m_a) == Phase::committed);        // committed always wins
    CHECK(n2.global_ts(m_a) == Timestamp::of(4, 1));
    CHECK(n2.phase_of(m_b) == Phase::accepted);         // from the freshest ballot
    CHECK(n2.local_ts(m_b) == Timestamp::of(5, 0));
    CHECK(n2.clock() == 7);
    CHECK(n2.cballot() == Ballot::of(1, 2));
  }

  SUBCASE("fault injection: without the rule the stale entry is resurrected") {
    Mutations mu;
    mu.disable_max_cballot_rule = true;
    WhiteboxNode n2 = drive(mu);
    CHECK(n2.phase_of(m_old) == Phase::accepted);
    CHECK(n2.local_ts(m_old) == Timestamp::of(2, 0));
  }
}

TEST_CASE("new leader finishes recovery by redelivering committed state") {
  // Same campaign as above, default rules; complete the handshake and check
  // the committed entry is redelivered while the accepted one is re-accepted.
  const MsgId m_a{100, 8}, m_b{100, 9};
  WhiteboxNode n2 = make_node(2);
  Effects camp = n2.recover();
  (void)camp;
  Effects self_join = n2.on_message(2, NewLeaderMsg{Ballot::of(1, 2)});
  for (auto& [to, rep] : picks<NewLeaderAckMsg>(self_join))
    if (to == 2) n2.on_message(2, rep);
  NewLeaderAckMsg peer;
  peer.bal = Ballot::of(1, 2);
  peer.cballot = Ballot::of(1, 0);
  peer.clock = 7;
  peer.phase[m_a] = Phase::committed;
  peer.phase[m_b] = Phase::accepted;
  peer.local_ts[m_a] = Timestamp::of(1, 0);
  peer.local_ts[m_b] = Timestamp::of(5, 0);
  peer.global_ts[m_a] = Timestamp::of(4, 1);
  peer.messages[m_a] = AppMessage{m_a, {0, 1}, "a"};
  peer.messages[m_b] = AppMessage{m_b, {0}, "b"};
  n2.on_message(1, peer);

  Effects done = n2.on_message(0, NewStateAckMsg{Ballot::of(1, 2)});
  CHECK(n2.status() == Status::leader);
  auto del = picks<DeliverMsg>(done);
  REQUIRE(del.size() == 3);  // m_a redelivered to the whole group
  CHECK(del[0].second.msg.id == m_a);
  CHECK(del[0].second.bal == Ballot::of(1, 2));
  auto refan = picks<AcceptMsg>(done);
  REQUIRE(refan.size() == 3);  // m_b re-accepted across its destination (group 0)
  CHECK(refan[0].second.msg.id == m_b);
  CHECK(refan[0].second.lts == Timestamp::of(5, 0));
}

TEST_CASE("retry timer re-multicasts to the current leaders while unresolved") {
  WhiteboxNode n0 = make_node(0);
  n0.on_message(100, MulticastMsg{kCross});
  auto out = n0.on_timer({SimTime{4}, TimerKind::retry, kCross.id, Ballot::bottom()});
  CHECK_FALSE(out.wants_recovery);
  auto mc = picks<MulticastMsg>(out.fx);
  REQUIRE(mc.size() == 2);  // one per destination group's current leader
  CHECK(mc[0].first == 0);
  CHECK(mc[1].first == 3);
  CHECK(timer_count(out.fx, TimerKind::retry) == 1);  // re-armed

  // Once committed (here: via a delivery), the retry goes quiet.
  WhiteboxNode n2 = make_node(2);
  n2.on_message(0, DeliverMsg{kCross, Ballot::of(1, 0), Timestamp::of(1, 0),
                              Timestamp::of(2, 1)});
  auto idle = n2.on_timer({SimTime{4}, TimerKind::retry, kCross.id, Ballot::bottom()});
  CHECK(idle.fx.sends.empty());
  CHECK(idle.fx.timers.empty());
}

TEST_CASE("quorum watchdog flags a leader that cannot replicate its accepts") {
  WhiteboxNode n0 = make_node(0);
  n0.on_message(100, MulticastMsg{kCross});
  auto starved = n0.on_timer({SimTime{4}, TimerKind::accept_quorum, kCross.id, Ballot::bottom()});
  CHECK(starved.wants_recovery);  // nobody acked anything
  CHECK(timer_count(starved.fx, TimerKind::accept_quorum) == 1);

  // With an own-group quorum of acks the same timer stays quiet.
  for (auto& [to, a] : picks<AcceptMsg>(n0.on_message(100, MulticastMsg{kCross})))
    if (to == 0) n0.on_message(0, a);
  Effects own = n0.on_message(3, AcceptMsg{kCross, 1, Ballot::of(1, 3), Timestamp::of(2, 1)});
  auto acks = picks<AcceptAckMsg>(own);
  REQUIRE(acks.size() == 2);
  n0.on_message(0, acks[0].second);
  n0.on_message(1, AcceptAckMsg{kCross.id, 0, acks[0].second.bal});
  CHECK(n0.phase_of(kCross.id) == Phase::accepted);  // g1 never acked: no commit
  auto calm = n0.on_timer({SimTime{4}, TimerKind::accept_quorum, kCross.id, Ballot::bottom()});
  CHECK_FALSE(calm.wants_recovery);

  // Followers do not run this watchdog.
  WhiteboxNode n1 = make_node(1);
  n1.on_message(0, AcceptMsg{kLocal, 0, Ballot::of(1, 0), Timestamp::of(1, 0)});
  auto follower = n1.on_timer({SimTime{4}, TimerKind::accept_quorum, kLocal.id, Ballot::bottom()});
  CHECK_FALSE(follower.wants_recovery);
}

TEST_CASE("campaign watchdogs re-campaign a stalled candidate but spare joiners") {
  // Candidate mid-campaign: no report quorum yet.
  WhiteboxNode n1 = make_node(1);
  n1.recover();
  Effects join = n1.on_message(1, NewLeaderMsg{Ballot::of(1, 1)});
  for (auto& [to, rep] : picks<NewLeaderAckMsg>(join))
    if (to == 1) n1.on_message(1, rep);

  auto stalled = n1.on_timer({SimTime{4}, TimerKind::newleader_quorum, MsgId{}, Ballot::of(1, 1)});
  CHECK(stalled.wants_recovery);
  auto ns_early = n1.on_timer({SimTime{4}, TimerKind::newstate_quorum, MsgId{}, Ballot::of(1, 1)});
  CHECK_FALSE(ns_early.wants_recovery);  // state not computed yet

  // The candidate's own join armed a sync watchdog too; it must not abandon
  // the very campaign the quorum watchdogs already cover.
  auto self_sync = n1.on_timer({SimTime{4}, TimerKind::recovery_sync, MsgId{}, Ballot::of(1, 1)});
  CHECK_FALSE(self_sync.wants_recovery);

  // A plain joiner still times out if the new state never arrives.
  WhiteboxNode n2 = make_node(2);
  n2.on_message(1, NewLeaderMsg{Ballot::of(1, 1)});
  auto joiner = n2.on_timer({SimTime{4}, TimerKind::recovery_sync, MsgId{}, Ballot::of(1, 1)});
  CHECK(joiner.wants_recovery);

  // Stale watchdogs from an older ballot are inert.
  auto stale = n2.on_timer({SimTime{4}, TimerKind::recovery_sync, MsgId{}, Ballot::of(1, 0)});
  CHECK_FALSE(stale.wants_recovery);
}

TEST_CASE("snapshot reflects the observable state") {
  WhiteboxNode n2 = make_node(2);
  n2.on_message(0, DeliverMsg{kCross, Ballot::of(1, 0), Timestamp::of(1, 0),
                              Timestamp::of(2, 1)});
  StateSnapshot s = n2.snapshot();
  CHECK(s.clock == 2);
  CHECK(s.status == "follower");
  CHECK(s.ballot == Ballot::of(1, 0));
  CHECK(s.cballot == Ballot::of(1, 0));
  CHECK(s.max_delivered_gts == Timestamp::of(2, 1));
  CHECK(s.phase.at(kCross.id) == Phase::committed);
  CHECK(s.delivered == std::vector<MsgId>{kCross.id});
}
