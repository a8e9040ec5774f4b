// Core vocabulary types: identities, timestamps, ballots, wire messages.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <wbcast/core.hpp>
#include <wbcast/protocol.hpp>

#include <algorithm>
#include <vector>

using namespace wbcast;

TEST_CASE("message ids order by sender then sequence") {
  CHECK(MsgId{1, 5} < MsgId{2, 1});
  CHECK(MsgId{1, 5} < MsgId{1, 6});
  CHECK(MsgId{3, 7} == MsgId{3, 7});
  CHECK(to_string(MsgId{100, 42}) == "100:42");
  CHECK(msg_id_from_string("100:42") == MsgId{100, 42});
}

TEST_CASE("timestamps: bottom first, then time, group breaking ties") {
  const Timestamp bot = Timestamp::bottom();
  CHECK(bot.is_bottom());
  CHECK(bot < Timestamp::of(0, 0));
  CHECK(Timestamp::of(1, 9) < Timestamp::of(2, 0));
  CHECK(Timestamp::of(2, 0) < Timestamp::of(2, 1));
  CHECK_FALSE(Timestamp::of(2, 1) < Timestamp::of(2, 1));
  CHECK(ts_less(bot, Timestamp::of(0, 0)));
  CHECK_FALSE(ts_less(Timestamp::of(3, 0), Timestamp::of(3, 0)));

  CHECK(to_string(bot) == "⊥");
  CHECK(to_string(Timestamp::of(7, 1)) == "(7,g1)");
  CHECK(timestamp_from_string("(7,g1)") == Timestamp::of(7, 1));
  CHECK(timestamp_from_string("⊥").is_bottom());
  CHECK_THROWS_AS(bot.time_part(), std::logic_error);
}

TEST_CASE("ballots: bottom first, then round, owner breaking ties") {
  const Ballot bot = Ballot::bottom();
  CHECK(bot < Ballot::of(0, 0));
  CHECK(Ballot::of(1, 9) < Ballot::of(2, 0));
  CHECK(Ballot::of(2, 3) < Ballot::of(2, 4));
  CHECK(ballot_less(Ballot::of(1, 1), Ballot::of(1, 2)));
  CHECK(Ballot::of(5, 8).leader() == 8);
  CHECK_THROWS_AS(bot.leader(), std::logic_error);

  CHECK(to_string(bot) == "⊥");
  CHECK(to_string(Ballot::of(2, 11)) == "(2,p11)");
  CHECK(ballot_from_string("(2,p11)") == Ballot::of(2, 11));
  CHECK(ballot_from_string("⊥").is_bottom());
}

TEST_CASE("string round-trips survive arbitrary components") {
  for (std::uint64_t t : {0ull, 1ull, 999999ull}) {
    for (GroupId g : {0u, 3u, 4000000000u}) {
      const Timestamp ts = Timestamp::of(t, g);
      CHECK(timestamp_from_string(to_string(ts)) == ts);
      const Ballot b = Ballot::of(t, g);
      CHECK(ballot_from_string(to_string(b)) == b);
    }
  }
}

TEST_CASE("merge_global takes the pointwise maximum") {
  LtsVector parts;
  parts[0] = Timestamp::of(4, 0);
  parts[1] = Timestamp::of(4, 1);
  CHECK(merge_global(parts) == Timestamp::of(4, 1));  // group id breaks the tie
  parts[2] = Timestamp::of(9, 2);
  CHECK(merge_global(parts) == Timestamp::of(9, 2));
  LtsVector solo;
  solo[5] = Timestamp::of(1, 5);
  CHECK(merge_global(solo) == Timestamp::of(1, 5));
}

TEST_CASE("app messages know their destinations") {
  AppMessage m{MsgId{100, 1}, {0, 2}, "hello"};
  CHECK(m.addressed_to(0));
  CHECK_FALSE(m.addressed_to(1));
  CHECK(m.addressed_to(2));

  const json j = to_json(m);
  const AppMessage back = app_message_from_json(j);
  CHECK(back.id == m.id);
  CHECK(back.dest == m.dest);
  CHECK(back.payload == m.payload);
}

TEST_CASE("phases are ordered and render round-trip") {
  CHECK(phase_lt(Phase::start, Phase::proposed));
  CHECK(phase_lt(Phase::proposed, Phase::accepted));
  CHECK(phase_lt(Phase::accepted, Phase::committed));
  CHECK_FALSE(phase_lt(Phase::committed, Phase::committed));
  for (Phase p : {Phase::start, Phase::proposed, Phase::accepted, Phase::committed}) {
    CHECK(phase_from_string(to_string(p)) == p);
  }
}

namespace {

AppMessage sample_app() { return AppMessage{MsgId{100, 7}, {0, 1}, "pay"}; }

std::vector<ProtocolMessage> all_wire_messages() {
  NewLeaderAckMsg nla;
  nla.bal = Ballot::of(2, 1);
  nla.cballot = Ballot::of(1, 0);
  nla.clock = 12;
  nla.phase[MsgId{100, 7}] = Phase::accepted;
  nla.local_ts[MsgId{100, 7}] = Timestamp::of(3, 0);
  nla.global_ts[MsgId{100, 7}] = Timestamp::bottom();
  nla.messages[MsgId{100, 7}] = sample_app();

  NewStateMsg ns;
  ns.bal = Ballot::of(2, 1);
  ns.clock = 12;
  ns.phase[MsgId{100, 7}] = Phase::accepted;
  ns.local_ts[MsgId{100, 7}] = Timestamp::of(3, 0);
  ns.global_ts[MsgId{100, 7}] = Timestamp::bottom();
  ns.messages[MsgId{100, 7}] = sample_app();

  return {
      MulticastMsg{sample_app()},
      AcceptMsg{sample_app(), 0, Ballot::of(0, 0), Timestamp::of(3, 0)},
      AcceptAckMsg{MsgId{100, 7}, 1,
                   BalVector{{0, Ballot::of(0, 0)}, {1, Ballot::of(0, 3)}}},
      DeliverMsg{sample_app(), Ballot::of(0, 0), Timestamp::of(3, 0), Timestamp::of(4, 1)},
      NewLeaderMsg{Ballot::of(2, 1)},
      nla,
      ns,
      NewStateAckMsg{Ballot::of(2, 1)},
      ProposeMsg{sample_app(), 1, Timestamp::of(5, 1)},
      RedirectMsg{0, 2},
      PersistLtsMsg{sample_app(), Timestamp::of(3, 0)},
      PersistGtsMsg{MsgId{100, 7}, Timestamp::of(4, 1)},
      PersistAckMsg{MsgId{100, 7}, PersistKind::gts},
  };
}

}  // namespace

TEST_CASE("every wire message round-trips through json") {
  for (const ProtocolMessage& msg : all_wire_messages()) {
    const json j = to_json(msg);
    const ProtocolMessage back = protocol_message_from_json(j);
    CHECK(to_json(back).dump() == j.dump());
    CHECK(message_type(back) == message_type(msg));
  }
}

TEST_CASE("wire message tags are distinct and well-known") {
  std::vector<std::string> tags;
  for (const ProtocolMessage& msg : all_wire_messages()) tags.push_back(message_type(msg));
  std::vector<std::string> expect = {
      "MULTICAST",  "ACCEPT",    "ACCEPT_ACK", "DELIVER",     "NEWLEADER",
      "NEWLEADER_ACK", "NEW_STATE", "NEWSTATE_ACK", "PROPOSE", "REDIRECT",
      "PERSIST_LTS", "PERSIST_GTS", "PERSIST_ACK"};
  CHECK(tags == expect);
  auto sorted = tags;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("primary_msg_id names the subject of payload messages") {
  MsgId out;
  CHECK(primary_msg_id(MulticastMsg{sample_app()}, &out));
  CHECK(out == MsgId{100, 7});
  CHECK(primary_msg_id(PersistGtsMsg{MsgId{100, 9}, Timestamp::of(1, 0)}, &out));
  CHECK(out == MsgId{100, 9});
  // Recovery messages are about whole maps, not a single message.
  CHECK_FALSE(primary_msg_id(NewLeaderMsg{Ballot::of(1, 0)}, &out));
  CHECK_FALSE(primary_msg_id(RedirectMsg{0, 1}, &out));
}

TEST_CASE("referenced_msg_ids covers recovery maps") {
  NewLeaderAckMsg nla;
  nla.bal = Ballot::of(2, 1);
  nla.cballot = Ballot::of(1, 0);
  nla.phase[MsgId{100, 1}] = Phase::proposed;
  nla.phase[MsgId{101, 2}] = Phase::committed;
  nla.global_ts[MsgId{102, 3}] = Timestamp::of(9, 1);
  auto ids = referenced_msg_ids(ProtocolMessage{nla});
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  CHECK(ids == std::vector<MsgId>{MsgId{100, 1}, MsgId{101, 2}, MsgId{102, 3}});

  const auto solo = referenced_msg_ids(ProtocolMessage{MulticastMsg{sample_app()}});
  CHECK(solo == std::vector<MsgId>{MsgId{100, 7}});
}

TEST_CASE("topology answers membership and quorum questions") {
  Topology topo;
  topo.groups[0] = {0, 1, 2};
  topo.groups[1] = {3, 4, 5};
  topo.f = 1;
  CHECK(topo.quorum() == 2);
  CHECK(topo.is_member(4));
  CHECK_FALSE(topo.is_member(9));
  CHECK(topo.group_of(2) == GroupId{0});
  CHECK(topo.group_of(3) == GroupId{1});
  CHECK_FALSE(topo.group_of(77).has_value());
  CHECK(topo.members(1) == std::vector<ProcessId>{3, 4, 5});
  CHECK(topo.initial_leader(0) == 0);
  CHECK(topo.initial_leader(1) == 3);
}

TEST_CASE("effects accumulate sends and merge") {
  Effects a;
  a.send(3, ProtocolMessage{NewStateAckMsg{Ballot::of(1, 0)}});
  Effects b;
  b.send(4, ProtocolMessage{NewStateAckMsg{Ballot::of(1, 0)}});
  b.timers.push_back({SimTime{4}, TimerKind::retry, MsgId{100, 1}, Ballot::bottom()});
  a.merge(std::move(b));
  CHECK(a.sends.size() == 2);
  CHECK(a.sends[0].to == 3);
  CHECK(a.sends[1].to == 4);
  REQUIRE(a.timers.size() == 1);
  CHECK(a.timers[0].kind == TimerKind::retry);
}
