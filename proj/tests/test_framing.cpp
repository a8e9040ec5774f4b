// Wire framing: length-prefixed JSON envelopes with strict bounds checking.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <wbcast/framing.hpp>

#include <random>
#include <string>
#include <vector>

using namespace wbcast;

namespace {

Envelope proto_env(std::uint64_t seq, ProtocolMessage msg) {
  Envelope env;
  env.from = 1;
  env.to = 4;
  env.seq = seq;
  env.body = std::move(msg);
  return env;
}

AppMessage sample_app(std::uint64_t seq) {
  return AppMessage{MsgId{100, seq}, {0, 1}, "payload-" + std::to_string(seq)};
}

std::vector<Envelope> envelope_zoo() {
  std::vector<Envelope> zoo;
  zoo.push_back(proto_env(1, MulticastMsg{sample_app(1)}));
  zoo.push_back(proto_env(2, AcceptMsg{sample_app(2), 0, Ballot::of(1, 0), Timestamp::of(3, 0)}));
  zoo.push_back(proto_env(3, AcceptAckMsg{MsgId{100, 2}, 1,
                                          BalVector{{0, Ballot::of(1, 0)}, {1, Ballot::of(1, 3)}}}));
  zoo.push_back(proto_env(4, DeliverMsg{sample_app(2), Ballot::of(1, 0), Timestamp::of(3, 0),
                                        Timestamp::of(4, 1)}));
  NewLeaderAckMsg nla;
  nla.bal = Ballot::of(2, 1);
  nla.cballot = Ballot::of(1, 0);
  nla.clock = 5;
  nla.phase[MsgId{100, 1}] = Phase::accepted;
  nla.local_ts[MsgId{100, 1}] = Timestamp::of(1, 0);
  nla.messages[MsgId{100, 1}] = sample_app(1);
  zoo.push_back(proto_env(5, nla));

  Envelope hello;
  hello.from = 2;
  hello.to = 3;
  hello.ctl = ControlKind::hello;
  hello.seq = 0xFEEDFACE;  // per-boot instance nonce
  zoo.push_back(hello);

  Envelope ack;
  ack.from = 3;
  ack.to = 2;
  ack.ctl = ControlKind::ack;
  ack.ack_upto = 41;
  zoo.push_back(ack);

  Envelope hb;
  hb.from = 0;
  hb.to = 5;
  hb.ctl = ControlKind::heartbeat;
  hb.group = 0;
  hb.leader = true;
  zoo.push_back(hb);
  return zoo;
}

}  // namespace

TEST_CASE("every envelope kind round-trips through a frame") {
  for (const Envelope& env : envelope_zoo()) {
    const std::string frame = encode_frame(env);
    REQUIRE(frame.size() >= 4);
    const DecodeResult res = decode_frame(frame);
    REQUIRE(res.status == DecodeStatus::ok);
    CHECK(res.consumed == frame.size());
    CHECK(res.env == env);
  }
}

TEST_CASE("the length prefix is big-endian and exact") {
  Envelope env;
  env.from = 1;
  env.to = 2;
  env.ctl = ControlKind::ack;
  const std::string frame = encode_frame(env);
  const std::uint32_t n = (std::uint8_t(frame[0]) << 24) | (std::uint8_t(frame[1]) << 16) |
                          (std::uint8_t(frame[2]) << 8) | std::uint8_t(frame[3]);
  CHECK(n == frame.size() - 4);
}

TEST_CASE("truncated frames ask for more bytes") {
  const std::string frame = encode_frame(proto_env(1, MulticastMsg{sample_app(1)}));
  for (std::size_t cut : {std::size_t{0}, std::size_t{1}, std::size_t{3},
                          std::size_t{4}, frame.size() - 1}) {
    const DecodeResult res = decode_frame(std::string_view(frame).substr(0, cut));
    CHECK(res.status == DecodeStatus::need_more);
    CHECK(res.consumed == 0);
  }
}

TEST_CASE("oversized or poisoned lengths are rejected before allocation") {
  // 0x80000000: would wrap to a huge allocation if trusted.
  const std::string evil = {'\x80', '\x00', '\x00', '\x00'};
  CHECK(decode_frame(evil).status == DecodeStatus::error);

  // Just above the cap.
  const std::uint32_t over = kMaxFrameBytes + 1;
  std::string hdr = {char(over >> 24), char(over >> 16), char(over >> 8), char(over)};
  CHECK(decode_frame(hdr).status == DecodeStatus::error);

  // Encoding an envelope that would exceed the cap throws instead.
  Envelope big = proto_env(1, MulticastMsg{AppMessage{
                                  MsgId{100, 1}, {0}, std::string(kMaxFrameBytes, 'x')}});
  CHECK_THROWS_AS(encode_frame(big), std::length_error);
}

TEST_CASE("frames with non-envelope payloads are protocol errors") {
  const std::string payload = "{}";
  std::string frame = {0, 0, 0, char(payload.size())};
  frame += payload;
  CHECK(decode_frame(frame).status == DecodeStatus::error);

  const std::string garbage_payload = "not json at all";
  std::string garbage = {0, 0, 0, char(garbage_payload.size())};
  garbage += garbage_payload;
  CHECK(decode_frame(garbage).status == DecodeStatus::error);

  json j = envelope_to_json(envelope_zoo()[0]);
  j["ctl"] = "warp";  // unknown control tag
  CHECK_THROWS_AS(envelope_from_json(j), std::invalid_argument);
}

TEST_CASE("the reader reassembles frames fed one byte at a time") {
  const std::vector<Envelope> zoo = envelope_zoo();
  std::string stream;
  for (const Envelope& env : zoo) stream += encode_frame(env);

  FrameReader reader;
  std::vector<Envelope> got;
  std::string error;
  for (char c : stream) {
    reader.append(std::string_view(&c, 1));
    while (auto env = reader.next(&error)) got.push_back(*env);
    REQUIRE(error.empty());
  }
  CHECK(reader.buffered() == 0);
  REQUIRE(got.size() == zoo.size());
  for (std::size_t i = 0; i < zoo.size(); ++i) CHECK(got[i] == zoo[i]);
}

TEST_CASE("garbage poisons the reader for good") {
  FrameReader reader;
  reader.append(encode_frame(envelope_zoo()[0]));
  const std::string bad_payload = "]]]";
  std::string bad = {0, 0, 0, char(bad_payload.size())};
  reader.append(bad + bad_payload);

  std::string error;
  auto first = reader.next(&error);
  REQUIRE(first.has_value());  // the healthy frame still comes out
  CHECK(error.empty());

  CHECK_FALSE(reader.next(&error).has_value());
  CHECK_FALSE(error.empty());
  CHECK(reader.poisoned());

  // Once poisoned, even valid bytes are refused.
  reader.append(encode_frame(envelope_zoo()[1]));
  error.clear();
  CHECK_FALSE(reader.next(&error).has_value());
}

TEST_CASE("ten thousand randomized envelopes survive the round trip") {
  std::mt19937_64 rng(20260818);
  auto rnd_ts = [&] { return Timestamp::of(rng() % 1000, rng() % 4); };
  auto rnd_bal = [&] { return Ballot::of(rng() % 50 + 1, rng() % 6); };

  for (int i = 0; i < 10000; ++i) {
    Envelope env;
    env.from = rng() % 6;
    env.to = rng() % 6;
    switch (rng() % 5) {
      case 0: {
        env.seq = rng();
        AppMessage app{MsgId{ProcessId(100 + rng() % 8), rng() % 1000},
                       (rng() % 2) ? std::vector<GroupId>{0, 1} : std::vector<GroupId>{1},
                       std::string(rng() % 64, 'p')};
        env.body = MulticastMsg{std::move(app)};
        break;
      }
      case 1: {
        env.seq = rng();
        AppMessage app{MsgId{ProcessId(100 + rng() % 8), rng() % 1000}, {0}, "x"};
        env.body = AcceptMsg{std::move(app), GroupId(rng() % 2), rnd_bal(), rnd_ts()};
        break;
      }
      case 2:
        env.seq = rng();
        env.body = AcceptAckMsg{MsgId{ProcessId(100 + rng() % 8), rng() % 1000},
                                GroupId(rng() % 2), BalVector{{rng() % 2, rnd_bal()}}};
        break;
      case 3:
        env.ctl = ControlKind::ack;
        env.ack_upto = rng();
        break;
      default:
        env.ctl = ControlKind::heartbeat;
        env.group = rng() % 2;
        env.leader = rng() % 2;
        break;
    }
    const DecodeResult res = decode_frame(encode_frame(env));
    REQUIRE(res.status == DecodeStatus::ok);
    REQUIRE(res.env == env);
  }
}

TEST_CASE("back-to-back frames decode with exact consumption") {
  const std::string f1 = encode_frame(envelope_zoo()[0]);
  const std::string f2 = encode_frame(envelope_zoo()[5]);
  std::string both = f1 + f2;
  const DecodeResult r1 = decode_frame(both);
  REQUIRE(r1.status == DecodeStatus::ok);
  CHECK(r1.consumed == f1.size());
  const DecodeResult r2 = decode_frame(std::string_view(both).substr(r1.consumed));
  REQUIRE(r2.status == DecodeStatus::ok);
  CHECK(r2.env == envelope_zoo()[5]);
}
