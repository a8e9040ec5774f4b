#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "wbcast/core.hpp"

namespace wbcast {

// Hard cap on one frame's payload. Anything larger (including lengths with
// the high bit set) is rejected before any buffer is sized from it.
inline constexpr std::uint32_t kMaxFrameBytes = 16u * 1024 * 1024;

// Transport-internal control tags. They ride the same envelope as protocol
// messages but never reach the state machine and are never traced.
enum class ControlKind { none, hello, ack, heartbeat };

std::string to_string(ControlKind k);

// One wire unit: a 32-bit big-endian payload length followed by the UTF-8
// JSON encoding of this envelope. Exactly one of `body` (a protocol message)
// and `ctl` (a control tag) is set. `seq` numbers protocol frames per
// (from, to) pair, 1-based, so receivers can deduplicate retransmissions;
// control frames carry seq 0 except HELLO, whose seq doubles as the sender's
// per-boot instance nonce (a changed nonce resets inbound dedup state).
struct Envelope {
  ProcessId from = 0;
  ProcessId to = 0;
  std::uint64_t seq = 0;
  std::optional<ProtocolMessage> body;
  ControlKind ctl = ControlKind::none;
  std::uint64_t ack_upto = 0;  // ACK: cumulative processed sequence
  GroupId group = 0;           // HEARTBEAT: sender's group
  bool leader = false;         // HEARTBEAT: sender claims group leadership

  bool operator==(const Envelope&) const;
};

json envelope_to_json(const Envelope& env);
// Throws std::invalid_argument when the document is not an envelope or its
// body/control tag is unknown.
Envelope envelope_from_json(const json& j);

// Serializes header + payload. Throws std::length_error above the cap.
std::string encode_frame(const Envelope& env);

enum class DecodeStatus {
  ok,         // env valid, `consumed` bytes eaten
  need_more,  // prefix of a valid frame; feed more bytes
  error       // protocol violation; the connection must be closed
};

struct DecodeResult {
  DecodeStatus status = DecodeStatus::need_more;
  std::size_t consumed = 0;
  Envelope env;
  std::string error;
};

// Examines the front of `bytes` for one complete frame.
DecodeResult decode_frame(std::string_view bytes);

// Incremental stream reader: feed bytes as they arrive, pull envelopes out.
class FrameReader {
 public:
  void append(std::string_view bytes) { buf_.append(bytes.data(), bytes.size()); }

  // One decoded envelope, or nullopt when the buffer holds no complete frame.
  // A protocol violation sets *error and poisons the reader.
  std::optional<Envelope> next(std::string* error);

  bool poisoned() const { return poisoned_; }
  std::size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
  bool poisoned_ = false;
};

}  // namespace wbcast
