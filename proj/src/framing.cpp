#include "wbcast/framing.hpp"

#include <stdexcept>

namespace wbcast {

std::string to_string(ControlKind k) {
  switch (k) {
    case ControlKind::none: return "none";
    case ControlKind::hello: return "HELLO";
    case ControlKind::ack: return "ACK";
    case ControlKind::heartbeat: return "HEARTBEAT";
  }
  throw std::logic_error("unreachable control kind");
}

bool Envelope::operator==(const Envelope& o) const {
  return envelope_to_json(*this) == envelope_to_json(o);
}

json envelope_to_json(const Envelope& env) {
  json j;
  j["from"] = env.from;
  j["to"] = env.to;
  j["seq"] = env.seq;
  if (env.body) {
    j["body"] = to_json(*env.body);
  } else if (env.ctl != ControlKind::none) {
    j["ctl"] = to_string(env.ctl);
    if (env.ctl == ControlKind::ack) j["upto"] = env.ack_upto;
    if (env.ctl == ControlKind::heartbeat) {
      j["group"] = env.group;
      j["leader"] = env.leader;
    }
  }
  return j;
}

Envelope envelope_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("envelope must be a JSON object");
  Envelope env;
  if (!j.contains("from") || !j.contains("to")) {
    throw std::invalid_argument("envelope lacks from/to addressing");
  }
  env.from = j.at("from").get<ProcessId>();
  env.to = j.at("to").get<ProcessId>();
  env.seq = j.value("seq", std::uint64_t{0});
  const bool has_body = j.contains("body");
  const bool has_ctl = j.contains("ctl");
  if (has_body == has_ctl) {
    throw std::invalid_argument(
        "envelope carries an unknown tag: exactly one of body/ctl expected");
  }
  if (has_body) {
    env.body = protocol_message_from_json(j.at("body"));
    return env;
  }
  const std::string tag = j.at("ctl").get<std::string>();
  if (tag == "HELLO") {
    env.ctl = ControlKind::hello;
  } else if (tag == "ACK") {
    env.ctl = ControlKind::ack;
    env.ack_upto = j.value("upto", std::uint64_t{0});
  } else if (tag == "HEARTBEAT") {
    env.ctl = ControlKind::heartbeat;
    env.group = j.value("group", GroupId{0});
    env.leader = j.value("leader", false);
  } else {
    throw std::invalid_argument("unknown control tag: " + tag);
  }
  return env;
}

std::string encode_frame(const Envelope& env) {
  const std::string payload = envelope_to_json(env).dump();
  if (payload.size() > kMaxFrameBytes) {
    throw std::length_error("frame payload exceeds the 16 MiB cap");
  }
  const auto len = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>((len >> 24) & 0xff));
  out.push_back(static_cast<char>((len >> 16) & 0xff));
  out.push_back(static_cast<char>((len >> 8) & 0xff));
  out.push_back(static_cast<char>(len & 0xff));
  out += payload;
  return out;
}

DecodeResult decode_frame(std::string_view bytes) {
  DecodeResult r;
  if (bytes.size() < 4) {
    r.status = DecodeStatus::need_more;
    return r;
  }
  const std::uint32_t len = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[0])) << 24) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[1])) << 16) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[2])) << 8) |
                            static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[3]));
  // Cap check happens on the declared length alone, before anything is
  // buffered or allocated for the payload.
  if (len > kMaxFrameBytes) {
    r.status = DecodeStatus::error;
    r.error = "declared frame length " + std::to_string(len) + " exceeds the 16 MiB cap";
    return r;
  }
  if (bytes.size() < 4u + len) {
    r.status = DecodeStatus::need_more;
    return r;
  }
  json j;
  try {
    j = json::parse(bytes.substr(4, len));
  } catch (const std::exception& e) {
    r.status = DecodeStatus::error;
    r.error = std::string("malformed frame JSON: ") + e.what();
    return r;
  }
  try {
    r.env = envelope_from_json(j);
  } catch (const std::exception& e) {
    r.status = DecodeStatus::error;
    r.error = e.what();
    return r;
  }
  r.status = DecodeStatus::ok;
  r.consumed = 4u + len;
  return r;
}

std::optional<Envelope> FrameReader::next(std::string* error) {
  if (poisoned_) {
    if (error) *error = "reader poisoned by an earlier protocol violation";
    return std::nullopt;
  }
  DecodeResult r = decode_frame(buf_);
  switch (r.status) {
    case DecodeStatus::ok:
      buf_.erase(0, r.consumed);
      return std::move(r.env);
    case DecodeStatus::need_more:
      return std::nullopt;
    case DecodeStatus::error:
      poisoned_ = true;
      if (error) *error = r.error;
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace wbcast
