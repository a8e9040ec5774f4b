#include "wbcast/core.hpp"

#include <algorithm>
#include <sstream>

namespace wbcast {

std::string to_string(const MsgId& id) {
  return std::to_string(id.sender) + ":" + std::to_string(id.seq);
}

MsgId msg_id_from_string(const std::string& s) {
  auto colon = s.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("bad msg id: " + s);
  try {
    MsgId id;
    id.sender = static_cast<ProcessId>(std::stoul(s.substr(0, colon)));
    id.seq = std::stoull(s.substr(colon + 1));
    return id;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad msg id: " + s);
  }
}

bool ts_less(const Timestamp& a, const Timestamp& b) { return a < b; }

std::string to_string(const Timestamp& ts) {
  if (ts.is_bottom()) return "⊥";
  return "(" + std::to_string(ts.time) + ",g" + std::to_string(ts.group) + ")";
}

Timestamp timestamp_from_string(const std::string& s) {
  if (s == "⊥" || s == "bottom") return Timestamp::bottom();
  if (s.size() < 5 || s.front() != '(' || s.back() != ')')
    throw std::invalid_argument("bad timestamp: " + s);
  auto comma = s.find(",g");
  if (comma == std::string::npos) throw std::invalid_argument("bad timestamp: " + s);
  try {
    std::uint64_t t = std::stoull(s.substr(1, comma - 1));
    GroupId g = static_cast<GroupId>(std::stoul(s.substr(comma + 2, s.size() - comma - 3)));
    return Timestamp::of(t, g);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad timestamp: " + s);
  }
}

bool ballot_less(const Ballot& a, const Ballot& b) { return a < b; }

std::string to_string(const Ballot& b) {
  if (b.is_bottom()) return "⊥";
  return "(" + std::to_string(b.round) + ",p" + std::to_string(b.owner) + ")";
}

Ballot ballot_from_string(const std::string& s) {
  if (s == "⊥" || s == "bottom") return Ballot::bottom();
  if (s.size() < 5 || s.front() != '(' || s.back() != ')')
    throw std::invalid_argument("bad ballot: " + s);
  auto comma = s.find(",p");
  if (comma == std::string::npos) throw std::invalid_argument("bad ballot: " + s);
  try {
    std::uint64_t n = std::stoull(s.substr(1, comma - 1));
    ProcessId p = static_cast<ProcessId>(std::stoul(s.substr(comma + 2, s.size() - comma - 3)));
    return Ballot::of(n, p);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad ballot: " + s);
  }
}

bool AppMessage::addressed_to(GroupId g) const {
  return std::binary_search(dest.begin(), dest.end(), g);
}

Timestamp merge_global(const LtsVector& parts) {
  if (parts.empty()) throw std::invalid_argument("merge_global of empty vector");
  Timestamp best = Timestamp::bottom();
  for (const auto& [g, ts] : parts) {
    if (ts.is_bottom()) throw std::invalid_argument("merge_global over bottom entry");
    if (best < ts) best = ts;
  }
  return best;
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::start: return "start";
    case Phase::proposed: return "proposed";
    case Phase::accepted: return "accepted";
    case Phase::committed: return "committed";
  }
  throw std::logic_error("unreachable phase");
}

Phase phase_from_string(const std::string& s) {
  if (s == "start") return Phase::start;
  if (s == "proposed") return Phase::proposed;
  if (s == "accepted") return Phase::accepted;
  if (s == "committed") return Phase::committed;
  throw std::invalid_argument("bad phase: " + s);
}

json timestamp_to_json(const Timestamp& ts) { return to_string(ts); }

Timestamp timestamp_from_json(const json& j) {
  return timestamp_from_string(j.get<std::string>());
}

json ballot_to_json(const Ballot& b) { return to_string(b); }

Ballot ballot_from_json(const json& j) {
  return ballot_from_string(j.get<std::string>());
}

json to_json(const AppMessage& msg) {
  return json{{"id", to_string(msg.id)}, {"dest", msg.dest}, {"payload", msg.payload}};
}

AppMessage app_message_from_json(const json& j) {
  AppMessage m;
  m.id = msg_id_from_string(j.at("id").get<std::string>());
  m.dest = j.at("dest").get<std::vector<GroupId>>();
  if (m.dest.empty()) throw std::invalid_argument("message with empty dest");
  if (!std::is_sorted(m.dest.begin(), m.dest.end()) ||
      std::adjacent_find(m.dest.begin(), m.dest.end()) != m.dest.end())
    throw std::invalid_argument("message dest must be sorted and unique");
  m.payload = j.value("payload", std::string{});
  return m;
}

namespace {

json map_to_json(const std::map<MsgId, Phase>& m) {
  json out = json::object();
  for (const auto& [id, p] : m) out[to_string(id)] = to_string(p);
  return out;
}

json map_to_json(const std::map<MsgId, Timestamp>& m) {
  json out = json::object();
  for (const auto& [id, ts] : m) out[to_string(id)] = to_string(ts);
  return out;
}

json map_to_json(const std::map<MsgId, AppMessage>& m) {
  json out = json::object();
  for (const auto& [id, msg] : m) out[to_string(id)] = to_json(msg);
  return out;
}

json bal_vector_to_json(const BalVector& v) {
  json out = json::object();
  for (const auto& [g, b] : v) out[std::to_string(g)] = to_string(b);
  return out;
}

std::map<MsgId, Phase> phase_map_from_json(const json& j) {
  std::map<MsgId, Phase> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[msg_id_from_string(it.key())] = phase_from_string(it.value().get<std::string>());
  return out;
}

std::map<MsgId, Timestamp> ts_map_from_json(const json& j) {
  std::map<MsgId, Timestamp> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[msg_id_from_string(it.key())] = timestamp_from_string(it.value().get<std::string>());
  return out;
}

std::map<MsgId, AppMessage> msg_map_from_json(const json& j) {
  std::map<MsgId, AppMessage> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[msg_id_from_string(it.key())] = app_message_from_json(it.value());
  return out;
}

BalVector bal_vector_from_json(const json& j) {
  BalVector out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[static_cast<GroupId>(std::stoul(it.key()))] =
        ballot_from_string(it.value().get<std::string>());
  return out;
}

}  // namespace

std::string message_type(const ProtocolMessage& msg) {
  struct Visitor {
    std::string operator()(const MulticastMsg&) const { return "MULTICAST"; }
    std::string operator()(const AcceptMsg&) const { return "ACCEPT"; }
    std::string operator()(const AcceptAckMsg&) const { return "ACCEPT_ACK"; }
    std::string operator()(const DeliverMsg&) const { return "DELIVER"; }
    std::string operator()(const NewLeaderMsg&) const { return "NEWLEADER"; }
    std::string operator()(const NewLeaderAckMsg&) const { return "NEWLEADER_ACK"; }
    std::string operator()(const NewStateMsg&) const { return "NEW_STATE"; }
    std::string operator()(const NewStateAckMsg&) const { return "NEWSTATE_ACK"; }
    std::string operator()(const ProposeMsg&) const { return "PROPOSE"; }
    std::string operator()(const RedirectMsg&) const { return "REDIRECT"; }
    std::string operator()(const PersistLtsMsg&) const { return "PERSIST_LTS"; }
    std::string operator()(const PersistGtsMsg&) const { return "PERSIST_GTS"; }
    std::string operator()(const PersistAckMsg&) const { return "PERSIST_ACK"; }
  };
  return std::visit(Visitor{}, msg);
}

bool primary_msg_id(const ProtocolMessage& msg, MsgId* out) {
  struct Visitor {
    MsgId* out;
    bool operator()(const MulticastMsg& m) const { *out = m.msg.id; return true; }
    bool operator()(const AcceptMsg& m) const { *out = m.msg.id; return true; }
    bool operator()(const AcceptAckMsg& m) const { *out = m.m; return true; }
    bool operator()(const DeliverMsg& m) const { *out = m.msg.id; return true; }
    bool operator()(const NewLeaderMsg&) const { return false; }
    bool operator()(const NewLeaderAckMsg&) const { return false; }
    bool operator()(const NewStateMsg&) const { return false; }
    bool operator()(const NewStateAckMsg&) const { return false; }
    bool operator()(const ProposeMsg& m) const { *out = m.msg.id; return true; }
    bool operator()(const RedirectMsg&) const { return false; }
    bool operator()(const PersistLtsMsg& m) const { *out = m.msg.id; return true; }
    bool operator()(const PersistGtsMsg& m) const { *out = m.m; return true; }
    bool operator()(const PersistAckMsg& m) const { *out = m.m; return true; }
  };
  return std::visit(Visitor{out}, msg);
}

std::vector<MsgId> referenced_msg_ids(const ProtocolMessage& msg) {
  std::vector<MsgId> ids;
  MsgId one;
  if (primary_msg_id(msg, &one)) {
    ids.push_back(one);
    return ids;
  }
  auto collect_maps = [&ids](const std::map<MsgId, Phase>& phase,
                             const std::map<MsgId, Timestamp>& lts,
                             const std::map<MsgId, Timestamp>& gts) {
    std::set<MsgId> all;
    for (const auto& [id, _] : phase) all.insert(id);
    for (const auto& [id, _] : lts) all.insert(id);
    for (const auto& [id, _] : gts) all.insert(id);
    ids.assign(all.begin(), all.end());
  };
  if (const auto* ack = std::get_if<NewLeaderAckMsg>(&msg))
    collect_maps(ack->phase, ack->local_ts, ack->global_ts);
  else if (const auto* ns = std::get_if<NewStateMsg>(&msg))
    collect_maps(ns->phase, ns->local_ts, ns->global_ts);
  return ids;
}

json to_json(const ProtocolMessage& msg) {
  json j;
  j["type"] = message_type(msg);
  struct Visitor {
    json& j;
    void operator()(const MulticastMsg& m) const { j["msg"] = to_json(m.msg); }
    void operator()(const AcceptMsg& m) const {
      j["msg"] = to_json(m.msg);
      j["group"] = m.group;
      j["bal"] = to_string(m.bal);
      j["lts"] = to_string(m.lts);
    }
    void operator()(const AcceptAckMsg& m) const {
      j["m"] = to_string(m.m);
      j["group"] = m.group;
      j["bal"] = bal_vector_to_json(m.bal);
    }
    void operator()(const DeliverMsg& m) const {
      j["msg"] = to_json(m.msg);
      j["bal"] = to_string(m.bal);
      j["lts"] = to_string(m.lts);
      j["gts"] = to_string(m.gts);
    }
    void operator()(const NewLeaderMsg& m) const { j["bal"] = to_string(m.bal); }
    void operator()(const NewLeaderAckMsg& m) const {
      j["bal"] = to_string(m.bal);
      j["cballot"] = to_string(m.cballot);
      j["clock"] = m.clock;
      j["phase"] = map_to_json(m.phase);
      j["local_ts"] = map_to_json(m.local_ts);
      j["global_ts"] = map_to_json(m.global_ts);
      j["messages"] = map_to_json(m.messages);
    }
    void operator()(const NewStateMsg& m) const {
      j["bal"] = to_string(m.bal);
      j["clock"] = m.clock;
      j["phase"] = map_to_json(m.phase);
      j["local_ts"] = map_to_json(m.local_ts);
      j["global_ts"] = map_to_json(m.global_ts);
      j["messages"] = map_to_json(m.messages);
    }
    void operator()(const NewStateAckMsg& m) const { j["bal"] = to_string(m.bal); }
    void operator()(const ProposeMsg& m) const {
      j["msg"] = to_json(m.msg);
      j["group"] = m.group;
      j["lts"] = to_string(m.lts);
    }
    void operator()(const RedirectMsg& m) const {
      j["group"] = m.group;
      j["leader"] = m.leader;
    }
    void operator()(const PersistLtsMsg& m) const {
      j["msg"] = to_json(m.msg);
      j["lts"] = to_string(m.lts);
    }
    void operator()(const PersistGtsMsg& m) const {
      j["m"] = to_string(m.m);
      j["gts"] = to_string(m.gts);
    }
    void operator()(const PersistAckMsg& m) const {
      j["m"] = to_string(m.m);
      j["kind"] = m.kind == PersistKind::lts ? "lts" : "gts";
    }
  };
  std::visit(Visitor{j}, msg);
  return j;
}

ProtocolMessage protocol_message_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "MULTICAST") {
    return MulticastMsg{app_message_from_json(j.at("msg"))};
  }
  if (type == "ACCEPT") {
    AcceptMsg m;
    m.msg = app_message_from_json(j.at("msg"));
    m.group = j.at("group").get<GroupId>();
    m.bal = ballot_from_string(j.at("bal").get<std::string>());
    m.lts = timestamp_from_string(j.at("lts").get<std::string>());
    return m;
  }
  if (type == "ACCEPT_ACK") {
    AcceptAckMsg m;
    m.m = msg_id_from_string(j.at("m").get<std::string>());
    m.group = j.at("group").get<GroupId>();
    m.bal = bal_vector_from_json(j.at("bal"));
    return m;
  }
  if (type == "DELIVER") {
    DeliverMsg m;
    m.msg = app_message_from_json(j.at("msg"));
    m.bal = ballot_from_string(j.at("bal").get<std::string>());
    m.lts = timestamp_from_string(j.at("lts").get<std::string>());
    m.gts = timestamp_from_string(j.at("gts").get<std::string>());
    return m;
  }
  if (type == "NEWLEADER") {
    return NewLeaderMsg{ballot_from_string(j.at("bal").get<std::string>())};
  }
  if (type == "NEWLEADER_ACK") {
    NewLeaderAckMsg m;
    m.bal = ballot_from_string(j.at("bal").get<std::string>());
    m.cballot = ballot_from_string(j.at("cballot").get<std::string>());
    m.clock = j.at("clock").get<std::uint64_t>();
    m.phase = phase_map_from_json(j.at("phase"));
    m.local_ts = ts_map_from_json(j.at("local_ts"));
    m.global_ts = ts_map_from_json(j.at("global_ts"));
    m.messages = msg_map_from_json(j.at("messages"));
    return m;
  }
  if (type == "NEW_STATE") {
    NewStateMsg m;
    m.bal = ballot_from_string(j.at("bal").get<std::string>());
    m.clock = j.at("clock").get<std::uint64_t>();
    m.phase = phase_map_from_json(j.at("phase"));
    m.local_ts = ts_map_from_json(j.at("local_ts"));
    m.global_ts = ts_map_from_json(j.at("global_ts"));
    m.messages = msg_map_from_json(j.at("messages"));
    return m;
  }
  if (type == "NEWSTATE_ACK") {
    return NewStateAckMsg{ballot_from_string(j.at("bal").get<std::string>())};
  }
  if (type == "PROPOSE") {
    ProposeMsg m;
    m.msg = app_message_from_json(j.at("msg"));
    m.group = j.at("group").get<GroupId>();
    m.lts = timestamp_from_string(j.at("lts").get<std::string>());
    return m;
  }
  if (type == "REDIRECT") {
    RedirectMsg m;
    m.group = j.at("group").get<GroupId>();
    m.leader = j.at("leader").get<ProcessId>();
    return m;
  }
  if (type == "PERSIST_LTS") {
    PersistLtsMsg m;
    m.msg = app_message_from_json(j.at("msg"));
    m.lts = timestamp_from_string(j.at("lts").get<std::string>());
    return m;
  }
  if (type == "PERSIST_GTS") {
    PersistGtsMsg m;
    m.m = msg_id_from_string(j.at("m").get<std::string>());
    m.gts = timestamp_from_string(j.at("gts").get<std::string>());
    return m;
  }
  if (type == "PERSIST_ACK") {
    PersistAckMsg m;
    m.m = msg_id_from_string(j.at("m").get<std::string>());
    m.kind = j.at("kind").get<std::string>() == "gts" ? PersistKind::gts : PersistKind::lts;
    return m;
  }
  throw std::invalid_argument("unknown message type: " + type);
}

}  // namespace wbcast
