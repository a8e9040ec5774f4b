#include "wbcast/trace.hpp"

#include <sstream>

namespace wbcast {

json StateSnapshot::to_json() const {
  json j;
  j["clock"] = clock;
  if (!status.empty()) j["status"] = status;
  j["ballot"] = to_string(ballot);
  j["cballot"] = to_string(cballot);
  j["max_delivered_gts"] = to_string(max_delivered_gts);
  json ph = json::object(), lt = json::object(), gt = json::object();
  for (const auto& [id, p] : phase) ph[to_string(id)] = to_string(p);
  for (const auto& [id, ts] : local_ts) lt[to_string(id)] = to_string(ts);
  for (const auto& [id, ts] : global_ts) gt[to_string(id)] = to_string(ts);
  j["phase"] = std::move(ph);
  j["local_ts"] = std::move(lt);
  j["global_ts"] = std::move(gt);
  json dl = json::array();
  for (const auto& id : delivered) dl.push_back(to_string(id));
  j["delivered"] = std::move(dl);
  return j;
}

StateSnapshot StateSnapshot::from_json(const json& j) {
  StateSnapshot s;
  s.clock = j.at("clock").get<std::uint64_t>();
  s.status = j.value("status", std::string{});
  s.ballot = ballot_from_string(j.at("ballot").get<std::string>());
  s.cballot = ballot_from_string(j.at("cballot").get<std::string>());
  s.max_delivered_gts = timestamp_from_string(j.at("max_delivered_gts").get<std::string>());
  for (auto it = j.at("phase").begin(); it != j.at("phase").end(); ++it)
    s.phase[msg_id_from_string(it.key())] = phase_from_string(it.value().get<std::string>());
  for (auto it = j.at("local_ts").begin(); it != j.at("local_ts").end(); ++it)
    s.local_ts[msg_id_from_string(it.key())] =
        timestamp_from_string(it.value().get<std::string>());
  for (auto it = j.at("global_ts").begin(); it != j.at("global_ts").end(); ++it)
    s.global_ts[msg_id_from_string(it.key())] =
        timestamp_from_string(it.value().get<std::string>());
  for (const auto& id : j.at("delivered")) s.delivered.push_back(msg_id_from_string(id.get<std::string>()));
  return s;
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::multicast: return "multicast";
    case EventKind::send: return "send";
    case EventKind::receive: return "receive";
    case EventKind::deliver: return "deliver";
    case EventKind::commit: return "commit";
    case EventKind::crash: return "crash";
    case EventKind::nominate: return "nominate";
    case EventKind::timer: return "timer";
  }
  throw std::logic_error("unreachable event kind");
}

EventKind event_kind_from_string(const std::string& s) {
  if (s == "multicast") return EventKind::multicast;
  if (s == "send") return EventKind::send;
  if (s == "receive") return EventKind::receive;
  if (s == "deliver") return EventKind::deliver;
  if (s == "commit") return EventKind::commit;
  if (s == "crash") return EventKind::crash;
  if (s == "nominate") return EventKind::nominate;
  if (s == "timer") return EventKind::timer;
  throw std::invalid_argument("bad event kind: " + s);
}

json TraceEvent::to_json() const {
  json j;
  j["t"] = wbcast::to_string(t);
  j["p"] = p;
  j["kind"] = wbcast::to_string(kind);
  switch (kind) {
    case EventKind::send:
      j["to"] = peer;
      j["seq"] = seq;
      j["msg"] = wbcast::to_json(*msg);
      break;
    case EventKind::receive:
      j["from"] = peer;
      j["seq"] = seq;
      j["msg"] = wbcast::to_json(*msg);
      break;
    case EventKind::multicast:
      j["m"] = wbcast::to_string(*m);
      j["dest"] = dest;
      break;
    case EventKind::deliver:
      j["m"] = wbcast::to_string(*m);
      if (gts) j["gts"] = wbcast::to_string(*gts);
      break;
    case EventKind::commit:
      j["m"] = wbcast::to_string(*m);
      if (lts) j["lts"] = wbcast::to_string(*lts);
      if (gts) j["gts"] = wbcast::to_string(*gts);
      break;
    case EventKind::crash:
      break;
    case EventKind::nominate:
      j["group"] = *group;
      break;
    case EventKind::timer:
      j["timer"] = timer;
      if (m) j["m"] = wbcast::to_string(*m);
      break;
  }
  if (state) j["state"] = state->to_json();
  return j;
}

TraceEvent TraceEvent::from_json(const json& j) {
  TraceEvent e;
  e.t = sim_time_from_string(j.at("t").get<std::string>());
  e.p = j.at("p").get<ProcessId>();
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  switch (e.kind) {
    case EventKind::send:
      e.peer = j.at("to").get<ProcessId>();
      e.seq = j.at("seq").get<std::uint64_t>();
      e.msg = protocol_message_from_json(j.at("msg"));
      break;
    case EventKind::receive:
      e.peer = j.at("from").get<ProcessId>();
      e.seq = j.at("seq").get<std::uint64_t>();
      e.msg = protocol_message_from_json(j.at("msg"));
      break;
    case EventKind::multicast:
      e.m = msg_id_from_string(j.at("m").get<std::string>());
      e.dest = j.at("dest").get<std::vector<GroupId>>();
      break;
    case EventKind::deliver:
      e.m = msg_id_from_string(j.at("m").get<std::string>());
      if (j.contains("gts")) e.gts = timestamp_from_string(j.at("gts").get<std::string>());
      break;
    case EventKind::commit:
      e.m = msg_id_from_string(j.at("m").get<std::string>());
      if (j.contains("lts")) e.lts = timestamp_from_string(j.at("lts").get<std::string>());
      if (j.contains("gts")) e.gts = timestamp_from_string(j.at("gts").get<std::string>());
      break;
    case EventKind::crash:
      break;
    case EventKind::nominate:
      e.group = j.at("group").get<GroupId>();
      break;
    case EventKind::timer:
      e.timer = j.at("timer").get<std::string>();
      if (j.contains("m")) e.m = msg_id_from_string(j.at("m").get<std::string>());
      break;
  }
  if (j.contains("state")) e.state = StateSnapshot::from_json(j.at("state"));
  return e;
}

std::string Trace::to_jsonl() const {
  std::ostringstream out;
  json header;
  header["format"] = 1;
  header["kind"] = "header";
  header["config"] = config;
  out << header.dump() << "\n";
  for (const auto& e : events) out << e.to_json().dump() << "\n";
  return out.str();
}

Trace Trace::from_jsonl(const std::string& text) {
  Trace trace;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (!saw_header) {
      if (!j.contains("format") || j.at("format").get<int>() != 1 ||
          j.value("kind", std::string{}) != "header")
        throw std::invalid_argument("trace must start with a format-1 header line");
      trace.config = j.value("config", json::object());
      saw_header = true;
      continue;
    }
    trace.events.push_back(TraceEvent::from_json(j));
  }
  if (!saw_header) throw std::invalid_argument("empty trace");
  return trace;
}

}  // namespace wbcast
