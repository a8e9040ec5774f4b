#include "wbcast/config.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace wbcast {

std::string to_string(ProtocolKind p) {
  switch (p) {
    case ProtocolKind::skeen: return "skeen";
    case ProtocolKind::ftskeen: return "ftskeen";
    case ProtocolKind::whitebox: return "whitebox";
  }
  throw std::logic_error("unreachable protocol kind");
}

ProtocolKind protocol_kind_from_string(const std::string& s) {
  if (s == "skeen") return ProtocolKind::skeen;
  if (s == "ftskeen") return ProtocolKind::ftskeen;
  if (s == "whitebox") return ProtocolKind::whitebox;
  throw std::invalid_argument("unknown protocol: " + s);
}

Topology SimConfig::topology() const {
  Topology t;
  t.f = f;
  for (GroupId g = 0; g < groups.size(); ++g) t.groups[g] = groups[g];
  return t;
}

namespace {

SimTime time_field(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_number_integer()) return SimTime(v.get<std::int64_t>(), 1);
  return sim_time_from_string(v.get<std::string>());
}

SimTime time_value(const json& v) {
  if (v.is_number_integer()) return SimTime(v.get<std::int64_t>(), 1);
  return sim_time_from_string(v.get<std::string>());
}

}  // namespace

void SimConfig::validate() const {
  if (delta <= SimTime(0)) throw std::invalid_argument("delta must be positive");
  if (gst < SimTime(0)) throw std::invalid_argument("gst must be nonnegative");
  if (horizon < gst) throw std::invalid_argument("horizon must not precede gst");
  if (groups.empty()) throw std::invalid_argument("at least one group required");

  const std::size_t want = 2 * static_cast<std::size_t>(f) + 1;
  std::set<ProcessId> seen;
  for (const auto& members : groups) {
    if (members.size() != want)
      throw std::invalid_argument("each group must have exactly 2f+1 members");
    if (!std::is_sorted(members.begin(), members.end()))
      throw std::invalid_argument("group members must be sorted");
    for (ProcessId p : members)
      if (!seen.insert(p).second)
        throw std::invalid_argument("groups must be disjoint");
  }
  if (protocol == ProtocolKind::skeen && f != 0)
    throw std::invalid_argument("the classic baseline runs singleton groups (f = 0)");

  std::map<GroupId, std::uint32_t> crash_count;
  for (const auto& c : crash_schedule) {
    if (c.time > gst)
      throw std::invalid_argument("crashes must occur no later than gst");
    Topology topo = topology();
    auto g = topo.group_of(c.process);
    if (g) {
      if (++crash_count[*g] > f)
        throw std::invalid_argument("at most f crashes per group");
    }
  }
  if (protocol != ProtocolKind::whitebox && !crash_schedule.empty()) {
    Topology topo = topology();
    for (const auto& c : crash_schedule)
      if (topo.group_of(c.process))
        throw std::invalid_argument("member crashes are only injected into the recoverable protocol");
  }

  std::map<ProcessId, std::uint64_t> counters;
  for (const auto& w : workload) {
    if (w.time < SimTime(0)) throw std::invalid_argument("workload times must be nonnegative");
    if (w.dest.empty()) throw std::invalid_argument("workload dest must be non-empty");
    if (!std::is_sorted(w.dest.begin(), w.dest.end()) ||
        std::adjacent_find(w.dest.begin(), w.dest.end()) != w.dest.end())
      throw std::invalid_argument("workload dest must be sorted and unique");
    for (GroupId g : w.dest)
      if (g >= groups.size()) throw std::invalid_argument("workload references unknown group");
    if (w.sent_to) {
      for (GroupId g : *w.sent_to)
        if (!std::binary_search(w.dest.begin(), w.dest.end(), g))
          throw std::invalid_argument("sent_to must be a subset of dest");
    }
  }
  for (const auto& n : lss.scripted)
    if (n.group >= groups.size() ||
        !std::binary_search(groups[n.group].begin(), groups[n.group].end(), n.nominee))
      throw std::invalid_argument("scripted nomination must name a group member");
  for (const auto& e : delay.edges)
    if (e.delay < SimTime(0)) throw std::invalid_argument("scripted delays must be nonnegative");
}

json SimConfig::to_json() const {
  json j;
  j["format"] = 1;
  j["protocol"] = to_string(protocol);
  j["f"] = f;
  j["groups"] = groups;
  j["delta"] = wbcast::to_string(delta);
  j["gst"] = wbcast::to_string(gst);
  j["horizon"] = wbcast::to_string(horizon);
  j["seed"] = seed;
  json dm;
  switch (delay.kind) {
    case DelayModel::Kind::uniform_delta: dm["kind"] = "uniform_delta"; break;
    case DelayModel::Kind::seeded_random: dm["kind"] = "seeded_random"; break;
    case DelayModel::Kind::scripted:
      dm["kind"] = "scripted";
      dm["default"] = wbcast::to_string(delay.scripted_default);
      {
        json edges = json::array();
        for (const auto& e : delay.edges)
          edges.push_back(json{{"from", e.from}, {"to", e.to}, {"delay", wbcast::to_string(e.delay)}});
        dm["edges"] = std::move(edges);
      }
      break;
  }
  j["delay_model"] = std::move(dm);
  json crashes = json::array();
  for (const auto& c : crash_schedule)
    crashes.push_back(json{{"process", c.process}, {"time", wbcast::to_string(c.time)}});
  j["crash_schedule"] = std::move(crashes);
  json lss_j = json::object();
  json scripted = json::array();
  for (const auto& n : lss.scripted)
    scripted.push_back(json{{"group", n.group}, {"time", wbcast::to_string(n.time)}, {"nominee", n.nominee}});
  lss_j["scripted"] = std::move(scripted);
  j["lss_schedule"] = std::move(lss_j);
  json wl = json::array();
  for (const auto& w : workload) {
    json e{{"time", wbcast::to_string(w.time)},
           {"sender", w.sender},
           {"dest", w.dest},
           {"payload", w.payload}};
    if (w.sent_to) e["sent_to"] = *w.sent_to;
    wl.push_back(std::move(e));
  }
  j["workload"] = std::move(wl);
  j["snapshots"] = snapshots;
  if (mutations.disable_accept_clock_max || mutations.disable_deliver_blocker_guard ||
      mutations.disable_max_cballot_rule) {
    j["mutations"] = json{
        {"disable_accept_clock_max", mutations.disable_accept_clock_max},
        {"disable_deliver_blocker_guard", mutations.disable_deliver_blocker_guard},
        {"disable_max_cballot_rule", mutations.disable_max_cballot_rule}};
  }
  j["retry_delta_multiple"] = retry_delta_multiple;
  j["quorum_wait_delta_multiple"] = quorum_wait_delta_multiple;
  return j;
}

SimConfig SimConfig::from_json(const json& j) {
  if (j.value("format", 0) != 1)
    throw std::invalid_argument("config must declare \"format\": 1");
  SimConfig c;
  c.protocol = protocol_kind_from_string(j.at("protocol").get<std::string>());
  c.f = j.at("f").get<std::uint32_t>();
  c.groups = j.at("groups").get<std::vector<std::vector<ProcessId>>>();
  for (auto& g : c.groups) std::sort(g.begin(), g.end());
  c.delta = time_field(j, "delta");
  c.gst = time_field(j, "gst");
  c.horizon = time_field(j, "horizon");
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("delay_model")) {
    const auto& dm = j.at("delay_model");
    const std::string kind = dm.at("kind").get<std::string>();
    if (kind == "uniform_delta") {
      c.delay.kind = DelayModel::Kind::uniform_delta;
    } else if (kind == "seeded_random") {
      c.delay.kind = DelayModel::Kind::seeded_random;
    } else if (kind == "scripted") {
      c.delay.kind = DelayModel::Kind::scripted;
      c.delay.scripted_default = dm.contains("default") ? time_value(dm.at("default")) : c.delta;
      if (dm.contains("edges")) {
        for (const auto& e : dm.at("edges")) {
          EdgeDelay ed;
          ed.from = e.at("from").get<ProcessId>();
          ed.to = e.at("to").get<ProcessId>();
          ed.delay = time_value(e.at("delay"));
          c.delay.edges.push_back(ed);
        }
      }
    } else {
      throw std::invalid_argument("unknown delay model: " + kind);
    }
  }
  if (j.contains("crash_schedule")) {
    for (const auto& e : j.at("crash_schedule")) {
      CrashEntry ce;
      ce.process = e.at("process").get<ProcessId>();
      ce.time = time_value(e.at("time"));
      c.crash_schedule.push_back(ce);
    }
  }
  if (j.contains("lss_schedule") && j.at("lss_schedule").contains("scripted")) {
    for (const auto& e : j.at("lss_schedule").at("scripted")) {
      ScriptedNomination n;
      n.group = e.at("group").get<GroupId>();
      n.time = time_value(e.at("time"));
      n.nominee = e.at("nominee").get<ProcessId>();
      c.lss.scripted.push_back(n);
    }
  }
  for (const auto& e : j.at("workload")) {
    WorkloadEntry w;
    w.time = time_value(e.at("time"));
    w.sender = e.at("sender").get<ProcessId>();
    w.dest = e.at("dest").get<std::vector<GroupId>>();
    std::sort(w.dest.begin(), w.dest.end());
    w.payload = e.value("payload", std::string{});
    if (e.contains("sent_to")) {
      auto st = e.at("sent_to").get<std::vector<GroupId>>();
      std::sort(st.begin(), st.end());
      w.sent_to = std::move(st);
    }
    c.workload.push_back(std::move(w));
  }
  c.snapshots = j.value("snapshots", false);
  if (j.contains("mutations")) {
    const auto& m = j.at("mutations");
    c.mutations.disable_accept_clock_max = m.value("disable_accept_clock_max", false);
    c.mutations.disable_deliver_blocker_guard = m.value("disable_deliver_blocker_guard", false);
    c.mutations.disable_max_cballot_rule = m.value("disable_max_cballot_rule", false);
  }
  c.retry_delta_multiple = j.value("retry_delta_multiple", 4u);
  c.quorum_wait_delta_multiple = j.value("quorum_wait_delta_multiple", 4u);
  c.validate();
  return c;
}

}  // namespace wbcast
