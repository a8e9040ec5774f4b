// Socket deployment layer: cluster specs, the node and client event loops
// over loopback TCP, and merging per-process trace files into one checkable
// trace. The heavier multi-process variant (spawned binaries, SIGKILL) lives
// in the acceptance suite; these tests run everything in-process.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "wbcast/checker.hpp"
#include "wbcast/transport.hpp"

using namespace wbcast;

namespace {

// Reserves n distinct loopback ports by binding them all simultaneously and
// then releasing them for the cluster to claim.
std::vector<std::uint16_t> free_ports(std::size_t n) {
  std::vector<int> fds;
  std::vector<std::uint16_t> ports;
  for (std::size_t i = 0; i < n; ++i) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd >= 0);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    socklen_t len = sizeof(addr);
    REQUIRE(::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
    fds.push_back(fd);
    ports.push_back(ntohs(addr.sin_port));
  }
  for (int fd : fds) ::close(fd);
  return ports;
}

struct TempDir {
  std::string path;
  TempDir() {
    std::string tpl = "/tmp/wbcast_transport_XXXXXX";
    REQUIRE(::mkdtemp(tpl.data()) != nullptr);
    path = tpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return path + "/" + name; }
};

// Two groups of three processes each: {0,1,2} and {3,4,5}, f = 1, with
// timeouts tightened so elections settle quickly in tests.
ClusterSpec two_by_three(const std::vector<std::uint16_t>& ports) {
  ClusterSpec s;
  s.f = 1;
  for (ProcessId p = 0; p < 6; ++p) {
    s.groups[static_cast<GroupId>(p / 3)].push_back(
        MemberAddr{p, "127.0.0.1", ports[static_cast<std::size_t>(p)]});
  }
  s.retry_ms = 200;
  s.election_ms = 300;
  s.heartbeat_ms = 100;
  return s;
}

// Runs every member of a spec as an in-process node thread with its own stop
// flag, so tests can silence one member while the rest keep serving.
struct LocalCluster {
  ClusterSpec spec;
  std::string dir;
  std::vector<ProcessId> ids;
  std::vector<std::unique_ptr<std::atomic<bool>>> stops;
  std::vector<std::thread> threads;
  std::vector<int> rcs;
  std::vector<bool> joined;

  LocalCluster(ClusterSpec s, std::string d) : spec(std::move(s)), dir(std::move(d)) {
    for (const auto& [g, members] : spec.groups) {
      for (const auto& m : members) ids.push_back(m.id);
    }
    rcs.assign(ids.size(), -1);
    joined.assign(ids.size(), false);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      stops.push_back(std::make_unique<std::atomic<bool>>(false));
      threads.emplace_back([this, i] {
        rcs[i] = run_node(spec, ids[i], trace_path(ids[i]), stops[i].get());
      });
    }
  }
  ~LocalCluster() { stop_all(); }

  std::string trace_path(ProcessId p) const {
    return dir + "/node" + std::to_string(p) + ".jsonl";
  }
  std::size_t index_of(ProcessId p) const {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == p) return i;
    }
    REQUIRE(false);
    return 0;
  }
  void stop_node(ProcessId p) {
    const std::size_t i = index_of(p);
    stops[i]->store(true);
    if (!joined[i]) {
      threads[i].join();
      joined[i] = true;
    }
  }
  void stop_all() {
    for (ProcessId p : ids) stop_node(p);
  }
  std::vector<std::string> node_trace_paths() const {
    std::vector<std::string> out;
    for (ProcessId p : ids) out.push_back(trace_path(p));
    return out;
  }
};

std::set<ProcessId> deliverers_of(const Trace& tr, MsgId m) {
  std::set<ProcessId> out;
  for (const auto& e : tr.events) {
    if (e.kind == EventKind::deliver && e.m && *e.m == m) out.insert(e.p);
  }
  return out;
}

std::set<ProcessId> intersect(const std::set<ProcessId>& a, const std::vector<ProcessId>& b) {
  std::set<ProcessId> out;
  for (ProcessId p : b) {
    if (a.count(p)) out.insert(p);
  }
  return out;
}

}  // namespace

TEST_CASE("cluster specs reject malformed deployments") {
  std::vector<std::uint16_t> ports(6);
  for (std::size_t i = 0; i < 6; ++i) ports[i] = static_cast<std::uint16_t>(9000 + i);
  ClusterSpec good = two_by_three(ports);
  CHECK_NOTHROW(good.validate());

  // Only the leader-replicated protocol has a recovery path; the baselines
  // cannot survive process kills and are simulator-only.
  ClusterSpec p = good;
  p.protocol = "skeen";
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  ClusterSpec sz = good;
  sz.groups[0].pop_back();  // 2 members at f=1
  CHECK_THROWS_AS(sz.validate(), std::invalid_argument);

  ClusterSpec dup = good;
  dup.groups[1][0].id = 0;  // process 0 in both groups
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);

  ClusterSpec port0 = good;
  port0.groups[0][1].port = 0;
  CHECK_THROWS_AS(port0.validate(), std::invalid_argument);

  ClusterSpec unknown_leader = good;
  unknown_leader.initial_leaders[7] = 0;
  CHECK_THROWS_AS(unknown_leader.validate(), std::invalid_argument);

  ClusterSpec outsider_leader = good;
  outsider_leader.initial_leaders[0] = 5;  // member of group 1, not 0
  CHECK_THROWS_AS(outsider_leader.validate(), std::invalid_argument);

  ClusterSpec bad_timeout = good;
  bad_timeout.retry_ms = 0;
  CHECK_THROWS_AS(bad_timeout.validate(), std::invalid_argument);

  ClusterSpec empty;
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
}

TEST_CASE("cluster specs expose topology, leaders and a json round trip") {
  std::vector<std::uint16_t> ports(6);
  for (std::size_t i = 0; i < 6; ++i) ports[i] = static_cast<std::uint16_t>(9100 + i);
  ClusterSpec s = two_by_three(ports);

  // Default leader is the lowest member id; explicit directory entries win.
  CHECK(s.leader_of(0) == 0);
  CHECK(s.leader_of(1) == 3);
  s.initial_leaders[1] = 4;
  CHECK(s.leader_of(1) == 4);

  const Topology topo = s.topology();
  CHECK(topo.f == 1);
  CHECK(topo.groups.at(0) == std::vector<ProcessId>{0, 1, 2});
  CHECK(topo.groups.at(1) == std::vector<ProcessId>{3, 4, 5});
  CHECK(s.find_member(4).has_value());
  CHECK(s.find_member(4)->port == ports[4]);
  CHECK_FALSE(s.find_member(99).has_value());

  const json j = s.to_json();
  const ClusterSpec back = ClusterSpec::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.leader_of(1) == 4);
  CHECK(back.groups.at(0).size() == 3);
  CHECK(back.retry_ms == s.retry_ms);

  json noformat = j;
  noformat.erase("format");
  CHECK_THROWS_AS(ClusterSpec::from_json(noformat), std::invalid_argument);

  json badaddr = j;
  badaddr["groups"]["0"][0]["addr"] = "no-port-here";
  CHECK_THROWS_AS(ClusterSpec::from_json(badaddr), std::invalid_argument);

  // The trace-header rendering: enough topology for the safety and
  // genuineness checks, flagged as a socket run.
  const json sim = s.sim_config_json();
  CHECK(sim.at("protocol") == "whitebox");
  CHECK(sim.at("transport") == true);
  CHECK(sim.at("groups").size() == 2);

  // Header configs index groups by position, so ids must be 0..n-1.
  ClusterSpec gapped;
  gapped.f = 0;
  gapped.groups[1].push_back(MemberAddr{0, "127.0.0.1", 9200});
  CHECK_THROWS_AS(gapped.sim_config_json(), std::invalid_argument);
}

TEST_CASE("merged traces sort by wall time, multicasts first, dropping torn lines") {
  TempDir dir;

  // File A: one deliver at t=5, one send at t=10.
  {
    std::ofstream f(dir.file("a.jsonl"));
    json header{{"format", 1}, {"kind", "header"}, {"config", json{{"tag", "first"}}}};
    f << header.dump() << "\n";
    TraceEvent del;
    del.t = SimTime(5);
    del.p = 0;
    del.kind = EventKind::deliver;
    del.m = MsgId{100, 1};
    del.gts = Timestamp::of(3, 0);
    f << del.to_json().dump() << "\n";
    TraceEvent snd;
    snd.t = SimTime(10);
    snd.p = 0;
    snd.kind = EventKind::send;
    snd.peer = 3;
    snd.seq = 1;
    AppMessage app;
    app.id = MsgId{100, 2};
    app.dest = {0, 1};
    app.payload = "x";
    snd.msg = MulticastMsg{app};
    f << snd.to_json().dump() << "\n";
  }

  // File B: a multicast in the same millisecond as A's send, a torn tail
  // line (killed process mid-write) and one garbage line.
  {
    std::ofstream f(dir.file("b.jsonl"));
    json header{{"format", 1}, {"kind", "header"}, {"config", json{{"tag", "second"}}}};
    f << header.dump() << "\n";
    TraceEvent mc;
    mc.t = SimTime(10);
    mc.p = 100;
    mc.kind = EventKind::multicast;
    mc.m = MsgId{100, 2};
    mc.dest = {0, 1};
    f << mc.to_json().dump() << "\n";
    f << "not json at all\n";
    f << R"({"kind":"receive","t":{"num":12,)" << "\n";  // torn
  }

  const Trace merged = merge_node_traces({dir.file("a.jsonl"), dir.file("b.jsonl")});
  CHECK(merged.config == json{{"tag", "first"}});  // first readable header wins
  REQUIRE(merged.events.size() == 3);              // torn + garbage lines dropped
  CHECK(merged.events[0].kind == EventKind::deliver);
  CHECK(merged.events[0].t == SimTime(5));
  // Within the t=10 tie the multicast sorts before the send.
  CHECK(merged.events[1].kind == EventKind::multicast);
  CHECK(merged.events[2].kind == EventKind::send);

  CHECK_THROWS_AS(merge_node_traces({dir.file("missing.jsonl")}), std::runtime_error);
}

TEST_CASE("node and client entry points reject impossible requests") {
  std::vector<std::uint16_t> ports(6);
  for (std::size_t i = 0; i < 6; ++i) ports[i] = static_cast<std::uint16_t>(9300 + i);
  const ClusterSpec spec = two_by_three(ports);
  TempDir dir;

  CHECK(run_node(spec, 42, dir.file("nope.jsonl")) == 1);  // not a member

  ClientOptions no_dest;
  no_dest.dest = {};
  CHECK(run_client(spec, no_dest, dir.file("c1.jsonl")) == 1);

  ClientOptions bad_group;
  bad_group.dest = {7};
  CHECK(run_client(spec, bad_group, dir.file("c2.jsonl")) == 1);

  ClientOptions collides;
  collides.id = 3;  // a member id
  collides.dest = {0};
  CHECK(run_client(spec, collides, dir.file("c3.jsonl")) == 1);
}

TEST_CASE("a live cluster carries client multicasts to every destination group") {
  const auto ports = free_ports(6);
  const ClusterSpec spec = two_by_three(ports);
  TempDir dir;
  LocalCluster cluster(spec, dir.path);

  ClientOptions both;
  both.id = 1000;
  both.dest = {0, 1};
  both.count = 3;
  both.timeout_ms = 20000;
  CHECK(run_client(spec, both, dir.file("client1000.jsonl")) == 0);

  ClientOptions solo;
  solo.id = 1001;
  solo.dest = {1};
  solo.count = 2;
  solo.timeout_ms = 20000;
  CHECK(run_client(spec, solo, dir.file("client1001.jsonl")) == 0);

  // Client return covers leader acknowledgement; give the DELIVER fan-out to
  // followers a moment to land before stopping the cluster.
  std::this_thread::sleep_for(std::chrono::milliseconds(700));
  cluster.stop_all();
  for (int rc : cluster.rcs) CHECK(rc == 0);

  auto paths = cluster.node_trace_paths();
  paths.push_back(dir.file("client1000.jsonl"));
  paths.push_back(dir.file("client1001.jsonl"));
  const Trace merged = merge_node_traces(paths);
  REQUIRE_FALSE(merged.config.is_null());
  REQUIRE_FALSE(merged.events.empty());

  const CheckReport safety = check_safety(merged);
  INFO(safety.table());
  CHECK(safety.pass);
  const CheckReport genuine = check_genuineness(merged);
  INFO(genuine.table());
  CHECK(genuine.pass);

  // Every message reaches a quorum of every destination group and nobody
  // outside its destination set.
  const Topology topo = spec.topology();
  for (std::uint64_t i = 1; i <= 3; ++i) {
    const auto who = deliverers_of(merged, MsgId{1000, i});
    CHECK(intersect(who, topo.members(0)).size() >= 2);
    CHECK(intersect(who, topo.members(1)).size() >= 2);
  }
  for (std::uint64_t i = 1; i <= 2; ++i) {
    const auto who = deliverers_of(merged, MsgId{1001, i});
    CHECK(intersect(who, topo.members(1)).size() >= 2);
    CHECK(intersect(who, topo.members(0)).empty());
  }
}

TEST_CASE("a follower redirects a misdirected client to the real leader") {
  const auto ports = free_ports(6);
  const ClusterSpec spec = two_by_three(ports);
  TempDir dir;
  LocalCluster cluster(spec, dir.path);

  // The client's copy of the spec names followers as leaders; the followers
  // answer with redirects and the multicast still completes.
  ClusterSpec misinformed = spec;
  misinformed.initial_leaders[0] = 2;
  misinformed.initial_leaders[1] = 4;
  ClientOptions opt;
  opt.id = 1002;
  opt.dest = {0, 1};
  opt.count = 1;
  opt.timeout_ms = 20000;
  CHECK(run_client(misinformed, opt, dir.file("client1002.jsonl")) == 0);

  std::this_thread::sleep_for(std::chrono::milliseconds(500));
  cluster.stop_all();

  auto paths = cluster.node_trace_paths();
  paths.push_back(dir.file("client1002.jsonl"));
  const Trace merged = merge_node_traces(paths);

  bool redirected = false;
  for (const auto& e : merged.events) {
    if (e.kind == EventKind::send && e.msg && std::holds_alternative<RedirectMsg>(*e.msg) &&
        e.peer == 1002) {
      redirected = true;
    }
  }
  CHECK(redirected);

  CHECK(check_safety(merged).pass);
  CHECK(check_genuineness(merged).pass);
  const auto who = deliverers_of(merged, MsgId{1002, 1});
  const Topology topo = spec.topology();
  CHECK(intersect(who, topo.members(0)).size() >= 2);
  CHECK(intersect(who, topo.members(1)).size() >= 2);
}

TEST_CASE("the group elects a replacement after its leader dies and clients follow") {
  const auto ports = free_ports(6);
  const ClusterSpec spec = two_by_three(ports);
  TempDir dir;
  LocalCluster cluster(spec, dir.path);

  // Warm-up: one message through the original leader of group 0.
  ClientOptions warm;
  warm.id = 1000;
  warm.dest = {0};
  warm.count = 1;
  warm.timeout_ms = 20000;
  REQUIRE(run_client(spec, warm, dir.file("client1000.jsonl")) == 0);

  // Silence the leader of group 0. A fresh client still believes in it,
  // finds the port closed, rotates to a follower, and lands on whichever
  // member won the election.
  cluster.stop_node(0);

  ClientOptions after;
  after.id = 1001;
  after.dest = {0};
  after.count = 1;
  after.timeout_ms = 30000;
  CHECK(run_client(spec, after, dir.file("client1001.jsonl")) == 0);

  std::this_thread::sleep_for(std::chrono::milliseconds(500));
  cluster.stop_all();
  for (int rc : cluster.rcs) CHECK(rc == 0);

  auto paths = cluster.node_trace_paths();
  paths.push_back(dir.file("client1000.jsonl"));
  paths.push_back(dir.file("client1001.jsonl"));
  const Trace merged = merge_node_traces(paths);

  // Leadership moved: some survivor campaigned on the wire.
  bool campaigned = false;
  for (const auto& e : merged.events) {
    if (e.kind == EventKind::send && e.msg && std::holds_alternative<NewLeaderMsg>(*e.msg)) {
      campaigned = true;
    }
  }
  CHECK(campaigned);

  // The post-kill message is delivered by both survivors of group 0 — the
  // full quorum that remains.
  const auto who = deliverers_of(merged, MsgId{1001, 1});
  CHECK(who.count(1) == 1);
  CHECK(who.count(2) == 1);
  CHECK(who.count(0) == 0);

  const CheckReport safety = check_safety(merged);
  INFO(safety.table());
  CHECK(safety.pass);
  const CheckReport genuine = check_genuineness(merged);
  INFO(genuine.table());
  CHECK(genuine.pass);
}
