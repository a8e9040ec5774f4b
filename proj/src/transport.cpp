#include "wbcast/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <deque>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "wbcast/framing.hpp"
#include "wbcast/log.hpp"
#include "wbcast/whitebox.hpp"

namespace wbcast {

// ---------------------------------------------------------------------------
// ClusterSpec

Topology ClusterSpec::topology() const {
  Topology t;
  t.f = f;
  for (const auto& [g, members] : groups) {
    std::vector<ProcessId> ids;
    for (const auto& m : members) ids.push_back(m.id);
    std::sort(ids.begin(), ids.end());
    t.groups[g] = std::move(ids);
  }
  return t;
}

std::optional<MemberAddr> ClusterSpec::find_member(ProcessId p) const {
  for (const auto& [g, members] : groups) {
    for (const auto& m : members) {
      if (m.id == p) return m;
    }
  }
  return std::nullopt;
}

ProcessId ClusterSpec::leader_of(GroupId g) const {
  if (auto it = initial_leaders.find(g); it != initial_leaders.end()) return it->second;
  return topology().initial_leader(g);
}

void ClusterSpec::validate() const {
  if (protocol != "whitebox") {
    throw std::invalid_argument(
        "socket runs support only the leader-replicated protocol (whitebox); '" + protocol +
        "' has no recovery path to survive process kills");
  }
  if (groups.empty()) throw std::invalid_argument("at least one group required");
  const std::size_t want = 2 * static_cast<std::size_t>(f) + 1;
  std::set<ProcessId> seen;
  for (const auto& [g, members] : groups) {
    if (members.size() != want)
      throw std::invalid_argument("each group must have exactly 2f+1 members");
    for (const auto& m : members) {
      if (!seen.insert(m.id).second) throw std::invalid_argument("groups must be disjoint");
      if (m.port == 0) throw std::invalid_argument("every member needs a concrete port");
    }
  }
  for (const auto& [g, p] : initial_leaders) {
    auto it = groups.find(g);
    if (it == groups.end()) throw std::invalid_argument("initial leader for unknown group");
    bool member = false;
    for (const auto& m : it->second) member = member || m.id == p;
    if (!member) throw std::invalid_argument("initial leader must be a group member");
  }
  if (retry_ms <= 0 || election_ms <= 0 || heartbeat_ms <= 0)
    throw std::invalid_argument("timeouts must be positive");
}

json ClusterSpec::sim_config_json() const {
  SimConfig c;
  c.protocol = ProtocolKind::whitebox;
  c.f = f;
  GroupId next = 0;
  for (const auto& [g, members] : groups) {
    if (g != next++) throw std::invalid_argument("groups must be numbered 0..n-1");
    std::vector<ProcessId> ids;
    for (const auto& m : members) ids.push_back(m.id);
    std::sort(ids.begin(), ids.end());
    c.groups.push_back(std::move(ids));
  }
  // Nominal logical parameters: merged socket traces feed the safety and
  // genuineness checks, which only read the topology. Latency and
  // termination metrics are defined against the simulator's delta and are
  // not computed for socket runs.
  c.delta = SimTime(1);
  c.gst = SimTime(0);
  c.horizon = SimTime(std::int64_t{1} << 62);
  json j = c.to_json();
  j["transport"] = true;
  return j;
}

json ClusterSpec::to_json() const {
  json j;
  j["format"] = 1;
  j["protocol"] = protocol;
  j["f"] = f;
  json gs = json::object();
  for (const auto& [g, members] : groups) {
    json arr = json::array();
    for (const auto& m : members) {
      arr.push_back(json{{"id", m.id}, {"addr", m.host + ":" + std::to_string(m.port)}});
    }
    gs[std::to_string(g)] = std::move(arr);
  }
  j["groups"] = std::move(gs);
  json leaders = json::object();
  for (const auto& [g, p] : initial_leaders) leaders[std::to_string(g)] = p;
  j["initial_leaders"] = std::move(leaders);
  j["retry_ms"] = retry_ms;
  j["election_ms"] = election_ms;
  j["heartbeat_ms"] = heartbeat_ms;
  return j;
}

ClusterSpec ClusterSpec::from_json(const json& j) {
  if (j.value("format", 0) != 1)
    throw std::invalid_argument("cluster spec must declare \"format\": 1");
  ClusterSpec s;
  s.protocol = j.value("protocol", std::string{"whitebox"});
  s.f = j.at("f").get<std::uint32_t>();
  for (const auto& [key, arr] : j.at("groups").items()) {
    const GroupId g = static_cast<GroupId>(std::stoul(key));
    std::vector<MemberAddr> members;
    for (const auto& e : arr) {
      MemberAddr m;
      m.id = e.at("id").get<ProcessId>();
      const std::string addr = e.at("addr").get<std::string>();
      const auto colon = addr.rfind(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("member addr must be host:port, got " + addr);
      m.host = addr.substr(0, colon);
      m.port = static_cast<std::uint16_t>(std::stoul(addr.substr(colon + 1)));
      members.push_back(std::move(m));
    }
    std::sort(members.begin(), members.end(),
              [](const MemberAddr& a, const MemberAddr& b) { return a.id < b.id; });
    s.groups[g] = std::move(members);
  }
  if (j.contains("initial_leaders")) {
    for (const auto& [key, v] : j.at("initial_leaders").items()) {
      s.initial_leaders[static_cast<GroupId>(std::stoul(key))] = v.get<ProcessId>();
    }
  }
  s.retry_ms = j.value("retry_ms", 400);
  s.election_ms = j.value("election_ms", 800);
  s.heartbeat_ms = j.value("heartbeat_ms", 200);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

std::int64_t mono_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::int64_t wall_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::int64_t to_ms(const SimTime& t) { return t.numerator() / t.denominator(); }

bool set_nonblock(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  return flags >= 0 && ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) == 0;
}

int listen_on(const std::string& host, std::uint16_t port, std::string* err) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) {
    *err = std::strerror(errno);
    return -1;
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    *err = "unparseable IPv4 address: " + host;
    ::close(fd);
    return -1;
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(fd, 64) != 0 || !set_nonblock(fd)) {
    *err = std::strerror(errno);
    ::close(fd);
    return -1;
  }
  return fd;
}

// Starts a nonblocking connect; success may be immediate or pending.
int dial(const MemberAddr& to) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return -1;
  if (!set_nonblock(fd)) {
    ::close(fd);
    return -1;
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(to.port);
  if (::inet_pton(AF_INET, to.host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    return -1;
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 &&
      errno != EINPROGRESS) {
    ::close(fd);
    return -1;
  }
  return fd;
}

struct Conn {
  int fd = -1;
  ProcessId peer = 0;
  bool peer_known = false;
  bool connecting = false;  // nonblocking connect still pending
  bool dialed = false;
  FrameReader reader;
  std::string out;
};

// Per-peer reliable-channel state: outbound frames stay queued until the
// peer's cumulative ACK covers them and are replayed on every (re)connect;
// inbound frames are deduplicated by sequence number scoped to the peer's
// instance nonce, so a restarted peer starts a fresh channel.
struct PeerIo {
  std::uint64_t next_seq = 0;
  std::deque<std::pair<std::uint64_t, std::string>> unacked;
  std::uint64_t delivered_upto = 0;
  std::uint64_t in_nonce = 0;
  std::int64_t next_dial = 0;
  int backoff = 50;
};

class TraceWriter {
 public:
  TraceWriter(const std::string& path, const json& config) : f_(path, std::ios::trunc) {
    if (!f_) throw std::runtime_error("cannot open trace file " + path);
    json h{{"format", 1}, {"kind", "header"}, {"config", config}};
    f_ << h.dump() << "\n";
    f_.flush();
  }
  void row(const TraceEvent& e) {
    f_ << e.to_json().dump() << "\n";
    f_.flush();  // survive SIGKILL mid-run: every row lands on disk
  }

 private:
  std::ofstream f_;
};

std::uint64_t fresh_nonce() {
  std::random_device rd;
  std::uint64_t n = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
                    static_cast<std::uint64_t>(::getpid());
  return n ? n : 1;
}

// Common poll-loop scaffolding: connection registry, framed reads, buffered
// writes. Subclasses supply envelope handling and per-tick work.
class Endpoint {
 public:
  explicit Endpoint(ProcessId self) : self_(self) {}
  virtual ~Endpoint() {
    for (auto& [fd, c] : conns_) ::close(fd);
    if (lfd_ >= 0) ::close(lfd_);
  }

 protected:
  virtual void on_envelope(Conn& c, const Envelope& env) = 0;
  virtual void on_conn_lost(ProcessId /*peer*/) {}

  void adopt(Conn c) {
    const int fd = c.fd;
    conns_.emplace(fd, std::move(c));
  }

  void register_peer(int fd, ProcessId peer) {
    auto it = active_.find(peer);
    if (it != active_.end() && it->second != fd) close_conn(it->second);
    active_[peer] = fd;
    auto cit = conns_.find(fd);
    if (cit != conns_.end()) {
      cit->second.peer = peer;
      cit->second.peer_known = true;
    }
  }

  void close_conn(int fd) {
    auto it = conns_.find(fd);
    if (it == conns_.end()) return;
    const bool known = it->second.peer_known;
    const ProcessId peer = it->second.peer;
    ::close(fd);
    conns_.erase(it);
    if (known) {
      auto ait = active_.find(peer);
      if (ait != active_.end() && ait->second == fd) {
        active_.erase(ait);
        on_conn_lost(peer);
      }
    }
  }

  bool connected(ProcessId peer) const {
    auto it = active_.find(peer);
    if (it == active_.end()) return false;
    auto cit = conns_.find(it->second);
    return cit != conns_.end() && !cit->second.connecting;
  }

  void push_bytes(ProcessId peer, const std::string& bytes) {
    auto it = active_.find(peer);
    if (it == active_.end()) return;
    auto cit = conns_.find(it->second);
    if (cit == conns_.end() || cit->second.connecting) return;
    cit->second.out += bytes;
  }

  // One poll round: accept, read (dispatching envelopes), flush writes.
  void pump(int timeout_ms) {
    std::vector<pollfd> fds;
    std::vector<int> fd_of;
    if (lfd_ >= 0) {
      fds.push_back(pollfd{lfd_, POLLIN, 0});
      fd_of.push_back(lfd_);
    }
    for (const auto& [fd, c] : conns_) {
      short ev = POLLIN;
      if (!c.out.empty() || c.connecting) ev |= POLLOUT;
      fds.push_back(pollfd{fd, ev, 0});
      fd_of.push_back(fd);
    }
    const int n = ::poll(fds.data(), fds.size(), timeout_ms);
    if (n <= 0) return;

    for (std::size_t i = 0; i < fds.size(); ++i) {
      const int fd = fd_of[i];
      const short re = fds[i].revents;
      if (!re) continue;
      if (fd == lfd_) {
        accept_all();
        continue;
      }
      auto it = conns_.find(fd);
      if (it == conns_.end()) continue;  // closed earlier this round
      Conn& c = it->second;
      if (c.connecting && (re & (POLLOUT | POLLERR | POLLHUP))) {
        int soerr = 0;
        socklen_t len = sizeof(soerr);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &soerr, &len);
        if (soerr != 0) {
          close_conn(fd);
          continue;
        }
        c.connecting = false;
        on_dialed(c);
      }
      if (re & (POLLERR | POLLHUP)) {
        // Drain what the peer managed to send before the reset.
        read_conn(fd);
        close_conn(fd);
        continue;
      }
      if (re & POLLIN) {
        if (!read_conn(fd)) continue;
      }
      auto it2 = conns_.find(fd);
      if (it2 != conns_.end() && !it2->second.out.empty()) flush_conn(fd);
    }
  }

  virtual void on_dialed(Conn& /*c*/) {}

  void accept_all() {
    for (;;) {
      const int fd = ::accept(lfd_, nullptr, nullptr);
      if (fd < 0) return;
      set_nonblock(fd);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      Conn c;
      c.fd = fd;
      adopt(std::move(c));
    }
  }

  // False when the connection died and was closed.
  bool read_conn(int fd) {
    auto it = conns_.find(fd);
    if (it == conns_.end()) return false;
    Conn& c = it->second;
    char buf[16384];
    for (;;) {
      const ssize_t r = ::read(fd, buf, sizeof(buf));
      if (r > 0) {
        c.reader.append(std::string_view(buf, static_cast<std::size_t>(r)));
        if (r == static_cast<ssize_t>(sizeof(buf))) continue;
        break;
      }
      if (r < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
      if (r < 0 && errno == EINTR) continue;
      drain_envelopes(fd);
      close_conn(fd);
      return false;
    }
    return drain_envelopes(fd);
  }

  bool drain_envelopes(int fd) {
    for (;;) {
      auto it = conns_.find(fd);
      if (it == conns_.end()) return false;
      std::string err;
      auto env = it->second.reader.next(&err);
      if (!env) {
        if (!err.empty()) {
          WB_LOG(0) << "p" << self_ << ": protocol error on fd " << fd << ": " << err;
          close_conn(fd);
          return false;
        }
        return true;
      }
      on_envelope(it->second, *env);
    }
  }

  void flush_conn(int fd) {
    auto it = conns_.find(fd);
    if (it == conns_.end()) return;
    Conn& c = it->second;
    while (!c.out.empty()) {
      const ssize_t w = ::write(fd, c.out.data(), c.out.size());
      if (w > 0) {
        c.out.erase(0, static_cast<std::size_t>(w));
        continue;
      }
      if (w < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) return;
      if (w < 0 && errno == EINTR) continue;
      close_conn(fd);
      return;
    }
  }

  void flush_all() {
    std::vector<int> fds;
    for (const auto& [fd, c] : conns_) {
      if (!c.out.empty() && !c.connecting) fds.push_back(fd);
    }
    for (int fd : fds) flush_conn(fd);
  }

  ProcessId self_;
  int lfd_ = -1;
  std::map<int, Conn> conns_;
  std::map<ProcessId, int> active_;
};

// ---------------------------------------------------------------------------
// Node

class NodeProcess : public Endpoint {
 public:
  NodeProcess(const ClusterSpec& spec, ProcessId id, const std::string& trace_path)
      : Endpoint(id),
        spec_(spec),
        topo_(spec.topology()),
        group_(*topo_.group_of(id)),
        node_(id, group_, topo_, initial_leaders(spec), Mutations{},
              SimTime(spec.retry_ms), SimTime(2 * spec.election_ms)),
        trace_(trace_path, node_trace_config(spec, id)),
        nonce_(fresh_nonce()) {
    const auto& members = topo_.members(group_);
    rank_ = static_cast<int>(std::find(members.begin(), members.end(), id) - members.begin());
    for (const auto& [g, ms] : topo_.groups) {
      for (ProcessId p : ms) {
        if (p != self_) last_heard_[p] = mono_ms();
      }
    }
  }

  int run(const std::atomic<bool>* stop) {
    const auto me = *spec_.find_member(self_);
    std::string err;
    // Spec'd behavior: a taken address retries with backoff instead of
    // aborting, so restarts can overlap a dying predecessor.
    for (int attempt = 0; lfd_ < 0; ++attempt) {
      lfd_ = listen_on(me.host, me.port, &err);
      if (lfd_ >= 0) break;
      if (attempt >= 50) {
        WB_LOG(0) << "p" << self_ << ": cannot listen on " << me.host << ":" << me.port << ": "
                  << err;
        return 1;
      }
      ::usleep(100 * 1000);
      if (stop && stop->load()) return 1;
    }
    WB_LOG(1) << "p" << self_ << ": listening on " << me.host << ":" << me.port << " (group "
              << group_ << ", rank " << rank_ << ")";
    next_hb_ = mono_ms();

    while (!(stop && stop->load())) {
      const std::int64_t now = mono_ms();
      fire_timers(now);
      heartbeat(now);
      maybe_campaign(now);
      redial(now);
      flush_all();
      pump(static_cast<int>(std::min<std::int64_t>(25, next_deadline(now) - now < 0
                                                           ? 0
                                                           : next_deadline(now) - now)));
    }
    WB_LOG(1) << "p" << self_ << ": shutting down";
    return 0;
  }

 private:
  static std::map<GroupId, ProcessId> initial_leaders(const ClusterSpec& spec) {
    std::map<GroupId, ProcessId> leaders;
    for (const auto& [g, members] : spec.groups) leaders[g] = spec.leader_of(g);
    return leaders;
  }

  static json node_trace_config(const ClusterSpec& spec, ProcessId id) {
    json j = spec.sim_config_json();
    j["node"] = id;
    return j;
  }

  std::int64_t next_deadline(std::int64_t now) const {
    std::int64_t d = now + 25;
    if (!timers_.empty()) d = std::min(d, timers_.begin()->first);
    d = std::min(d, next_hb_);
    return std::max(d, now);
  }

  void fire_timers(std::int64_t now) {
    while (!timers_.empty() && timers_.begin()->first <= now) {
      TimerRequest req = timers_.begin()->second;
      timers_.erase(timers_.begin());
      auto out = node_.on_timer(req);
      // Quorum-wait expiries are advisory here: elections are driven by
      // heartbeat staleness, the transport analogue of the oracle gate.
      if (!out.fx.sends.empty()) {
        TraceEvent row;
        row.t = SimTime(wall_ms());
        row.p = self_;
        row.kind = EventKind::timer;
        row.m = req.m;
        row.timer = to_string(req.kind);
        trace_.row(row);
      }
      apply_effects(std::move(out.fx));
    }
  }

  void heartbeat(std::int64_t now) {
    if (now < next_hb_) return;
    next_hb_ = now + spec_.heartbeat_ms;
    Envelope env;
    env.from = self_;
    env.seq = 0;
    env.ctl = ControlKind::heartbeat;
    env.group = group_;
    env.leader = node_.status() == Status::leader;
    for (const auto& [g, members] : topo_.groups) {
      for (ProcessId p : members) {
        if (p == self_ || !connected(p)) continue;
        env.to = p;
        push_bytes(p, encode_frame(env));
      }
    }
  }

  void maybe_campaign(std::int64_t now) {
    const ProcessId lead = node_.cur_leader(group_);
    if (lead == self_ || node_.status() == Status::recovering) return;
    const std::int64_t budget = static_cast<std::int64_t>(spec_.election_ms) * (1 + rank_);
    if (now - last_heard_[lead] <= budget) return;
    WB_LOG(1) << "p" << self_ << ": leader p" << lead << " silent for " << now - last_heard_[lead]
              << "ms, campaigning";
    last_heard_[lead] = now;  // re-arm; recovery timers drive retries from here
    apply_effects(node_.recover());
  }

  void redial(std::int64_t now) {
    for (const auto& [g, members] : topo_.groups) {
      for (ProcessId p : members) {
        if (p <= self_) continue;  // the lower id dials, the higher accepts
        if (active_.count(p)) continue;
        auto& pio = io_[p];
        if (now < pio.next_dial) continue;
        pio.next_dial = now + pio.backoff;
        pio.backoff = std::min(pio.backoff * 2, 1000);
        const auto addr = spec_.find_member(p);
        if (!addr) continue;
        const int fd = dial(*addr);
        if (fd < 0) continue;
        Conn c;
        c.fd = fd;
        c.connecting = true;
        c.dialed = true;
        c.peer = p;
        c.peer_known = true;
        adopt(std::move(c));
      }
    }
  }

  void on_dialed(Conn& c) override {
    register_peer(c.fd, c.peer);
    io_[c.peer].backoff = 50;
    hello_and_replay(c.peer);
  }

  void hello_and_replay(ProcessId peer) {
    Envelope hello;
    hello.from = self_;
    hello.to = peer;
    hello.seq = nonce_;
    hello.ctl = ControlKind::hello;
    std::string bytes = encode_frame(hello);
    for (const auto& [seq, frame] : io_[peer].unacked) bytes += frame;
    push_bytes(peer, bytes);
  }

  void on_envelope(Conn& c, const Envelope& env) override {
    last_heard_[env.from] = mono_ms();
    switch (env.ctl) {
      case ControlKind::hello: {
        register_peer(c.fd, env.from);
        auto& pio = io_[env.from];
        if (pio.in_nonce != env.seq) {
          pio.in_nonce = env.seq;
          pio.delivered_upto = 0;  // a fresh instance starts a fresh channel
        }
        if (topo_.is_member(env.from) && env.from < self_) {
          // We never dial this peer; answer its HELLO so both directions of
          // the duplex channel replay their backlog.
          hello_and_replay(env.from);
        }
        return;
      }
      case ControlKind::ack: {
        auto& q = io_[env.from].unacked;
        while (!q.empty() && q.front().first <= env.ack_upto) q.pop_front();
        return;
      }
      case ControlKind::heartbeat:
        if (env.leader) node_.set_cur_leader(env.group, env.from);
        return;
      case ControlKind::none:
        break;
    }
    if (!env.body) return;
    if (!c.peer_known) register_peer(c.fd, env.from);  // client that skipped HELLO
    auto& pio = io_[env.from];
    if (env.seq <= pio.delivered_upto) {
      send_ack(env.from, pio.delivered_upto);
      return;
    }
    // Jumps past delivered_upto+1 mean the peer pruned frames an earlier
    // instance of us acknowledged; as a fresh instance we accept forward.
    pio.delivered_upto = env.seq;
    TraceEvent row;
    row.t = SimTime(wall_ms());
    row.p = self_;
    row.kind = EventKind::receive;
    row.peer = env.from;
    row.seq = env.seq;
    row.msg = *env.body;
    trace_.row(row);
    apply_effects(node_.on_message(env.from, *env.body));
    send_ack(env.from, pio.delivered_upto);
  }

  void send_ack(ProcessId to, std::uint64_t upto) {
    Envelope env;
    env.from = self_;
    env.to = to;
    env.ctl = ControlKind::ack;
    env.ack_upto = upto;
    push_bytes(to, encode_frame(env));
  }

  void apply_effects(Effects fx) {
    const SimTime t{wall_ms()};
    for (const auto& c : fx.committed) {
      TraceEvent row;
      row.t = t;
      row.p = self_;
      row.kind = EventKind::commit;
      row.m = c.m;
      row.lts = c.lts;
      row.gts = c.gts;
      trace_.row(row);
    }
    for (const auto& d : fx.delivered) {
      TraceEvent row;
      row.t = t;
      row.p = self_;
      row.kind = EventKind::deliver;
      row.m = d.m;
      row.gts = d.gts;
      trace_.row(row);
      WB_LOG(1) << "p" << self_ << ": delivered " << to_string(d.m) << " at gts "
                << to_string(d.gts);
    }
    for (const auto& tr : fx.timers) timers_.emplace(mono_ms() + to_ms(tr.delay), tr);
    for (auto& s : fx.sends) {
      if (s.to == self_) {
        apply_effects(node_.on_message(self_, s.msg));
      } else {
        send_protocol(s.to, s.msg);
      }
    }
  }

  void send_protocol(ProcessId to, const ProtocolMessage& msg) {
    auto& pio = io_[to];
    Envelope env;
    env.from = self_;
    env.to = to;
    env.seq = ++pio.next_seq;
    env.body = msg;
    const std::string bytes = encode_frame(env);
    TraceEvent row;
    row.t = SimTime(wall_ms());
    row.p = self_;
    row.kind = EventKind::send;
    row.peer = to;
    row.seq = env.seq;
    row.msg = msg;
    trace_.row(row);
    if (topo_.is_member(to)) {
      pio.unacked.emplace_back(env.seq, bytes);
    }
    // Clients are reached only while their connection lasts; redirects are
    // advisory and not replayed.
    push_bytes(to, bytes);
  }

  ClusterSpec spec_;
  Topology topo_;
  GroupId group_;
  int rank_ = 0;
  WhiteboxNode node_;
  TraceWriter trace_;
  std::uint64_t nonce_;
  std::map<ProcessId, PeerIo> io_;
  std::multimap<std::int64_t, TimerRequest> timers_;
  std::map<ProcessId, std::int64_t> last_heard_;
  std::int64_t next_hb_ = 0;
};

// ---------------------------------------------------------------------------
// Client

class ClientProcess : public Endpoint {
 public:
  ClientProcess(const ClusterSpec& spec, const ClientOptions& opt, const std::string& trace_path)
      : Endpoint(opt.id),
        spec_(spec),
        opt_(opt),
        topo_(spec.topology()),
        trace_(trace_path, client_trace_config(spec, opt)),
        nonce_(fresh_nonce()) {
    for (const auto& [g, members] : topo_.groups) believed_[g] = spec.leader_of(g);
  }

  int run(const std::atomic<bool>* stop) {
    for (int i = 1; i <= opt_.count; ++i) {
      Item item;
      item.app.id = MsgId{opt_.id, static_cast<std::uint64_t>(i)};
      item.app.dest = opt_.dest;
      item.app.payload = opt_.payload_prefix + "-" + std::to_string(i);
      items_.push_back(std::move(item));
      for (GroupId g : opt_.dest) {
        pend_.push_back(Pending{items_.size() - 1, g, false, 0});
      }
    }
    const std::int64_t deadline = mono_ms() + opt_.timeout_ms;

    while (!(stop && stop->load())) {
      const std::int64_t now = mono_ms();
      if (done()) {
        WB_LOG(1) << "client p" << opt_.id << ": all " << items_.size()
                  << " messages acknowledged by every destination leader";
        return 0;
      }
      if (now >= deadline) break;
      tick(now);
      flush_all();
      pump(20);
    }
    std::size_t open = 0;
    for (const auto& p : pend_) open += p.done ? 0 : 1;
    WB_LOG(0) << "client p" << opt_.id << ": timed out with " << open
              << " destination acknowledgements outstanding";
    return 1;
  }

 private:
  struct Item {
    AppMessage app;
    bool announced = false;  // multicast trace row written
  };
  struct Pending {
    std::size_t item = 0;
    GroupId g = 0;
    bool done = false;
    std::int64_t next_send = 0;
  };

  static json client_trace_config(const ClusterSpec& spec, const ClientOptions& opt) {
    json j = spec.sim_config_json();
    j["client"] = opt.id;
    return j;
  }

  bool done() const {
    for (const auto& p : pend_) {
      if (!p.done) return false;
    }
    return true;
  }

  void tick(std::int64_t now) {
    for (std::size_t i = 0; i < pend_.size(); ++i) {
      Pending& p = pend_[i];
      if (p.done || now < p.next_send) continue;
      const ProcessId target = believed_.at(p.g);
      if (!ensure_conn(target, now)) {
        // A believed leader that refuses connections (killed process, closed
        // port) never acknowledges anything, so the miss counter below would
        // never advance. Rotate once the silence outlasts an election period;
        // a live follower then answers with a REDIRECT to the real leader.
        const auto down = unreachable_since_.try_emplace(p.g, now).first;
        if (now - down->second > spec_.election_ms) {
          misses_[p.g] = 0;
          rotate(p.g);
          unreachable_since_.erase(p.g);
        }
        p.next_send = now + 50;
        continue;
      }
      unreachable_since_.erase(p.g);
      if (p.next_send != 0) {
        // A re-send: the previous target never acknowledged. After two
        // silent probes rotate through the group so a dead leader cannot
        // pin us; followers answer with a REDIRECT to the live one.
        if (++misses_[p.g] >= 2) {
          misses_[p.g] = 0;
          rotate(p.g);
          p.next_send = now;
          continue;
        }
      }
      Item& item = items_[p.item];
      if (!item.announced) {
        item.announced = true;
        TraceEvent row;
        row.t = SimTime(wall_ms());
        row.p = opt_.id;
        row.kind = EventKind::multicast;
        row.m = item.app.id;
        row.dest = item.app.dest;
        trace_.row(row);
      }
      auto& pio = io_[target];
      Envelope env;
      env.from = opt_.id;
      env.to = target;
      env.seq = ++pio.next_seq;
      env.body = MulticastMsg{item.app};
      const std::string bytes = encode_frame(env);
      pio.unacked.emplace_back(env.seq, bytes);
      push_bytes(target, bytes);
      watch_[target][env.seq] = i;
      p.next_send = now + spec_.election_ms;
    }
  }

  void rotate(GroupId g) {
    const auto& members = topo_.members(g);
    auto it = std::find(members.begin(), members.end(), believed_.at(g));
    const std::size_t at = it == members.end() ? 0 : (it - members.begin());
    believed_[g] = members[(at + 1) % members.size()];
    WB_LOG(1) << "client p" << opt_.id << ": probing p" << believed_[g] << " for group " << g;
  }

  bool ensure_conn(ProcessId target, std::int64_t now) {
    if (connected(target)) return true;
    auto& pio = io_[target];
    if (active_.count(target) || now < pio.next_dial) return false;  // dial in flight
    pio.next_dial = now + pio.backoff;
    pio.backoff = std::min(pio.backoff * 2, 500);
    const auto addr = spec_.find_member(target);
    if (!addr) return false;
    const int fd = dial(*addr);
    if (fd < 0) return false;
    Conn c;
    c.fd = fd;
    c.connecting = true;
    c.dialed = true;
    c.peer = target;
    c.peer_known = true;
    adopt(std::move(c));
    return false;
  }

  void on_dialed(Conn& c) override {
    register_peer(c.fd, c.peer);
    io_[c.peer].backoff = 50;
    Envelope hello;
    hello.from = opt_.id;
    hello.to = c.peer;
    hello.seq = nonce_;
    hello.ctl = ControlKind::hello;
    std::string bytes = encode_frame(hello);
    for (const auto& [seq, frame] : io_[c.peer].unacked) bytes += frame;
    push_bytes(c.peer, bytes);
  }

  void on_envelope(Conn& /*c*/, const Envelope& env) override {
    if (env.ctl == ControlKind::ack) {
      auto& q = io_[env.from].unacked;
      while (!q.empty() && q.front().first <= env.ack_upto) q.pop_front();
      auto& w = watch_[env.from];
      while (!w.empty() && w.begin()->first <= env.ack_upto) {
        Pending& p = pend_[w.begin()->second];
        // Processing by a follower is not acceptance: only an ack from the
        // process still believed to lead the group settles the send.
        if (believed_.at(p.g) == env.from) {
          p.done = true;
          misses_[p.g] = 0;
        }
        w.erase(w.begin());
      }
      return;
    }
    if (env.body) {
      if (const auto* r = std::get_if<RedirectMsg>(&*env.body)) {
        if (believed_.at(r->group) != r->leader) {
          WB_LOG(1) << "client p" << opt_.id << ": redirected to p" << r->leader << " for group "
                    << r->group;
          believed_[r->group] = r->leader;
          misses_[r->group] = 0;
          for (auto& p : pend_) {
            if (p.g == r->group && !p.done) p.next_send = 0;
          }
        }
      }
      return;
    }
  }

  ClusterSpec spec_;
  ClientOptions opt_;
  Topology topo_;
  TraceWriter trace_;
  std::uint64_t nonce_;
  std::vector<Item> items_;
  std::vector<Pending> pend_;
  std::map<GroupId, ProcessId> believed_;
  std::map<GroupId, int> misses_;
  std::map<GroupId, std::int64_t> unreachable_since_;  // believed leader refuses connections
  std::map<ProcessId, PeerIo> io_;
  std::map<ProcessId, std::map<std::uint64_t, std::size_t>> watch_;
};

}  // namespace

int run_node(const ClusterSpec& spec, ProcessId id, const std::string& trace_path,
             const std::atomic<bool>* stop) {
  spec.validate();
  if (!spec.find_member(id)) {
    WB_LOG(0) << "process " << id << " does not appear in the cluster spec";
    return 1;
  }
  try {
    NodeProcess node(spec, id, trace_path);
    return node.run(stop);
  } catch (const std::exception& e) {
    WB_LOG(0) << "node p" << id << ": fatal: " << e.what();
    return 1;
  }
}

int run_client(const ClusterSpec& spec, const ClientOptions& opt, const std::string& trace_path,
               const std::atomic<bool>* stop) {
  spec.validate();
  if (opt.dest.empty() || opt.count < 1) {
    WB_LOG(0) << "client needs a destination set and a positive count";
    return 1;
  }
  for (GroupId g : opt.dest) {
    if (!spec.groups.count(g)) {
      WB_LOG(0) << "client destination group " << g << " not in the spec";
      return 1;
    }
  }
  if (spec.find_member(opt.id)) {
    WB_LOG(0) << "client id " << opt.id << " collides with a member";
    return 1;
  }
  try {
    ClientProcess client(spec, opt, trace_path);
    return client.run(stop);
  } catch (const std::exception& e) {
    WB_LOG(0) << "client p" << opt.id << ": fatal: " << e.what();
    return 1;
  }
}

Trace merge_node_traces(const std::vector<std::string>& paths) {
  Trace merged;
  struct Row {
    SimTime t{0};
    int prio = 1;
    std::size_t ord = 0;
    TraceEvent e;
  };
  std::vector<Row> rows;
  std::size_t ord = 0;
  std::size_t skipped = 0;
  for (const auto& path : paths) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read trace file " + path);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const std::exception&) {
        ++skipped;  // torn tail line of a killed process
        continue;
      }
      if (j.value("kind", std::string{}) == "header") {
        if (merged.config.is_null()) merged.config = j.value("config", json::object());
        continue;
      }
      try {
        Row r;
        r.e = TraceEvent::from_json(j);
        r.t = r.e.t;
        r.prio = r.e.kind == EventKind::multicast ? 0 : 1;
        r.ord = ord++;
        rows.push_back(std::move(r));
      } catch (const std::exception&) {
        ++skipped;
      }
    }
  }
  if (skipped) {
    WB_LOG(1) << "merge: dropped " << skipped << " unparseable trace line(s)";
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.t, a.prio, a.ord) < std::tie(b.t, b.prio, b.ord);
  });
  merged.events.reserve(rows.size());
  for (auto& r : rows) merged.events.push_back(std::move(r.e));
  return merged;
}

}  // namespace wbcast
