#include "wbcast/explorer.hpp"

#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

#include "wbcast/whitebox.hpp"

namespace wbcast {

namespace {

struct PendingInject {
  MsgId m;
  std::vector<GroupId> dest;
  ProcessId sender = 0;
};

// One point of the search space: full node states, per-(from,to) FIFO channel
// contents, and which workload entries are still to be injected. The derived
// maps repeat information already present in node state (so they are excluded
// from the canonical form) but make the per-transition assertions O(log n).
struct World {
  std::map<ProcessId, WhiteboxNode> nodes;
  std::map<std::pair<ProcessId, ProcessId>, std::deque<ProtocolMessage>> chans;
  std::vector<bool> injected;
  // Deliveries a process actually performed. Part of the canonical form: the
  // node's own delivered flag marks delivery as initiated at the committing
  // leader, so a swallowed out-of-order delivery would otherwise collapse
  // into the same state as a completed one.
  std::map<ProcessId, std::set<MsgId>> arrived;

  std::map<MsgId, Timestamp> gts_of;         // first gts seen per message
  std::map<Timestamp, MsgId> gts_owner;      // reverse direction
  std::map<ProcessId, Timestamp> last_gts;   // last delivered gts per process

  std::size_t pending(std::size_t uninjected) const {
    std::size_t n = uninjected;
    for (const auto& [key, q] : chans) n += q.size();
    return n;
  }
};

struct Search {
  const SimConfig& cfg;
  const ExploreLimits& limits;
  Topology topo;
  std::vector<PendingInject> workload;
  ExploreReport rep;

  void violation(std::string what) {
    if (rep.violations.size() < 32) rep.violations.push_back(std::move(what));
  }

  void check_gts(World& w, ProcessId at, const DeliveryRecord& r, const char* verb) {
    auto [it, fresh] = w.gts_of.emplace(r.m, r.gts);
    if (!fresh && it->second != r.gts) {
      violation("message " + to_string(r.m) + " " + verb + " at p" + std::to_string(at) +
                " with gts " + to_string(r.gts) + " but earlier carried " +
                to_string(it->second));
    }
    auto [oit, ofresh] = w.gts_owner.emplace(r.gts, r.m);
    if (!ofresh && oit->second != r.m) {
      violation("gts " + to_string(r.gts) + " assigned to both " + to_string(oit->second) +
                " and " + to_string(r.m));
    }
  }

  // Mirrors the simulator's effect handling: commit/deliver records first,
  // then sends in order with zero-delay self sends dispatched inline.
  void apply_effects(World& w, ProcessId at, Effects&& fx) {
    for (const auto& c : fx.committed) check_gts(w, at, c, "committed");
    for (const auto& d : fx.delivered) {
      ++rep.deliveries;
      check_gts(w, at, d, "delivered");
      w.arrived[at].insert(d.m);
      auto& last = w.last_gts[at];
      if (!(last < d.gts)) {
        violation("p" + std::to_string(at) + " delivered " + to_string(d.m) + " with gts " +
                  to_string(d.gts) + " after delivering gts " + to_string(last));
      }
      last = d.gts;
    }
    for (auto& s : fx.sends) {
      if (s.to == at) {
        Effects sub = w.nodes.at(at).on_message(at, s.msg);
        apply_effects(w, at, std::move(sub));
      } else if (w.nodes.count(s.to)) {
        w.chans[{at, s.to}].push_back(std::move(s.msg));
      }
      // Sends to clients (redirects) are dropped: explorer clients are
      // write-only and leaders never change here.
    }
  }

  std::size_t uninjected(const World& w) const {
    std::size_t n = 0;
    for (bool b : w.injected) {
      if (!b) ++n;
    }
    return n;
  }

  std::string canonical(const World& w) const {
    std::ostringstream os;
    for (const auto& [p, node] : w.nodes) {
      os << 'n' << p << '=' << node.debug_state().dump() << ';';
    }
    for (const auto& [key, q] : w.chans) {
      if (q.empty()) continue;
      os << 'c' << key.first << '>' << key.second << '=';
      for (const auto& m : q) os << to_json(m).dump() << '|';
      os << ';';
    }
    for (const auto& [p, ms] : w.arrived) {
      os << 'a' << p << '=';
      for (const auto& m : ms) os << to_string(m) << ',';
      os << ';';
    }
    os << 'i';
    for (bool b : w.injected) os << (b ? '1' : '0');
    return os.str();
  }

  static std::pair<std::uint64_t, std::uint64_t> fingerprint(const std::string& s) {
    std::uint64_t a = 1469598103934665603ull;   // FNV-1a
    std::uint64_t b = 0xcbf29ce484222325ull ^ 0x9e3779b97f4a7c15ull;
    for (unsigned char ch : s) {
      a = (a ^ ch) * 1099511628211ull;
      b = (b ^ ch) * 0x100000001b3ull;
      b ^= b >> 29;
    }
    return {a, b};
  }

  void check_terminal(const World& w) {
    ++rep.terminals;
    for (const auto& entry : workload) {
      for (GroupId g : entry.dest) {
        for (ProcessId p : topo.members(g)) {
          auto it = w.arrived.find(p);
          if (it == w.arrived.end() || !it->second.count(entry.m)) {
            violation("drained state where p" + std::to_string(p) + " never delivered " +
                      to_string(entry.m));
            return;  // one report per terminal is plenty
          }
        }
      }
    }
  }

  void run() {
    World init;
    std::map<GroupId, ProcessId> leaders;
    for (const auto& [g, members] : topo.groups) leaders[g] = topo.initial_leader(g);
    const SimTime never{1 << 20};
    for (const auto& [g, members] : topo.groups) {
      for (ProcessId p : members) {
        init.nodes.emplace(p, WhiteboxNode(p, g, topo, leaders, cfg.mutations, never, never));
      }
    }
    init.injected.assign(workload.size(), false);

    std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
    std::vector<World> stack;
    seen.insert(fingerprint(canonical(init)));
    stack.push_back(std::move(init));
    rep.states = 1;
    rep.complete = true;

    auto admit = [&](World&& w) {
      if (!rep.complete) return;  // the state cap tripped; stop admitting
      if (w.pending(uninjected(w)) > limits.max_pending) {
        ++rep.pruned_pending;
        return;
      }
      if (!seen.insert(fingerprint(canonical(w))).second) return;
      if (++rep.states > limits.max_states) {
        rep.complete = false;
        return;
      }
      stack.push_back(std::move(w));
    };

    while (!stack.empty() && rep.complete) {
      World w = std::move(stack.back());
      stack.pop_back();

      bool any = false;
      // Inject one still-pending workload entry.
      for (std::size_t i = 0; i < workload.size(); ++i) {
        if (w.injected[i]) continue;
        any = true;
        ++rep.transitions;
        World next = w;
        next.injected[i] = true;
        const auto& entry = workload[i];
        AppMessage app;
        app.id = entry.m;
        app.dest = entry.dest;
        app.payload = "m" + to_string(entry.m);
        for (GroupId g : entry.dest) {
          next.chans[{entry.sender, leaders.at(g)}].push_back(MulticastMsg{app});
        }
        admit(std::move(next));
      }
      // Deliver the head of one channel.
      for (const auto& [key, q] : w.chans) {
        if (q.empty()) continue;
        any = true;
        ++rep.transitions;
        World next = w;
        auto& nq = next.chans.at(key);
        ProtocolMessage msg = std::move(nq.front());
        nq.pop_front();
        if (nq.empty()) next.chans.erase(key);
        Effects fx = next.nodes.at(key.second).on_message(key.first, msg);
        apply_effects(next, key.second, std::move(fx));
        admit(std::move(next));
      }
      if (!any) check_terminal(w);
    }

    rep.ok = rep.complete && rep.violations.empty();
  }
};

}  // namespace

ExploreReport explore(const SimConfig& cfg, const ExploreLimits& limits) {
  Search s{cfg, limits, cfg.topology(), {}, {}};
  std::map<ProcessId, std::uint64_t> seq;
  for (const auto& w : cfg.workload) {
    PendingInject pi;
    pi.m = MsgId{w.sender, ++seq[w.sender]};
    pi.dest = w.dest;
    pi.sender = w.sender;
    s.workload.push_back(std::move(pi));
  }
  s.run();
  return s.rep;
}

}  // namespace wbcast
