#include "wbcast/protocol.hpp"

#include <algorithm>
#include <stdexcept>

namespace wbcast {

std::string to_string(TimerKind k) {
  switch (k) {
    case TimerKind::retry: return "retry";
    case TimerKind::accept_quorum: return "accept_quorum";
    case TimerKind::newleader_quorum: return "newleader_quorum";
    case TimerKind::newstate_quorum: return "newstate_quorum";
    case TimerKind::recovery_sync: return "recovery_sync";
    case TimerKind::client_retry: return "client_retry";
  }
  throw std::logic_error("unreachable timer kind");
}

bool Topology::is_member(ProcessId p) const { return group_of(p).has_value(); }

std::optional<GroupId> Topology::group_of(ProcessId p) const {
  for (const auto& [g, members] : groups)
    if (std::binary_search(members.begin(), members.end(), p)) return g;
  return std::nullopt;
}

const std::vector<ProcessId>& Topology::members(GroupId g) const {
  auto it = groups.find(g);
  if (it == groups.end()) throw std::invalid_argument("unknown group " + std::to_string(g));
  return it->second;
}

ProcessId Topology::initial_leader(GroupId g) const { return members(g).front(); }

}  // namespace wbcast
