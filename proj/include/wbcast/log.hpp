#pragma once

#include <sstream>
#include <string>

namespace wbcast {

// Verbosity from WBCAST_LOG: 0 errors only (default), 1 lifecycle events,
// 2 per-frame debug. Parsed once per process.
int log_verbosity();

namespace logdetail {

// One stderr line, emitted on destruction. Usable as a temporary:
//   WB_LOG(1) << "listening on " << port;
struct LogLine {
  explicit LogLine(int level);
  ~LogLine();
  std::ostringstream& stream() { return os; }
  std::ostringstream os;
  int level;
};

}  // namespace logdetail
}  // namespace wbcast

#define WB_LOG(lvl)                            \
  if ((lvl) > ::wbcast::log_verbosity()) {     \
  } else                                       \
    ::wbcast::logdetail::LogLine(lvl).stream()
