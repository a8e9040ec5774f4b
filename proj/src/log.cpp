#include "wbcast/log.hpp"

#include <cstdio>
#include <cstdlib>

namespace wbcast {

int log_verbosity() {
  static const int level = [] {
    const char* v = std::getenv("WBCAST_LOG");
    if (!v || !*v) return 0;
    return std::atoi(v);
  }();
  return level;
}

namespace logdetail {

LogLine::LogLine(int lvl) : level(lvl) {}

LogLine::~LogLine() {
  std::fprintf(stderr, "[wbcast%s] %s\n", level >= 2 ? ":dbg" : "", os.str().c_str());
  std::fflush(stderr);
}

}  // namespace logdetail
}  // namespace wbcast
