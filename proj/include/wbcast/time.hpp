#pragma once

#include <boost/rational.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wbcast {

// Simulated time is exact: a rational number of abstract time units.
// Rendered as "num/den" in every JSON surface so traces round-trip without
// floating-point drift and equality assertions ("delivered at exactly 3δ")
// are meaningful.
using SimTime = boost::rational<std::int64_t>;

inline std::string to_string(const SimTime& t) {
  return std::to_string(t.numerator()) + "/" + std::to_string(t.denominator());
}

// Accepts "num/den", "num", and (leniently) leading '-' on the numerator.
inline SimTime sim_time_from_string(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("empty time literal");
  auto slash = s.find('/');
  try {
    if (slash == std::string::npos) return SimTime(std::stoll(s), 1);
    std::int64_t num = std::stoll(s.substr(0, slash));
    std::int64_t den = std::stoll(s.substr(slash + 1));
    if (den == 0) throw std::invalid_argument("zero denominator");
    return SimTime(num, den);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad time literal: " + s);
  }
}

}  // namespace wbcast
