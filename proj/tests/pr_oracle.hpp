#pragma once

#include <set>
#include <vector>

#include "objloop/evaluation.hpp"

namespace objloop::test {

struct PrCounts {
  int tp = 0, fp = 0, fn = 0, events = 0;
};

// Straight recount from the attempt log: first label every attempt with its
// event index, then tally.
inline PrCounts CountPrOracle(const std::vector<LoopAttempt>& log,
                              double threshold, double tau_l) {
  std::vector<int> event_of(log.size(), -1);
  int events = 0;
  for (size_t i = 0; i < log.size(); ++i) {
    if (!log[i].opportunity) continue;
    const bool starts = i == 0 || !log[i - 1].opportunity;
    if (starts) ++events;
    event_of[i] = events - 1;
  }
  PrCounts c;
  c.events = events;
  std::set<int> hit;
  for (size_t i = 0; i < log.size(); ++i) {
    const LoopAttempt& a = log[i];
    if (!(a.score > 0.0 && a.score >= threshold)) continue;
    const Vec3 d = a.est_position - a.gt_position;
    const bool ok = d.x() * d.x() + d.y() * d.y() + d.z() * d.z() <= tau_l * tau_l;
    if (ok) {
      ++c.tp;
      if (event_of[i] >= 0) hit.insert(event_of[i]);
    } else {
      ++c.fp;
    }
  }
  c.fn = events - int(hit.size());
  return c;
}

}  // namespace objloop::test
