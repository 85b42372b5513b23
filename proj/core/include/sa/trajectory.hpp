#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sa/types.hpp"

namespace sa {

// Quantities evaluated at w_k before the (k+1)-th update.
struct TrajectoryRecord {
  std::int64_t k = 0;
  double gamma = 0.0;  // gamma_{k+1}
  double lyap_w = 0.0;
  double lyap_v = 0.0;
  double normh2 = 0.0;
};

struct TrajectoryLog {
  std::int64_t replicate = 0;
  std::vector<TrajectoryRecord> records;
  ParamVec final_w;
  // w_0 .. w_{T-1}; filled only when requested (random stopping and
  // weighted averaging need them, plain runs do not).
  std::vector<ParamVec> iterates;

  double sum_w() const {
    double s = 0.0;
    for (const auto& r : records) s += r.lyap_w;
    return s;
  }

  // Canonical byte serialization; reproducibility tests compare these.
  std::string serialize() const;
};

}  // namespace sa
