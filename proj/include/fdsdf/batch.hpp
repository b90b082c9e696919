#pragma once

#include <vector>

#include "types.hpp"

namespace fdsdf {

/// One iteration's worth of sample points, all in normalized coordinates.
struct TrainingBatch {
  std::vector<Vec3> surface;     // drawn from the input cloud
  std::vector<Vec3> offsurface;  // uniform in the normalized cube
  std::vector<Vec3> shell;       // surface points plus isotropic noise
};

}  // namespace fdsdf
