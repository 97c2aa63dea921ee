#include "potlab/version.hpp"

#include <Eigen/Core>

#ifndef POTLAB_VERSION
#define POTLAB_VERSION "unknown"
#endif

namespace potlab {

std::string version() { return POTLAB_VERSION; }

std::string eigen_version() {
  return std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION);
}

}  // namespace potlab
