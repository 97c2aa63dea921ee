#pragma once

#include <string>

namespace potlab {

std::string version();
std::string eigen_version();

}  // namespace potlab
