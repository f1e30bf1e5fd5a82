#pragma once

#include "infwide/tensor.hpp"

#include <cstdint>

namespace infwide {

/// Procedural night scene, [1,3,H,W] in [0,1]: dark sky and facades, lit
/// windows, and small light sources that reach full scale.
TensorD render_scene(std::uint64_t seed, Index height, Index width);

} // namespace infwide
