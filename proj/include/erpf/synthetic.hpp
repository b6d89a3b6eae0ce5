#pragma once

#include <cstdint>

#include "erpf/image.hpp"

namespace erpf {

// Seeded ERP-like test frame: smooth polar bands, textured equatorial band,
// longitude-periodic so the 360 degree seam is consistent.
LumaFrame synth_frame(int width, int height, uint64_t seed);

}  // namespace erpf
