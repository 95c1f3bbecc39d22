#pragma once

#include <iosfwd>
#include <string>

#include "stfuse/geometry.hpp"

namespace stfuse {

/// Flat binary layout, little-endian:
///   "BEVG" | int32 H | int32 W | int32 C | f64 dx | f64 dy | int32 vehicle | f64 timestamp
///   followed by H*W*C f64 values in row-major [row][col][channel] order.
void write_grid(std::ostream& os, const FeatureGrid& g);
FeatureGrid read_grid(std::istream& is);

void save_grid(const std::string& path, const FeatureGrid& g);
FeatureGrid load_grid(const std::string& path);

/// Human-readable dump of one channel (small grids only).
std::string ascii_dump(const FeatureGrid& g, int channel = 0, int precision = 2);

}  // namespace stfuse
