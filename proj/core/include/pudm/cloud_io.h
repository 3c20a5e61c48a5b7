#pragma once

#include <string>

#include "pudm/mat.h"

namespace pudm {

// Format chosen by extension: .xyz (one point per line, three
// whitespace-separated floats) or .ply (ascii, vertex-only element with
// x y z properties). Coordinates round-trip at 9 significant digits.
// Malformed content errors name the offending line. Writes are atomic.
PointCloud read_cloud(const std::string& path);
void write_cloud(const PointCloud& cloud, const std::string& path);

// Exposed for tests: parse/serialize without touching the filesystem.
PointCloud parse_xyz(const std::string& text);
PointCloud parse_ply(const std::string& text);
std::string format_xyz(const PointCloud& cloud);
std::string format_ply(const PointCloud& cloud);

}  // namespace pudm
