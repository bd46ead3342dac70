#pragma once

#include "mbot/point_cloud.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace mbot {

/// Shortest round-trip text for a double: 17 significant digits.
std::string format_double(double v);

/// Headerless CSV, one point per line, comma-separated coordinates.
/// Throws std::runtime_error on malformed rows or ragged dimensions.
PointCloud read_cloud_csv(std::istream& in);
PointCloud read_cloud_csv(const std::filesystem::path& path);

void write_points_csv(std::ostream& out, const Points& points);

}  // namespace mbot
