#pragma once

#include "mbot/point_cloud.hpp"

#include <filesystem>
#include <stdexcept>

namespace mbot {

/// Image as a point cloud in RGB space, channels in [0, 1], row-major pixels.
struct PixelCloud {
  Index width = 0;
  Index height = 0;
  Points rgb;  // (width * height) x 3

  Index size() const { return rgb.rows(); }
  PointCloud cloud() const { return PointCloud(rgb); }
  /// Throws std::invalid_argument on geometry mismatch or out-of-gamut channels.
  void validate() const;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads 8-bit PNG (any color type is converted to RGB) or binary PPM (P6,
/// maxval 255), chosen by file extension. Throws ImageError.
PixelCloud load_image(const std::filesystem::path& path);

/// Quantises with round(v * 255), half away from zero, and writes PNG or PPM
/// by extension. Throws std::invalid_argument for an invalid cloud and
/// ImageError on I/O failure.
void save_image(const PixelCloud& image, const std::filesystem::path& path);

}  // namespace mbot
