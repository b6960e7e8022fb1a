#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfpn/params.hpp"
#include "cfpn/sample.hpp"

namespace cfpn {

// ---------------------------------------------------------------------------
// Synthetic scenes: a textured background with 1-3 filled shapes.

enum class ShapeKind { kEllipse, kRectangle, kTriangle };

/// Geometry in pixel coordinates (pixel (y,x) has its center at (x+0.5, y+0.5)).
struct Shape2d {
  ShapeKind kind = ShapeKind::kEllipse;
  /// Ellipse: cx, cy, rx, ry, angle. Rectangle: cx, cy, half_w, half_h, angle.
  /// Triangle: x0, y0, x1, y1, x2, y2.
  std::array<double, 6> p{};
  std::array<double, 3> color{};

  bool contains(double x, double y) const;
};

struct Scene {
  std::size_t size = 0;
  std::array<double, 3> background{};
  std::array<double, 3> texture_amplitude{};
  std::array<double, 2> texture_frequency{};
  std::vector<Shape2d> shapes;
};

inline constexpr double kMinForegroundFraction = 0.02;
inline constexpr double kMaxForegroundFraction = 0.6;

/// Draws scenes until the mask foreground fraction lies in [0.02, 0.6].
Scene sample_scene(std::size_t size, Rng& rng);
/// Union of the shapes tested at pixel centers, [1,size,size].
Tensor rasterize_mask(const Scene& scene);
/// Image [3,size,size] on the /255 grid; noise is drawn from rng.
Tensor render_image(const Scene& scene, Rng& rng);
SaliencySample synth_sample(std::size_t size, Rng& rng);

// ---------------------------------------------------------------------------
// Manifests: JSON arrays of {"image": path, "mask": path}.

struct ManifestEntry {
  std::filesystem::path image;
  std::filesystem::path mask;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  /// Split tag, taken from the manifest file stem (e.g. "train").
  std::string split;
};

/// Relative paths resolve against the manifest's directory. Throws ConfigError
/// on malformed JSON, unknown keys, or missing files.
DatasetManifest read_manifest(const std::filesystem::path& path);
/// Writes paths relative to the manifest's directory.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Decodes every pair; throws DimensionError if an image and its mask disagree in size.
std::vector<SaliencySample> load_samples(const DatasetManifest& manifest);

/// Writes n samples as out_dir/images/<split>_NNNN.ppm and out_dir/masks/<split>_NNNN.pgm
/// plus out_dir/<split>.json. Throws InputSizeError unless size is a multiple of 32.
DatasetManifest synth_dataset(const std::filesystem::path& out_dir, std::size_t n, std::size_t size,
                              std::uint64_t seed, const std::string& split = "train");

}  // namespace cfpn
