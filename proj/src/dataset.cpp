#include "cfpn/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "json.hpp"

#include "cfpn/backbone.hpp"
#include "cfpn/error.hpp"
#include "cfpn/netpbm.hpp"

namespace cfpn {
namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Point relative to a rotated frame centred at (cx, cy).
std::array<double, 2> to_local(double x, double y, double cx, double cy, double angle) {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * dx + s * dy, -s * dx + c * dy};
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

std::array<double, 3> random_color(Rng& rng) { return {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}; }

double color_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return (std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2])) / 3.0;
}

Shape2d sample_shape(std::size_t size, const std::array<double, 3>& background, Rng& rng) {
  const double n = static_cast<double>(size);
  Shape2d s;
  s.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
  const double cx = uniform(rng, 0.2 * n, 0.8 * n), cy = uniform(rng, 0.2 * n, 0.8 * n);
  switch (s.kind) {
    case ShapeKind::kEllipse:
    case ShapeKind::kRectangle:
      s.p = {cx, cy, uniform(rng, 0.08 * n, 0.3 * n), uniform(rng, 0.08 * n, 0.3 * n),
             uniform(rng, 0.0, std::numbers::pi), 0.0};
      break;
    case ShapeKind::kTriangle: {
      const double r = uniform(rng, 0.15 * n, 0.35 * n);
      const double a0 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      for (int v = 0; v < 3; ++v) {
        // Vertices spread around the circle so triangles are never slivers.
        const double a = a0 + v * 2.0 * std::numbers::pi / 3.0 + uniform(rng, -0.4, 0.4);
        s.p[2 * v] = cx + r * std::cos(a);
        s.p[2 * v + 1] = cy + r * std::sin(a);
      }
      break;
    }
  }
  do {
    s.color = random_color(rng);
  } while (color_distance(s.color, background) < 0.3);
  return s;
}

double foreground_fraction(const Tensor& mask) { return mask.sum() / static_cast<double>(mask.numel()); }

double quantize(double v) { return std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5) / 255.0; }

}  // namespace

bool Shape2d::contains(double x, double y) const {
  switch (kind) {
    case ShapeKind::kEllipse: {
      const auto [u, v] = to_local(x, y, p[0], p[1], p[4]);
      return (u * u) / (p[2] * p[2]) + (v * v) / (p[3] * p[3]) <= 1.0;
    }
    case ShapeKind::kRectangle: {
      const auto [u, v] = to_local(x, y, p[0], p[1], p[4]);
      return std::abs(u) <= p[2] && std::abs(v) <= p[3];
    }
    case ShapeKind::kTriangle: {
      const double e0 = edge(p[0], p[1], p[2], p[3], x, y);
      const double e1 = edge(p[2], p[3], p[4], p[5], x, y);
      const double e2 = edge(p[4], p[5], p[0], p[1], x, y);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

Scene sample_scene(std::size_t size, Rng& rng) {
  if (size == 0) throw InputSizeError("synthetic scene size must be positive");
  for (;;) {
    Scene scene;
    scene.size = size;
    scene.background = random_color(rng);
    for (int c = 0; c < 3; ++c) scene.texture_amplitude[c] = uniform(rng, 0.03, 0.12);
    scene.texture_frequency = {uniform(rng, 0.1, 0.6), uniform(rng, 0.1, 0.6)};
    const int count = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int i = 0; i < count; ++i) scene.shapes.push_back(sample_shape(size, scene.background, rng));
    const double f = foreground_fraction(rasterize_mask(scene));
    if (f >= kMinForegroundFraction && f <= kMaxForegroundFraction) return scene;
  }
}

Tensor rasterize_mask(const Scene& scene) {
  Tensor mask({1, scene.size, scene.size});
  for (std::size_t y = 0; y < scene.size; ++y) {
    for (std::size_t x = 0; x < scene.size; ++x) {
      for (const auto& s : scene.shapes) {
        if (s.contains(x + 0.5, y + 0.5)) {
          mask.at(0, y, x) = 1.0;
          break;
        }
      }
    }
  }
  return mask;
}

Tensor render_image(const Scene& scene, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 0.03);
  Tensor image({3, scene.size, scene.size});
  for (std::size_t y = 0; y < scene.size; ++y) {
    for (std::size_t x = 0; x < scene.size; ++x) {
      // Later shapes paint over earlier ones.
      const Shape2d* top = nullptr;
      for (const auto& s : scene.shapes) {
        if (s.contains(x + 0.5, y + 0.5)) top = &s;
      }
      const double wave = std::sin(scene.texture_frequency[0] * x) * std::cos(scene.texture_frequency[1] * y);
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = top ? top->color[c] : scene.background[c] + scene.texture_amplitude[c] * wave;
        image.at(c, y, x) = quantize(base + noise(rng));
      }
    }
  }
  return image;
}

SaliencySample synth_sample(std::size_t size, Rng& rng) {
  const Scene scene = sample_scene(size, rng);
  Tensor mask = rasterize_mask(scene);
  Tensor image = render_image(scene, rng);
  return {std::move(image), std::move(mask)};
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open manifest: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_array()) throw ConfigError("manifest " + path.string() + " must be a JSON array");
  DatasetManifest manifest;
  manifest.split = path.stem().string();
  const auto base = path.parent_path();
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    const std::string where = "manifest " + path.string() + " entry " + std::to_string(i);
    if (!item.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : item.items()) {
      if (key != "image" && key != "mask") throw ConfigError(where + " has unknown key '" + key + "'");
      if (!value.is_string()) throw ConfigError(where + " field '" + key + "' must be a string");
    }
    if (!item.contains("image") || !item.contains("mask")) throw ConfigError(where + " needs image and mask");
    ManifestEntry entry{base / item["image"].get<std::string>(), base / item["mask"].get<std::string>()};
    for (const auto& p : {entry.image, entry.mask}) {
      if (!std::filesystem::exists(p)) throw ConfigError(where + " references missing file " + p.string());
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (manifest.entries.empty()) throw ConfigError("manifest " + path.string() + " is empty");
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  const auto base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    doc.push_back({{"image", std::filesystem::relative(e.image, base).generic_string()},
                   {"mask", std::filesystem::relative(e.mask, base).generic_string()}});
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write manifest: " + path.string());
  f << doc.dump(2) << "\n";
}

std::vector<SaliencySample> load_samples(const DatasetManifest& manifest) {
  std::vector<SaliencySample> samples;
  samples.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    SaliencySample s{read_image(e.image), read_mask(e.mask)};
    if (s.image.dim(1) != s.mask.dim(1) || s.image.dim(2) != s.mask.dim(2)) {
      throw DimensionError("image " + e.image.string() + " is " + to_string(s.image.shape()) + " but mask " +
                           e.mask.string() + " is " + to_string(s.mask.shape()));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

DatasetManifest synth_dataset(const std::filesystem::path& out_dir, std::size_t n, std::size_t size,
                              std::uint64_t seed, const std::string& split) {
  if (size == 0 || size % kInputMultiple != 0) {
    throw InputSizeError("synthetic image size " + std::to_string(size) + " must be a positive multiple of " +
                         std::to_string(kInputMultiple));
  }
  std::filesystem::create_directories(out_dir / "images");
  std::filesystem::create_directories(out_dir / "masks");
  Rng rng(seed);
  DatasetManifest manifest;
  manifest.split = split;
  for (std::size_t i = 0; i < n; ++i) {
    char stem[64];
    std::snprintf(stem, sizeof(stem), "%s_%04zu", split.c_str(), i);
    const SaliencySample s = synth_sample(size, rng);
    ManifestEntry e{out_dir / "images" / (std::string(stem) + ".ppm"), out_dir / "masks" / (std::string(stem) + ".pgm")};
    write_image(e.image, s.image);
    write_saliency(e.mask, s.mask);
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(out_dir / (split + ".json"), manifest);
  return manifest;
}

}  // namespace cfpn
