#include <algorithm>
#include <cmath>

#include "adlite/data.hpp"

namespace adlite {

void SyntheticSpec::validate() const {
  if (counts.size() < 2) throw ConfigError("synthetic spec needs at least 2 classes");
  for (auto c : counts) {
    if (c == 0) throw ConfigError("synthetic spec: every class needs at least one sample");
  }
  if (image_size < 8) throw ConfigError("synthetic spec: image_size must be >= 8");
  if (!(noise >= 0.0)) throw ConfigError("synthetic spec: noise must be >= 0");
}

std::vector<std::string> synth_class_names(std::size_t num_classes) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < num_classes; ++k) names.push_back("rings" + std::to_string(k + 1));
  return names;
}

namespace {

constexpr double kBackground = 0.15;
constexpr double kRingPeak = 0.70;

// Class k: k + 1 rings spread between inner and outer radius; thinner rings
// for classes with more of them.
std::vector<double> ring_radii(std::size_t k, double size) {
  const double inner = 0.10 * size, outer = 0.40 * size;
  if (k == 0) return {0.25 * size};
  std::vector<double> r;
  for (std::size_t j = 0; j <= k; ++j) {
    r.push_back(inner + (outer - inner) * static_cast<double>(j) / static_cast<double>(k));
  }
  return r;
}

}  // namespace

std::vector<Ads1Record> synth_records(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t s = spec.image_size;
  const double size = static_cast<double>(s);
  std::vector<Ads1Record> out;
  for (std::size_t k = 0; k < spec.counts.size(); ++k) {
    const double thickness = size * (0.045 - 0.004 * static_cast<double>(std::min<std::size_t>(k, 6)));
    const auto radii = ring_radii(k, size);
    for (std::size_t i = 0; i < spec.counts[k]; ++i) {
      const double cx = size / 2 + rng.uniform(-size / 16, size / 16);
      const double cy = size / 2 + rng.uniform(-size / 16, size / 16);
      const double scale = rng.uniform(0.95, 1.05);
      const double sigma = thickness / 2;
      Ads1Record rec{static_cast<std::uint32_t>(k), std::vector<std::uint8_t>(s * s)};
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          const double d = std::hypot(static_cast<double>(x) + 0.5 - cx, static_cast<double>(y) + 0.5 - cy);
          double ring = 0.0;
          for (double r : radii) {
            const double z = (d - r * scale) / sigma;
            ring = std::max(ring, std::exp(-0.5 * z * z));
          }
          double v = kBackground + kRingPeak * ring;
          if (spec.noise > 0.0) v += rng.normal(0.0, spec.noise);
          v = std::clamp(v, 0.0, 1.0);
          rec.pixels[y * s + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

void synth_generate(const SyntheticSpec& spec, const std::filesystem::path& path) {
  const auto records = synth_records(spec);
  write_ads1(path, synth_class_names(spec.counts.size()), spec.image_size, 1, records);
}

}  // namespace adlite
