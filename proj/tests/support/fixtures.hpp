#pragma once

#include <cstdint>
#include <vector>

#include "adlite/data.hpp"
#include "adlite/model.hpp"

namespace fixture {

/// Synthetic ring images decoded straight into memory.
inline adlite::LabeledImages synth_images(const adlite::SyntheticSpec& spec) {
  adlite::LabeledImages set;
  set.num_classes = spec.counts.size();
  for (auto& r : adlite::synth_records(spec)) {
    adlite::Image img(spec.image_size, spec.image_size, 1);
    img.pixels = std::move(r.pixels);
    set.images.push_back(std::move(img));
    set.labels.push_back(r.label);
  }
  return set;
}

/// Smallest valid network: 32x32 grayscale, two filters per block.
inline adlite::AdliteConfig tiny_net(std::size_t classes = 2) {
  adlite::AdliteConfig cfg;
  cfg.input_size = 32;
  cfg.input_channels = 1;
  cfg.num_classes = classes;
  cfg.base_filters = {2, 2, 2, 2, 2};
  cfg.pcb_filters = {2, 2};
  return cfg;
}

inline std::vector<std::size_t> iota(std::size_t n, std::size_t from = 0) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = from + i;
  return v;
}

}  // namespace fixture
