#include "ic/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "ic/rng.hpp"

namespace ic {

Dataset make_synthetic_dataset(const SyntheticOptions& o) {
  Rng rng(o.seed);
  const std::size_t width = o.keypoints * o.dims;
  std::vector<std::vector<double>> phase(o.classes, std::vector<double>(width));
  std::vector<std::vector<double>> amp(o.classes, std::vector<double>(width));
  for (std::size_t c = 0; c < o.classes; ++c)
    for (std::size_t j = 0; j < width; ++j) {
      phase[c][j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      amp[c][j] = rng.uniform(0.5, 1.0);
    }

  Dataset ds;
  auto make = [&](std::size_t cls, const std::string& id) {
    Sample s;
    s.id = id;
    s.frames = o.frames;
    s.keypoints = o.keypoints;
    s.dims = o.dims;
    s.label = "class_" + std::to_string(cls);
    const double freq = (o.base_frequency + o.frequency_step * static_cast<double>(cls)) *
                        (1.0 + rng.uniform(-o.speed_jitter, o.speed_jitter));
    const double shift = rng.uniform(-o.phase_jitter, o.phase_jitter);
    const double scale = 1.0 + rng.uniform(-o.amplitude_jitter, o.amplitude_jitter);
    std::vector<double> coord_shift(width), offset(width);
    for (std::size_t j = 0; j < width; ++j) {
      coord_shift[j] = rng.uniform(-o.coordinate_jitter, o.coordinate_jitter);
      offset[j] = rng.uniform(-o.offset_jitter, o.offset_jitter);
    }
    s.positions.resize(o.frames * width);
    for (std::size_t t = 0; t < o.frames; ++t) {
      const double u = static_cast<double>(t) / static_cast<double>(o.frames - 1);
      for (std::size_t j = 0; j < width; ++j)
        s.positions[t * width + j] =
            scale * amp[cls][j] * std::sin(2.0 * std::numbers::pi * freq * u + shift + coord_shift[j] + phase[cls][j]) +
            offset[j] + o.noise * rng.normal();
    }
    return s;
  };

  char buf[32];
  for (const auto& [split, per_class] : {std::pair<const char*, std::size_t>{"train", o.train_per_class},
                                         std::pair<const char*, std::size_t>{"test", o.test_per_class}}) {
    for (std::size_t k = 0; k < per_class; ++k)
      for (std::size_t c = 0; c < o.classes; ++c) {
        std::snprintf(buf, sizeof(buf), "%s_%04zu", split, k * o.classes + c);
        ds.splits[split].push_back(ds.samples.size());
        ds.samples.push_back(make(c, buf));
      }
  }
  ds.refresh_classes();
  ds.validate();
  return ds;
}

}  // namespace ic
