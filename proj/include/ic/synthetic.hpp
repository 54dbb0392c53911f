#pragma once

#include <cstdint>

#include "ic/keypoints.hpp"

namespace ic {

/// Sinusoidal keypoint motifs: each class has its own frequency and a fixed
/// per-coordinate phase/amplitude pattern; every sample draws a random
/// phase offset, speed, amplitude and additive noise.
struct SyntheticOptions {
  std::size_t classes = 4;
  std::size_t train_per_class = 50;
  std::size_t test_per_class = 20;
  std::size_t frames = 24;
  std::size_t keypoints = 2;
  std::size_t dims = 2;
  double base_frequency = 1.0;     // cycles per sequence for class 0
  double frequency_step = 0.5;     // added per class
  double phase_jitter = 0.5;       // radians, uniform in [-j, j]
  double coordinate_jitter = 0.0;  // extra independent phase per coordinate
  double offset_jitter = 0.0;      // constant offset per coordinate
  double speed_jitter = 0.1;       // relative
  double amplitude_jitter = 0.2;   // relative
  double noise = 0.05;
  std::uint64_t seed = 7;
};

/// Labeled dataset with "train" and "test" splits; ids are unique and the
/// sample order interleaves classes.
Dataset make_synthetic_dataset(const SyntheticOptions& options);

}  // namespace ic
