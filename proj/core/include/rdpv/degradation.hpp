#pragma once

#include <cstdint>

#include "rdpv/image.hpp"

namespace rdpv::degrade {

// Forward observation model: anti-aliased decimation by L plus additive
// white Gaussian noise on the [0,1] intensity scale.
struct DegradationSpec {
  int magnification = 4;   // L
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Lanczos-3 anti-aliased decimation by L; linear in the input.
Image downsample(const Image& hr, int magnification);

// i.i.d. N(0, sigma^2) per pixel, clamped to [0,1]; deterministic per seed.
Image add_awgn(const Image& img, double sigma, std::uint64_t seed);

// Catmull-Rom bicubic interpolation (a = -0.5).
Image bicubic_upsample(const Image& lr, int magnification);

// Applies downsample + noise per frame with per-frame derived seeds.
FrameSequence degrade_sequence(const FrameSequence& hr, const DegradationSpec& spec);

FrameSequence bicubic_upsample_sequence(const FrameSequence& lr, int magnification);

}  // namespace rdpv::degrade
