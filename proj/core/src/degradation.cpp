#include "rdpv/degradation.hpp"

#include <algorithm>
#include <stdexcept>

#include "rdpv/random.hpp"
#include "rdpv/tensor.hpp"

namespace rdpv::degrade {

void DegradationSpec::validate() const {
  if (magnification < 1) {
    throw std::invalid_argument("DegradationSpec: magnification must be >= 1");
  }
  if (noise_sigma < 0.0) {
    throw std::invalid_argument("DegradationSpec: noise sigma must be >= 0");
  }
}

Image downsample(const Image& hr, int magnification) {
  if (magnification < 1) {
    throw std::invalid_argument("downsample: magnification must be >= 1");
  }
  if (magnification == 1) return hr;
  if (hr.height() % magnification != 0 || hr.width() % magnification != 0) {
    throw std::invalid_argument("downsample: dimensions must be divisible by L");
  }
  const int oh = hr.height() / magnification;
  const int ow = hr.width() / magnification;
  const auto row_t = tensor::make_lanczos_table(hr.height(), oh, 3);
  const auto col_t = tensor::make_lanczos_table(hr.width(), ow, 3);
  std::vector<double> tmp(static_cast<std::size_t>(oh) * hr.width());
  Image out(oh, ow);
  tensor::apply_resample_rows(row_t, hr.data(), tmp.data(), 1, hr.height(),
                              hr.width());
  tensor::apply_resample_cols(col_t, tmp.data(), out.data(), 1, oh, hr.width());
  return out;
}

Image add_awgn(const Image& img, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("add_awgn: sigma must be >= 0");
  if (sigma == 0.0) return img;
  Image out = img;
  RandomStream rng(derive_seed(seed, "awgn"));
  for (double& v : out.pixels()) {
    v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  }
  return out;
}

Image bicubic_upsample(const Image& lr, int magnification) {
  if (magnification < 1) {
    throw std::invalid_argument("bicubic_upsample: magnification must be >= 1");
  }
  if (magnification == 1) return lr;
  const int oh = lr.height() * magnification;
  const int ow = lr.width() * magnification;
  const auto row_t = tensor::make_bicubic_table(lr.height(), oh);
  const auto col_t = tensor::make_bicubic_table(lr.width(), ow);
  std::vector<double> tmp(static_cast<std::size_t>(oh) * lr.width());
  Image out(oh, ow);
  tensor::apply_resample_rows(row_t, lr.data(), tmp.data(), 1, lr.height(),
                              lr.width());
  tensor::apply_resample_cols(col_t, tmp.data(), out.data(), 1, oh, lr.width());
  return out;
}

FrameSequence degrade_sequence(const FrameSequence& hr, const DegradationSpec& spec) {
  spec.validate();
  FrameSequence lr;
  lr.source_bit_depth = hr.source_bit_depth;
  lr.frame_interval_s = hr.frame_interval_s;
  lr.frames.reserve(hr.frames.size());
  for (std::size_t i = 0; i < hr.frames.size(); ++i) {
    Image down = downsample(hr.frames[i], spec.magnification);
    lr.frames.push_back(
        add_awgn(down, spec.noise_sigma, derive_seed(spec.seed, "frame-noise", i)));
  }
  return lr;
}

FrameSequence bicubic_upsample_sequence(const FrameSequence& lr, int magnification) {
  FrameSequence hr;
  hr.source_bit_depth = lr.source_bit_depth;
  hr.frame_interval_s = lr.frame_interval_s;
  hr.frames.reserve(lr.frames.size());
  for (const Image& f : lr.frames) {
    hr.frames.push_back(bicubic_upsample(f, magnification));
  }
  return hr;
}

}  // namespace rdpv::degrade
