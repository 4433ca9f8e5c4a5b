#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rdpv/degradation.hpp"
#include "rdpv/random.hpp"
#include "test_util.hpp"

using namespace rdpv;

namespace {

Image smooth_test_image(int h, int w, int seed) {
  // band-limited mixture so bicubic consistency has a fair chance
  RandomStream rng(seed);
  const double a1 = rng.uniform(0.1, 0.3), a2 = rng.uniform(0.05, 0.2);
  const double f1 = rng.uniform(0.5, 1.5), f2 = rng.uniform(0.5, 1.5);
  Image img(h, w, 0.5);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(y, x) = 0.5 +
                     a1 * std::sin(2.0 * std::numbers::pi * f1 * x / w) +
                     a2 * std::cos(2.0 * std::numbers::pi * f2 * y / h);
    }
  }
  return img;
}

}  // namespace

TEST_CASE("downsample with L=1 is the identity") {
  const Image img = smooth_test_image(16, 16, 1);
  const Image out = degrade::downsample(img, 1);
  CHECK(out.pixels() == img.pixels());
}

TEST_CASE("downsample preserves constants") {
  const Image img(32, 32, 0.7);
  const Image out = degrade::downsample(img, 4);
  CHECK(out.height() == 8);
  for (double v : out.pixels()) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("downsample shape arithmetic at the paper scale") {
  const Image img(288, 288, 0.5);
  const Image out = degrade::downsample(img, 4);
  CHECK(out.height() == 72);
  CHECK(out.width() == 72);
}

TEST_CASE("downsample rejects non-divisible dimensions") {
  const Image img(30, 30, 0.5);
  CHECK_THROWS_AS(degrade::downsample(img, 4), std::invalid_argument);
}

TEST_CASE("downsample is linear") {
  const Image a = smooth_test_image(24, 24, 2);
  const Image b = smooth_test_image(24, 24, 3);
  const double alpha = 0.8, beta = -1.3;
  Image mix(24, 24);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    mix.data()[i] = alpha * a.data()[i] + beta * b.data()[i];
  }
  const Image d_mix = degrade::downsample(mix, 4);
  const Image d_a = degrade::downsample(a, 4);
  const Image d_b = degrade::downsample(b, 4);
  for (std::size_t i = 0; i < d_mix.size(); ++i) {
    CHECK(std::abs(d_mix.data()[i] - alpha * d_a.data()[i] - beta * d_b.data()[i]) <
          1e-10);
  }
}

TEST_CASE("add_awgn with sigma=0 is the identity") {
  const Image img = smooth_test_image(8, 8, 4);
  const Image out = degrade::add_awgn(img, 0.0, 123);
  CHECK(out.pixels() == img.pixels());
}

TEST_CASE("add_awgn is deterministic per seed") {
  const Image img(16, 16, 0.5);
  const Image a = degrade::add_awgn(img, 0.01, 42);
  const Image b = degrade::add_awgn(img, 0.01, 42);
  const Image c = degrade::add_awgn(img, 0.01, 43);
  CHECK(a.pixels() == b.pixels());
  CHECK(a.pixels() != c.pixels());
}

TEST_CASE("add_awgn statistics match sigma = 0.001 on a mid-gray image") {
  const int n = 128;
  const Image img(n, n, 0.5);
  const Image out = degrade::add_awgn(img, 0.001, 7);
  double mean = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    mean += out.data()[i] - img.data()[i];
  }
  mean /= static_cast<double>(out.size());
  double var = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = out.data()[i] - img.data()[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(out.size());
  const double sd = std::sqrt(var);
  CHECK(std::abs(sd - 0.001) / 0.001 < 0.10);
  // zero mean within 3 standard errors
  CHECK(std::abs(mean) < 3.0 * 0.001 / std::sqrt(static_cast<double>(out.size())));
}

TEST_CASE("add_awgn clamps to [0,1]") {
  const Image img(8, 8, 0.999);
  const Image out = degrade::add_awgn(img, 0.5, 9);
  for (double v : out.pixels()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("bicubic upsample identity and constants") {
  const Image img = smooth_test_image(8, 8, 5);
  CHECK(degrade::bicubic_upsample(img, 1).pixels() == img.pixels());
  const Image c(8, 8, 0.3);
  const Image up = degrade::bicubic_upsample(c, 4);
  CHECK(up.height() == 32);
  for (double v : up.pixels()) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("bicubic reproduces a linear ramp away from the borders") {
  const int n = 16, L = 4;
  Image ramp(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      ramp.at(y, x) = 0.1 + 0.02 * x + 0.03 * y;
    }
  }
  const Image up = degrade::bicubic_upsample(ramp, L);
  // interior pixels (full cubic stencil): exact linear reproduction
  for (int y = 2 * L; y < n * L - 2 * L; ++y) {
    for (int x = 2 * L; x < n * L - 2 * L; ++x) {
      const double sx = (x + 0.5) / L - 0.5;
      const double sy = (y + 0.5) / L - 0.5;
      const double expected = 0.1 + 0.02 * sx + 0.03 * sy;
      CHECK(std::abs(up.at(y, x) - expected) < 1e-6);
    }
  }
}

TEST_CASE("downsample of bicubic upsample roughly restores the input") {
  const Image img = smooth_test_image(16, 16, 6);
  for (int L : {2, 4}) {
    const Image round = degrade::downsample(degrade::bicubic_upsample(img, L), L);
    double mae = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
      mae += std::abs(round.data()[i] - img.data()[i]);
    }
    mae /= static_cast<double>(img.size());
    CHECK(mae < 0.02);
  }
}

TEST_CASE("degrade_sequence derives per-frame noise and keeps metadata") {
  FrameSequence hr;
  hr.source_bit_depth = 16;
  hr.frame_interval_s = 20.0;
  hr.frames.assign(3, Image(16, 16, 0.5));
  degrade::DegradationSpec spec;
  spec.magnification = 4;
  spec.noise_sigma = 0.01;
  spec.seed = 5;
  const FrameSequence lr = degrade::degrade_sequence(hr, spec);
  CHECK(lr.size() == 3);
  CHECK(lr.frames[0].height() == 4);
  CHECK(lr.source_bit_depth == 16);
  CHECK(lr.frame_interval_s == 20.0);
  // identical constant frames must receive different noise
  CHECK(lr.frames[0].pixels() != lr.frames[1].pixels());
}
