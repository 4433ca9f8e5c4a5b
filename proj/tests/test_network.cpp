#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "rdpv/network.hpp"
#include "rdpv/random.hpp"
#include "rdpv/tensor.hpp"
#include "test_util.hpp"

using namespace rdpv;
using rdpv::testutil::central_diff;
using rdpv::testutil::rel_err;

namespace {

net::NetworkConfig toy_config() {
  net::NetworkConfig c;
  c.encoder_units = 2;
  c.decoder_units = 2;
  c.encoder_channels = 8;
  c.skip_channels = 2;
  c.decoder_channels = 10;
  return c;
}

}  // namespace

TEST_CASE("build_network is deterministic per seed") {
  const auto c = toy_config();
  const auto a = net::build_network(c, 7);
  const auto b = net::build_network(c, 7);
  REQUIRE(a.params.size() == b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].name == b.params[i].name);
    CHECK(a.params[i].values == b.params[i].values);  // bit-identical
  }
  const auto other = net::build_network(c, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params.size() && !any_diff; ++i) {
    any_diff = a.params[i].values != other.params[i].values;
  }
  CHECK(any_diff);
}

TEST_CASE("key set is a function of the config alone") {
  const auto names1 = net::layer_names(toy_config());
  const auto names2 = net::layer_names(toy_config());
  CHECK(names1 == names2);

  const auto def = net::NetworkConfig{};
  const auto names = net::layer_names(def);
  // four encoder units with stride-2 convs, four decoder units, skips, head
  int enc = 0, dec = 0, skip = 0;
  for (const auto& n : names) {
    if (n.rfind("enc", 0) == 0 && n.find(".conv") != std::string::npos) ++enc;
    if (n.rfind("dec", 0) == 0 && n.find(".conv1") != std::string::npos) ++dec;
    if (n.rfind("skip", 0) == 0 && n.find(".conv") != std::string::npos) ++skip;
  }
  CHECK(enc == 4);
  CHECK(dec == 4);
  CHECK(skip == 4);
  CHECK(std::count(names.begin(), names.end(), "out.conv") == 1);
}

TEST_CASE("channel arithmetic invariant is enforced") {
  net::NetworkConfig c = toy_config();
  c.decoder_channels = 11;  // must be 8 + 2
  CHECK_THROWS_AS(net::build_network(c, 1), std::invalid_argument);
  c.encoder_channels = 8;
  c.skip_channels = 2;
  c.decoder_channels = 10;
  CHECK_NOTHROW(net::build_network(c, 1));
}

TEST_CASE("seed image is reproducible and bounded") {
  const auto z1 = net::make_seed_image(16, 16, 42);
  const auto z2 = net::make_seed_image(16, 16, 42);
  CHECK(z1.values == z2.values);
  for (double v : z1.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 0.1);
  }
}

TEST_CASE("forward produces sigmoid-bounded output at the seed size") {
  const auto c = toy_config();
  const auto w = net::build_network(c, 3);
  const auto z = net::make_seed_image(32, 32, 9);
  const Image out = net::forward(w, z);
  CHECK(out.height() == 32);
  CHECK(out.width() == 32);
  for (double v : out.pixels()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("forward at the paper scale: 288x288 with the default config") {
  const net::NetworkConfig c{};
  const auto w = net::build_network(c, 1);
  const auto z = net::make_seed_image(288, 288, 2);
  const Image out = net::forward(w, z);
  CHECK(out.height() == 288);
  CHECK(out.width() == 288);
  for (double v : out.pixels()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("forward rejects seed sizes not divisible by 2^units") {
  const auto c = toy_config();
  const auto w = net::build_network(c, 3);
  const auto z = net::make_seed_image(30, 30, 9);
  CHECK_THROWS_AS(net::forward(w, z), std::invalid_argument);
}

TEST_CASE("forward is a pure function of weights and seed") {
  const auto c = toy_config();
  const auto w = net::build_network(c, 5);
  const auto z = net::make_seed_image(16, 16, 11);
  const Image a = net::forward(w, z);
  const Image b = net::forward(w, z);
  CHECK(a.pixels() == b.pixels());
}

TEST_CASE("ablating a skip branch changes the output") {
  const auto c = toy_config();
  auto w = net::build_network(c, 5);
  const auto z = net::make_seed_image(16, 16, 11);
  const Image base = net::forward(w, z);

  auto& skip_conv = w.find("skip1.conv");
  std::fill(skip_conv.values.begin(), skip_conv.values.end(), 0.0);
  auto& skip_gamma = w.find("skip1.bn.gamma");
  std::fill(skip_gamma.values.begin(), skip_gamma.values.end(), 0.0);
  const Image ablated = net::forward(w, z);

  double max_diff = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(base.data()[i] - ablated.data()[i]));
  }
  CHECK(max_diff > 1e-6);
}

TEST_CASE("encoder halves and decoder doubles the spatial size per unit") {
  // composition restores the seed size for unit counts 2..4
  for (int units : {2, 3, 4}) {
    net::NetworkConfig c;
    c.encoder_units = units;
    c.decoder_units = units;
    c.encoder_channels = 8;
    c.skip_channels = 2;
    c.decoder_channels = 10;
    const auto w = net::build_network(c, 2);
    const int size = 16 << (units - 2);  // divisible by 2^units
    const auto z = net::make_seed_image(size, size, 3);
    const Image out = net::forward(w, z);
    CHECK(out.height() == size);
    CHECK(out.width() == size);
  }
}

TEST_CASE("gradient of mean(output) w.r.t. the first conv kernel matches FD") {
  const auto c = toy_config();
  const auto w = net::build_network(c, 13);
  const auto z = net::make_seed_image(16, 16, 17);

  tensor::Tape tape;
  auto g = net::forward_on_tape(tape, w, z, true);
  tensor::GradTensor obj = tape.mean(g.output);
  tape.backward(obj);

  // locate enc0.conv among the leaves (same order as weights.params)
  std::size_t enc0 = 0;
  for (std::size_t i = 0; i < w.params.size(); ++i) {
    if (w.params[i].name == "enc0.conv") enc0 = i;
  }
  REQUIRE(g.param_leaves[enc0].has_grad());

  RandomStream rng(23);
  int checked = 0;
  for (int probe = 0; probe < 12 && checked < 5; ++probe) {
    const std::size_t i = rng.uniform_index(w.params[enc0].values.size());
    auto f = [&](const std::vector<double>& x) {
      net::NetworkWeights wm = w;
      wm.params[enc0].values = x;
      tensor::Tape t;
      auto fg = net::forward_on_tape(t, wm, z, false);
      return t.mean(fg.output).scalar();
    };
    const double fd = central_diff(f, w.params[enc0].values, i, 1e-5);
    if (std::abs(fd) < 1e-7) continue;
    const double analytic = g.param_leaves[enc0].grad()[i];
    CHECK_MESSAGE(rel_err(analytic, fd) < 1e-4,
                  "coord " << i << " analytic " << analytic << " fd " << fd);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto c = toy_config();
  const auto w = net::build_network(c, 77);
  const auto path = std::filesystem::temp_directory_path() / "rdpv_ckpt_test.bin";
  net::save_checkpoint(path, w);
  const auto r = net::load_checkpoint(path);
  std::filesystem::remove(path);

  CHECK(r.config.encoder_units == c.encoder_units);
  CHECK(r.config.encoder_channels == c.encoder_channels);
  CHECK(r.config.skip_channels == c.skip_channels);
  REQUIRE(r.params.size() == w.params.size());
  for (std::size_t i = 0; i < w.params.size(); ++i) {
    CHECK(r.params[i].name == w.params[i].name);
    CHECK(r.params[i].shape == w.params[i].shape);
    CHECK(r.params[i].values == w.params[i].values);
  }
}

TEST_CASE("checkpoint loader rejects foreign files") {
  const auto path = std::filesystem::temp_directory_path() / "rdpv_not_ckpt.bin";
  {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    std::fputs("definitely not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(net::load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}
