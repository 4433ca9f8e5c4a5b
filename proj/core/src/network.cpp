#include "rdpv/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "rdpv/random.hpp"

namespace rdpv::net {

void NetworkConfig::validate() const {
  if (encoder_units < 1 || decoder_units < 1) {
    throw std::invalid_argument("NetworkConfig: unit counts must be positive");
  }
  if (encoder_units != decoder_units) {
    throw std::invalid_argument("NetworkConfig: encoder and decoder unit counts must match");
  }
  if (encoder_channels < 1 || skip_channels < 1) {
    throw std::invalid_argument("NetworkConfig: channel counts must be positive");
  }
  if (decoder_channels != encoder_channels + skip_channels) {
    throw std::invalid_argument(
        "NetworkConfig: decoder channels must equal encoder + skip channels");
  }
  if (leaky_slope <= 0.0 || leaky_slope >= 1.0) {
    throw std::invalid_argument("NetworkConfig: leaky slope must lie in (0,1)");
  }
  if (lanczos_order < 1) {
    throw std::invalid_argument("NetworkConfig: lanczos order must be positive");
  }
  if (bn_eps <= 0.0) {
    throw std::invalid_argument("NetworkConfig: bn eps must be positive");
  }
}

std::size_t NetworkWeights::total_parameters() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.numel();
  return n;
}

const ParamTensor& NetworkWeights::find(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("NetworkWeights: no parameter named " + name);
}

ParamTensor& NetworkWeights::find(const std::string& name) {
  for (auto& p : params) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("NetworkWeights: no parameter named " + name);
}

SeedImage make_seed_image(int height, int width, std::uint64_t seed,
                          double amplitude) {
  if (height <= 0 || width <= 0) {
    throw std::invalid_argument("make_seed_image: dimensions must be positive");
  }
  SeedImage z;
  z.height = height;
  z.width = width;
  z.seed = seed;
  z.amplitude = amplitude;
  z.values.resize(static_cast<std::size_t>(height) * width);
  RandomStream rng(derive_seed(seed, "seed-image"));
  for (double& v : z.values) v = rng.uniform(0.0, amplitude);
  return z;
}

namespace {

struct LayerSpec {
  std::string name;
  std::vector<int> shape;
};

std::vector<LayerSpec> layer_specs(const NetworkConfig& c) {
  std::vector<LayerSpec> specs;
  const int ce = c.encoder_channels;
  const int cs = c.skip_channels;
  const int cd = c.decoder_channels;
  for (int i = 0; i < c.encoder_units; ++i) {
    const int in_ch = i == 0 ? 1 : ce;
    const std::string base = "enc" + std::to_string(i);
    specs.push_back({base + ".conv", {ce, in_ch, 3, 3}});
    specs.push_back({base + ".bn.gamma", {ce}});
    specs.push_back({base + ".bn.beta", {ce}});
    specs.push_back({"skip" + std::to_string(i) + ".conv", {cs, ce, 1, 1}});
    specs.push_back({"skip" + std::to_string(i) + ".bn.gamma", {cs}});
    specs.push_back({"skip" + std::to_string(i) + ".bn.beta", {cs}});
  }
  for (int j = 0; j < c.decoder_units; ++j) {
    // first decoder unit consumes the encoder bottleneck (ce) + skip,
    // deeper ones consume the previous decoder output (cd) + skip
    const int in_ch = (j == 0 ? ce : cd) + cs;
    const std::string base = "dec" + std::to_string(j);
    specs.push_back({base + ".conv1", {cd, in_ch, 3, 3}});
    specs.push_back({base + ".bn1.gamma", {cd}});
    specs.push_back({base + ".bn1.beta", {cd}});
    specs.push_back({base + ".conv2", {cd, cd, 3, 3}});
    specs.push_back({base + ".bn2.gamma", {cd}});
    specs.push_back({base + ".bn2.beta", {cd}});
  }
  specs.push_back({"out.conv", {1, cd, 1, 1}});
  specs.push_back({"out.bias", {1}});
  return specs;
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::size_t n = std::strlen(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

std::vector<std::string> layer_names(const NetworkConfig& config) {
  config.validate();
  std::vector<std::string> names;
  for (const auto& s : layer_specs(config)) names.push_back(s.name);
  return names;
}

NetworkWeights build_network(const NetworkConfig& config, std::uint64_t rng_seed) {
  config.validate();
  NetworkWeights w;
  w.config = config;
  RandomStream rng(derive_seed(rng_seed, "network-init"));
  for (const auto& spec : layer_specs(config)) {
    ParamTensor p;
    p.name = spec.name;
    p.shape = spec.shape;
    p.values.resize(tensor::shape_numel(spec.shape));
    if (ends_with(spec.name, ".gamma")) {
      std::fill(p.values.begin(), p.values.end(), 1.0);
    } else if (ends_with(spec.name, ".beta") || ends_with(spec.name, ".bias")) {
      std::fill(p.values.begin(), p.values.end(), 0.0);
    } else {
      // Kaiming-style uniform fan-in init. The output head starts heavily
      // damped so the initial image is near-flat: whatever the data term
      // leaves unconstrained then stays smooth instead of inheriting the
      // random head's pixel texture.
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < spec.shape.size(); ++d) {
        fan_in *= static_cast<std::size_t>(spec.shape[d]);
      }
      double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      if (spec.name == "out.conv") bound *= 0.02;
      for (double& v : p.values) v = rng.uniform(-bound, bound);
    }
    w.params.push_back(std::move(p));
  }
  return w;
}

ForwardGraph forward_on_tape(tensor::Tape& tape, const NetworkWeights& weights,
                             const SeedImage& z, bool requires_grad) {
  const NetworkConfig& c = weights.config;
  c.validate();
  const int down = 1 << c.encoder_units;
  if (z.height % down != 0 || z.width % down != 0) {
    throw std::invalid_argument(
        "forward: seed image spatial dims must be divisible by 2^encoder_units");
  }

  ForwardGraph g;
  g.param_leaves.reserve(weights.params.size());
  for (const auto& p : weights.params) {
    g.param_leaves.push_back(tape.leaf(p.shape, p.values, requires_grad));
  }
  auto leaf = [&](const std::string& name) -> tensor::GradTensor {
    for (std::size_t i = 0; i < weights.params.size(); ++i) {
      if (weights.params[i].name == name) return g.param_leaves[i];
    }
    throw std::invalid_argument("forward: missing parameter " + name);
  };

  tensor::GradTensor x = tape.constant({1, z.height, z.width}, z.values);

  std::vector<tensor::GradTensor> encoder_outputs;
  for (int i = 0; i < c.encoder_units; ++i) {
    const std::string base = "enc" + std::to_string(i);
    x = tape.conv2d(x, leaf(base + ".conv"), /*stride=*/2, /*padding=*/1);
    x = tape.batch_norm(x, leaf(base + ".bn.gamma"), leaf(base + ".bn.beta"),
                        c.bn_eps);
    x = tape.leaky_relu(x, c.leaky_slope);
    encoder_outputs.push_back(x);
  }

  // decoder unit: concat the matching skip, Lanczos-upsample, then two
  // conv/norm/activation blocks at the upsampled resolution
  tensor::GradTensor d = encoder_outputs.back();
  for (int j = 0; j < c.decoder_units; ++j) {
    const int level = c.encoder_units - 1 - j;
    const std::string skip_base = "skip" + std::to_string(level);
    tensor::GradTensor s = tape.conv2d(encoder_outputs[level],
                                       leaf(skip_base + ".conv"), 1, 0);
    s = tape.batch_norm(s, leaf(skip_base + ".bn.gamma"),
                        leaf(skip_base + ".bn.beta"), c.bn_eps);
    d = tape.concat_channels(d, s);
    d = tape.lanczos_resample(d, {2, 1}, c.lanczos_order);

    const std::string base = "dec" + std::to_string(j);
    d = tape.conv2d(d, leaf(base + ".conv1"), 1, 1);
    d = tape.batch_norm(d, leaf(base + ".bn1.gamma"), leaf(base + ".bn1.beta"),
                        c.bn_eps);
    d = tape.leaky_relu(d, c.leaky_slope);
    d = tape.conv2d(d, leaf(base + ".conv2"), 1, 1);
    d = tape.batch_norm(d, leaf(base + ".bn2.gamma"), leaf(base + ".bn2.beta"),
                        c.bn_eps);
    d = tape.leaky_relu(d, c.leaky_slope);
  }

  d = tape.conv2d(d, leaf("out.conv"), 1, 0);
  d = tape.bias_add(d, leaf("out.bias"));
  g.output = tape.sigmoid(d);
  return g;
}

Image forward(const NetworkWeights& weights, const SeedImage& z) {
  tensor::Tape tape;
  ForwardGraph g = forward_on_tape(tape, weights, z, /*requires_grad=*/false);
  Image out(g.output.shape()[1], g.output.shape()[2]);
  std::copy(g.output.values().begin(), g.output.values().end(), out.data());
  return out;
}

namespace {

constexpr char kMagic[8] = {'R', 'D', 'P', 'V', 'W', 'T', 'S', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetworkWeights& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::int32_t>(os, w.config.encoder_units);
  write_pod<std::int32_t>(os, w.config.decoder_units);
  write_pod<std::int32_t>(os, w.config.encoder_channels);
  write_pod<std::int32_t>(os, w.config.skip_channels);
  write_pod<std::int32_t>(os, w.config.decoder_channels);
  write_pod<double>(os, w.config.leaky_slope);
  write_pod<std::int32_t>(os, w.config.lanczos_order);
  write_pod<double>(os, w.config.bn_eps);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(w.params.size()));
  for (const auto& p : w.params) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) write_pod<std::int32_t>(os, d);
    os.write(reinterpret_cast<const char*>(p.values.data()),
             static_cast<std::streamsize>(p.values.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

NetworkWeights load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  NetworkWeights w;
  w.config.encoder_units = read_pod<std::int32_t>(is);
  w.config.decoder_units = read_pod<std::int32_t>(is);
  w.config.encoder_channels = read_pod<std::int32_t>(is);
  w.config.skip_channels = read_pod<std::int32_t>(is);
  w.config.decoder_channels = read_pod<std::int32_t>(is);
  w.config.leaky_slope = read_pod<double>(is);
  w.config.lanczos_order = read_pod<std::int32_t>(is);
  w.config.bn_eps = read_pod<double>(is);
  const auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamTensor p;
    const auto name_len = read_pod<std::uint32_t>(is);
    p.name.resize(name_len);
    is.read(p.name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(is);
    p.shape.resize(ndim);
    for (auto& d : p.shape) d = read_pod<std::int32_t>(is);
    p.values.resize(tensor::shape_numel(p.shape));
    is.read(reinterpret_cast<char*>(p.values.data()),
            static_cast<std::streamsize>(p.values.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
    w.params.push_back(std::move(p));
  }
  return w;
}

}  // namespace rdpv::net
