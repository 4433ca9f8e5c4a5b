#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rdpv/image.hpp"
#include "rdpv/tensor.hpp"

namespace rdpv::net {

// Encoder-decoder CNN with long skip connections via concatenation. Each
// encoder unit downsamples with a stride-2 conv; each decoder unit runs two
// conv/norm/activation blocks and upsamples with a Lanczos operator; skips
// are 1x1 conv + norm taps off every encoder unit's output.
struct NetworkConfig {
  int encoder_units = 4;
  int decoder_units = 4;
  int encoder_channels = 128;
  int skip_channels = 4;
  int decoder_channels = 132;
  double leaky_slope = 0.1;
  int lanczos_order = 3;
  double bn_eps = 1e-5;

  void validate() const;
};

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;

  std::size_t numel() const { return values.size(); }
};

// Ordered parameter set; the unit of recursive warm starting. The key set is
// a function of the config alone.
struct NetworkWeights {
  NetworkConfig config;
  std::vector<ParamTensor> params;

  std::size_t total_parameters() const;
  const ParamTensor& find(const std::string& name) const;
  ParamTensor& find(const std::string& name);
};

// Fixed random input image z; identical seed reproduces identical values.
struct SeedImage {
  int channels = 1;
  int height = 0;
  int width = 0;
  double amplitude = 0.1;  // i.i.d. uniform on [0, amplitude]
  std::uint64_t seed = 0;
  std::vector<double> values;
};

SeedImage make_seed_image(int height, int width, std::uint64_t seed,
                          double amplitude = 0.1);

// Parameter names implied by a config, in forward order.
std::vector<std::string> layer_names(const NetworkConfig& config);

NetworkWeights build_network(const NetworkConfig& config, std::uint64_t rng_seed);

// Forward pass recorded on a tape; param_leaves[i] corresponds to
// weights.params[i] so gradients can be read back after backward().
struct ForwardGraph {
  std::vector<tensor::GradTensor> param_leaves;
  tensor::GradTensor output;  // [1, H, W], values in (0,1)
};

ForwardGraph forward_on_tape(tensor::Tape& tape, const NetworkWeights& weights,
                             const SeedImage& z, bool requires_grad);

// Convenience forward without gradient bookkeeping.
Image forward(const NetworkWeights& weights, const SeedImage& z);

// Versioned binary checkpoint of (config, ordered named tensors);
// round-trips bit-exactly. Layout (little-endian):
//   magic "RDPVWTS1"
//   i32 encoder_units, decoder_units, encoder_channels, skip_channels,
//       decoder_channels; f64 leaky_slope; i32 lanczos_order; f64 bn_eps
//   u32 tensor_count, then per tensor:
//     u32 name_len, name bytes, u32 ndim, i32 dims[ndim], f64 data[prod(dims)]
void save_checkpoint(const std::filesystem::path& path, const NetworkWeights& w);
NetworkWeights load_checkpoint(const std::filesystem::path& path);

}  // namespace rdpv::net
