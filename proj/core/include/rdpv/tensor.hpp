#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rdpv::tensor {

class Tape;

// Exact resampling ratio; output size must be integral.
struct Rational {
  int num = 1;
  int den = 1;
};

namespace detail {

struct Node {
  int id = -1;
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward reaches this node
  bool requires_grad = false;
  std::function<void()> backprop;  // pushes this node's grad into its inputs

  std::size_t numel() const { return values.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

// Handle to a value recorded on a Tape. Copying the handle aliases the node.
class GradTensor {
 public:
  GradTensor() = default;

  const std::vector<int>& shape() const { return node_->shape; }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& values() { return node_->values; }
  // Null (empty) until a backward pass has reached this tensor.
  const std::vector<double>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::size_t numel() const { return node_->numel(); }
  int node_id() const { return node_->id; }

  double value_at(std::size_t i) const { return node_->values[i]; }
  double scalar() const { return node_->values.at(0); }

 private:
  friend class Tape;
  explicit GradTensor(detail::Node* node) : node_(node) {}
  detail::Node* node_ = nullptr;
};

// Records every operation in creation order (a topological order by
// construction) and replays the adjoints in reverse on backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  GradTensor leaf(std::vector<int> shape, std::vector<double> values,
                  bool requires_grad = false);
  GradTensor constant(std::vector<int> shape, std::vector<double> values) {
    return leaf(std::move(shape), std::move(values), false);
  }
  GradTensor scalar_constant(double v) { return constant({1}, {v}); }

  // --- elementwise / reduction ---
  GradTensor add(GradTensor a, GradTensor b);
  GradTensor sub(GradTensor a, GradTensor b);
  GradTensor mul(GradTensor a, GradTensor b);
  GradTensor scale(GradTensor a, double c);
  GradTensor sum(GradTensor a);   // -> shape {1}
  GradTensor mean(GradTensor a);  // -> shape {1}

  // --- network building blocks ---
  // Cross-correlation, zero padding. input [Cin,H,W], kernel [Cout,Cin,k,k].
  GradTensor conv2d(GradTensor input, GradTensor kernel, int stride, int padding);
  // Adds b[c] to every pixel of channel c. input [C,H,W], bias [C].
  GradTensor bias_add(GradTensor input, GradTensor bias);
  // Per-instance normalization over each channel's HxW values.
  GradTensor batch_norm(GradTensor input, GradTensor gamma, GradTensor beta,
                        double eps);
  GradTensor leaky_relu(GradTensor input, double slope);
  GradTensor sigmoid(GradTensor input);
  // Separable Lanczos-a interpolation, per-output kernel-weight normalization,
  // anti-aliased when downscaling. Differentiable as a fixed linear map.
  GradTensor lanczos_resample(GradTensor input, Rational factor, int a);
  GradTensor concat_channels(GradTensor a, GradTensor b);

  // Smoothed total variation with forward differences and replicate boundary;
  // p=1 anisotropic, p=2 isotropic. eps=0 disables the smoothing.
  GradTensor total_variation(GradTensor input, int p, double eps);

  // Accumulates d(root)/dT into the grad of every requires-grad tensor T
  // reachable from root. Repeated calls without zero_grad() accumulate.
  void backward(GradTensor root);

  void zero_grad();
  // Drops all recorded nodes; outstanding GradTensor handles become invalid.
  void clear();

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class GradTensor;
  detail::Node* new_node(std::vector<int> shape, std::size_t numel,
                         bool requires_grad);
  std::vector<std::unique_ptr<detail::Node>> nodes_;
};

std::size_t shape_numel(const std::vector<int>& shape);

// Precomputed 1-D resampling weights shared by the differentiable op and the
// plain image-space resampler.
struct ResampleTable {
  int in_size = 0;
  int out_size = 0;
  std::vector<int> start;       // first input tap per output index
  std::vector<int> len;         // tap count per output index
  std::vector<std::size_t> offset;  // into weights
  std::vector<double> weights;

  ResampleTable transpose() const;
};

// kind: Lanczos-a windowed sinc (normalized) or Catmull-Rom bicubic.
ResampleTable make_lanczos_table(int in_size, int out_size, int a);
ResampleTable make_bicubic_table(int in_size, int out_size);

// y[o] = sum_i w[o][i] * x[i] applied along rows then columns of a
// channel-major [C,H,W] buffer (helper shared with image-space code).
void apply_resample_rows(const ResampleTable& t, const double* in, double* out,
                         int channels, int height, int width);
void apply_resample_cols(const ResampleTable& t, const double* in, double* out,
                         int channels, int height, int width);

double lanczos_kernel(double x, int a);

}  // namespace rdpv::tensor
