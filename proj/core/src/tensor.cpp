#include "rdpv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rdpv::tensor {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_same_shape(const GradTensor& a, const GradTensor& b,
                      const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("shape dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

detail::Node* Tape::new_node(std::vector<int> shape, std::size_t numel,
                             bool requires_grad) {
  auto node = std::make_unique<detail::Node>();
  node->id = static_cast<int>(nodes_.size());
  node->shape = std::move(shape);
  node->values.resize(numel);
  node->requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

GradTensor Tape::leaf(std::vector<int> shape, std::vector<double> values,
                      bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  if (values.size() != n) {
    throw std::invalid_argument("leaf: values length must equal product of shape");
  }
  detail::Node* node = new_node(std::move(shape), 0, requires_grad);
  node->values = std::move(values);
  return GradTensor(node);
}

GradTensor Tape::add(GradTensor a, GradTensor b) {
  check_same_shape(a, b, "add");
  detail::Node* na = a.node_;
  detail::Node* nb = b.node_;
  detail::Node* out = new_node(na->shape, na->numel(),
                               na->requires_grad || nb->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) {
    out->values[i] = na->values[i] + nb->values[i];
  }
  if (out->requires_grad) {
    out->backprop = [na, nb, out] {
      if (na->requires_grad) {
        na->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) na->grad[i] += out->grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) nb->grad[i] += out->grad[i];
      }
    };
  }
  return GradTensor(out);
}

GradTensor Tape::sub(GradTensor a, GradTensor b) {
  check_same_shape(a, b, "sub");
  detail::Node* na = a.node_;
  detail::Node* nb = b.node_;
  detail::Node* out = new_node(na->shape, na->numel(),
                               na->requires_grad || nb->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) {
    out->values[i] = na->values[i] - nb->values[i];
  }
  if (out->requires_grad) {
    out->backprop = [na, nb, out] {
      if (na->requires_grad) {
        na->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) na->grad[i] += out->grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) nb->grad[i] -= out->grad[i];
      }
    };
  }
  return GradTensor(out);
}

GradTensor Tape::mul(GradTensor a, GradTensor b) {
  check_same_shape(a, b, "mul");
  detail::Node* na = a.node_;
  detail::Node* nb = b.node_;
  detail::Node* out = new_node(na->shape, na->numel(),
                               na->requires_grad || nb->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) {
    out->values[i] = na->values[i] * nb->values[i];
  }
  if (out->requires_grad) {
    out->backprop = [na, nb, out] {
      if (na->requires_grad) {
        na->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) {
          na->grad[i] += out->grad[i] * nb->values[i];
        }
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) {
          nb->grad[i] += out->grad[i] * na->values[i];
        }
      }
    };
  }
  return GradTensor(out);
}

GradTensor Tape::scale(GradTensor a, double c) {
  detail::Node* na = a.node_;
  detail::Node* out = new_node(na->shape, na->numel(), na->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) out->values[i] = c * na->values[i];
  if (out->requires_grad) {
    out->backprop = [na, out, c] {
      na->ensure_grad();
      for (std::size_t i = 0; i < out->numel(); ++i) na->grad[i] += c * out->grad[i];
    };
  }
  return GradTensor(out);
}

GradTensor Tape::sum(GradTensor a) {
  detail::Node* na = a.node_;
  detail::Node* out = new_node({1}, 1, na->requires_grad);
  double acc = 0.0;
  for (double v : na->values) acc += v;
  out->values[0] = acc;
  if (out->requires_grad) {
    out->backprop = [na, out] {
      na->ensure_grad();
      const double g = out->grad[0];
      for (std::size_t i = 0; i < na->numel(); ++i) na->grad[i] += g;
    };
  }
  return GradTensor(out);
}

GradTensor Tape::mean(GradTensor a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

namespace {

// out[y][x] += sum over the 3x3 stencil of k * in (zero padding, same size).
// One fused pass per row so the 9 taps vectorize.
void corr3x3_same_acc(const double* __restrict in, const double* __restrict k,
                      double* __restrict out, int h, int w) {
  auto row_pass = [&](int y, bool top, bool bottom) {
    const double* r0 = top ? nullptr : in + static_cast<std::size_t>(y - 1) * w;
    const double* r1 = in + static_cast<std::size_t>(y) * w;
    const double* r2 = bottom ? nullptr : in + static_cast<std::size_t>(y + 1) * w;
    double* o = out + static_cast<std::size_t>(y) * w;
    if (!top && !bottom) {
      for (int x = 1; x < w - 1; ++x) {
        o[x] += k[0] * r0[x - 1] + k[1] * r0[x] + k[2] * r0[x + 1] +
                k[3] * r1[x - 1] + k[4] * r1[x] + k[5] * r1[x + 1] +
                k[6] * r2[x - 1] + k[7] * r2[x] + k[8] * r2[x + 1];
      }
    } else if (top && !bottom) {
      for (int x = 1; x < w - 1; ++x) {
        o[x] += k[3] * r1[x - 1] + k[4] * r1[x] + k[5] * r1[x + 1] +
                k[6] * r2[x - 1] + k[7] * r2[x] + k[8] * r2[x + 1];
      }
    } else if (!top && bottom) {
      for (int x = 1; x < w - 1; ++x) {
        o[x] += k[0] * r0[x - 1] + k[1] * r0[x] + k[2] * r0[x + 1] +
                k[3] * r1[x - 1] + k[4] * r1[x] + k[5] * r1[x + 1];
      }
    } else {
      for (int x = 1; x < w - 1; ++x) {
        o[x] += k[3] * r1[x - 1] + k[4] * r1[x] + k[5] * r1[x + 1];
      }
    }
    // border columns with explicit clamping
    for (const int x : {0, w - 1}) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        const double* r = in + static_cast<std::size_t>(yy) * w;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          acc += k[(dy + 1) * 3 + (dx + 1)] * r[xx];
        }
      }
      o[x] += acc;
    }
  };
  for (int y = 0; y < h; ++y) row_pass(y, y == 0, y == h - 1);
}

// acc[t] += sum over pixels of go[y][x] * in at the t-th 3x3 tap (zero pad).
void corr3x3_same_grad_kernel(const double* __restrict in,
                              const double* __restrict go, double* __restrict acc,
                              int h, int w) {
  double a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0, a8 = 0;
  for (int y = 0; y < h; ++y) {
    const double* g = go + static_cast<std::size_t>(y) * w;
    const double* r0 = y > 0 ? in + static_cast<std::size_t>(y - 1) * w : nullptr;
    const double* r1 = in + static_cast<std::size_t>(y) * w;
    const double* r2 = y < h - 1 ? in + static_cast<std::size_t>(y + 1) * w : nullptr;
    if (r0 != nullptr && r2 != nullptr) {
      for (int x = 1; x < w - 1; ++x) {
        const double gv = g[x];
        a0 += gv * r0[x - 1];
        a1 += gv * r0[x];
        a2 += gv * r0[x + 1];
        a3 += gv * r1[x - 1];
        a4 += gv * r1[x];
        a5 += gv * r1[x + 1];
        a6 += gv * r2[x - 1];
        a7 += gv * r2[x];
        a8 += gv * r2[x + 1];
      }
    } else if (r0 == nullptr && r2 != nullptr) {
      for (int x = 1; x < w - 1; ++x) {
        const double gv = g[x];
        a3 += gv * r1[x - 1];
        a4 += gv * r1[x];
        a5 += gv * r1[x + 1];
        a6 += gv * r2[x - 1];
        a7 += gv * r2[x];
        a8 += gv * r2[x + 1];
      }
    } else if (r0 != nullptr && r2 == nullptr) {
      for (int x = 1; x < w - 1; ++x) {
        const double gv = g[x];
        a0 += gv * r0[x - 1];
        a1 += gv * r0[x];
        a2 += gv * r0[x + 1];
        a3 += gv * r1[x - 1];
        a4 += gv * r1[x];
        a5 += gv * r1[x + 1];
      }
    } else {
      for (int x = 1; x < w - 1; ++x) {
        const double gv = g[x];
        a3 += gv * r1[x - 1];
        a4 += gv * r1[x];
        a5 += gv * r1[x + 1];
      }
    }
    for (const int x : {0, w - 1}) {
      const double gv = g[x];
      if (x > 0) {
        a3 += gv * r1[x - 1];
        if (r0 != nullptr) a0 += gv * r0[x - 1];
        if (r2 != nullptr) a6 += gv * r2[x - 1];
      }
      a4 += gv * r1[x];
      if (r0 != nullptr) a1 += gv * r0[x];
      if (r2 != nullptr) a7 += gv * r2[x];
      if (x < w - 1) {
        a5 += gv * r1[x + 1];
        if (r0 != nullptr) a2 += gv * r0[x + 1];
        if (r2 != nullptr) a8 += gv * r2[x + 1];
      }
    }
  }
  acc[0] += a0;
  acc[1] += a1;
  acc[2] += a2;
  acc[3] += a3;
  acc[4] += a4;
  acc[5] += a5;
  acc[6] += a6;
  acc[7] += a7;
  acc[8] += a8;
}

}  // namespace

GradTensor Tape::conv2d(GradTensor input, GradTensor kernel, int stride,
                        int padding) {
  detail::Node* ni = input.node_;
  detail::Node* nk = kernel.node_;
  if (ni->shape.size() != 3 || nk->shape.size() != 4) {
    throw std::invalid_argument("conv2d: expects input [C,H,W] and kernel [Co,Ci,k,k]");
  }
  const int c_in = ni->shape[0], h = ni->shape[1], w = ni->shape[2];
  const int c_out = nk->shape[0], kc = nk->shape[1], kh = nk->shape[2], kw = nk->shape[3];
  if (kc != c_in) {
    throw std::invalid_argument("conv2d: kernel input channels do not match input");
  }
  if (kh != kw || kh % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel must be square with odd size");
  }
  if (stride <= 0 || padding < 0) {
    throw std::invalid_argument("conv2d: stride must be positive, padding non-negative");
  }
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;
  if (oh < 1 || ow < 1) {
    throw std::invalid_argument("conv2d: output would be empty");
  }

  detail::Node* out = new_node({c_out, oh, ow},
                               static_cast<std::size_t>(c_out) * oh * ow,
                               ni->requires_grad || nk->requires_grad);

  const double* in = ni->values.data();
  const double* ker = nk->values.data();
  double* o = out->values.data();

  // output index range for which idx*stride - padding + k stays in [0, size)
  const auto valid_range = [](int in_size, int out_size, int stride, int padding,
                              int k, int& lo, int& hi) {
    const int lo_num = padding - k;
    lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
    const int hi_num = in_size - 1 + padding - k;
    hi = hi_num < 0 ? -1 : std::min(out_size - 1, hi_num / stride);
  };

  const bool same3x3 = stride == 1 && padding == 1 && kh == 3 && h >= 2 && w >= 2;

#pragma omp parallel for schedule(static)
  for (int co = 0; co < c_out; ++co) {
    double* out_c = o + static_cast<std::size_t>(co) * oh * ow;
    std::fill(out_c, out_c + static_cast<std::size_t>(oh) * ow, 0.0);
    for (int ci = 0; ci < c_in; ++ci) {
      const double* in_c = in + static_cast<std::size_t>(ci) * h * w;
      const double* k_c =
          ker + ((static_cast<std::size_t>(co) * c_in + ci) * kh) * kw;
      if (same3x3) {
        corr3x3_same_acc(in_c, k_c, out_c, h, w);
        continue;
      }
      for (int ky = 0; ky < kh; ++ky) {
        int oy_lo, oy_hi;
        valid_range(h, oh, stride, padding, ky, oy_lo, oy_hi);
        for (int kx = 0; kx < kw; ++kx) {
          const double wgt = k_c[ky * kw + kx];
          int ox_lo, ox_hi;
          valid_range(w, ow, stride, padding, kx, ox_lo, ox_hi);
          const int n = ox_hi - ox_lo + 1;
          if (n <= 0) continue;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const int iy = oy * stride - padding + ky;
            const double* __restrict in_row =
                in_c + static_cast<std::size_t>(iy) * w +
                (ox_lo * stride - padding + kx);
            double* __restrict out_row =
                out_c + static_cast<std::size_t>(oy) * ow + ox_lo;
            if (stride == 1) {
              for (int i = 0; i < n; ++i) out_row[i] += wgt * in_row[i];
            } else {
              for (int i = 0; i < n; ++i) out_row[i] += wgt * in_row[i * stride];
            }
          }
        }
      }
    }
  }

  if (out->requires_grad) {
    out->backprop = [ni, nk, out, c_in, h, w, c_out, kh, kw, oh, ow, stride,
                     padding, valid_range] {
      const double* go = out->grad.data();
      const double* in = ni->values.data();
      const double* ker = nk->values.data();
      if (ni->requires_grad) {
        ni->ensure_grad();
        double* gi = ni->grad.data();
        if (stride == 1 && padding == 1 && kh == 3 && h >= 2 && w >= 2) {
          // same-size case: the input gradient is a correlation of the output
          // gradient with the flipped kernel
#pragma omp parallel for schedule(static)
          for (int ci = 0; ci < c_in; ++ci) {
            double* gi_c = gi + static_cast<std::size_t>(ci) * h * w;
            for (int co = 0; co < c_out; ++co) {
              const double* go_c = go + static_cast<std::size_t>(co) * oh * ow;
              const double* k_c =
                  ker + ((static_cast<std::size_t>(co) * c_in + ci) * kh) * kw;
              double flipped[9];
              for (int t = 0; t < 9; ++t) flipped[t] = k_c[8 - t];
              corr3x3_same_acc(go_c, flipped, gi_c, h, w);
            }
          }
        } else if (stride == 1) {
          // full correlation with the flipped kernel; contiguous inner loop
#pragma omp parallel for schedule(static)
          for (int ci = 0; ci < c_in; ++ci) {
            double* gi_c = gi + static_cast<std::size_t>(ci) * h * w;
            for (int co = 0; co < c_out; ++co) {
              const double* go_c = go + static_cast<std::size_t>(co) * oh * ow;
              const double* k_c =
                  ker + ((static_cast<std::size_t>(co) * c_in + ci) * kh) * kw;
              for (int ky = 0; ky < kh; ++ky) {
                const int iy_lo = std::max(0, ky - padding);
                const int iy_hi = std::min(h - 1, oh - 1 - padding + ky);
                for (int kx = 0; kx < kw; ++kx) {
                  const double wgt = k_c[ky * kw + kx];
                  const int ix_lo = std::max(0, kx - padding);
                  const int ix_hi = std::min(w - 1, ow - 1 - padding + kx);
                  const int n = ix_hi - ix_lo + 1;
                  if (n <= 0) continue;
                  for (int iy = iy_lo; iy <= iy_hi; ++iy) {
                    const double* __restrict go_row =
                        go_c + static_cast<std::size_t>(iy + padding - ky) * ow +
                        (ix_lo + padding - kx);
                    double* __restrict gi_row =
                        gi_c + static_cast<std::size_t>(iy) * w + ix_lo;
                    for (int i = 0; i < n; ++i) gi_row[i] += wgt * go_row[i];
                  }
                }
              }
            }
          }
        } else {
          // each (ci, iy, ix) owned by exactly one iteration: deterministic
#pragma omp parallel for schedule(static)
          for (int ci = 0; ci < c_in; ++ci) {
            for (int iy = 0; iy < h; ++iy) {
              for (int ix = 0; ix < w; ++ix) {
                double acc = 0.0;
                for (int ky = 0; ky < kh; ++ky) {
                  const int ty = iy + padding - ky;
                  if (ty < 0 || ty % stride != 0) continue;
                  const int oy = ty / stride;
                  if (oy >= oh) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    const int tx = ix + padding - kx;
                    if (tx < 0 || tx % stride != 0) continue;
                    const int ox = tx / stride;
                    if (ox >= ow) continue;
                    for (int co = 0; co < c_out; ++co) {
                      acc += go[(static_cast<std::size_t>(co) * oh + oy) * ow + ox] *
                             ker[(((static_cast<std::size_t>(co) * c_in + ci) * kh +
                                   ky) *
                                  kw) +
                                 kx];
                    }
                  }
                }
                gi[(static_cast<std::size_t>(ci) * h + iy) * w + ix] += acc;
              }
            }
          }
        }
      }
      if (nk->requires_grad) {
        nk->ensure_grad();
        double* gk = nk->grad.data();
        if (stride == 1 && padding == 1 && kh == 3 && h >= 2 && w >= 2) {
#pragma omp parallel for schedule(static)
          for (int co = 0; co < c_out; ++co) {
            const double* go_c = go + static_cast<std::size_t>(co) * oh * ow;
            for (int ci = 0; ci < c_in; ++ci) {
              const double* in_c = in + static_cast<std::size_t>(ci) * h * w;
              corr3x3_same_grad_kernel(
                  in_c, go_c,
                  gk + ((static_cast<std::size_t>(co) * c_in + ci) * kh) * kw, h, w);
            }
          }
          return;
        }
#pragma omp parallel for schedule(static)
        for (int co = 0; co < c_out; ++co) {
          const double* go_c = go + static_cast<std::size_t>(co) * oh * ow;
          for (int ci = 0; ci < c_in; ++ci) {
            const double* in_c = in + static_cast<std::size_t>(ci) * h * w;
            for (int ky = 0; ky < kh; ++ky) {
              int oy_lo, oy_hi;
              valid_range(h, oh, stride, padding, ky, oy_lo, oy_hi);
              for (int kx = 0; kx < kw; ++kx) {
                int ox_lo, ox_hi;
                valid_range(w, ow, stride, padding, kx, ox_lo, ox_hi);
                const int n = ox_hi - ox_lo + 1;
                if (n <= 0) continue;
                double acc = 0.0;
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  const double* __restrict go_row =
                      go_c + static_cast<std::size_t>(oy) * ow + ox_lo;
                  const double* __restrict in_row =
                      in_c + static_cast<std::size_t>(oy * stride - padding + ky) * w +
                      (ox_lo * stride - padding + kx);
                  if (stride == 1) {
                    for (int i = 0; i < n; ++i) acc += go_row[i] * in_row[i];
                  } else {
                    for (int i = 0; i < n; ++i) acc += go_row[i] * in_row[i * stride];
                  }
                }
                gk[((static_cast<std::size_t>(co) * c_in + ci) * kh + ky) * kw +
                   kx] += acc;
              }
            }
          }
        }
      }
    };
  }
  return GradTensor(out);
}

GradTensor Tape::bias_add(GradTensor input, GradTensor bias) {
  detail::Node* ni = input.node_;
  detail::Node* nb = bias.node_;
  if (ni->shape.size() != 3 || nb->shape.size() != 1 ||
      nb->shape[0] != ni->shape[0]) {
    throw std::invalid_argument("bias_add: expects [C,H,W] and [C]");
  }
  const int c = ni->shape[0];
  const std::size_t plane = static_cast<std::size_t>(ni->shape[1]) * ni->shape[2];
  detail::Node* out = new_node(ni->shape, ni->numel(),
                               ni->requires_grad || nb->requires_grad);
  for (int ch = 0; ch < c; ++ch) {
    const double b = nb->values[ch];
    for (std::size_t i = 0; i < plane; ++i) {
      out->values[ch * plane + i] = ni->values[ch * plane + i] + b;
    }
  }
  if (out->requires_grad) {
    out->backprop = [ni, nb, out, c, plane] {
      if (ni->requires_grad) {
        ni->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) ni->grad[i] += out->grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += out->grad[ch * plane + i];
          nb->grad[ch] += acc;
        }
      }
    };
  }
  return GradTensor(out);
}

GradTensor Tape::batch_norm(GradTensor input, GradTensor gamma, GradTensor beta,
                            double eps) {
  detail::Node* ni = input.node_;
  detail::Node* ng = gamma.node_;
  detail::Node* nb = beta.node_;
  if (eps <= 0.0) throw std::invalid_argument("batch_norm: eps must be positive");
  if (ni->shape.size() != 3) {
    throw std::invalid_argument("batch_norm: expects input [C,H,W]");
  }
  const int c = ni->shape[0];
  if (ng->shape != std::vector<int>{c} || nb->shape != std::vector<int>{c}) {
    throw std::invalid_argument("batch_norm: gamma/beta must have shape [C]");
  }
  const std::size_t plane = static_cast<std::size_t>(ni->shape[1]) * ni->shape[2];
  const bool needs_grad =
      ni->requires_grad || ng->requires_grad || nb->requires_grad;
  detail::Node* out = new_node(ni->shape, ni->numel(), needs_grad);

  // per-channel statistics are enough for the adjoint: x-hat is recomputed
  // from the saved input instead of being stored per element
  auto means = std::make_shared<std::vector<double>>(c);
  auto inv_std = std::make_shared<std::vector<double>>(c);

  for (int ch = 0; ch < c; ++ch) {
    const double* __restrict x = ni->values.data() + ch * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += x[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = x[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double is = 1.0 / std::sqrt(var + eps);
    (*means)[ch] = mean;
    (*inv_std)[ch] = is;
    const double g = ng->values[ch];
    const double b = nb->values[ch];
    double* __restrict o = out->values.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      o[i] = g * (x[i] - mean) * is + b;
    }
  }

  if (needs_grad) {
    out->backprop = [ni, ng, nb, out, c, plane, means, inv_std] {
      for (int ch = 0; ch < c; ++ch) {
        const double* __restrict dy = out->grad.data() + ch * plane;
        const double* __restrict x = ni->values.data() + ch * plane;
        const double mean = (*means)[ch];
        const double is = (*inv_std)[ch];
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += dy[i];
          sum_dy_xh += dy[i] * (x[i] - mean) * is;
        }
        if (ng->requires_grad) {
          ng->ensure_grad();
          ng->grad[ch] += sum_dy_xh;
        }
        if (nb->requires_grad) {
          nb->ensure_grad();
          nb->grad[ch] += sum_dy;
        }
        if (ni->requires_grad) {
          ni->ensure_grad();
          double* __restrict dx = ni->grad.data() + ch * plane;
          const double n = static_cast<double>(plane);
          const double coeff = ng->values[ch] * is;
          const double mean_dy = sum_dy / n;
          const double mean_dy_xh = sum_dy_xh / n;
          for (std::size_t i = 0; i < plane; ++i) {
            dx[i] += coeff * (dy[i] - mean_dy - (x[i] - mean) * is * mean_dy_xh);
          }
        }
      }
    };
  }
  return GradTensor(out);
}

GradTensor Tape::leaky_relu(GradTensor input, double slope) {
  if (slope <= 0.0 || slope >= 1.0) {
    throw std::invalid_argument("leaky_relu: slope must lie in (0,1)");
  }
  detail::Node* ni = input.node_;
  detail::Node* out = new_node(ni->shape, ni->numel(), ni->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) {
    const double x = ni->values[i];
    out->values[i] = x >= 0.0 ? x : slope * x;
  }
  if (out->requires_grad) {
    out->backprop = [ni, out, slope] {
      ni->ensure_grad();
      for (std::size_t i = 0; i < out->numel(); ++i) {
        ni->grad[i] += out->grad[i] * (ni->values[i] >= 0.0 ? 1.0 : slope);
      }
    };
  }
  return GradTensor(out);
}

GradTensor Tape::sigmoid(GradTensor input) {
  detail::Node* ni = input.node_;
  detail::Node* out = new_node(ni->shape, ni->numel(), ni->requires_grad);
  for (std::size_t i = 0; i < out->numel(); ++i) {
    out->values[i] = 1.0 / (1.0 + std::exp(-ni->values[i]));
  }
  if (out->requires_grad) {
    out->backprop = [ni, out] {
      ni->ensure_grad();
      for (std::size_t i = 0; i < out->numel(); ++i) {
        const double s = out->values[i];
        ni->grad[i] += out->grad[i] * s * (1.0 - s);
      }
    };
  }
  return GradTensor(out);
}

double lanczos_kernel(double x, int a) {
  if (x == 0.0) return 1.0;
  const double ax = std::abs(x);
  if (ax >= static_cast<double>(a)) return 0.0;
  const double px = kPi * x;
  return static_cast<double>(a) * std::sin(px) * std::sin(px / a) / (px * px);
}

namespace {

double bicubic_kernel(double x) {
  // Catmull-Rom (a = -0.5)
  const double ax = std::abs(x);
  if (ax <= 1.0) return (1.5 * ax - 2.5) * ax * ax + 1.0;
  if (ax < 2.0) return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0;
  return 0.0;
}

template <typename Kernel>
ResampleTable make_table(int in_size, int out_size, double support,
                         Kernel kernel, bool antialias) {
  if (in_size <= 0 || out_size <= 0) {
    throw std::invalid_argument("resample: sizes must be positive");
  }
  ResampleTable t;
  t.in_size = in_size;
  t.out_size = out_size;
  t.start.resize(out_size);
  t.len.resize(out_size);
  t.offset.resize(out_size);

  const double scale = static_cast<double>(out_size) / in_size;
  // widen the kernel when minifying so it acts as an anti-alias filter
  const double filter_scale = (antialias && scale < 1.0) ? 1.0 / scale : 1.0;
  const double radius = support * filter_scale;

  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) / scale - 0.5;
    int lo = static_cast<int>(std::ceil(center - radius));
    int hi = static_cast<int>(std::floor(center + radius));
    // accumulate out-of-range taps onto the clamped edge sample
    std::vector<double> w(static_cast<std::size_t>(in_size), 0.0);
    double wsum = 0.0;
    int used_lo = in_size, used_hi = -1;
    for (int i = lo; i <= hi; ++i) {
      const double x = (center - i) / filter_scale;
      const double k = kernel(x);
      if (k == 0.0) continue;
      const int idx = std::clamp(i, 0, in_size - 1);
      w[idx] += k;
      wsum += k;
      used_lo = std::min(used_lo, idx);
      used_hi = std::max(used_hi, idx);
    }
    if (used_hi < used_lo || wsum == 0.0) {
      // degenerate window: fall back to nearest sample
      const int idx = std::clamp(static_cast<int>(std::lround(center)), 0, in_size - 1);
      w[idx] = 1.0;
      wsum = 1.0;
      used_lo = used_hi = idx;
    }
    t.start[o] = used_lo;
    t.len[o] = used_hi - used_lo + 1;
    t.offset[o] = t.weights.size();
    for (int i = used_lo; i <= used_hi; ++i) {
      t.weights.push_back(w[i] / wsum);
    }
  }
  return t;
}

}  // namespace

ResampleTable make_lanczos_table(int in_size, int out_size, int a) {
  if (a <= 0) throw std::invalid_argument("lanczos: window order must be positive");
  return make_table(
      in_size, out_size, static_cast<double>(a),
      [a](double x) { return lanczos_kernel(x, a); }, /*antialias=*/true);
}

ResampleTable make_bicubic_table(int in_size, int out_size) {
  // plain interpolation: no anti-alias widening
  return make_table(in_size, out_size, 2.0, bicubic_kernel, /*antialias=*/false);
}

ResampleTable ResampleTable::transpose() const {
  ResampleTable t;
  t.in_size = out_size;
  t.out_size = in_size;
  std::vector<std::vector<std::pair<int, double>>> rows(
      static_cast<std::size_t>(in_size));
  for (int o = 0; o < out_size; ++o) {
    for (int j = 0; j < len[o]; ++j) {
      rows[start[o] + j].emplace_back(o, weights[offset[o] + j]);
    }
  }
  t.start.resize(in_size);
  t.len.resize(in_size);
  t.offset.resize(in_size);
  for (int i = 0; i < in_size; ++i) {
    if (rows[i].empty()) {
      t.start[i] = 0;
      t.len[i] = 0;
      t.offset[i] = t.weights.size();
      continue;
    }
    // taps are contiguous in o because source windows are intervals that
    // move monotonically; pad any gap with zeros just in case
    t.start[i] = rows[i].front().first;
    t.offset[i] = t.weights.size();
    for (auto& [o, w] : rows[i]) {
      while (static_cast<int>(t.weights.size() - t.offset[i]) < o - t.start[i]) {
        t.weights.push_back(0.0);
      }
      t.weights.push_back(w);
    }
    t.len[i] = static_cast<int>(t.weights.size() - t.offset[i]);
  }
  return t;
}

void apply_resample_rows(const ResampleTable& t, const double* in, double* out,
                         int channels, int height, int width) {
  // resampling along the vertical axis: out has t.out_size rows
  (void)height;
  for (int c = 0; c < channels; ++c) {
    const double* in_c = in + static_cast<std::size_t>(c) * t.in_size * width;
    double* out_c = out + static_cast<std::size_t>(c) * t.out_size * width;
    for (int oy = 0; oy < t.out_size; ++oy) {
      double* orow = out_c + static_cast<std::size_t>(oy) * width;
      std::fill(orow, orow + width, 0.0);
      for (int j = 0; j < t.len[oy]; ++j) {
        const double w = t.weights[t.offset[oy] + j];
        if (w == 0.0) continue;
        const double* irow =
            in_c + static_cast<std::size_t>(t.start[oy] + j) * width;
        for (int x = 0; x < width; ++x) orow[x] += w * irow[x];
      }
    }
  }
}

void apply_resample_cols(const ResampleTable& t, const double* in, double* out,
                         int channels, int height, int width) {
  // resampling along the horizontal axis: in has `width` == t.in_size columns
  (void)width;
  for (int c = 0; c < channels; ++c) {
    const double* in_c = in + static_cast<std::size_t>(c) * height * t.in_size;
    double* out_c = out + static_cast<std::size_t>(c) * height * t.out_size;
    for (int y = 0; y < height; ++y) {
      const double* irow = in_c + static_cast<std::size_t>(y) * t.in_size;
      double* orow = out_c + static_cast<std::size_t>(y) * t.out_size;
      for (int ox = 0; ox < t.out_size; ++ox) {
        double acc = 0.0;
        for (int j = 0; j < t.len[ox]; ++j) {
          acc += t.weights[t.offset[ox] + j] * irow[t.start[ox] + j];
        }
        orow[ox] = acc;
      }
    }
  }
}

GradTensor Tape::lanczos_resample(GradTensor input, Rational factor, int a) {
  detail::Node* ni = input.node_;
  if (ni->shape.size() != 3) {
    throw std::invalid_argument("lanczos_resample: expects input [C,H,W]");
  }
  if (factor.num <= 0 || factor.den <= 0) {
    throw std::invalid_argument("lanczos_resample: factor must be positive");
  }
  const int c = ni->shape[0], h = ni->shape[1], w = ni->shape[2];
  if ((static_cast<long long>(h) * factor.num) % factor.den != 0 ||
      (static_cast<long long>(w) * factor.num) % factor.den != 0) {
    throw std::invalid_argument("lanczos_resample: output size must be integral");
  }
  const int oh = static_cast<int>(static_cast<long long>(h) * factor.num / factor.den);
  const int ow = static_cast<int>(static_cast<long long>(w) * factor.num / factor.den);

  if (oh == h && ow == w && factor.num == factor.den) {
    // factor 1: identity map
    detail::Node* out = new_node(ni->shape, ni->numel(), ni->requires_grad);
    out->values = ni->values;
    if (out->requires_grad) {
      out->backprop = [ni, out] {
        ni->ensure_grad();
        for (std::size_t i = 0; i < out->numel(); ++i) ni->grad[i] += out->grad[i];
      };
    }
    return GradTensor(out);
  }

  // tables recur every solver iteration; cache them per (in, out, a)
  struct TablePair {
    std::shared_ptr<const ResampleTable> fwd;
    std::shared_ptr<const ResampleTable> bwd;
  };
  static std::map<std::tuple<int, int, int>, TablePair> cache;
  static std::mutex cache_mutex;
  auto cached = [&](int in_size, int out_size) {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto& entry = cache[{in_size, out_size, a}];
    if (entry.fwd == nullptr) {
      entry.fwd = std::make_shared<const ResampleTable>(
          make_lanczos_table(in_size, out_size, a));
      entry.bwd = std::make_shared<const ResampleTable>(entry.fwd->transpose());
    }
    return entry;
  };
  const TablePair rows = cached(h, oh);
  const TablePair cols = cached(w, ow);
  const auto row_t = rows.fwd;
  const auto col_t = cols.fwd;

  detail::Node* out = new_node({c, oh, ow},
                               static_cast<std::size_t>(c) * oh * ow,
                               ni->requires_grad);
  std::vector<double> tmp(static_cast<std::size_t>(c) * oh * w);
  apply_resample_rows(*row_t, ni->values.data(), tmp.data(), c, h, w);
  apply_resample_cols(*col_t, tmp.data(), out->values.data(), c, oh, w);

  if (out->requires_grad) {
    const auto row_bt = rows.bwd;
    const auto col_bt = cols.bwd;
    out->backprop = [ni, out, row_bt, col_bt, c, h, w, oh] {
      ni->ensure_grad();
      std::vector<double> tmp(static_cast<std::size_t>(c) * oh * w);
      std::vector<double> gin(ni->numel());
      apply_resample_cols(*col_bt, out->grad.data(), tmp.data(), c, oh,
                          col_bt->in_size);
      apply_resample_rows(*row_bt, tmp.data(), gin.data(), c, oh, w);
      for (std::size_t i = 0; i < ni->numel(); ++i) ni->grad[i] += gin[i];
    };
  }
  return GradTensor(out);
}

GradTensor Tape::concat_channels(GradTensor a, GradTensor b) {
  detail::Node* na = a.node_;
  detail::Node* nb = b.node_;
  if (na->shape.size() != 3 || nb->shape.size() != 3 ||
      na->shape[1] != nb->shape[1] || na->shape[2] != nb->shape[2]) {
    throw std::invalid_argument("concat_channels: spatial dims must match");
  }
  const int ca = na->shape[0], cb = nb->shape[0];
  detail::Node* out = new_node({ca + cb, na->shape[1], na->shape[2]},
                               na->numel() + nb->numel(),
                               na->requires_grad || nb->requires_grad);
  std::copy(na->values.begin(), na->values.end(), out->values.begin());
  std::copy(nb->values.begin(), nb->values.end(),
            out->values.begin() + static_cast<std::ptrdiff_t>(na->numel()));
  if (out->requires_grad) {
    out->backprop = [na, nb, out] {
      const std::size_t n_a = na->numel();
      if (na->requires_grad) {
        na->ensure_grad();
        for (std::size_t i = 0; i < n_a; ++i) na->grad[i] += out->grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (std::size_t i = 0; i < nb->numel(); ++i) {
          nb->grad[i] += out->grad[n_a + i];
        }
      }
    };
  }
  return GradTensor(out);
}

GradTensor Tape::total_variation(GradTensor input, int p, double eps) {
  detail::Node* ni = input.node_;
  if (p != 1 && p != 2) {
    throw std::invalid_argument("total_variation: p must be 1 or 2");
  }
  if (eps < 0.0) throw std::invalid_argument("total_variation: eps must be >= 0");
  if (ni->shape.size() != 3 || ni->shape[0] != 1) {
    throw std::invalid_argument("total_variation: expects input [1,H,W]");
  }
  const int h = ni->shape[1], w = ni->shape[2];
  if (h < 2 || w < 2) {
    throw std::invalid_argument("total_variation: image must be at least 2x2");
  }

  detail::Node* out = new_node({1}, 1, ni->requires_grad);
  const double* u = ni->values.data();
  auto dh_at = [&](int y, int x) {
    const int xn = std::min(x + 1, w - 1);  // replicate (Neumann) boundary
    return u[y * w + xn] - u[y * w + x];
  };
  auto dv_at = [&](int y, int x) {
    const int yn = std::min(y + 1, h - 1);
    return u[yn * w + x] - u[y * w + x];
  };

  double acc = 0.0;
  if (p == 1) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dh = dh_at(y, x), dv = dv_at(y, x);
        acc += std::sqrt(dh * dh + eps) + std::sqrt(dv * dv + eps);
      }
    }
  } else {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dh = dh_at(y, x), dv = dv_at(y, x);
        acc += std::sqrt(dh * dh + dv * dv + eps);
      }
    }
  }
  // eps=0 and p=1 contributes 2*sqrt(0)=0 for flat pixels, as |.| would
  out->values[0] = acc;

  if (out->requires_grad) {
    out->backprop = [ni, out, p, eps, h, w] {
      ni->ensure_grad();
      const double g = out->grad[0];
      const double* u = ni->values.data();
      double* du = ni->grad.data();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int xn = std::min(x + 1, w - 1);
          const int yn = std::min(y + 1, h - 1);
          const double dh = u[y * w + xn] - u[y * w + x];
          const double dv = u[yn * w + x] - u[y * w + x];
          double ph = 0.0, pv = 0.0;
          if (p == 1) {
            const double mh = std::sqrt(dh * dh + eps);
            const double mv = std::sqrt(dv * dv + eps);
            ph = mh > 0.0 ? dh / mh : 0.0;
            pv = mv > 0.0 ? dv / mv : 0.0;
          } else {
            const double m = std::sqrt(dh * dh + dv * dv + eps);
            if (m > 0.0) {
              ph = dh / m;
              pv = dv / m;
            }
          }
          if (xn != x) {
            du[y * w + xn] += g * ph;
            du[y * w + x] -= g * ph;
          }
          if (yn != y) {
            du[yn * w + x] += g * pv;
            du[y * w + x] -= g * pv;
          }
        }
      }
    };
  }
  return GradTensor(out);
}

void Tape::backward(GradTensor root) {
  detail::Node* r = root.node_;
  if (r == nullptr || r->numel() != 1) {
    throw std::invalid_argument("backward: root must be a scalar tensor");
  }
  // stash previously accumulated gradients so this pass starts clean and
  // repeated calls accumulate exactly one d(root)/dT per call
  std::vector<std::vector<double>> stashed(nodes_.size());
  for (auto& n : nodes_) {
    if (!n->grad.empty()) stashed[n->id] = std::move(n->grad);
    n->grad.clear();
  }
  r->ensure_grad();
  r->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node* n = it->get();
    if (n->id > r->id) continue;
    if (n->backprop && !n->grad.empty()) n->backprop();
  }
  for (auto& n : nodes_) {
    auto& prev = stashed[n->id];
    if (prev.empty()) continue;
    if (n->grad.empty()) {
      n->grad = std::move(prev);
    } else {
      for (std::size_t i = 0; i < prev.size(); ++i) n->grad[i] += prev[i];
    }
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n->grad.clear();
}

void Tape::clear() { nodes_.clear(); }

}  // namespace rdpv::tensor
