#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rdpv/tracking.hpp"

namespace rdpv::track {

namespace {

void sobel(const Image& img, std::vector<double>& gx, std::vector<double>& gy) {
  const int h = img.height(), w = img.width();
  gx.assign(static_cast<std::size_t>(h) * w, 0.0);
  gy.assign(static_cast<std::size_t>(h) * w, 0.0);
  auto px = [&](int y, int x) {
    return img.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double tl = px(y - 1, x - 1), tc = px(y - 1, x), tr = px(y - 1, x + 1);
      const double ml = px(y, x - 1), mr = px(y, x + 1);
      const double bl = px(y + 1, x - 1), bc = px(y + 1, x), br = px(y + 1, x + 1);
      gx[static_cast<std::size_t>(y) * w + x] = (tr + 2 * mr + br) - (tl + 2 * ml + bl);
      gy[static_cast<std::size_t>(y) * w + x] = (bl + 2 * bc + br) - (tl + 2 * tc + tr);
    }
  }
}

void splat_bilinear(std::vector<double>& acc, int h, int w, double cy, double cx,
                    double weight) {
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const double fx = cx - x0;
  const double fy = cy - y0;
  const double w00 = (1 - fx) * (1 - fy);
  const double w01 = fx * (1 - fy);
  const double w10 = (1 - fx) * fy;
  const double w11 = fx * fy;
  auto add = [&](int y, int x, double v) {
    if (y >= 0 && y < h && x >= 0 && x < w) {
      acc[static_cast<std::size_t>(y) * w + x] += v;
    }
  };
  add(y0, x0, weight * w00);
  add(y0, x0 + 1, weight * w01);
  add(y0 + 1, x0, weight * w10);
  add(y0 + 1, x0 + 1, weight * w11);
}

}  // namespace

std::vector<Detection> cht_localize(const Image& frame, const ChtParams& params) {
  if (params.r_min < 1.0 || params.r_max < params.r_min) {
    throw std::invalid_argument("cht_localize: empty or invalid radius band");
  }
  const int h = frame.height(), w = frame.width();
  const int r_lo = static_cast<int>(std::lround(params.r_min));
  const int r_hi = static_cast<int>(std::lround(params.r_max));
  const int n_radii = r_hi - r_lo + 1;

  std::vector<double> gx, gy;
  sobel(frame, gx, gy);
  double max_mag = 0.0;
  std::vector<double> mag(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < mag.size(); ++i) {
    mag[i] = std::hypot(gx[i], gy[i]);
    max_mag = std::max(max_mag, mag[i]);
  }
  std::vector<Detection> detections;
  if (max_mag <= 0.0) return detections;
  const double edge_cut = params.edge_threshold * max_mag;

  // one accumulator plane per radius, votes along both gradient polarities
  std::vector<std::vector<double>> acc(
      static_cast<std::size_t>(n_radii),
      std::vector<double>(static_cast<std::size_t>(h) * w, 0.0));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (mag[i] <= edge_cut) continue;
      const double ux = gx[i] / mag[i];
      const double uy = gy[i] / mag[i];
      for (int ri = 0; ri < n_radii; ++ri) {
        const double r = r_lo + ri;
        splat_bilinear(acc[ri], h, w, y + r * uy, x + r * ux, mag[i]);
        splat_bilinear(acc[ri], h, w, y - r * uy, x - r * ux, mag[i]);
      }
    }
  }

  std::vector<double> total(static_cast<std::size_t>(h) * w, 0.0);
  for (int ri = 0; ri < n_radii; ++ri) {
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += acc[ri][i];
  }

  const int nms =
      std::max(1, static_cast<int>(std::lround(
                      params.nms_radius > 0.0 ? params.nms_radius : params.r_min)));
  auto mass3x3 = [&](const std::vector<double>& a, int y, int x) {
    double m = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
          m += a[static_cast<std::size_t>(yy) * w + xx];
        }
      }
    }
    return m;
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = total[static_cast<std::size_t>(y) * w + x];
      if (v <= 0.0) continue;
      bool is_peak = true;
      for (int dy = -nms; dy <= nms && is_peak; ++dy) {
        for (int dx = -nms; dx <= nms && is_peak; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const double u = total[static_cast<std::size_t>(yy) * w + xx];
          // ties broken toward the lexicographically first pixel
          if (u > v || (u == v && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_peak = false;
          }
        }
      }
      if (!is_peak) continue;
      const double score = mass3x3(total, y, x);
      if (score <= params.accumulator_threshold) continue;

      // radius from the best-voting plane around the peak
      int best_r = r_lo;
      double best_mass = -1.0;
      for (int ri = 0; ri < n_radii; ++ri) {
        const double m = mass3x3(acc[ri], y, x);
        if (m > best_mass) {
          best_mass = m;
          best_r = r_lo + ri;
        }
      }

      // sub-pixel center: centroid of the total accumulator over 3x3
      double sx = 0.0, sy = 0.0, sm = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const double m = total[static_cast<std::size_t>(yy) * w + xx];
          sx += m * xx;
          sy += m * yy;
          sm += m;
        }
      }
      Detection d;
      d.x = sm > 0.0 ? sx / sm : x;
      d.y = sm > 0.0 ? sy / sm : y;
      d.radius = best_r;
      d.score = score;
      detections.push_back(d);
    }
  }

  if (params.relative_threshold > 0.0 && !detections.empty()) {
    double top = 0.0;
    for (const auto& d : detections) top = std::max(top, d.score);
    const double cut = params.relative_threshold * top;
    std::erase_if(detections, [cut](const Detection& d) { return d.score < cut; });
  }
  return detections;
}

std::vector<Detection> cht_localize(const Image& frame, double r_min,
                                    double r_max, double threshold) {
  ChtParams p;
  p.r_min = r_min;
  p.r_max = r_max;
  p.accumulator_threshold = threshold;
  return cht_localize(frame, p);
}

}  // namespace rdpv::track
