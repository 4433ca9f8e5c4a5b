#include "rdpv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace rdpv::metrics {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // population variance
};

Moments moments(std::span<const double> v) {
  Moments m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size());
  return m;
}

}  // namespace

double psnr(const Image& x, const Image& y_ref) {
  if (!x.same_shape(y_ref)) {
    throw std::invalid_argument("psnr: images must share one shape");
  }
  const auto [min_it, max_it] =
      std::minmax_element(y_ref.pixels().begin(), y_ref.pixels().end());
  const double range = *max_it - *min_it;
  if (range <= 0.0) {
    throw std::invalid_argument("psnr: constant reference has no defined range");
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data()[i] - y_ref.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(range / std::sqrt(mse));
}

double ssim(const Image& x, const Image& y_ref, double k1, double k2,
            SsimFormula formula) {
  if (!x.same_shape(y_ref)) {
    throw std::invalid_argument("ssim: images must share one shape");
  }
  const std::size_t n = x.size();
  const Moments mx = moments({x.data(), n});
  const Moments my = moments({y_ref.data(), n});
  const double sx = std::sqrt(mx.var);
  const double sy = std::sqrt(my.var);

  double value = 0.0;
  if (formula == SsimFormula::kConventional) {
    const auto [min_it, max_it] =
        std::minmax_element(y_ref.pixels().begin(), y_ref.pixels().end());
    double range = *max_it - *min_it;
    if (range <= 0.0) range = 1.0;  // degenerate constant reference
    const double c1 = (k1 * range) * (k1 * range);
    const double c2 = (k2 * range) * (k2 * range);
    double cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cov += (x.data()[i] - mx.mean) * (y_ref.data()[i] - my.mean);
    }
    cov /= static_cast<double>(n);
    value = ((2.0 * mx.mean * my.mean + c1) * (2.0 * cov + c2)) /
            ((mx.mean * mx.mean + my.mean * my.mean + c1) * (mx.var + my.var + c2));
  } else {
    // the printed form: sigma product in the numerator, c1 repeated in the
    // second denominator factor, constants not squared
    const double max_y =
        *std::max_element(y_ref.pixels().begin(), y_ref.pixels().end());
    const double c1 = std::max(max_y, 1e-12) * k1;
    const double c2 = std::max(max_y, 1e-12) * k2;
    value = ((2.0 * mx.mean * my.mean + c1) * (2.0 * sx * sy + c2)) /
            ((mx.mean * mx.mean + my.mean * my.mean + c1) * (mx.var + my.var + c1));
  }
  return std::clamp(value, 0.0, 1.0);
}

std::vector<double> msd_curve(const std::vector<Trajectory>& tracks) {
  std::vector<double> sum;
  std::vector<int> count;
  for (const Trajectory& t : tracks) {
    if (t.samples.empty()) continue;
    const int first = t.samples.front().frame;
    const double x0 = t.samples.front().x;
    const double y0 = t.samples.front().y;
    for (const TrackSample& s : t.samples) {
      const int lag = s.frame - first;
      if (lag >= static_cast<int>(sum.size())) {
        sum.resize(lag + 1, 0.0);
        count.resize(lag + 1, 0);
      }
      const double dx = s.x - x0;
      const double dy = s.y - y0;
      sum[lag] += dx * dx + dy * dy;
      count[lag] += 1;
    }
  }
  std::vector<double> msd(sum.size(), 0.0);
  for (std::size_t t = 0; t < sum.size(); ++t) {
    if (count[t] > 0) msd[t] = sum[t] / count[t];
  }
  return msd;
}

double ccc(std::span<const double> a, std::span<const double> b,
           bool* degenerate) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("ccc: series must have equal length >= 2");
  }
  if (degenerate != nullptr) *degenerate = false;
  const Moments ma = moments(a);
  const Moments mb = moments(b);
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma.mean) * (b[i] - mb.mean);
  }
  cov /= static_cast<double>(a.size());
  const double mean_diff = ma.mean - mb.mean;
  const double denom = ma.var + mb.var + mean_diff * mean_diff;
  if (denom <= 0.0) {
    if (degenerate != nullptr) *degenerate = true;
    return 0.0;
  }
  return 2.0 * cov / denom;
}

MitResult mean_interaction_time(const std::vector<Trajectory>& immune,
                                const Trajectory& tumor, double immune_radius,
                                double tumor_radius) {
  const double interaction_radius = 2.0 * (tumor_radius + immune_radius);
  MitResult out;
  out.per_track_frames.reserve(immune.size());
  for (const Trajectory& t : immune) {
    int frames_close = 0;
    for (const TrackSample& s : t.samples) {
      const TrackSample* ts = tumor.sample_at(s.frame);
      if (ts == nullptr) continue;
      if (std::hypot(s.x - ts->x, s.y - ts->y) <= interaction_radius) {
        frames_close += 1;
      }
    }
    out.per_track_frames.push_back(static_cast<double>(frames_close));
  }
  if (!out.per_track_frames.empty()) {
    double acc = 0.0;
    for (double v : out.per_track_frames) acc += v;
    out.mean = acc / static_cast<double>(out.per_track_frames.size());
  }
  return out;
}

namespace {

double beta_cont_fraction(double a, double b, double x) {
  // modified Lentz continued fraction for the incomplete beta function
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return bt * beta_cont_fraction(a, b, x) / a;
  }
  return 1.0 - bt * beta_cont_fraction(b, a, 1.0 - x) / b;
}

TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("two_sample_ttest: each sample needs >= 2 values");
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const Moments ma = moments(a);
  const Moments mb = moments(b);
  // unbiased sample variances
  const double va = ma.var * na / (na - 1.0);
  const double vb = mb.var * nb / (nb - 1.0);
  const double se2 = va / na + vb / nb;

  TTestResult r;
  if (se2 <= 0.0) {
    // zero pooled variance: identical means are indistinguishable
    r.t = ma.mean == mb.mean ? 0.0 : std::numeric_limits<double>::infinity();
    r.df = na + nb - 2.0;
    r.p = ma.mean == mb.mean ? 1.0 : 0.0;
    return r;
  }
  r.t = (ma.mean - mb.mean) / std::sqrt(se2);
  const double da = va / na, db = vb / nb;
  r.df = (se2 * se2) /
         (da * da / (na - 1.0) + db * db / (nb - 1.0));
  // two-sided p from the Student-t distribution
  r.p = incomplete_beta(r.df / 2.0, 0.5, r.df / (r.df + r.t * r.t));
  r.p = std::clamp(r.p, 0.0, 1.0);
  return r;
}

FidelityResult tracking_fidelity(const std::vector<Trajectory>& detected,
                                 const std::vector<Trajectory>& gt,
                                 double match_radius) {
  FidelityResult out;
  if (gt.empty()) return out;

  // frame -> (track index, sample) lookup over the detected set
  std::map<int, std::vector<std::pair<int, const TrackSample*>>> by_frame;
  for (std::size_t i = 0; i < detected.size(); ++i) {
    for (const TrackSample& s : detected[i].samples) {
      by_frame[s.frame].emplace_back(static_cast<int>(i), &s);
    }
  }

  int detected_count = 0;
  double total_swaps = 0.0;
  for (const Trajectory& g : gt) {
    if (g.samples.empty()) continue;
    int matched = 0;
    int swaps = 0;
    int prev_id = -1;
    for (const TrackSample& s : g.samples) {
      auto it = by_frame.find(s.frame);
      if (it == by_frame.end()) continue;
      int best_id = -1;
      double best_d = match_radius;
      for (const auto& [id, ds] : it->second) {
        const double d = std::hypot(ds->x - s.x, ds->y - s.y);
        if (d <= best_d) {
          best_d = d;
          best_id = id;
        }
      }
      if (best_id < 0) continue;
      matched += 1;
      if (prev_id >= 0 && best_id != prev_id) swaps += 1;
      prev_id = best_id;
    }
    if (2 * matched >= static_cast<int>(g.samples.size())) detected_count += 1;
    total_swaps += swaps;
  }
  out.detection_percentage =
      100.0 * detected_count / static_cast<double>(gt.size());
  out.swap_error = total_swaps / static_cast<double>(gt.size());
  return out;
}

Image gaussian_smooth(const Image& img, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_smooth: sigma must be >= 0");
  if (sigma == 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  const int h = img.height(), w = img.width();
  Image tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * img.at(y, std::clamp(x + i, 0, w - 1));
      }
      tmp.at(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * tmp.at(std::clamp(y + i, 0, h - 1), x);
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

}  // namespace rdpv::metrics
