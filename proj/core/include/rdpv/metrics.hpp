#pragma once

#include <span>
#include <vector>

#include "rdpv/image.hpp"
#include "rdpv/trajectory.hpp"

namespace rdpv::metrics {

// Peak signal-to-noise ratio in dB with the dynamic range taken from the
// reference as max(Y) - min(Y). Identical images yield +infinity; a constant
// reference has no defined range and throws.
double psnr(const Image& x, const Image& y_ref);

enum class SsimFormula {
  kConventional,  // covariance numerator, c2 in the variance factor
  kVerbatim,      // sigma_x*sigma_y product and repeated c1, as printed
};

// Global single-window SSIM (whole-image statistics), clamped to [0,1].
double ssim(const Image& x, const Image& y_ref, double k1 = 0.01,
            double k2 = 0.03, SsimFormula formula = SsimFormula::kConventional);

// Ensemble-averaged mean squared displacement from each track's first sample,
// indexed by lag; lag t averages only tracks alive at t. msd[0] == 0.
std::vector<double> msd_curve(const std::vector<Trajectory>& tracks);

// Lin's concordance correlation coefficient in [-1, 1]. Two constant series
// have no defined concordance and return 0 (degenerate flag set when given).
double ccc(std::span<const double> a, std::span<const double> b,
           bool* degenerate = nullptr);

struct MitResult {
  std::vector<double> per_track_frames;  // one entry per immune track
  double mean = 0.0;
};

// Frames each immune cell spends within the interaction radius
// 2 * (tumor_radius + immune_radius) of the tumor center.
MitResult mean_interaction_time(const std::vector<Trajectory>& immune,
                                const Trajectory& tumor, double immune_radius,
                                double tumor_radius);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

// Welch's unequal-variance two-sided t-test.
TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b);

struct FidelityResult {
  double detection_percentage = 0.0;  // in [0, 100]
  double swap_error = 0.0;            // mean identity changes per GT trajectory
};

// A GT trajectory counts as detected when at least half of its samples have a
// detected sample within match_radius; swaps are identity changes along the
// matched detected ids of each GT trajectory.
FidelityResult tracking_fidelity(const std::vector<Trajectory>& detected,
                                 const std::vector<Trajectory>& gt,
                                 double match_radius);

// Separable Gaussian smoothing (replicate boundary); identity at sigma == 0.
// Used to build ground truth from real acquired frames.
Image gaussian_smooth(const Image& img, double sigma);

// Regularized incomplete beta function (exposed for the statistics tests).
double incomplete_beta(double a, double b, double x);

struct MetricsReport {
  std::vector<double> psnr_per_frame;
  double psnr_mean = 0.0;
  std::vector<double> ssim_per_frame;
  double ssim_mean = 0.0;
  std::vector<double> msd;
  double ccc_vs_gt = 0.0;
  std::vector<double> mit_distribution;
  double mit_mean = 0.0;
  double ttest_t = 0.0;
  double ttest_p = 1.0;
  double detection_percentage = 0.0;
  double swap_error = 0.0;
  bool has_image_metrics = false;
  bool has_track_metrics = false;
};

}  // namespace rdpv::metrics
