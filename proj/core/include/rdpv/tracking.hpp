#pragma once

#include <utility>
#include <vector>

#include "rdpv/image.hpp"
#include "rdpv/trajectory.hpp"

namespace rdpv::track {

struct Detection {
  int frame = 0;
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
  double score = 0.0;  // accumulator mass at the peak
};

struct ChtParams {
  double r_min = 2.0;
  double r_max = 12.0;
  // minimum accumulated vote mass at a peak (3x3 neighborhood)
  double accumulator_threshold = 2.0;
  // peaks weaker than this fraction of the strongest peak are ghost votes
  double relative_threshold = 0.3;
  // edge pixels vote when |grad| exceeds this fraction of the max magnitude
  double edge_threshold = 0.12;
  // non-maximum suppression radius; <= 0 means use r_min
  double nms_radius = 0.0;
};

// Gradient-weighted circular Hough transform over the radius band with
// sub-pixel centers from the accumulator peak centroid.
std::vector<Detection> cht_localize(const Image& frame, const ChtParams& params);
std::vector<Detection> cht_localize(const Image& frame, double r_min,
                                    double r_max, double threshold);

// rows = existing tracks, cols = new detections; gated pairs carry kGated.
struct CostMatrix {
  static constexpr double kGated = 1e9;

  int rows = 0;
  int cols = 0;
  std::vector<double> cost;

  CostMatrix() = default;
  CostMatrix(int r, int c) : rows(r), cols(c), cost(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return cost[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return cost[static_cast<std::size_t>(r) * cols + c]; }
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), gated pairs excluded
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
};

// Minimum-total-cost one-to-one assignment (Munkres-style, O(n^3)).
Assignment solve_assignment(const CostMatrix& cost);

struct LinkParams {
  double gate_radius = 4.5;
  int max_missed = 2;
};

// Frame-to-frame linking with gating; tracks missing more than max_missed
// consecutive frames are terminated, unmatched detections spawn tracks.
std::vector<Trajectory> link_tracks(
    const std::vector<std::vector<Detection>>& detections_per_frame,
    const LinkParams& params);

struct TrackingParams {
  ChtParams cht;
  LinkParams link;
};

// cht_localize on every frame followed by link_tracks.
std::vector<Trajectory> track_video(const FrameSequence& frames,
                                    const TrackingParams& params);

}  // namespace rdpv::track
