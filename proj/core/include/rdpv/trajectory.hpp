#pragma once

#include <vector>

namespace rdpv {

struct TrackSample {
  int frame = 0;
  double x = 0.0;
  double y = 0.0;
};

// One cell's time-indexed positions; frame indices are strictly increasing.
struct Trajectory {
  int track_id = 0;
  double radius = 0.0;
  std::vector<TrackSample> samples;

  int first_frame() const { return samples.empty() ? 0 : samples.front().frame; }
  int last_frame() const { return samples.empty() ? -1 : samples.back().frame; }
  // Sample at a given frame, or nullptr when the track has a gap there.
  const TrackSample* sample_at(int frame) const;
};

// Rescales positions and radii by a constant factor (e.g. LR -> HR pixels).
Trajectory scale_trajectory(const Trajectory& t, double factor);
std::vector<Trajectory> scale_trajectories(const std::vector<Trajectory>& ts,
                                           double factor);

}  // namespace rdpv
