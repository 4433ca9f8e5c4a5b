#include "rdpv/trajectory.hpp"

#include <algorithm>

namespace rdpv {

const TrackSample* Trajectory::sample_at(int frame) const {
  auto it = std::lower_bound(
      samples.begin(), samples.end(), frame,
      [](const TrackSample& s, int f) { return s.frame < f; });
  if (it == samples.end() || it->frame != frame) return nullptr;
  return &*it;
}

Trajectory scale_trajectory(const Trajectory& t, double factor) {
  Trajectory out = t;
  out.radius *= factor;
  for (auto& s : out.samples) {
    s.x *= factor;
    s.y *= factor;
  }
  return out;
}

std::vector<Trajectory> scale_trajectories(const std::vector<Trajectory>& ts,
                                           double factor) {
  std::vector<Trajectory> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(scale_trajectory(t, factor));
  return out;
}

}  // namespace rdpv
