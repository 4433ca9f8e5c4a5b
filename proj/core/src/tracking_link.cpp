#include <algorithm>
#include <cmath>
#include <vector>

#include "rdpv/tracking.hpp"

namespace rdpv::track {

namespace {

struct ActiveTrack {
  Trajectory trajectory;
  double last_x = 0.0;
  double last_y = 0.0;
  int missed = 0;
  std::vector<double> radii;
};

}  // namespace

std::vector<Trajectory> link_tracks(
    const std::vector<std::vector<Detection>>& detections_per_frame,
    const LinkParams& params) {
  std::vector<ActiveTrack> active;
  std::vector<Trajectory> finished;
  int next_id = 0;

  auto finalize = [&](ActiveTrack& t) {
    if (!t.radii.empty()) {
      std::vector<double> r = t.radii;
      std::nth_element(r.begin(), r.begin() + r.size() / 2, r.end());
      t.trajectory.radius = r[r.size() / 2];
    }
    finished.push_back(std::move(t.trajectory));
  };

  for (std::size_t f = 0; f < detections_per_frame.size(); ++f) {
    const auto& dets = detections_per_frame[f];
    const int frame = static_cast<int>(f);

    CostMatrix cost(static_cast<int>(active.size()), static_cast<int>(dets.size()));
    for (int r = 0; r < cost.rows; ++r) {
      for (int c = 0; c < cost.cols; ++c) {
        const double d = std::hypot(active[r].last_x - dets[c].x,
                                    active[r].last_y - dets[c].y);
        cost.at(r, c) = d <= params.gate_radius ? d : CostMatrix::kGated;
      }
    }
    const Assignment assign = solve_assignment(cost);

    std::vector<char> matched_track(active.size(), 0);
    std::vector<char> matched_det(dets.size(), 0);
    for (const auto& [r, c] : assign.pairs) {
      ActiveTrack& t = active[r];
      t.trajectory.samples.push_back({frame, dets[c].x, dets[c].y});
      t.last_x = dets[c].x;
      t.last_y = dets[c].y;
      t.missed = 0;
      t.radii.push_back(dets[c].radius);
      matched_track[r] = 1;
      matched_det[c] = 1;
    }

    std::vector<ActiveTrack> survivors;
    survivors.reserve(active.size());
    for (std::size_t r = 0; r < active.size(); ++r) {
      if (!matched_track[r]) {
        active[r].missed += 1;
        if (active[r].missed > params.max_missed) {
          finalize(active[r]);
          continue;
        }
      }
      survivors.push_back(std::move(active[r]));
    }
    active = std::move(survivors);

    for (std::size_t c = 0; c < dets.size(); ++c) {
      if (matched_det[c]) continue;
      ActiveTrack t;
      t.trajectory.track_id = next_id++;
      t.trajectory.samples.push_back({frame, dets[c].x, dets[c].y});
      t.last_x = dets[c].x;
      t.last_y = dets[c].y;
      t.radii.push_back(dets[c].radius);
      active.push_back(std::move(t));
    }
  }
  for (auto& t : active) finalize(t);

  std::sort(finished.begin(), finished.end(),
            [](const Trajectory& a, const Trajectory& b) {
              return a.track_id < b.track_id;
            });
  return finished;
}

std::vector<Trajectory> track_video(const FrameSequence& frames,
                                    const TrackingParams& params) {
  std::vector<std::vector<Detection>> per_frame(frames.frames.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t f = 0; f < frames.frames.size(); ++f) {
    per_frame[f] = cht_localize(frames.frames[f], params.cht);
    for (auto& d : per_frame[f]) d.frame = static_cast<int>(f);
  }
  return link_tracks(per_frame, params.link);
}

}  // namespace rdpv::track
