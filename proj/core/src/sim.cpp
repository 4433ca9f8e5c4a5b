#include "rdpv/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rdpv/frame_io.hpp"
#include "rdpv/random.hpp"

namespace rdpv::sim {

namespace {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

double dist(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

Vec2 unit_towards(const Vec2& from, const Vec2& to) {
  const double d = dist(from, to);
  if (d <= 1e-12) return {0.0, 0.0};
  return {(to.x - from.x) / d, (to.y - from.y) / d};
}

double reflect_coord(double v, double lo, double hi) {
  if (lo >= hi) return 0.5 * (lo + hi);
  // fold into [lo, hi]
  const double span = hi - lo;
  double u = std::fmod(v - lo, 2.0 * span);
  if (u < 0.0) u += 2.0 * span;
  return u <= span ? lo + u : hi - (u - span);
}

}  // namespace

void SimParams::validate() const {
  if (frame_height <= 0 || frame_width <= 0) {
    throw std::invalid_argument("SimParams: frame size must be positive");
  }
  if (n_immune < 0 || n_frames < 1) {
    throw std::invalid_argument("SimParams: counts must be positive");
  }
  if (immune_radius <= 0.0 || tumor_radius <= 0.0) {
    throw std::invalid_argument("SimParams: radii must be positive");
  }
  if (t_eff > n_frames) {
    throw std::invalid_argument("SimParams: effectiveness time must be <= frame count");
  }
  if (drift_modulus < 0.0 || diffusion < 0.0) {
    throw std::invalid_argument("SimParams: dynamics magnitudes must be >= 0");
  }
}

std::vector<Trajectory> simulate_trajectories(const SimParams& params) {
  params.validate();
  RandomStream rng(derive_seed(params.seed, "sim"));

  const Vec2 tumor{(params.frame_width - 1) / 2.0, (params.frame_height - 1) / 2.0};

  // initial placement: uniform, no two cells closer than the sum of radii
  std::vector<Vec2> pos(params.n_immune);
  const double margin = params.immune_radius + 1.0;
  for (int i = 0; i < params.n_immune; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      Vec2 cand{rng.uniform(margin, params.frame_width - 1.0 - margin),
                rng.uniform(margin, params.frame_height - 1.0 - margin)};
      placed = dist(cand, tumor) >= params.immune_radius + params.tumor_radius;
      for (int j = 0; j < i && placed; ++j) {
        placed = dist(cand, pos[j]) >= 2.0 * params.immune_radius;
      }
      if (placed) pos[i] = cand;
    }
    if (!placed) {
      throw std::runtime_error("simulate_trajectories: could not place cells without overlap");
    }
  }

  std::vector<Trajectory> tracks(params.n_immune + 1);
  tracks[0].track_id = 0;
  tracks[0].radius = params.tumor_radius;
  for (int i = 0; i < params.n_immune; ++i) {
    tracks[i + 1].track_id = i + 1;
    tracks[i + 1].radius = params.immune_radius;
  }

  auto record = [&](int frame) {
    tracks[0].samples.push_back({frame, tumor.x, tumor.y});
    for (int i = 0; i < params.n_immune; ++i) {
      tracks[i + 1].samples.push_back({frame, pos[i].x, pos[i].y});
    }
  };
  record(0);

  const PotentialParams& pot = params.potential;
  for (int t = 1; t < params.n_frames; ++t) {
    // synchronous update from the previous frame's positions
    std::vector<Vec2> next = pos;
    for (int i = 0; i < params.n_immune; ++i) {
      Vec2 step{0.0, 0.0};
      if (params.drift_modulus > 0.0) {
        const Vec2 dir = unit_towards(pos[i], tumor);
        step.x += params.drift_modulus * dir.x;
        step.y += params.drift_modulus * dir.y;
      }
      if (params.diffusion > 0.0) {
        step.x += params.diffusion * rng.normal();
        step.y += params.diffusion * rng.normal();
      }
      if (params.potential_enabled && t <= params.t_eff) {
        const double d = dist(pos[i], tumor);
        if (d < pot.repulsion_range && d > 1e-9) {
          const double mag =
              std::min(pot.repulsion_strength / (d * d), pot.max_step);
          const Vec2 away = unit_towards(tumor, pos[i]);
          step.x += mag * away.x;
          step.y += mag * away.y;
        } else if (d < pot.attraction_range) {
          const Vec2 toward = unit_towards(pos[i], tumor);
          step.x += pot.attraction_strength * toward.x;
          step.y += pot.attraction_strength * toward.y;
        }
        for (int j = 0; j < params.n_immune; ++j) {
          if (j == i) continue;
          const double dij = dist(pos[i], pos[j]);
          if (dij < pot.repulsion_range && dij > 1e-9) {
            const double mag =
                std::min(pot.repulsion_strength / (dij * dij), pot.max_step);
            const Vec2 away = unit_towards(pos[j], pos[i]);
            step.x += mag * away.x;
            step.y += mag * away.y;
          }
        }
      }
      next[i].x = reflect_coord(pos[i].x + step.x, margin,
                                params.frame_width - 1.0 - margin);
      next[i].y = reflect_coord(pos[i].y + step.y, margin,
                                params.frame_height - 1.0 - margin);
    }
    pos = std::move(next);
    record(t);
  }
  return tracks;
}

namespace {

// Phase-contrast-like radial profile: dark interior, bright rim, smooth
// falloff into the background.
double cell_profile(double d, double radius, double interior, double rim,
                    double background) {
  const double core_end = radius - 1.6;
  const double rim_start = radius - 1.0;
  const double rim_end = radius - 0.2;
  const double outer_end = radius + 0.8;
  if (d <= core_end) return interior;
  if (d <= rim_start) {
    const double u = (d - core_end) / (rim_start - core_end);
    return interior + u * (rim - interior);
  }
  if (d <= rim_end) return rim;
  if (d <= outer_end) {
    const double u = (d - rim_end) / (outer_end - rim_end);
    return rim + u * (background - rim);
  }
  return background;
}

void paint_cell(Image& img, double cx, double cy, double radius,
                double interior, double rim, double background) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 2.0)));
  const int x1 = std::min(img.width() - 1,
                          static_cast<int>(std::ceil(cx + radius + 2.0)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 2.0)));
  const int y1 = std::min(img.height() - 1,
                          static_cast<int>(std::ceil(cy + radius + 2.0)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      if (d <= radius + 0.8) {
        img.at(y, x) = cell_profile(d, radius, interior, rim, background);
      }
    }
  }
}

}  // namespace

FrameSequence render_frames(const std::vector<Trajectory>& trajectories,
                            const SimParams& params) {
  constexpr double kBackground = 0.5;
  constexpr double kInterior = 0.24;
  constexpr double kRim = 0.88;

  FrameSequence seq;
  seq.source_bit_depth = 16;
  seq.frame_interval_s = params.frame_interval_s;
  seq.frames.reserve(params.n_frames);
  for (int t = 0; t < params.n_frames; ++t) {
    Image frame(params.frame_height, params.frame_width, kBackground);
    for (const Trajectory& track : trajectories) {
      const TrackSample* s = track.sample_at(t);
      if (s == nullptr) continue;
      paint_cell(frame, s->x, s->y, track.radius, kInterior, kRim, kBackground);
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

SyntheticVideo make_video(const SimParams& params) {
  SyntheticVideo v;
  v.seed = params.seed;
  v.gt = simulate_trajectories(params);
  v.frames = render_frames(v.gt, params);
  return v;
}

std::vector<std::filesystem::path> make_dataset(
    int n_videos, const SimParams& params, std::uint64_t base_seed,
    const std::filesystem::path& out_dir) {
  if (n_videos < 1) {
    throw std::invalid_argument("make_dataset: need at least one video");
  }
  std::vector<std::filesystem::path> dirs;
  std::filesystem::create_directories(out_dir);
  for (int v = 0; v < n_videos; ++v) {
    SimParams p = params;
    p.seed = derive_seed(base_seed, "video", static_cast<std::uint64_t>(v));
    SyntheticVideo video = make_video(p);

    char name[32];
    std::snprintf(name, sizeof(name), "video_%03d", v);
    const std::filesystem::path dir = out_dir / name;
    io::save_frames(dir / "frames", video.frames);
    io::write_trajectory_csv(dir / "gt_tracks.csv", video.gt);
    dirs.push_back(dir);
  }
  return dirs;
}

}  // namespace rdpv::sim
