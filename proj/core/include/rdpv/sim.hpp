#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rdpv/image.hpp"
#include "rdpv/trajectory.hpp"

namespace rdpv::sim {

// Radial piecewise tumor-immune potential: 1/d^2 repulsion inside the
// repulsion range, a constant attractive pull up to the attraction range,
// nothing beyond. Immune-immune pairs use the repulsive branch only.
struct PotentialParams {
  double repulsion_range = 16.8;
  double attraction_range = 60.0;
  double repulsion_strength = 300.0;  // step = strength / d^2, capped
  double attraction_strength = 0.3;   // px/frame toward the tumor
  double max_step = 3.0;              // cap on the repulsive step length
};

struct SimParams {
  int frame_height = 288;
  int frame_width = 288;
  int n_immune = 16;
  int n_frames = 100;
  double frame_interval_s = 20.0;
  double drift_modulus = 0.5;  // px/frame, direction re-aimed at the tumor
  double diffusion = 1.0;      // px/frame std per axis
  int t_eff = 60;              // frames during which the potential acts
  bool potential_enabled = true;
  PotentialParams potential;
  double immune_radius = 4.0;
  double tumor_radius = 10.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Tumor (track 0) stationary at the frame center; immune cells (tracks 1..n)
// follow a random walk with drift plus the interaction potential, reflective
// boundary. Deterministic per seed.
std::vector<Trajectory> simulate_trajectories(const SimParams& params);

// Cells drawn as radially shaded disks (bright rim, darker interior) on a
// mid-gray background.
FrameSequence render_frames(const std::vector<Trajectory>& trajectories,
                            const SimParams& params);

struct SyntheticVideo {
  FrameSequence frames;
  std::vector<Trajectory> gt;
  std::uint64_t seed = 0;
};

SyntheticVideo make_video(const SimParams& params);

// Writes video_### directories (frames + GT trajectory CSV) under out_dir;
// per-video seeds are derived from params.seed.
std::vector<std::filesystem::path> make_dataset(
    int n_videos, const SimParams& params, std::uint64_t base_seed,
    const std::filesystem::path& out_dir);

}  // namespace rdpv::sim
