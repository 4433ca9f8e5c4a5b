#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rdpv/image.hpp"
#include "rdpv/trajectory.hpp"

namespace rdpv::io {

// Binary PGM (P5), maxval 255 or 65535 (16-bit samples big-endian).
Image read_pgm(const std::filesystem::path& path, int* bit_depth = nullptr);
void write_pgm(const std::filesystem::path& path, const Image& img, int bit_depth);

// Loads lexicographically ordered frames matching a '*' wildcard pattern,
// ordered by the numeric suffix in the file name. All frames must share one
// shape and bit depth.
FrameSequence load_frames(const std::filesystem::path& dir,
                          const std::string& pattern = "*.pgm");

// Writes frames as <prefix>0000.pgm, <prefix>0001.pgm, ...
void save_frames(const std::filesystem::path& dir, const FrameSequence& frames,
                 const std::string& prefix = "frame_");

// CSV with header track_id,frame,x,y,radius.
void write_trajectory_csv(const std::filesystem::path& path,
                          const std::vector<Trajectory>& tracks);
std::vector<Trajectory> read_trajectory_csv(const std::filesystem::path& path);

}  // namespace rdpv::io
