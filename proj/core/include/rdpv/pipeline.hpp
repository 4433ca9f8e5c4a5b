#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rdpv/degradation.hpp"
#include "rdpv/metrics.hpp"
#include "rdpv/network.hpp"
#include "rdpv/sim.hpp"
#include "rdpv/solver.hpp"
#include "rdpv/tracking.hpp"

namespace rdpv::pipeline {

enum class Profile { kPaper, kDesk };

Profile profile_from_name(const std::string& name);
const char* profile_name(Profile p);

struct MetricsParams {
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  metrics::SsimFormula ssim_formula = metrics::SsimFormula::kConventional;
  double gt_smooth_sigma = 0.0;  // Gaussian ground-truth prefilter (real videos)
  double match_radius = 4.0;     // trajectory matching radius, HR pixels
};

struct PipelineConfig {
  Profile profile = Profile::kPaper;
  std::uint64_t seed = 1;
  int n_videos = 1;
  std::string method = "rdpv";  // bicubic | dpv | rdpv | rdpv-tva | rdpv-tvi
  std::vector<std::string> compare_methods = {"bicubic", "dpv", "rdpv",
                                              "rdpv-tva", "rdpv-tvi"};
  bool record_timing = true;

  sim::SimParams sim;
  degrade::DegradationSpec degradation;
  net::NetworkConfig network;
  solver::SolverConfig solver;
  track::TrackingParams tracking;
  MetricsParams metrics;

  // positions detected on LR frames are multiplied by this before metrics
  double track_coordinate_scale = 1.0;

  std::filesystem::path in_dir;
  std::filesystem::path ref_dir;
  std::filesystem::path out_dir;
  // optional: traces.jsonl from an RDPV run fixing per-frame DPV budgets
  std::filesystem::path dpv_budget_from;
};

// Fills every sub-config with the named profile's defaults (seed/paths kept).
void apply_profile(PipelineConfig& cfg, Profile profile);

PipelineConfig default_config(Profile profile);

// JSON round trip for configs (used by --config and the manifest).
PipelineConfig config_from_json_file(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& cfg);
void merge_config_json(PipelineConfig& cfg, const std::string& json_text);

std::string config_hash(const PipelineConfig& cfg);

// Manifest: config hash, seeds, tool version; written to every artifact dir.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const PipelineConfig& cfg);

// video_### subdirectories of a corpus dir, or the dir itself when it holds
// frames directly.
std::vector<std::filesystem::path> list_video_dirs(
    const std::filesystem::path& corpus);

// per-command entry points (the CLI wraps these)
std::vector<std::filesystem::path> run_generate(const PipelineConfig& cfg);
void run_degrade(const PipelineConfig& cfg);
void run_superres(const PipelineConfig& cfg);
void run_track(const PipelineConfig& cfg);

struct VideoMetrics {
  std::string video;
  metrics::MetricsReport report;
};

struct CorpusMetrics {
  std::vector<VideoMetrics> videos;
  double psnr_mean = 0.0, psnr_std = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;
};

CorpusMetrics run_metrics(const PipelineConfig& cfg);

struct CompareRow {
  std::string method;
  double psnr_mean = 0.0, psnr_std = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;
};

struct CompareSummary {
  std::vector<CompareRow> rows;  // ordered as configured
};

CompareSummary run_compare(const PipelineConfig& cfg);

// Dispatch by command name; returns a process exit status.
int run_pipeline(const std::string& command, const PipelineConfig& cfg);

// Scales a tracking parameter set between resolutions (band, gate).
track::TrackingParams scaled_tracking_params(const track::TrackingParams& p,
                                             double factor);

}  // namespace rdpv::pipeline
