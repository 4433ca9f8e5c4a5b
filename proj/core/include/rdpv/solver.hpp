#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rdpv/degradation.hpp"
#include "rdpv/image.hpp"
#include "rdpv/network.hpp"
#include "rdpv/tensor.hpp"

namespace rdpv::solver {

enum class Method { kDpv, kRdpv, kRdpvTva, kRdpvTvi };

const char* method_name(Method m);
Method method_from_name(const std::string& name);
bool method_has_tv(Method m);
// p exponent of the TV term: 1 anisotropic, 2 isotropic.
int method_tv_order(Method m);

struct AdamParams {
  double step = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SolverConfig {
  Method method = Method::kRdpv;
  double lambda = 0.0;  // TV weight; ignored for DPV/RDPV
  int max_iters_first = 1000;
  int max_iters_rest = 500;
  int early_stop_start_first = 500;
  int early_stop_start_rest = 300;
  int patience = 50;
  double flat_threshold = 1e-4;
  double tv_eps = 1e-8;  // smoothing inside |.| and sqrt; 0 disables
  AdamParams adam;
  // DPV fairness protocol: per-frame iteration caps taken from an RDPV run.
  // Empty means the fixed-budget fallback (max_iters_first / _rest).
  std::vector<int> dpv_frame_budgets;

  void validate() const;
};

enum class StopReason { kMaxIters, kPatienceFlat };

const char* stop_reason_name(StopReason r);

struct SolverTrace {
  std::vector<double> objective;  // one entry per iteration
  int stop_iteration = 0;
  StopReason stop_reason = StopReason::kMaxIters;
  double wall_time_ms = 0.0;
};

// Thrown when the objective or a gradient goes non-finite; carries the trace
// collected so far.
class SolverAbort : public std::runtime_error {
 public:
  SolverAbort(const std::string& what, SolverTrace trace)
      : std::runtime_error(what), trace(std::move(trace)) {}
  SolverTrace trace;
};

// Eq-style TV penalty on a recorded tensor (sum over pixels of the p-norm of
// the forward-difference gradient, replicate boundary).
tensor::GradTensor tv_penalty(tensor::Tape& tape, tensor::GradTensor u, int p,
                              double eps = 1e-8);

// Full objective graph for one frame: data term plus optional TV term.
struct ObjectiveGraph {
  std::vector<tensor::GradTensor> params;  // aligned with weights.params
  tensor::GradTensor output;               // f_theta(z), [1,H,W]
  tensor::GradTensor objective;            // scalar
};

ObjectiveGraph frame_objective(tensor::Tape& tape, const net::NetworkWeights& w,
                               const net::SeedImage& z, const Image& y,
                               const degrade::DegradationSpec& spec,
                               const SolverConfig& cfg,
                               bool requires_grad = true);

// Adam optimizer state, one moment pair per parameter tensor.
struct AdamState {
  int step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_weights(const net::NetworkWeights& w);
};

// Standard Adam update with bias correction; throws SolverAbort on a
// non-finite gradient.
void adam_step(net::NetworkWeights& w,
               const std::vector<std::span<const double>>& grads,
               AdamState& state, const AdamParams& hyper);

// True when the trailing `patience` values of the window decreased by less
// than flat_threshold in relative terms. The window must contain only values
// observed after the early-stop start iteration.
bool early_stop_check(std::span<const double> window, int patience,
                      double flat_threshold);

struct FrameBudget {
  int max_iters = 0;
  int early_stop_start = 0;  // ignored when early stopping is off
  bool early_stop = true;
};

struct FrameResult {
  Image sr;
  net::NetworkWeights final_weights;
  SolverTrace trace;
};

FrameResult solve_frame(const Image& y, const net::NetworkWeights& init,
                        const net::SeedImage& z, const SolverConfig& cfg,
                        const degrade::DegradationSpec& spec,
                        const FrameBudget& budget);

// First-frame budget convenience overload.
FrameResult solve_frame(const Image& y, const net::NetworkWeights& init,
                        const net::SeedImage& z, const SolverConfig& cfg,
                        const degrade::DegradationSpec& spec);

struct VideoResult {
  FrameSequence sr;
  std::vector<SolverTrace> traces;
};

// DPV: fresh random weights per frame, budget from dpv_frame_budgets (or the
// fixed fallback), no early stopping. RDPV and TV variants: frame 1 from a
// fresh init with the first-frame budget, later frames warm-started from the
// previous frame's final weights with the reduced budget. z is fixed for the
// whole video.
VideoResult run_video(const FrameSequence& lr, const net::NetworkConfig& net_cfg,
                      const SolverConfig& cfg,
                      const degrade::DegradationSpec& spec, std::uint64_t seed);

}  // namespace rdpv::solver
