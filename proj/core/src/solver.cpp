#include "rdpv/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "rdpv/random.hpp"

namespace rdpv::solver {

const char* method_name(Method m) {
  switch (m) {
    case Method::kDpv: return "dpv";
    case Method::kRdpv: return "rdpv";
    case Method::kRdpvTva: return "rdpv-tva";
    case Method::kRdpvTvi: return "rdpv-tvi";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "dpv") return Method::kDpv;
  if (name == "rdpv") return Method::kRdpv;
  if (name == "rdpv-tva") return Method::kRdpvTva;
  if (name == "rdpv-tvi") return Method::kRdpvTvi;
  throw std::invalid_argument("unknown solver method: " + name);
}

bool method_has_tv(Method m) {
  return m == Method::kRdpvTva || m == Method::kRdpvTvi;
}

int method_tv_order(Method m) {
  if (m == Method::kRdpvTva) return 1;
  if (m == Method::kRdpvTvi) return 2;
  return 0;
}

const char* stop_reason_name(StopReason r) {
  return r == StopReason::kMaxIters ? "max-iters" : "patience-flat";
}

void SolverConfig::validate() const {
  if (max_iters_first < 1 || max_iters_rest < 1) {
    throw std::invalid_argument("SolverConfig: iteration budgets must be positive");
  }
  if (early_stop_start_first > max_iters_first ||
      early_stop_start_rest > max_iters_rest) {
    throw std::invalid_argument("SolverConfig: early-stop start must be <= max iters");
  }
  if (patience < 2) {
    throw std::invalid_argument("SolverConfig: patience must be >= 2");
  }
  if (flat_threshold < 0.0) {
    throw std::invalid_argument("SolverConfig: flat threshold must be >= 0");
  }
  if (lambda < 0.0) {
    throw std::invalid_argument("SolverConfig: lambda must be >= 0");
  }
  if (adam.step <= 0.0 || adam.eps <= 0.0) {
    throw std::invalid_argument("SolverConfig: invalid optimizer hyperparameters");
  }
}

tensor::GradTensor tv_penalty(tensor::Tape& tape, tensor::GradTensor u, int p,
                              double eps) {
  return tape.total_variation(u, p, eps);
}

ObjectiveGraph frame_objective(tensor::Tape& tape, const net::NetworkWeights& w,
                               const net::SeedImage& z, const Image& y,
                               const degrade::DegradationSpec& spec,
                               const SolverConfig& cfg, bool requires_grad) {
  ObjectiveGraph g;
  net::ForwardGraph fwd = net::forward_on_tape(tape, w, z, requires_grad);
  g.params = std::move(fwd.param_leaves);
  g.output = fwd.output;

  tensor::GradTensor lowres = tape.lanczos_resample(
      g.output, {1, spec.magnification}, /*a=*/3);
  if (lowres.shape()[1] != y.height() || lowres.shape()[2] != y.width()) {
    throw std::invalid_argument(
        "frame_objective: downsampled output does not match observation shape");
  }
  tensor::GradTensor target =
      tape.constant({1, y.height(), y.width()}, y.pixels());
  tensor::GradTensor diff = tape.sub(lowres, target);
  tensor::GradTensor data = tape.sum(tape.mul(diff, diff));

  // lambda == 0 reduces the TV variants to plain RDPV bit-for-bit
  if (method_has_tv(cfg.method) && cfg.lambda > 0.0) {
    tensor::GradTensor tv =
        tv_penalty(tape, g.output, method_tv_order(cfg.method), cfg.tv_eps);
    g.objective = tape.add(data, tape.scale(tv, cfg.lambda));
  } else {
    g.objective = data;
  }
  return g;
}

AdamState AdamState::for_weights(const net::NetworkWeights& w) {
  AdamState s;
  s.m.reserve(w.params.size());
  s.v.reserve(w.params.size());
  for (const auto& p : w.params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(net::NetworkWeights& w,
               const std::vector<std::span<const double>>& grads,
               AdamState& state, const AdamParams& hyper) {
  if (grads.size() != w.params.size() || state.m.size() != w.params.size()) {
    throw std::invalid_argument("adam_step: state/gradient shapes do not match weights");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, state.step_count);
  const double bc2 = 1.0 - std::pow(hyper.beta2, state.step_count);
  for (std::size_t t = 0; t < w.params.size(); ++t) {
    auto& values = w.params[t].values;
    const auto& g = grads[t];
    if (g.size() != values.size()) {
      throw std::invalid_argument("adam_step: gradient size mismatch");
    }
    auto& m = state.m[t];
    auto& v = state.v[t];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi)) {
        throw SolverAbort("adam_step: non-finite gradient in " + w.params[t].name,
                          SolverTrace{});
      }
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      values[i] -= hyper.step * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

bool early_stop_check(std::span<const double> window, int patience,
                      double flat_threshold) {
  if (patience < 2) throw std::invalid_argument("early_stop_check: patience must be >= 2");
  if (static_cast<int>(window.size()) < patience) return false;
  const double oldest = window[window.size() - static_cast<std::size_t>(patience)];
  const double newest = window.back();
  constexpr double kTiny = 1e-300;
  const double rel = (oldest - newest) / std::max(oldest, kTiny);
  return rel < flat_threshold;
}

namespace {

FrameResult solve_frame_impl(const Image& y, const net::NetworkWeights& init,
                             const net::SeedImage& z, const SolverConfig& cfg,
                             const degrade::DegradationSpec& spec,
                             const FrameBudget& budget) {
  cfg.validate();
  if (budget.max_iters < 1) {
    throw std::invalid_argument("solve_frame: iteration budget must be positive");
  }
  const auto t0 = std::chrono::steady_clock::now();

  FrameResult result;
  result.final_weights = init;
  AdamState adam = AdamState::for_weights(result.final_weights);
  SolverTrace& trace = result.trace;
  trace.stop_reason = StopReason::kMaxIters;

  std::vector<double> post_start;  // objective values after early-stop start
  for (int iter = 1; iter <= budget.max_iters; ++iter) {
    tensor::Tape tape;
    ObjectiveGraph g =
        frame_objective(tape, result.final_weights, z, y, spec, cfg, true);
    const double obj = g.objective.scalar();
    if (!std::isfinite(obj)) {
      trace.stop_iteration = static_cast<int>(trace.objective.size());
      throw SolverAbort("solve_frame: non-finite objective at iteration " +
                            std::to_string(iter),
                        trace);
    }
    tape.backward(g.objective);
    std::vector<std::span<const double>> grads;
    grads.reserve(g.params.size());
    for (auto& p : g.params) grads.push_back(p.grad());
    try {
      adam_step(result.final_weights, grads, adam, cfg.adam);
    } catch (SolverAbort& abort) {
      trace.stop_iteration = static_cast<int>(trace.objective.size());
      abort.trace = trace;
      throw;
    }

    trace.objective.push_back(obj);
    if (budget.early_stop && iter > budget.early_stop_start) {
      post_start.push_back(obj);
      if (early_stop_check(post_start, cfg.patience, cfg.flat_threshold)) {
        trace.stop_reason = StopReason::kPatienceFlat;
        break;
      }
    }
  }
  trace.stop_iteration = static_cast<int>(trace.objective.size());

  // SR frame is the stopped iterate's forward output
  result.sr = net::forward(result.final_weights, z);
  for (double& v : result.sr.pixels()) v = std::clamp(v, 0.0, 1.0);

  const auto t1 = std::chrono::steady_clock::now();
  trace.wall_time_ms =
      std::chrono::duration<double, std::milli>(t1 - t0).count();
  return result;
}

}  // namespace

FrameResult solve_frame(const Image& y, const net::NetworkWeights& init,
                        const net::SeedImage& z, const SolverConfig& cfg,
                        const degrade::DegradationSpec& spec,
                        const FrameBudget& budget) {
  return solve_frame_impl(y, init, z, cfg, spec, budget);
}

FrameResult solve_frame(const Image& y, const net::NetworkWeights& init,
                        const net::SeedImage& z, const SolverConfig& cfg,
                        const degrade::DegradationSpec& spec) {
  FrameBudget budget;
  budget.max_iters = cfg.max_iters_first;
  budget.early_stop_start = cfg.early_stop_start_first;
  budget.early_stop = cfg.method != Method::kDpv;
  return solve_frame_impl(y, init, z, cfg, spec, budget);
}

VideoResult run_video(const FrameSequence& lr, const net::NetworkConfig& net_cfg,
                      const SolverConfig& cfg,
                      const degrade::DegradationSpec& spec, std::uint64_t seed) {
  cfg.validate();
  if (lr.frames.empty()) {
    throw std::invalid_argument("run_video: need at least one frame");
  }
  lr.validate();
  const int hr_h = lr.frames.front().height() * spec.magnification;
  const int hr_w = lr.frames.front().width() * spec.magnification;
  // z is fixed for the whole video
  net::SeedImage z =
      net::make_seed_image(hr_h, hr_w, derive_seed(seed, "video-z"));

  VideoResult out;
  out.sr.source_bit_depth = lr.source_bit_depth;
  out.sr.frame_interval_s = lr.frame_interval_s;

  const bool recursive = cfg.method != Method::kDpv;
  net::NetworkWeights carried;

  for (std::size_t f = 0; f < lr.frames.size(); ++f) {
    FrameBudget budget;
    net::NetworkWeights init;
    if (recursive) {
      if (f == 0) {
        init = net::build_network(net_cfg, derive_seed(seed, "init", 0));
        budget.max_iters = cfg.max_iters_first;
        budget.early_stop_start = cfg.early_stop_start_first;
      } else {
        init = std::move(carried);
        budget.max_iters = cfg.max_iters_rest;
        budget.early_stop_start = cfg.early_stop_start_rest;
      }
      budget.early_stop = true;
    } else {
      init = net::build_network(net_cfg, derive_seed(seed, "init", f));
      budget.early_stop = false;
      if (!cfg.dpv_frame_budgets.empty()) {
        if (cfg.dpv_frame_budgets.size() != lr.frames.size()) {
          throw std::invalid_argument(
              "run_video: dpv_frame_budgets must have one entry per frame");
        }
        budget.max_iters = cfg.dpv_frame_budgets[f];
      } else {
        budget.max_iters = f == 0 ? cfg.max_iters_first : cfg.max_iters_rest;
      }
    }

    FrameResult r = solve_frame_impl(lr.frames[f], init, z, cfg, spec, budget);
    out.sr.frames.push_back(std::move(r.sr));
    out.traces.push_back(std::move(r.trace));
    if (recursive) carried = std::move(r.final_weights);
  }
  return out;
}

}  // namespace rdpv::solver
