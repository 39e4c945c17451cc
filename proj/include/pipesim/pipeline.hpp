#pragma once

// Pipeline-parallel training cost model: per-stage weight delays, pipeline
// utilization, weight+optimizer memory, and activation memory with optional
// segmented recompute. All quantities are in abstract units (weights, units
// of one microbatch M); byte conversion is left to callers.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pipesim {

enum class Mode { GPipe, PipeDream, PipeMare };
enum class Optimizer { Sgd, MomentumSgd, AdamW };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::GPipe: return "gpipe";
    case Mode::PipeDream: return "pipedream";
    case Mode::PipeMare: return "pipemare";
  }
  return "?";
}

inline std::string to_string(Optimizer o) {
  switch (o) {
    case Optimizer::Sgd: return "sgd";
    case Optimizer::MomentumSgd: return "momentum";
    case Optimizer::AdamW: return "adamw";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "gpipe") return Mode::GPipe;
  if (s == "pipedream") return Mode::PipeDream;
  if (s == "pipemare") return Mode::PipeMare;
  throw std::invalid_argument("unknown mode: " + s);
}

inline Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "momentum") return Optimizer::MomentumSgd;
  if (s == "adamw") return Optimizer::AdamW;
  throw std::invalid_argument("unknown optimizer: " + s);
}

// P stages over L layers, N microbatches of size M per minibatch of size B.
// stage_weight_sizes empty means uniform 1.0 per stage.
struct PipelineSpec {
  int stages = 1;
  int layers = 0;  // 0 means == stages
  int microbatches = 1;
  double microbatch_size = 1.0;
  double minibatch_size = 1.0;
  Mode mode = Mode::GPipe;
  std::vector<double> stage_weight_sizes;

  int layer_count() const { return layers > 0 ? layers : stages; }
  std::vector<double> weights() const {
    if (stage_weight_sizes.empty()) return std::vector<double>(stages, 1.0);
    return stage_weight_sizes;
  }
};

inline void validate(const PipelineSpec& s) {
  if (s.stages < 1) throw std::invalid_argument("PipelineSpec: P must be >= 1");
  if (s.microbatches < 1) throw std::invalid_argument("PipelineSpec: N must be >= 1");
  if (!(s.microbatch_size > 0)) throw std::invalid_argument("PipelineSpec: M must be > 0");
  if (!(s.minibatch_size > 0)) throw std::invalid_argument("PipelineSpec: B must be > 0");
  if (s.microbatch_size * s.microbatches < s.minibatch_size)
    throw std::invalid_argument("PipelineSpec: M*N must cover B");
  if (s.layers != 0 && s.layers < s.stages)
    throw std::invalid_argument("PipelineSpec: L must be >= P");
  if (!s.stage_weight_sizes.empty()) {
    if ((int)s.stage_weight_sizes.size() != s.stages)
      throw std::invalid_argument("PipelineSpec: stage_weight_sizes length must equal P");
    bool any = false;
    for (double w : s.stage_weight_sizes) {
      if (!(w >= 0)) throw std::invalid_argument("PipelineSpec: stage weight sizes must be >= 0");
      any = any || w > 0;
    }
    if (!any) throw std::invalid_argument("PipelineSpec: at least one stage weight must be > 0");
  }
}

// Delays in optimizer steps, one entry per stage i = 1..P (0-indexed storage).
// tau_recomp is filled only for segmented-recompute profiles.
struct DelayProfile {
  std::vector<int> tau_fwd;
  std::vector<int> tau_bkwd;
  std::vector<int> tau_recomp;

  int max_tau_fwd() const {
    return tau_fwd.empty() ? 0 : *std::max_element(tau_fwd.begin(), tau_fwd.end());
  }
};

struct Recompute {
  enum class Kind { None, Segmented, Optimal };
  Kind kind = Kind::None;
  int segment = 0;  // S, for Kind::Segmented

  static Recompute none() { return {}; }
  static Recompute segmented(int s) { return {Kind::Segmented, s}; }
  static Recompute optimal() { return {Kind::Optimal, 0}; }
};

namespace detail {
inline int ceil_div(long long a, long long b) { return (int)((a + b - 1) / b); }

// Exact per-segment activation units for segment size S (last segment may be
// shorter): each segment holds its checkpoints plus the recompute working set.
inline double segmented_activation_units(const PipelineSpec& spec, int S) {
  const int P = spec.stages;
  const double M = spec.microbatch_size;
  const double per_seg_base = spec.mode == Mode::GPipe ? (double)spec.microbatches : (double)P;
  double total = 0;
  for (int start = 0; start < P; start += S) {
    int len = std::min(S, P - start);
    total += per_seg_base + (double)len * len;
  }
  return M * total;
}

inline int optimal_segment_impl(const PipelineSpec& spec) {
  const int P = spec.stages;
  int best = 1;
  double best_units = segmented_activation_units(spec, 1);
  for (int S = 2; S <= P; ++S) {
    double u = segmented_activation_units(spec, S);
    if (u < best_units) {
      best_units = u;
      best = S;
    }
  }
  return best;
}
}  // namespace detail

// tau_fwd[i] = ceil((2(P-i)+1)/N) for the async modes; GPipe has no staleness.
inline DelayProfile compute_delay_profile(const PipelineSpec& spec,
                                          const Recompute& recompute = Recompute::none()) {
  validate(spec);
  const int P = spec.stages;
  const int N = spec.microbatches;
  DelayProfile prof;
  prof.tau_fwd.assign(P, 0);
  prof.tau_bkwd.assign(P, 0);
  if (spec.mode != Mode::GPipe) {
    for (int i = 1; i <= P; ++i) {
      int tf = detail::ceil_div(2LL * (P - i) + 1, N);
      prof.tau_fwd[i - 1] = tf;
      prof.tau_bkwd[i - 1] = spec.mode == Mode::PipeDream ? tf : 0;
    }
  }
  if (recompute.kind != Recompute::Kind::None && spec.mode != Mode::GPipe) {
    int S = recompute.kind == Recompute::Kind::Optimal ? detail::optimal_segment_impl(spec)
                                                       : recompute.segment;
    if (S < 1 || S > P) throw std::invalid_argument("Recompute: segment must be in 1..P");
    prof.tau_recomp.assign(P, 0);
    for (int i = 1; i <= P; ++i) {
      int d = (i - 1) % S;  // depth from the segment's checkpoint stage
      int tr = prof.tau_bkwd[i - 1] + detail::ceil_div(2LL * (S - 1 - d), N);
      prof.tau_recomp[i - 1] = std::clamp(tr, prof.tau_bkwd[i - 1], prof.tau_fwd[i - 1]);
    }
  }
  return prof;
}

inline double pipeline_utilization(const PipelineSpec& spec) {
  validate(spec);
  if (spec.mode != Mode::GPipe) return 1.0;
  double N = spec.microbatches, P = spec.stages;
  return N / (N + P - 1);
}

// Average utilization of a run with warmup_epochs synchronous epochs at
// sync_util followed by fully-utilized asynchronous epochs.
inline double amortized_utilization(double total_epochs, double warmup_epochs, double sync_util) {
  if (!(sync_util > 0) || sync_util > 1)
    throw std::invalid_argument("amortized_utilization: sync_util must be in (0,1]");
  if (warmup_epochs < 0 || warmup_epochs > total_epochs)
    throw std::invalid_argument("amortized_utilization: need 0 <= warmup_epochs <= total_epochs");
  if (total_epochs == 0) return 1.0;
  return total_epochs / (warmup_epochs / sync_util + (total_epochs - warmup_epochs));
}

inline int optimizer_copies(Optimizer o) {
  switch (o) {
    case Optimizer::Sgd: return 2;          // weights + gradient buffer
    case Optimizer::MomentumSgd: return 3;  // + momentum
    case Optimizer::AdamW: return 4;        // + second moment
  }
  return 2;
}

struct WeightMemory {
  double units;       // total, in weight-sized scalars
  double multiplier;  // relative to copies * W
};

inline WeightMemory weight_optimizer_memory(const PipelineSpec& spec, Optimizer opt,
                                            bool with_correction) {
  validate(spec);
  const int copies = optimizer_copies(opt);
  const std::vector<double> w = spec.weights();
  const double W = std::accumulate(w.begin(), w.end(), 0.0);
  if (with_correction && spec.mode != Mode::PipeMare)
    throw std::invalid_argument("weight_optimizer_memory: correction applies to PipeMare only");
  switch (spec.mode) {
    case Mode::GPipe:
      return {copies * W, 1.0};
    case Mode::PipeMare: {
      if (!with_correction) return {copies * W, 1.0};
      // one extra delta buffer; exact rational (copies+1)/copies
      return {(copies + 1) * W, (double)(copies + 1) / (double)copies};
    }
    case Mode::PipeDream: {
      DelayProfile prof = compute_delay_profile(spec);
      double stash = 0;
      for (int i = 0; i < spec.stages; ++i) stash += w[i] * prof.tau_fwd[i];
      double units = copies * W + stash;
      return {units, units / (copies * W)};
    }
  }
  return {copies * W, 1.0};
}

// Integer S >= 1 minimizing the segmented activation expression; ties toward
// smaller S. The continuous optimum is sqrt(P) (PipeMare) or sqrt(N) (GPipe).
inline int optimal_segment(const PipelineSpec& spec) {
  validate(spec);
  if (spec.layers != 0 && spec.layers != spec.stages)
    throw std::invalid_argument("optimal_segment: requires fine-grained P = L");
  return detail::optimal_segment_impl(spec);
}

inline double activation_memory(const PipelineSpec& spec,
                                const Recompute& recompute = Recompute::none()) {
  validate(spec);
  const double M = spec.microbatch_size;
  const int P = spec.stages;
  if (recompute.kind == Recompute::Kind::None) {
    if (spec.mode == Mode::GPipe)
      return M * spec.microbatches * spec.layer_count();
    double total = 0;  // stage i keeps 2(P-i)+1 microbatch activations in flight
    for (int i = 1; i <= P; ++i) total += 2.0 * (P - i) + 1.0;
    return M * total;
  }
  if (spec.layers != 0 && spec.layers != spec.stages)
    throw std::invalid_argument("activation_memory: recompute requires fine-grained P = L");
  int S = recompute.kind == Recompute::Kind::Optimal ? detail::optimal_segment_impl(spec)
                                                     : recompute.segment;
  if (S < 1 || S > P) throw std::invalid_argument("activation_memory: segment must be in 1..P");
  return detail::segmented_activation_units(spec, S);
}

// Leading-term memory ratio of optimally segmented recompute vs none:
// P^(-1/2) for the async modes, N^(-1/2) for GPipe.
inline double recompute_savings_ratio(const PipelineSpec& spec) {
  validate(spec);
  if (spec.mode == Mode::GPipe) return 1.0 / std::sqrt((double)spec.microbatches);
  return 1.0 / std::sqrt((double)spec.stages);
}

inline double normalized_time(double epochs, double utilization) {
  if (!(utilization > 0)) throw std::invalid_argument("normalized_time: utilization must be > 0");
  if (epochs < 0) throw std::invalid_argument("normalized_time: epochs must be >= 0");
  return epochs / utilization;
}

struct CostReport {
  double utilization = 1.0;
  double weight_opt_memory_units = 0.0;
  double weight_opt_multiplier = 1.0;
  double activation_memory_units = 0.0;
};

inline CostReport cost_model(const PipelineSpec& spec, Optimizer opt, bool with_correction,
                             const Recompute& recompute = Recompute::none()) {
  CostReport r;
  r.utilization = pipeline_utilization(spec);
  WeightMemory wm = weight_optimizer_memory(spec, opt, with_correction);
  r.weight_opt_memory_units = wm.units;
  r.weight_opt_multiplier = wm.multiplier;
  r.activation_memory_units = activation_memory(spec, recompute);
  return r;
}

}  // namespace pipesim
