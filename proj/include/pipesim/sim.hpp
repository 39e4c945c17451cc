#pragma once

// Discrete-time simulation of asynchronous pipeline-parallel training with
// exact per-stage weight delays: stale-weight ring buffers, two-argument
// gradients (forward weights != backward weights), SGD/momentum/AdamW,
// annealed per-stage step sizes, the backward-weight correction, synchronous
// warmup epochs, and stochastic (Hogwild-style) delays.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <variant>
#include <vector>

#include "pipesim/pipeline.hpp"
#include "pipesim/stability.hpp"

namespace pipesim {

// ---------------------------------------------------------------- schedules

struct LrSchedule {
  enum class Kind { Constant, StepDecay, InvSqrt };
  Kind kind = Kind::Constant;
  double base = 0.1;
  long long drop_every = 0;   // StepDecay
  double drop_factor = 0.1;   // StepDecay
  long long warmup = 0;       // InvSqrt: linear ramp length
  double init = 0.0;          // InvSqrt: ramp start

  static LrSchedule constant(double base) { return {Kind::Constant, base, 0, 0.1, 0, 0.0}; }

  double at(long long k) const {
    switch (kind) {
      case Kind::Constant:
        return base;
      case Kind::StepDecay: {
        if (drop_every < 1) throw std::invalid_argument("LrSchedule: drop_every must be >= 1");
        return base * std::pow(drop_factor, (double)(k / drop_every));
      }
      case Kind::InvSqrt: {
        if (warmup < 1) throw std::invalid_argument("LrSchedule: warmup must be >= 1");
        if (k < warmup) return init + (base - init) * (double)k / (double)warmup;
        return base * std::sqrt((double)warmup / (double)k);
      }
    }
    return base;
  }
};

// Annealed per-stage rate: base / tau^p with p = 1 - min(k/K, 1).
// Stages with tau <= 1 keep the base rate at every k; K = 0 means p = 0.
inline double t1_lr(double base, double tau, long long k, long long K) {
  if (k < 0 || K < 0) throw std::invalid_argument("t1_lr: k and K must be >= 0");
  if (tau <= 1.0) return base;
  if (K == 0) return base;
  double p = 1.0 - std::min((double)k / (double)K, 1.0);
  if (p == 0.0) return base;
  return base / std::pow(tau, p);
}

struct TrainSchedule {
  LrSchedule base_lr = LrSchedule::constant(0.1);
  long long K = 0;                  // annealing horizon; 0 disables T1
  long long warmup_epochs = 0;      // synchronous epochs before async delays
  long long steps_per_epoch = 1;
  double correction_decay = 0.135;  // D
  bool correction = false;          // T2 backward-weight correction

  long long warmup_steps() const { return warmup_epochs * steps_per_epoch; }
};

// --------------------------------------------------------------- optimizers

enum class OptimizerKind { Sgd, Momentum, AdamW };

inline OptimizerKind optimizer_kind_from(Optimizer o) {
  switch (o) {
    case Optimizer::Sgd: return OptimizerKind::Sgd;
    case Optimizer::MomentumSgd: return OptimizerKind::Momentum;
    case Optimizer::AdamW: return OptimizerKind::AdamW;
  }
  return OptimizerKind::Sgd;
}

struct OptimizerParams {
  double beta = 0.9;    // momentum
  double beta1 = 0.9;   // AdamW
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  Eigen::VectorXd v;  // momentum buffer
  Eigen::VectorXd m;  // AdamW first moment
  Eigen::VectorXd s;  // AdamW second moment
  long long t = 0;    // completed updates (AdamW bias correction)

  void init(Eigen::Index dim) {
    v = Eigen::VectorXd::Zero(dim);
    m = Eigen::VectorXd::Zero(dim);
    s = Eigen::VectorXd::Zero(dim);
    t = 0;
  }
};

namespace detail {

// Elementwise on [off, off+len); scalar loops keep the arithmetic order
// identical whether the caller updates per stage or the whole vector.
inline void update_segment(OptimizerKind kind, const OptimizerParams& op, OptimizerState& st,
                           Eigen::VectorXd& w, const Eigen::VectorXd& g, double lr,
                           Eigen::Index off, Eigen::Index len, long long t_next) {
  switch (kind) {
    case OptimizerKind::Sgd:
      for (Eigen::Index i = off; i < off + len; ++i) w[i] = w[i] - lr * g[i];
      return;
    case OptimizerKind::Momentum:
      for (Eigen::Index i = off; i < off + len; ++i) {
        st.v[i] = op.beta * st.v[i] - lr * g[i];
        w[i] = w[i] + st.v[i];
      }
      return;
    case OptimizerKind::AdamW: {
      const double bc1 = 1.0 - std::pow(op.beta1, (double)t_next);
      const double bc2 = 1.0 - std::pow(op.beta2, (double)t_next);
      for (Eigen::Index i = off; i < off + len; ++i) {
        st.m[i] = op.beta1 * st.m[i] + (1.0 - op.beta1) * g[i];
        st.s[i] = op.beta2 * st.s[i] + (1.0 - op.beta2) * (g[i] * g[i]);
        const double mhat = st.m[i] / bc1;
        const double shat = st.s[i] / bc2;
        w[i] = w[i] - lr * (mhat / (std::sqrt(shat) + op.eps) + op.weight_decay * w[i]);
      }
      return;
    }
  }
}

}  // namespace detail

// One full-vector update with a single rate; advances the AdamW step count.
inline void optimizer_update(OptimizerKind kind, const OptimizerParams& op, OptimizerState& st,
                             Eigen::VectorXd& w, const Eigen::VectorXd& g, double lr) {
  if (g.size() != w.size()) throw std::invalid_argument("optimizer_update: shape mismatch");
  st.t += 1;
  detail::update_segment(kind, op, st, w, g, lr, 0, w.size(), st.t);
}

// ---------------------------------------------------------------- objectives

struct QuadraticObjective {
  double lambda = 1.0;
  double sigma = 0.0;  // gradient noise scale
  double delta = 0.0;  // discrepancy sensitivity
  double phi = 0.0;    // recompute sensitivity; analytic only, no sim path
  enum class Noise { Gaussian, Uniform } noise = Noise::Gaussian;
  double w0 = 1.0;
};

struct LeastSquaresObjective {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::Index batch = 0;  // 0 or >= n: full batch
  // full-batch fast path: g = gram * w - rhs, identical math to (1/n)X^T(Xw-y)
  Eigen::MatrixXd gram;
  Eigen::VectorXd rhs;
  bool full_batch = false;
};

inline LeastSquaresObjective make_least_squares(Eigen::MatrixXd X, Eigen::VectorXd y,
                                                Eigen::Index batch = 0) {
  if (X.rows() != y.size() || X.rows() < 1)
    throw std::invalid_argument("make_least_squares: X rows must match y and be >= 1");
  LeastSquaresObjective o;
  o.X = std::move(X);
  o.y = std::move(y);
  o.batch = batch;
  o.full_batch = batch <= 0 || batch >= o.X.rows();
  if (o.full_batch) {
    const double inv_n = 1.0 / (double)o.X.rows();
    o.gram = (o.X.transpose() * o.X) * inv_n;
    o.rhs = (o.X.transpose() * o.y) * inv_n;
  }
  return o;
}

// Fully-connected net, tanh hidden activations, linear scalar output,
// mean-squared-error/2 loss. Parameters pack as [W0, b0, W1, b1, ...] with
// column-major W blocks.
struct MlpObjective {
  std::vector<int> sizes;  // [in, hidden..., 1]
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::Index batch = 0;
};

inline void validate(const MlpObjective& o) {
  if (o.sizes.size() < 2) throw std::invalid_argument("MlpObjective: need at least one layer");
  for (int s : o.sizes)
    if (s < 1) throw std::invalid_argument("MlpObjective: layer sizes must be >= 1");
  if (o.sizes.front() != o.X.cols())
    throw std::invalid_argument("MlpObjective: input size must match X columns");
  if (o.sizes.back() != 1) throw std::invalid_argument("MlpObjective: output size must be 1");
  if (o.X.rows() != o.y.size() || o.X.rows() < 1)
    throw std::invalid_argument("MlpObjective: X rows must match y and be >= 1");
}

using Objective = std::variant<QuadraticObjective, LeastSquaresObjective, MlpObjective>;

namespace detail {

inline Eigen::Index mlp_param_count(const std::vector<int>& sizes) {
  Eigen::Index n = 0;
  for (size_t l = 0; l + 1 < sizes.size(); ++l)
    n += (Eigen::Index)sizes[l + 1] * sizes[l] + sizes[l + 1];
  return n;
}

}  // namespace detail

inline Eigen::Index param_count(const Objective& obj) {
  if (std::holds_alternative<QuadraticObjective>(obj)) return 1;
  if (const auto* ls = std::get_if<LeastSquaresObjective>(&obj)) return ls->X.cols();
  return detail::mlp_param_count(std::get<MlpObjective>(obj).sizes);
}

inline Eigen::VectorXd initial_weights(const Objective& obj, std::mt19937_64& rng) {
  if (const auto* q = std::get_if<QuadraticObjective>(&obj)) {
    Eigen::VectorXd w(1);
    w[0] = q->w0;
    return w;
  }
  if (const auto* ls = std::get_if<LeastSquaresObjective>(&obj))
    return Eigen::VectorXd::Zero(ls->X.cols());
  const auto& mlp = std::get<MlpObjective>(obj);
  validate(mlp);
  Eigen::VectorXd w(detail::mlp_param_count(mlp.sizes));
  Eigen::Index off = 0;
  for (size_t l = 0; l + 1 < mlp.sizes.size(); ++l) {
    const Eigen::Index fan_in = mlp.sizes[l], out = mlp.sizes[l + 1];
    const double scale = 1.0 / std::sqrt((double)fan_in);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Eigen::Index i = 0; i < out * fan_in; ++i) w[off + i] = u(rng);
    off += out * fan_in;
    for (Eigen::Index i = 0; i < out; ++i) w[off + i] = 0.0;
    off += out;
  }
  return w;
}

inline double loss(const Objective& obj, const Eigen::VectorXd& w) {
  if (const auto* q = std::get_if<QuadraticObjective>(&obj)) return 0.5 * q->lambda * w[0] * w[0];
  if (const auto* ls = std::get_if<LeastSquaresObjective>(&obj))
    return (ls->X * w - ls->y).squaredNorm() / (2.0 * (double)ls->X.rows());
  const auto& mlp = std::get<MlpObjective>(obj);
  Eigen::MatrixXd a = mlp.X;
  Eigen::Index off = 0;
  for (size_t l = 0; l + 1 < mlp.sizes.size(); ++l) {
    const Eigen::Index in = mlp.sizes[l], out = mlp.sizes[l + 1];
    Eigen::Map<const Eigen::MatrixXd> W(w.data() + off, out, in);
    off += out * in;
    Eigen::Map<const Eigen::VectorXd> b(w.data() + off, out);
    off += out;
    a = ((a * W.transpose()).rowwise() + b.transpose()).eval();
    if (l + 2 < mlp.sizes.size()) a = a.array().tanh().matrix();
  }
  return (a.col(0) - mlp.y).squaredNorm() / (2.0 * (double)mlp.X.rows());
}

namespace detail {

inline void sample_rows(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Eigen::Index batch,
                        std::mt19937_64& rng, Eigen::MatrixXd& Xb, Eigen::VectorXd& yb) {
  const Eigen::Index n = X.rows();
  const Eigen::Index b = (batch <= 0 || batch >= n) ? n : batch;
  if (b == n) {
    Xb = X;
    yb = y;
    return;
  }
  Xb.resize(b, X.cols());
  yb.resize(b);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    Eigen::Index j = pick(rng);
    Xb.row(i) = X.row(j);
    yb[i] = y[j];
  }
}

}  // namespace detail

// Gradient the backpropagation algorithm would produce with u_fwd in the
// forward pass and u_bkwd propagating the backward pass, against the cached
// forward activations. Minibatch rows (and quadratic noise) come from rng.
inline void grad_sample(const Objective& obj, const Eigen::VectorXd& u_fwd,
                        const Eigen::VectorXd& u_bkwd, std::mt19937_64& rng, Eigen::VectorXd& g) {
  if (u_fwd.size() != u_bkwd.size() || u_fwd.size() != param_count(obj))
    throw std::invalid_argument("grad_sample: shape mismatch");
  g.resize(u_fwd.size());

  if (const auto* q = std::get_if<QuadraticObjective>(&obj)) {
    double eta = 0.0;
    if (q->sigma > 0) {
      if (q->noise == QuadraticObjective::Noise::Gaussian) {
        std::normal_distribution<double> n01(0.0, 1.0);
        eta = q->sigma * n01(rng);
      } else {
        const double r = std::sqrt(3.0);  // matches the gaussian variance
        std::uniform_real_distribution<double> u(-r, r);
        eta = q->sigma * u(rng);
      }
    }
    g[0] = (q->lambda + q->delta) * u_fwd[0] - q->delta * u_bkwd[0] - eta;
    return;
  }

  if (const auto* ls = std::get_if<LeastSquaresObjective>(&obj)) {
    // single linear layer: the weight gradient uses only cached inputs and
    // residuals, so u_bkwd does not enter (zero intrinsic discrepancy)
    if (ls->full_batch) {
      g = ls->gram * u_fwd - ls->rhs;
      return;
    }
    Eigen::MatrixXd Xb;
    Eigen::VectorXd yb;
    detail::sample_rows(ls->X, ls->y, ls->batch, rng, Xb, yb);
    g = Xb.transpose() * (Xb * u_fwd - yb) / (double)Xb.rows();
    return;
  }

  const auto& mlp = std::get<MlpObjective>(obj);
  validate(mlp);
  Eigen::MatrixXd Xb;
  Eigen::VectorXd yb;
  detail::sample_rows(mlp.X, mlp.y, mlp.batch, rng, Xb, yb);
  const Eigen::Index b = Xb.rows();
  const size_t L = mlp.sizes.size() - 1;

  std::vector<Eigen::MatrixXd> acts(L + 1);  // acts[l]: output of layer l
  std::vector<Eigen::Index> w_off(L), b_off(L);
  acts[0] = Xb;
  {
    Eigen::Index off = 0;
    for (size_t l = 0; l < L; ++l) {
      const Eigen::Index in = mlp.sizes[l], out = mlp.sizes[l + 1];
      w_off[l] = off;
      off += out * in;
      b_off[l] = off;
      off += out;
      Eigen::Map<const Eigen::MatrixXd> W(u_fwd.data() + w_off[l], out, in);
      Eigen::Map<const Eigen::VectorXd> bias(u_fwd.data() + b_off[l], out);
      Eigen::MatrixXd z = (acts[l] * W.transpose()).rowwise() + bias.transpose();
      acts[l + 1] = (l + 1 < L) ? z.array().tanh().matrix() : z;
    }
  }

  Eigen::MatrixXd G = (acts[L].col(0) - yb) / (double)b;  // dLoss/dZ_L
  for (size_t l = L; l-- > 0;) {
    const Eigen::Index in = mlp.sizes[l], out = mlp.sizes[l + 1];
    Eigen::Map<Eigen::MatrixXd> gW(g.data() + w_off[l], out, in);
    Eigen::Map<Eigen::VectorXd> gb(g.data() + b_off[l], out);
    gW = G.transpose() * acts[l];
    gb = G.colwise().sum();
    if (l > 0) {
      Eigen::Map<const Eigen::MatrixXd> Wb(u_bkwd.data() + w_off[l], out, in);
      G = ((G * Wb).array() * (1.0 - acts[l].array().square())).matrix();
    }
  }
}

// ------------------------------------------------------------ stage mapping

struct StageSlice {
  Eigen::Index offset = 0;
  Eigen::Index len = 0;
};

// Contiguous near-equal partition; MLP stages split by layer so a layer's
// weight and bias always share a stage.
inline std::vector<StageSlice> stage_slices(const Objective& obj, int P) {
  if (P < 1) throw std::invalid_argument("stage_slices: P must be >= 1");
  std::vector<StageSlice> slices(P);
  if (std::holds_alternative<QuadraticObjective>(obj)) {
    if (P != 1) throw std::invalid_argument("stage_slices: quadratic objective is single-stage");
    slices[0] = {0, 1};
    return slices;
  }
  if (const auto* ls = std::get_if<LeastSquaresObjective>(&obj)) {
    const Eigen::Index d = ls->X.cols();
    if (P > d) throw std::invalid_argument("stage_slices: more stages than parameters");
    Eigen::Index off = 0;
    for (int i = 0; i < P; ++i) {
      Eigen::Index len = d / P + (i < d % P ? 1 : 0);
      slices[i] = {off, len};
      off += len;
    }
    return slices;
  }
  const auto& mlp = std::get<MlpObjective>(obj);
  const int L = (int)mlp.sizes.size() - 1;
  if (P > L) throw std::invalid_argument("stage_slices: more stages than layers");
  std::vector<Eigen::Index> layer_len(L);
  for (int l = 0; l < L; ++l)
    layer_len[l] = (Eigen::Index)mlp.sizes[l + 1] * mlp.sizes[l] + mlp.sizes[l + 1];
  Eigen::Index off = 0;
  int l = 0;
  for (int i = 0; i < P; ++i) {
    int count = L / P + (i < L % P ? 1 : 0);
    Eigen::Index len = 0;
    for (int c = 0; c < count; ++c) len += layer_len[l++];
    slices[i] = {off, len};
    off += len;
  }
  return slices;
}

// ------------------------------------------------------------------- delays

struct DelaySpec {
  DelayProfile profile;  // fixed per-stage delays (ignored when hogwild)
  bool hogwild = false;
  int hogwild_tau_max = 0;
  std::vector<double> hogwild_means;  // per stage

  int stage_count() const {
    return hogwild ? (int)hogwild_means.size() : (int)profile.tau_fwd.size();
  }
  static DelaySpec fixed(DelayProfile p) {
    DelaySpec d;
    d.profile = std::move(p);
    return d;
  }
};

// Per-stage integer delays from exponentials truncated to [0, tau_max]
// (inverse CDF), rounded down; a fresh draw every step.
inline std::vector<int> sample_hogwild_delays(std::mt19937_64& rng, int tau_max,
                                              const std::vector<double>& stage_means) {
  if (tau_max < 0) throw std::invalid_argument("sample_hogwild_delays: tau_max must be >= 0");
  std::vector<int> d(stage_means.size(), 0);
  for (size_t i = 0; i < stage_means.size(); ++i) {
    const double mu = stage_means[i];
    if (!(mu > 0)) throw std::invalid_argument("sample_hogwild_delays: means must be > 0");
    if (tau_max == 0) continue;
    const double u = std::generate_canonical<double, 53>(rng);
    const double mass = -std::expm1(-(double)tau_max / mu);  // P(X <= tau_max), untruncated
    const double x = -mu * std::log1p(-u * mass);
    d[i] = std::min((int)x, tau_max);
  }
  return d;
}

// --------------------------------------------------------------- simulation

struct TrajectoryRow {
  long long t = 0;
  double lr = 0.0;  // stage 1 (the most delayed stage; T1 anneals it hardest)
  double loss = 0.0;
  double wnorm = 0.0;
  bool diverged = false;
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  bool diverged = false;
  double final_loss = 0.0;
  double final_wnorm = 0.0;
  long long steps_run = 0;
};

struct RunControl {
  long long steps = 0;
  std::uint64_t seed = 1;
  long long record_stride = 1;  // 0: summary only
  double divergence_cap = 1e12;
  // observer sees (t, u_fwd, u_bkwd) before each update; used by tests
  std::function<void(long long, const Eigen::VectorXd&, const Eigen::VectorXd&)> observer;
};

// T2 velocity tracker and backward-read adjustment, exposed for direct tests.
inline void t2_update_delta(double gamma, const Eigen::VectorXd& w_new,
                            const Eigen::VectorXd& w_old, Eigen::VectorXd& delta) {
  for (Eigen::Index i = 0; i < delta.size(); ++i)
    delta[i] = gamma * delta[i] + (1.0 - gamma) * (w_new[i] - w_old[i]);
}

inline void t2_adjust_backward(int tau_fwd, int tau_bkwd, const Eigen::VectorXd& delta,
                               Eigen::VectorXd& u_bkwd) {
  const double k = (double)(tau_fwd - tau_bkwd);
  for (Eigen::Index i = 0; i < u_bkwd.size(); ++i) u_bkwd[i] -= k * delta[i];
}

inline Trajectory run_experiment(const Objective& obj, const TrainSchedule& sched,
                                 const DelaySpec& delays, OptimizerKind okind,
                                 const OptimizerParams& oparams, const RunControl& rc) {
  const int P = delays.stage_count();
  if (P < 1) throw std::invalid_argument("run_experiment: delay spec has no stages");
  if (!delays.hogwild && (delays.profile.tau_bkwd.size() != (size_t)P))
    throw std::invalid_argument("run_experiment: delay profile shape mismatch");
  if (rc.steps < 0) throw std::invalid_argument("run_experiment: steps must be >= 0");
  const std::vector<StageSlice> slices = stage_slices(obj, P);
  const long long warm_steps = sched.warmup_steps();

  std::mt19937_64 rng(rc.seed);
  Eigen::VectorXd w = initial_weights(obj, rng);
  const Eigen::Index dim = w.size();

  const int depth = 1 + (delays.hogwild ? delays.hogwild_tau_max : delays.profile.max_tau_fwd());
  std::vector<Eigen::VectorXd> ring((size_t)depth, w);  // cold start: reads clamp to w0

  // T1 anneals against the static stage delay; hogwild stages use their mean.
  std::vector<double> t1_tau(P, 0.0);
  for (int i = 0; i < P; ++i)
    t1_tau[i] = delays.hogwild ? delays.hogwild_means[i] : (double)delays.profile.tau_fwd[i];

  // per-stage correction decay; tau_fwd == tau_bkwd stages skip correction
  std::vector<double> gamma(P, 0.0);
  if (sched.correction) {
    if (!(sched.correction_decay > 0 && sched.correction_decay < 1))
      throw std::invalid_argument("run_experiment: correction decay D must be in (0,1)");
    for (int i = 0; i < P; ++i) {
      int tf = delays.hogwild ? (int)std::llround(delays.hogwild_means[i])
                              : delays.profile.tau_fwd[i];
      int tb = delays.hogwild ? 0 : delays.profile.tau_bkwd[i];
      if (tf > tb) gamma[i] = gamma_for_decay(sched.correction_decay, tf, tb);
    }
  }
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(sched.correction ? dim : 0);
  Eigen::VectorXd w_prev(sched.correction ? dim : 0);

  OptimizerState ost;
  ost.init(dim);
  Eigen::VectorXd u_fwd(dim), u_bkwd(dim), g(dim);
  std::vector<int> tau_f(P, 0), tau_b(P, 0);

  Trajectory out;
  double last_lr = sched.base_lr.at(0);
  auto record = [&](long long t, double lr) {
    out.rows.push_back({t, lr, loss(obj, w), w.norm(), out.diverged});
  };

  long long t = 0;
  for (; t < rc.steps; ++t) {
    const bool warm = t < warm_steps;
    if (warm) {
      std::fill(tau_f.begin(), tau_f.end(), 0);
      std::fill(tau_b.begin(), tau_b.end(), 0);
    } else if (delays.hogwild) {
      std::vector<int> draw = sample_hogwild_delays(rng, delays.hogwild_tau_max,
                                                    delays.hogwild_means);
      tau_f = draw;
      std::fill(tau_b.begin(), tau_b.end(), 0);
    } else {
      tau_f = delays.profile.tau_fwd;
      tau_b = delays.profile.tau_bkwd;
    }

    for (int i = 0; i < P; ++i) {
      const auto [off, len] = slices[i];
      const long long sf = std::max(0LL, t - tau_f[i]);
      const long long sb = std::max(0LL, t - tau_b[i]);
      u_fwd.segment(off, len) = ring[(size_t)(sf % depth)].segment(off, len);
      u_bkwd.segment(off, len) = ring[(size_t)(sb % depth)].segment(off, len);
      if (sched.correction && !warm && tau_f[i] > tau_b[i] && gamma[i] > 0) {
        const double k = (double)(tau_f[i] - tau_b[i]);
        for (Eigen::Index j = off; j < off + len; ++j) u_bkwd[j] -= k * delta[j];
      }
    }
    if (rc.observer) rc.observer(t, u_fwd, u_bkwd);

    grad_sample(obj, u_fwd, u_bkwd, rng, g);

    const double base = sched.base_lr.at(t);
    const long long k1 = warm ? 0 : t - warm_steps;
    if (rc.record_stride > 0 && t % rc.record_stride == 0)
      record(t, warm ? base : t1_lr(base, t1_tau[0], k1, sched.K));

    if (sched.correction) w_prev = w;
    ost.t += 1;
    for (int i = 0; i < P; ++i) {
      const double lr = warm ? base : t1_lr(base, t1_tau[i], k1, sched.K);
      if (i == 0) last_lr = lr;
      detail::update_segment(okind, oparams, ost, w, g, lr, slices[i].offset, slices[i].len,
                             ost.t);
    }
    if (sched.correction) {
      for (int i = 0; i < P; ++i) {
        if (gamma[i] <= 0) continue;
        const auto [off, len] = slices[i];
        for (Eigen::Index j = off; j < off + len; ++j)
          delta[j] = gamma[i] * delta[j] + (1.0 - gamma[i]) * (w[j] - w_prev[j]);
      }
    }

    ring[(size_t)((t + 1) % depth)] = w;

    if (w.lpNorm<Eigen::Infinity>() > rc.divergence_cap) {
      out.diverged = true;
      t += 1;
      break;
    }
  }

  out.steps_run = t;
  out.final_loss = loss(obj, w);
  out.final_wnorm = w.norm();
  if (rc.record_stride > 0 && (out.rows.empty() || out.rows.back().t != t))
    out.rows.push_back({t, last_lr, out.final_loss, out.final_wnorm, out.diverged});
  return out;
}

}  // namespace pipesim
