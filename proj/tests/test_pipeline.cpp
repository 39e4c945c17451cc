#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "pipesim/pipeline.hpp"

using namespace pipesim;

namespace {

PipelineSpec make_spec(int P, int N, Mode mode, double M = 1.0, double B = 1.0) {
  PipelineSpec s;
  s.stages = P;
  s.microbatches = N;
  s.mode = mode;
  s.microbatch_size = M;
  s.minibatch_size = B;
  return s;
}

int pct(double u) { return (int)std::lround(u * 100.0); }

}  // namespace

TEST_CASE("mode and optimizer names round-trip") {
  for (Mode m : {Mode::GPipe, Mode::PipeDream, Mode::PipeMare})
    REQUIRE(mode_from_string(to_string(m)) == m);
  for (Optimizer o : {Optimizer::Sgd, Optimizer::MomentumSgd, Optimizer::AdamW})
    REQUIRE(optimizer_from_string(to_string(o)) == o);
  REQUIRE_THROWS_AS(mode_from_string("GPipe"), std::invalid_argument);
  REQUIRE_THROWS_AS(optimizer_from_string("adam"), std::invalid_argument);
}

TEST_CASE("spec validation rejects malformed geometry") {
  REQUIRE_THROWS_AS(validate(make_spec(0, 1, Mode::GPipe)), std::invalid_argument);
  REQUIRE_THROWS_AS(validate(make_spec(1, 0, Mode::GPipe)), std::invalid_argument);
  REQUIRE_THROWS_AS(validate(make_spec(1, 1, Mode::GPipe, 0.0)), std::invalid_argument);
  REQUIRE_THROWS_AS(validate(make_spec(1, 1, Mode::GPipe, 1.0, 0.0)), std::invalid_argument);
  // N microbatches of size M must cover the minibatch
  REQUIRE_THROWS_AS(validate(make_spec(1, 2, Mode::GPipe, 1.0, 3.0)), std::invalid_argument);
  PipelineSpec s = make_spec(4, 1, Mode::PipeMare);
  s.layers = 3;  // fewer layers than stages
  REQUIRE_THROWS_AS(validate(s), std::invalid_argument);
  s.layers = 0;
  s.stage_weight_sizes = {1, 2, 3};  // wrong length
  REQUIRE_THROWS_AS(validate(s), std::invalid_argument);
  s.stage_weight_sizes = {0, 0, 0, 0};  // no weight anywhere
  REQUIRE_THROWS_AS(validate(s), std::invalid_argument);
  s.stage_weight_sizes = {1, 0, 2, 1};
  REQUIRE_NOTHROW(validate(s));
}

TEST_CASE("delay profile matches the pipeline geometry") {
  SECTION("four stages, one microbatch, fixed-delay async") {
    DelayProfile p = compute_delay_profile(make_spec(4, 1, Mode::PipeMare));
    REQUIRE(p.tau_fwd == std::vector<int>{7, 5, 3, 1});
    REQUIRE(p.tau_bkwd == std::vector<int>{0, 0, 0, 0});
    REQUIRE(p.tau_recomp.empty());
    REQUIRE(p.max_tau_fwd() == 7);
  }
  SECTION("four stages, two microbatches, stashing async") {
    DelayProfile p = compute_delay_profile(make_spec(4, 2, Mode::PipeDream));
    REQUIRE(p.tau_fwd == std::vector<int>{4, 3, 2, 1});
    REQUIRE(p.tau_bkwd == p.tau_fwd);
  }
  SECTION("synchronous mode has no staleness") {
    DelayProfile p = compute_delay_profile(make_spec(6, 3, Mode::GPipe));
    REQUIRE(p.tau_fwd == std::vector<int>(6, 0));
    REQUIRE(p.tau_bkwd == std::vector<int>(6, 0));
  }
}

TEST_CASE("forward delays agree across async modes and decrease along the pipe") {
  for (int P : {1, 2, 3, 5, 8, 16, 64}) {
    for (int N : {1, 2, 4, 7, 32}) {
      DelayProfile a = compute_delay_profile(make_spec(P, N, Mode::PipeMare));
      DelayProfile b = compute_delay_profile(make_spec(P, N, Mode::PipeDream));
      REQUIRE(a.tau_fwd == b.tau_fwd);
      for (int i = 1; i < P; ++i) REQUIRE(a.tau_fwd[i] <= a.tau_fwd[i - 1]);
      REQUIRE(a.tau_fwd.back() == 1);  // last stage always sees one step of staleness
      for (int t : a.tau_bkwd) REQUIRE(t == 0);
    }
  }
}

TEST_CASE("recompute delays sit between backward and forward delays") {
  SECTION("spot values for a fine-grained pipe") {
    PipelineSpec s = make_spec(16, 1, Mode::PipeMare);
    DelayProfile p = compute_delay_profile(s, Recompute::segmented(4));
    REQUIRE((int)p.tau_recomp.size() == 16);
    // segment head recomputes through the whole segment, tail through nothing
    REQUIRE(p.tau_recomp[0] == 6);
    REQUIRE(p.tau_recomp[1] == 4);
    REQUIRE(p.tau_recomp[2] == 2);
    REQUIRE(p.tau_recomp[3] == 0);
    REQUIRE(p.tau_recomp[15] == 0);
  }
  SECTION("clamped into [tau_bkwd, tau_fwd] everywhere") {
    for (int P : {3, 7, 16, 33}) {
      for (int N : {1, 2, 5}) {
        for (Mode m : {Mode::PipeMare, Mode::PipeDream}) {
          for (int S : {1, 2, 3, P}) {
            DelayProfile p = compute_delay_profile(make_spec(P, N, m), Recompute::segmented(S));
            for (int i = 0; i < P; ++i) {
              REQUIRE(p.tau_recomp[i] >= p.tau_bkwd[i]);
              REQUIRE(p.tau_recomp[i] <= p.tau_fwd[i]);
            }
          }
        }
      }
    }
  }
  SECTION("segment size outside 1..P is rejected") {
    REQUIRE_THROWS_AS(compute_delay_profile(make_spec(4, 1, Mode::PipeMare), Recompute::segmented(0)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(compute_delay_profile(make_spec(4, 1, Mode::PipeMare), Recompute::segmented(5)),
                      std::invalid_argument);
  }
}

TEST_CASE("bubble-limited utilization at benchmark shapes") {
  REQUIRE(pct(pipeline_utilization(make_spec(107, 16, Mode::GPipe))) == 13);
  REQUIRE(pct(pipeline_utilization(make_spec(93, 19, Mode::GPipe))) == 17);
  REQUIRE(pct(pipeline_utilization(make_spec(91, 116, Mode::GPipe))) == 56);
  REQUIRE(pipeline_utilization(make_spec(107, 16, Mode::PipeMare)) == 1.0);
  REQUIRE(pipeline_utilization(make_spec(107, 16, Mode::PipeDream)) == 1.0);
}

TEST_CASE("fill-drain utilization rises with microbatch count toward one") {
  const int P = 32;
  double prev = 0;
  for (int N = 1; N <= 4096; N *= 2) {
    double u = pipeline_utilization(make_spec(P, N, Mode::GPipe, 1.0, 1.0));
    REQUIRE(u > prev);
    prev = u;
  }
  REQUIRE(pipeline_utilization(make_spec(P, 1000000, Mode::GPipe)) > 0.9999);
}

TEST_CASE("warmup-aware utilization at benchmark schedules") {
  const double u50 = pipeline_utilization(make_spec(107, 16, Mode::GPipe));
  const double u152 = pipeline_utilization(make_spec(93, 19, Mode::GPipe));
  const double utr = pipeline_utilization(make_spec(91, 116, Mode::GPipe));
  REQUIRE(pct(amortized_utilization(100, 30, u50)) == 33);
  REQUIRE(pct(amortized_utilization(60, 10, u152)) == 55);
  REQUIRE(pct(amortized_utilization(80, 4, utr)) == 96);
}

TEST_CASE("warmup-aware utilization interpolates between sync and full rate") {
  const double sync = 0.17;
  REQUIRE(amortized_utilization(80, 0, sync) == 1.0);
  REQUIRE(amortized_utilization(80, 80, sync) == Catch::Approx(sync).epsilon(1e-12));
  double prev = 2.0;
  for (double warm = 0; warm <= 80; warm += 5) {
    double u = amortized_utilization(80, warm, sync);
    REQUIRE(u < prev);  // strictly decreasing in warmup share
    REQUIRE(u >= sync);
    REQUIRE(u <= 1.0);
    prev = u;
  }
  REQUIRE_THROWS_AS(amortized_utilization(10, 11, 0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(amortized_utilization(10, 5, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(amortized_utilization(10, 5, 1.5), std::invalid_argument);
}

TEST_CASE("optimizer state copies") {
  REQUIRE(optimizer_copies(Optimizer::Sgd) == 2);
  REQUIRE(optimizer_copies(Optimizer::MomentumSgd) == 3);
  REQUIRE(optimizer_copies(Optimizer::AdamW) == 4);
}

TEST_CASE("weight and optimizer memory per mode") {
  SECTION("synchronous: plain copies of the weights") {
    WeightMemory m = weight_optimizer_memory(make_spec(4, 1, Mode::GPipe), Optimizer::AdamW, false);
    REQUIRE(m.units == 16.0);
    REQUIRE(m.multiplier == 1.0);
  }
  SECTION("stashing async keeps one weight version per in-flight step") {
    // uniform stages: stash = sum of forward delays = 7+5+3+1 = 16
    WeightMemory m = weight_optimizer_memory(make_spec(4, 1, Mode::PipeDream), Optimizer::Sgd, false);
    REQUIRE(m.units == 2 * 4 + 16.0);
    REQUIRE(m.multiplier == Catch::Approx(3.0));
  }
  SECTION("stash weights by stage size, not stage count") {
    PipelineSpec s = make_spec(4, 1, Mode::PipeDream);
    s.stage_weight_sizes = {10, 1, 1, 1};  // heavy first stage has the largest delay
    WeightMemory m = weight_optimizer_memory(s, Optimizer::Sgd, false);
    REQUIRE(m.units == 2 * 13 + (10 * 7 + 5 + 3 + 1));
  }
  SECTION("delay-correction buffer is exactly one extra weight copy") {
    WeightMemory mom =
        weight_optimizer_memory(make_spec(8, 1, Mode::PipeMare), Optimizer::MomentumSgd, true);
    WeightMemory ada =
        weight_optimizer_memory(make_spec(8, 1, Mode::PipeMare), Optimizer::AdamW, true);
    REQUIRE(mom.multiplier == 4.0 / 3.0);  // bitwise: computed as the same division
    REQUIRE(ada.multiplier == 5.0 / 4.0);
    REQUIRE(mom.units == 4 * 8.0);
    REQUIRE(ada.units == 5 * 8.0);
  }
  SECTION("correction outside the delay-corrected mode is rejected") {
    REQUIRE_THROWS_AS(weight_optimizer_memory(make_spec(4, 1, Mode::GPipe), Optimizer::Sgd, true),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(weight_optimizer_memory(make_spec(4, 1, Mode::PipeDream), Optimizer::Sgd, true),
                      std::invalid_argument);
  }
}

TEST_CASE("stashing always costs at least the correction buffer") {
  for (int P = 2; P <= 48; ++P) {
    for (int N = 1; N <= 2 * (P - 1) + 1; N += 3) {
      for (Optimizer o : {Optimizer::Sgd, Optimizer::MomentumSgd, Optimizer::AdamW}) {
        double stash_mult =
            weight_optimizer_memory(make_spec(P, N, Mode::PipeDream), o, false).multiplier;
        double corr_mult =
            weight_optimizer_memory(make_spec(P, N, Mode::PipeMare), o, true).multiplier;
        REQUIRE(stash_mult >= corr_mult);
      }
    }
  }
}

TEST_CASE("activation memory without recompute") {
  REQUIRE(activation_memory(make_spec(5, 1, Mode::GPipe)) == 5.0);  // N*L microbatch units
  PipelineSpec g = make_spec(4, 8, Mode::GPipe, 2.0, 1.0);
  g.layers = 12;
  REQUIRE(activation_memory(g) == 2.0 * 8 * 12);
  for (int P : {1, 2, 7, 93}) {
    // sum of in-flight activations telescopes to P^2 microbatch units
    REQUIRE(activation_memory(make_spec(P, 4, Mode::PipeMare)) == (double)P * P);
    REQUIRE(activation_memory(make_spec(P, 4, Mode::PipeDream)) == (double)P * P);
  }
  REQUIRE(activation_memory(make_spec(3, 4, Mode::PipeMare, 2.5)) == 2.5 * 9);
}

TEST_CASE("segmented recompute activation memory, short last segment included") {
  // P=5, S=2 splits as [2,2,1]: each segment holds P checkpoints + len^2 working set
  PipelineSpec s = make_spec(5, 1, Mode::PipeMare, 2.0);
  REQUIRE(activation_memory(s, Recompute::segmented(2)) == 2.0 * ((5 + 4) + (5 + 4) + (5 + 1)));
  // GPipe holds N checkpoints per segment instead
  PipelineSpec g = make_spec(5, 3, Mode::GPipe, 1.0);
  REQUIRE(activation_memory(g, Recompute::segmented(2)) == (3 + 4) + (3 + 4) + (3 + 1));
  // coarse-grained pipes cannot recompute by stage segment
  PipelineSpec c = make_spec(4, 1, Mode::PipeMare);
  c.layers = 8;
  REQUIRE_THROWS_AS(activation_memory(c, Recompute::segmented(2)), std::invalid_argument);
  REQUIRE_THROWS_AS(optimal_segment(c), std::invalid_argument);
}

TEST_CASE("optimal segment equals brute-force minimizer with ties toward smaller") {
  REQUIRE(optimal_segment(make_spec(16, 1, Mode::PipeMare)) == 4);
  REQUIRE(optimal_segment(make_spec(16, 16, Mode::GPipe, 1.0, 1.0)) == 4);
  for (int P = 1; P <= 64; ++P) {
    PipelineSpec s = make_spec(P, 3, Mode::PipeMare);
    int best = 1;
    double best_units = activation_memory(s, Recompute::segmented(1));
    for (int S = 2; S <= P; ++S) {
      double u = activation_memory(s, Recompute::segmented(S));
      if (u < best_units) {
        best_units = u;
        best = S;
      }
    }
    REQUIRE(optimal_segment(s) == best);
    REQUIRE(activation_memory(s, Recompute::optimal()) == best_units);
  }
}

TEST_CASE("optimally segmented recompute never costs more than storing everything") {
  for (int P = 4; P <= 512; ++P) {
    PipelineSpec s = make_spec(P, 1, Mode::PipeMare);
    REQUIRE(activation_memory(s, Recompute::optimal()) <= activation_memory(s));
  }
}

TEST_CASE("asymptotic recompute savings at benchmark depths") {
  REQUIRE(recompute_savings_ratio(make_spec(107, 16, Mode::PipeMare)) ==
          Catch::Approx(0.097).margin(0.001));
  REQUIRE(recompute_savings_ratio(make_spec(93, 19, Mode::PipeMare)) ==
          Catch::Approx(0.104).margin(0.001));
  REQUIRE(recompute_savings_ratio(make_spec(91, 116, Mode::PipeMare)) ==
          Catch::Approx(0.105).margin(0.001));
  REQUIRE(recompute_savings_ratio(make_spec(4, 16, Mode::GPipe)) == 0.25);
}

TEST_CASE("normalized wall-clock time") {
  REQUIRE(normalized_time(83, 0.23) == 83 / 0.23);
  REQUIRE(normalized_time(83, 0.23) == Catch::Approx(360.9).margin(0.05));
  REQUIRE(normalized_time(0, 0.5) == 0.0);
  REQUIRE_THROWS_AS(normalized_time(10, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(normalized_time(-1, 0.5), std::invalid_argument);
}

TEST_CASE("cost report composes the individual models") {
  PipelineSpec s = make_spec(16, 1, Mode::PipeMare);
  CostReport r = cost_model(s, Optimizer::AdamW, true, Recompute::optimal());
  REQUIRE(r.utilization == 1.0);
  REQUIRE(r.weight_opt_multiplier == 5.0 / 4.0);
  REQUIRE(r.weight_opt_memory_units == 5.0 * 16);
  REQUIRE(r.activation_memory_units == activation_memory(s, Recompute::optimal()));
}
