#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "motiongen/common.hpp"
#include "motiongen/metrics.hpp"
#include "motiongen/model.hpp"
#include "motiongen/rng.hpp"

using namespace motiongen;

namespace {

// Straight cruise at 2 m/s, optionally alongside a road edge 5 m to the
// right. Constant speed, zero accel, zero heading rate, constant edge
// distance: every feature component collapses into a single histogram bin.
Scenario straight_scenario(bool with_edge) {
  Scenario s;
  s.name = "straight";
  s.anchor_time = 1.0;
  s.horizon = 8.0;
  for (int a = 0; a < 2; ++a) {
    AgentTrack tr;
    tr.id = a;
    for (int k = 0; k <= 90; ++k) {
      AgentState st;
      st.ts = 0.1 * k;
      st.x = 2.0 * st.ts;
      st.y = 100.0 * a;  // far enough apart to never interact
      st.heading = 0.0;
      tr.states.push_back(st);
      tr.valid.push_back(true);
    }
    s.agents.push_back(tr);
    s.interest_ids.push_back(a);
  }
  if (with_edge) {
    s.map_elements = segment_map(
        {Polyline({{-50.0, -5.0}, {150.0, -5.0}}),
         Polyline({{-50.0, 95.0}, {150.0, 95.0}})},
        {MapType::kRoadEdge, MapType::kRoadEdge});
  }
  return s;
}

std::vector<AgentState> resampled(const Scenario& s, int agent_id, int steps) {
  const AgentTrack& tr = s.agent_by_id(agent_id);
  std::vector<AgentState> out;
  for (int k = 0; k <= steps; ++k)
    out.push_back(tr.state_at_time(s.anchor_time + 0.5 * k));
  return out;
}

// A batch of hand-built rollouts that replay the recorded tracks, each
// shifted laterally by its entry in `offsets`.
RolloutBatch offset_batch(const Scenario& s, const std::vector<double>& offsets,
                          int steps = 16) {
  RolloutBatch batch;
  batch.anchor_time = s.anchor_time;
  for (double off : offsets) {
    Rollout ro;
    ro.seed = (std::uint64_t)batch.rollouts.size();
    for (int id : s.interest_ids) {
      AgentRollout ar;
      ar.agent_id = id;
      ar.tokens.assign((std::size_t)steps, 0);
      ar.states = resampled(s, id, steps);
      for (std::size_t k = 1; k < ar.states.size(); ++k) ar.states[k].y += off;
      ro.agents.push_back(std::move(ar));
    }
    batch.rollouts.push_back(std::move(ro));
  }
  return batch;
}

MetricsConfig exact_cfg() {
  MetricsConfig cfg;
  cfg.smoothing = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("metrics config defaults and validation") {
  MetricsConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  double sum = 0.0;
  for (double w : cfg.weights) sum += w;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cfg.weights[kCollisionIndicator] ==
        doctest::Approx(2.0 / 9.0).epsilon(1e-12));
  CHECK(cfg.weights[kOffroadIndicator] ==
        doctest::Approx(2.0 / 9.0).epsilon(1e-12));
  CHECK(cfg.weights[kLinearSpeed] == doctest::Approx(1.0 / 9.0).epsilon(1e-12));

  MetricsConfig bad = cfg;
  bad.bins = 1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.smoothing = 1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.weights[0] = -0.1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.weights[0] += 0.5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.ranges[0] = {3.0, 3.0};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  for (int j = 0; j < kNumComponents; ++j)
    CHECK(component_name(j) != nullptr);
  CHECK(std::string(component_name(kDistToRoadEdge)) == "dist_to_road_edge");
  CHECK(excluded_components().size() == 2);
}

TEST_CASE("histograms normalize, clamp, and smooth") {
  MetricsConfig cfg;  // default smoothing 0.02, 20 bins
  Rng rng(31);
  std::vector<double> values;
  for (int i = 0; i < 500; ++i) values.push_back(rng.normal(10.0, 8.0));
  ComponentHistogram h = build_histogram(kLinearSpeed, cfg, values);

  double sum = 0.0;
  for (double p : h.prob) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // Outliers clamp to the edge bins instead of falling off the support.
  CHECK(h.bin_of(-100.0) == 0);
  CHECK(h.bin_of(1000.0) == 19);
  CHECK(h.bin_of(0.0) == 0);
  CHECK(h.bin_of(29.999) == 19);

  // A bin no sample touched carries exactly the spread smoothing mass.
  ComponentHistogram spiky =
      build_histogram(kLinearSpeed, cfg, std::vector<double>(64, 0.75));
  CHECK(spiky.prob[10] == 0.02 / 20.0);
  CHECK(spiky.prob[0] == doctest::Approx(0.98 + 0.001).epsilon(1e-12));

  CHECK_THROWS_AS(build_histogram(kLinearSpeed, cfg, {}), InvalidArgument);
  CHECK_THROWS_AS(build_histogram(kLinearSpeed, cfg, {1.0, NAN}),
                  InvalidArgument);
  CHECK_THROWS_AS(build_histogram(-1, cfg, {1.0}), InvalidArgument);
}

TEST_CASE("component nll arithmetic") {
  // All mass in one bin, no smoothing: that bin scores certainty.
  ComponentHistogram h =
      build_histogram(kLinearSpeed, exact_cfg(), std::vector<double>(32, 2.0));
  NllResult res = component_nll(h, std::vector<double>(10, 2.0));
  CHECK(res.nll == 0.0);
  CHECK(res.likelihood == 1.0);

  // Ground truth in a zero-mass bin under delta = 0.02 over 20 bins.
  MetricsConfig cfg;
  ComponentHistogram hs =
      build_histogram(kLinearSpeed, cfg, std::vector<double>(32, 2.0));
  NllResult miss = component_nll(hs, {20.0});
  CHECK(miss.nll == doctest::Approx(-std::log(0.02 / 20.0)).epsilon(1e-12));
  CHECK(miss.likelihood == doctest::Approx(0.001).epsilon(1e-12));

  // Without smoothing a zero-mass bin is impossible: likelihood 0.
  NllResult zero = component_nll(h, {20.0});
  CHECK(zero.likelihood == 0.0);

  ComponentHistogram empty;
  CHECK_THROWS_AS(component_nll(empty, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(component_nll(h, {}), InvalidArgument);
}

TEST_CASE("feature extraction arithmetic on a scripted trajectory") {
  std::vector<AgentState> states(4);
  // dt = 0.5 everywhere; x steps 1, 2, 3 -> speeds 2, 4, 6.
  double xs[4] = {0.0, 1.0, 3.0, 6.0};
  double hs[4] = {0.0, 0.1, 0.3, 0.6};
  for (int k = 0; k < 4; ++k) {
    states[(std::size_t)k].ts = 0.5 * k;
    states[(std::size_t)k].x = xs[k];
    states[(std::size_t)k].heading = hs[k];
  }
  std::vector<StepReward> rewards(3);
  rewards[1].r_collision = -1.0;
  rewards[2].r_offroad = -1.0;
  std::vector<Polyline> edges = {Polyline({{-100.0, 10.0}, {100.0, 10.0}})};

  auto f = extract_features(states, rewards, edges);
  REQUIRE(f[kLinearSpeed].size() == 3);
  CHECK(f[kLinearSpeed][0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f[kLinearSpeed][1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(f[kLinearSpeed][2] == doctest::Approx(6.0).epsilon(1e-12));
  REQUIRE(f[kLinearAccel].size() == 2);
  CHECK(f[kLinearAccel][0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(f[kLinearAccel][1] == doctest::Approx(4.0).epsilon(1e-12));
  REQUIRE(f[kAngularSpeed].size() == 3);
  CHECK(f[kAngularSpeed][0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(f[kAngularSpeed][1] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(f[kAngularSpeed][2] == doctest::Approx(0.6).epsilon(1e-12));
  REQUIRE(f[kAngularAccel].size() == 2);
  CHECK(f[kAngularAccel][0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(f[kAngularAccel][1] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(f[kCollisionIndicator] == std::vector<double>{0.0, 1.0, 0.0});
  CHECK(f[kOffroadIndicator] == std::vector<double>{0.0, 0.0, 1.0});
  REQUIRE(f[kDistToRoadEdge].size() == 3);
  CHECK(f[kDistToRoadEdge][0] == doctest::Approx(10.0).epsilon(1e-12));

  auto nomap = extract_features(states, rewards, {});
  CHECK(nomap[kDistToRoadEdge].empty());

  rewards.pop_back();
  CHECK_THROWS_AS(extract_features(states, rewards, edges), InvalidArgument);
  CHECK_THROWS_AS(
      extract_features({states[0]}, std::vector<StepReward>{}, edges),
      InvalidArgument);
}

TEST_CASE("displacement errors match hand-built offsets") {
  Scenario s = straight_scenario(false);

  RolloutBatch perfect = offset_batch(s, {0.0});
  CHECK(ade(s, perfect.rollouts[0]) == 0.0);

  RolloutBatch shifted = offset_batch(s, {1.0});
  CHECK(ade(s, shifted.rollouts[0]) == doctest::Approx(1.0).epsilon(1e-12));

  RolloutBatch three = offset_batch(s, {2.0, 1.1, 3.4});
  CHECK(ade(s, three.rollouts[0]) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ade(s, three.rollouts[1]) == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(ade(s, three.rollouts[2]) == doctest::Approx(3.4).epsilon(1e-12));
  CHECK(min_ade(s, three) == doctest::Approx(1.1).epsilon(1e-12));

  RolloutBatch empty;
  CHECK_THROWS_AS(min_ade(s, empty), InvalidArgument);

  // A grid that runs past the recorded track is a horizon mismatch.
  RolloutBatch late = offset_batch(s, {0.0});
  for (AgentRollout& ar : late.rollouts[0].agents)
    for (AgentState& st : ar.states) st.ts += 4.0;
  CHECK_THROWS_AS(ade(s, late.rollouts[0]), InvalidArgument);
}

TEST_CASE("perfect rollouts score component likelihoods of one") {
  Scenario s = straight_scenario(true);
  RolloutBatch batch = offset_batch(s, {0.0, 0.0, 0.0});

  ScenarioMetrics sm = evaluate_scenario(s, batch, exact_cfg());
  CHECK(sm.ade == 0.0);
  CHECK(sm.min_ade == 0.0);
  CHECK(sm.collision_rate == 0.0);
  CHECK(sm.offroad_rate == 0.0);
  for (int j = 0; j < kNumComponents; ++j) {
    CHECK(sm.present[(std::size_t)j]);
    CHECK(sm.likelihood[(std::size_t)j] == 1.0);
  }

  // Default smoothing dilutes the occupied bin to exactly 0.981.
  ScenarioMetrics smoothed = evaluate_scenario(s, batch, MetricsConfig{});
  for (int j = 0; j < kNumComponents; ++j)
    CHECK(smoothed.likelihood[(std::size_t)j] ==
          doctest::Approx(0.981).epsilon(1e-12));
}

TEST_CASE("mapless scenarios drop the road-edge component") {
  Scenario s = straight_scenario(false);
  RolloutBatch batch = offset_batch(s, {0.0, 0.5});
  ScenarioMetrics sm = evaluate_scenario(s, batch, exact_cfg());
  CHECK(!sm.present[kDistToRoadEdge]);
  CHECK(sm.present[kOffroadIndicator]);
  CHECK(sm.likelihood[kOffroadIndicator] == 1.0);

  // Renormalization: realism is the weighted mean over what is present.
  MetricReport report = evaluate({s}, {batch}, exact_cfg());
  double num = 0.0, den = 0.0;
  for (int j = 0; j < kNumComponents; ++j) {
    if (!sm.present[(std::size_t)j]) continue;
    num += report.weights[(std::size_t)j] * sm.likelihood[(std::size_t)j];
    den += report.weights[(std::size_t)j];
  }
  CHECK(den == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
  CHECK(report.realism == doctest::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("realism score is the hand-computed weighted mean") {
  MetricReport report;
  report.weights.fill(0.0);
  report.weights[kLinearSpeed] = 0.75;
  report.weights[kLinearAccel] = 0.25;
  ScenarioMetrics sm;
  sm.present[kLinearSpeed] = true;
  sm.present[kLinearAccel] = true;
  sm.likelihood[kLinearSpeed] = 0.8;
  sm.likelihood[kLinearAccel] = 0.6;
  report.scenarios.push_back(sm);
  CHECK(realism_score(report) == doctest::Approx(0.75).epsilon(1e-12));

  // Three components with asymmetric weights.
  report.weights.fill(0.0);
  report.weights[kLinearSpeed] = 0.5;
  report.weights[kCollisionIndicator] = 0.25;
  report.weights[kDistToRoadEdge] = 0.25;
  ScenarioMetrics& back = report.scenarios.back();
  back = ScenarioMetrics{};
  back.present[kLinearSpeed] = true;
  back.present[kCollisionIndicator] = true;
  back.present[kDistToRoadEdge] = true;
  back.likelihood[kLinearSpeed] = 1.0;
  back.likelihood[kCollisionIndicator] = 0.5;
  back.likelihood[kDistToRoadEdge] = 0.25;
  CHECK(realism_score(report) == doctest::Approx(0.6875).epsilon(1e-12));

  // Saturation at the ends.
  for (int j = 0; j < kNumComponents; ++j) {
    back.likelihood[(std::size_t)j] = 1.0;
    back.present[(std::size_t)j] = true;
  }
  report.weights = MetricsConfig::default_weights();
  CHECK(realism_score(report) == doctest::Approx(1.0).epsilon(1e-12));
  for (int j = 0; j < kNumComponents; ++j)
    back.likelihood[(std::size_t)j] = 0.0;
  CHECK(realism_score(report) == doctest::Approx(0.0).epsilon(1e-12));

  // Monotone in each component likelihood.
  back.likelihood.fill(0.5);
  double mid = realism_score(report);
  for (int j = 0; j < kNumComponents; ++j) {
    back.likelihood[(std::size_t)j] = 0.6;
    CHECK(realism_score(report) > mid);
    back.likelihood[(std::size_t)j] = 0.5;
  }

  report.weights[0] += 0.1;
  CHECK_THROWS_AS(realism_score(report), InvalidArgument);
}

TEST_CASE("sampled rollouts keep the metric invariants") {
  PolicyModel m = PolicyModel::init(ModelConfig::preset("mini"), 41);
  Scenario s = straight_scenario(true);
  RolloutConfig rc;
  rc.n_rollouts = 8;
  rc.horizon = 16;
  rc.seed = 23;
  RolloutBatch batch = rollout(m, s, rc);

  ScenarioMetrics sm = evaluate_scenario(s, batch, MetricsConfig{});
  CHECK(sm.min_ade <= sm.ade);
  CHECK(sm.collision_rate >= 0.0);
  CHECK(sm.collision_rate <= 1.0);
  CHECK(sm.offroad_rate >= 0.0);
  CHECK(sm.offroad_rate <= 1.0);
  for (int j = 0; j < kNumComponents; ++j) {
    CHECK(sm.likelihood[(std::size_t)j] >= 0.0);
    CHECK(sm.likelihood[(std::size_t)j] <= 1.0);
  }

  // Single oracle: the report's rates are the environment's penalty rates.
  RolloutBatch rescored = batch;
  score_rollouts(s, rescored);
  PenaltySummary pen = summarize_penalties(rescored);
  CHECK(sm.collision_rate == pen.collision_rate());
  CHECK(sm.offroad_rate == pen.offroad_rate());

  // The uniform policy wanders off a 5 m lane margin almost surely.
  CHECK(sm.offroad_rate > 0.0);
}

TEST_CASE("evaluate aggregates scenarios into one report") {
  Scenario a = straight_scenario(true);
  Scenario b = straight_scenario(false);
  b.name = "straight-nomap";
  RolloutBatch ba = offset_batch(a, {0.0, 1.0});
  RolloutBatch bb = offset_batch(b, {0.5, 0.5});

  MetricReport report = evaluate({a, b}, {ba, bb}, exact_cfg());
  REQUIRE(report.scenarios.size() == 2);
  CHECK(report.scenarios[0].name == "straight");
  CHECK(report.scenarios[1].name == "straight-nomap");
  CHECK(report.realism == doctest::Approx(realism_score(report)).epsilon(1e-12));
  CHECK(report.realism > 0.0);
  CHECK(report.realism <= 1.0);

  CHECK_THROWS_AS(evaluate({a}, {}, exact_cfg()), InvalidArgument);
  CHECK_THROWS_AS(evaluate({}, {}, exact_cfg()), InvalidArgument);
}
