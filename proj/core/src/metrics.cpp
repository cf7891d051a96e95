#include "motiongen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "motiongen/common.hpp"
#include "motiongen/geometry.hpp"

namespace motiongen {

namespace {

double grid_dt(const std::vector<AgentState>& states, std::size_t k) {
  double dt = states[k + 1].ts - states[k].ts;
  if (!(dt > 0.0))
    throw InvalidArgument("metrics: non-increasing trajectory timestamps");
  return dt;
}

// Ground truth on the rollout's own time grid, scored by the same oracle as
// the rollouts so indicator features and rates cannot disagree.
RolloutBatch ground_truth_batch(const Scenario& s, const Rollout& shape) {
  RolloutBatch gt;
  gt.rollouts.resize(1);
  for (const AgentRollout& ar : shape.agents) {
    const AgentTrack& tr = s.agent_by_id(ar.agent_id);
    if (ar.states.size() < 2)
      throw InvalidArgument("metrics: rollout has no future states");
    double t0 = ar.states.front().ts;
    double t1 = ar.states.back().ts;
    if (!tr.valid_over(t0, t1))
      throw InvalidArgument(
          "metrics: rollout horizon leaves the recorded track");
    AgentRollout g;
    g.agent_id = ar.agent_id;
    g.tokens.assign(ar.tokens.size(), 0);
    for (const AgentState& st : ar.states)
      g.states.push_back(tr.state_at_time(st.ts));
    gt.rollouts[0].agents.push_back(std::move(g));
  }
  gt.anchor_time = shape.agents.empty() ? 0.0 : shape.agents[0].states[0].ts;
  score_rollouts(s, gt);
  return gt;
}

double agent_ade(const AgentTrack& tr, const AgentRollout& ar) {
  if (ar.states.size() < 2)
    throw InvalidArgument("metrics: rollout has no future states");
  if (!tr.valid_over(ar.states.front().ts, ar.states.back().ts))
    throw InvalidArgument(
        "metrics: rollout horizon leaves the recorded track");
  double sum = 0.0;
  for (std::size_t k = 1; k < ar.states.size(); ++k) {
    AgentState gt = tr.state_at_time(ar.states[k].ts);
    sum += std::hypot(ar.states[k].x - gt.x, ar.states[k].y - gt.y);
  }
  return sum / (double)(ar.states.size() - 1);
}

}  // namespace

const char* component_name(int j) {
  switch (j) {
    case kLinearSpeed: return "linear_speed";
    case kLinearAccel: return "linear_accel";
    case kAngularSpeed: return "angular_speed";
    case kAngularAccel: return "angular_accel";
    case kCollisionIndicator: return "collision_indicator";
    case kOffroadIndicator: return "offroad_indicator";
    case kDistToRoadEdge: return "dist_to_road_edge";
    default: throw InvalidArgument("component_name: index out of range");
  }
}

const std::vector<std::string>& excluded_components() {
  static const std::vector<std::string> out = {"time_to_collision",
                                               "distance_to_nearest_object"};
  return out;
}

std::array<double, kNumComponents> MetricsConfig::default_weights() {
  // Safety indicators count double; everything else uniform.
  std::array<double, kNumComponents> w;
  w.fill(1.0 / 9.0);
  w[kCollisionIndicator] = 2.0 / 9.0;
  w[kOffroadIndicator] = 2.0 / 9.0;
  return w;
}

std::array<ComponentRange, kNumComponents> MetricsConfig::default_ranges() {
  std::array<ComponentRange, kNumComponents> r;
  r[kLinearSpeed] = {0.0, 30.0};
  r[kLinearAccel] = {-10.0, 10.0};
  r[kAngularSpeed] = {-3.2, 3.2};
  r[kAngularAccel] = {0.0, 6.4};
  r[kCollisionIndicator] = {0.0, 1.0};
  r[kOffroadIndicator] = {0.0, 1.0};
  r[kDistToRoadEdge] = {0.0, 50.0};
  return r;
}

void MetricsConfig::validate() const {
  if (bins < 2) throw InvalidArgument("metrics: bins must be >= 2");
  if (smoothing < 0.0 || smoothing >= 1.0)
    throw InvalidArgument("metrics: smoothing must be in [0, 1)");
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InvalidArgument("metrics: negative component weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidArgument("metrics: component weights must sum to 1");
  for (const ComponentRange& r : ranges)
    if (!(r.hi > r.lo))
      throw InvalidArgument("metrics: component range must have hi > lo");
}

int ComponentHistogram::bin_of(double v) const {
  int n = (int)prob.size();
  double t = (v - lo) / (hi - lo);
  int idx = (int)std::floor(t * n);
  return std::clamp(idx, 0, n - 1);
}

ComponentHistogram build_histogram(int component, const MetricsConfig& cfg,
                                   const std::vector<double>& values) {
  cfg.validate();
  if (component < 0 || component >= kNumComponents)
    throw InvalidArgument("build_histogram: component index out of range");
  if (values.empty())
    throw InvalidArgument("build_histogram: no samples");
  ComponentHistogram h;
  h.component = component;
  h.lo = cfg.ranges[(std::size_t)component].lo;
  h.hi = cfg.ranges[(std::size_t)component].hi;
  h.smoothing = cfg.smoothing;
  h.samples = (int)values.size();
  h.prob.assign((std::size_t)cfg.bins, 0.0);
  for (double v : values) {
    if (!std::isfinite(v))
      throw InvalidArgument("build_histogram: non-finite sample");
    h.prob[(std::size_t)h.bin_of(v)] += 1.0;
  }
  double scale = (1.0 - cfg.smoothing) / (double)values.size();
  double floor_mass = cfg.smoothing / (double)cfg.bins;
  for (double& p : h.prob) p = p * scale + floor_mass;
  return h;
}

NllResult component_nll(const ComponentHistogram& h,
                        const std::vector<double>& ground_truth) {
  if (h.samples < 1 || h.prob.empty())
    throw InvalidArgument("component_nll: empty histogram");
  if (ground_truth.empty())
    throw InvalidArgument("component_nll: no ground-truth samples");
  double nll = 0.0;
  for (double v : ground_truth) nll -= std::log(h.prob_of(v));
  nll /= (double)ground_truth.size();
  NllResult out;
  out.nll = nll;
  out.likelihood = std::exp(-nll);
  return out;
}

std::array<std::vector<double>, kNumComponents> extract_features(
    const std::vector<AgentState>& states,
    const std::vector<StepReward>& rewards,
    const std::vector<Polyline>& road_edges) {
  if (states.size() < 2)
    throw InvalidArgument("extract_features: need at least two states");
  if (rewards.size() + 1 != states.size())
    throw InvalidArgument("extract_features: rewards do not match steps");

  std::array<std::vector<double>, kNumComponents> out;
  const std::size_t steps = rewards.size();

  std::vector<double>& speed = out[kLinearSpeed];
  std::vector<double>& ang = out[kAngularSpeed];
  for (std::size_t k = 0; k < steps; ++k) {
    double dt = grid_dt(states, k);
    speed.push_back(std::hypot(states[k + 1].x - states[k].x,
                               states[k + 1].y - states[k].y) /
                    dt);
    ang.push_back(
        std::remainder(states[k + 1].heading - states[k].heading, 2.0 * kPi) /
        dt);
  }
  for (std::size_t k = 0; k + 1 < steps; ++k) {
    double dt = 0.5 * (states[k + 2].ts - states[k].ts);
    out[kLinearAccel].push_back((speed[k + 1] - speed[k]) / dt);
    out[kAngularAccel].push_back(std::abs(ang[k + 1] - ang[k]) / dt);
  }
  for (const StepReward& sr : rewards) {
    out[kCollisionIndicator].push_back(sr.r_collision < 0.0 ? 1.0 : 0.0);
    out[kOffroadIndicator].push_back(sr.r_offroad < 0.0 ? 1.0 : 0.0);
  }
  if (!road_edges.empty()) {
    for (std::size_t k = 1; k < states.size(); ++k) {
      Vec2 p{states[k].x, states[k].y};
      double best = std::numeric_limits<double>::infinity();
      for (const Polyline& line : road_edges)
        best = std::min(best, point_polyline_distance(p, line));
      out[kDistToRoadEdge].push_back(best);
    }
  }
  return out;
}

double ade(const Scenario& s, const Rollout& ro) {
  if (ro.agents.empty()) throw InvalidArgument("ade: empty rollout");
  double sum = 0.0;
  for (const AgentRollout& ar : ro.agents)
    sum += agent_ade(s.agent_by_id(ar.agent_id), ar);
  return sum / (double)ro.agents.size();
}

double min_ade(const Scenario& s, const RolloutBatch& batch) {
  if (batch.rollouts.empty()) throw InvalidArgument("min_ade: empty batch");
  double best = std::numeric_limits<double>::infinity();
  for (const Rollout& ro : batch.rollouts) best = std::min(best, ade(s, ro));
  return best;
}

ScenarioMetrics evaluate_scenario(const Scenario& s, const RolloutBatch& batch,
                                  const MetricsConfig& cfg) {
  cfg.validate();
  if (batch.rollouts.empty())
    throw InvalidArgument("evaluate_scenario: empty rollout batch");

  RolloutBatch scored = batch;
  score_rollouts(s, scored);
  const std::vector<Polyline> edges = s.road_edges();

  ScenarioMetrics out;
  out.name = s.name;

  double ade_sum = 0.0;
  double ade_min = std::numeric_limits<double>::infinity();
  std::array<std::vector<double>, kNumComponents> sim;
  for (const Rollout& ro : scored.rollouts) {
    double e = ade(s, ro);
    ade_sum += e;
    ade_min = std::min(ade_min, e);
    for (const AgentRollout& ar : ro.agents) {
      auto feats = extract_features(ar.states, ar.rewards, edges);
      for (int j = 0; j < kNumComponents; ++j)
        sim[(std::size_t)j].insert(sim[(std::size_t)j].end(),
                                   feats[(std::size_t)j].begin(),
                                   feats[(std::size_t)j].end());
    }
  }
  out.ade = ade_sum / (double)scored.rollouts.size();
  out.min_ade = ade_min;

  PenaltySummary pen = summarize_penalties(scored);
  out.collision_rate = pen.collision_rate();
  out.offroad_rate = pen.offroad_rate();

  RolloutBatch gt = ground_truth_batch(s, scored.rollouts.front());
  std::array<std::vector<double>, kNumComponents> real;
  for (const AgentRollout& ar : gt.rollouts[0].agents) {
    auto feats = extract_features(ar.states, ar.rewards, edges);
    for (int j = 0; j < kNumComponents; ++j)
      real[(std::size_t)j].insert(real[(std::size_t)j].end(),
                                  feats[(std::size_t)j].begin(),
                                  feats[(std::size_t)j].end());
  }

  for (int j = 0; j < kNumComponents; ++j) {
    const std::vector<double>& sv = sim[(std::size_t)j];
    const std::vector<double>& rv = real[(std::size_t)j];
    out.present[(std::size_t)j] = !sv.empty() && !rv.empty();
    if (!out.present[(std::size_t)j]) continue;
    ComponentHistogram h = build_histogram(j, cfg, sv);
    out.likelihood[(std::size_t)j] = component_nll(h, rv).likelihood;
  }
  return out;
}

MetricReport evaluate(const std::vector<Scenario>& scenarios,
                      const std::vector<RolloutBatch>& batches,
                      const MetricsConfig& cfg) {
  cfg.validate();
  if (scenarios.size() != batches.size())
    throw InvalidArgument("evaluate: scenario/batch count mismatch");
  if (scenarios.empty()) throw InvalidArgument("evaluate: nothing to score");
  MetricReport report;
  report.weights = cfg.weights;
  for (std::size_t i = 0; i < scenarios.size(); ++i)
    report.scenarios.push_back(
        evaluate_scenario(scenarios[i], batches[i], cfg));
  report.realism = realism_score(report);
  return report;
}

double realism_score(const MetricReport& report) {
  double wsum = 0.0;
  for (double w : report.weights) {
    if (w < 0.0) throw InvalidArgument("realism_score: negative weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw InvalidArgument("realism_score: weights must sum to 1");
  if (report.scenarios.empty())
    throw InvalidArgument("realism_score: no scenarios");

  double total = 0.0;
  for (const ScenarioMetrics& sm : report.scenarios) {
    double num = 0.0, den = 0.0;
    for (int j = 0; j < kNumComponents; ++j) {
      if (!sm.present[(std::size_t)j]) continue;
      num += report.weights[(std::size_t)j] * sm.likelihood[(std::size_t)j];
      den += report.weights[(std::size_t)j];
    }
    if (den <= 0.0)
      throw InvalidArgument("realism_score: scenario with no components");
    total += num / den;
  }
  return total / (double)report.scenarios.size();
}

}  // namespace motiongen
