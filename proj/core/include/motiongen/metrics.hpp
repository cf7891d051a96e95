#pragma once

#include <array>
#include <string>
#include <vector>

#include "motiongen/environment.hpp"
#include "motiongen/scenario.hpp"

namespace motiongen {

// Scored feature components, fixed order. Collision and offroad indicators
// carry double weight by default; time-to-collision and
// distance-to-nearest-object are deliberately absent from the report.
enum Component : int {
  kLinearSpeed = 0,
  kLinearAccel,
  kAngularSpeed,
  kAngularAccel,
  kCollisionIndicator,
  kOffroadIndicator,
  kDistToRoadEdge,
  kNumComponents
};

const char* component_name(int j);
const std::vector<std::string>& excluded_components();

struct ComponentRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct MetricsConfig {
  int bins = 20;
  // Mass added on top of the counts and spread uniformly, so an empty bin
  // scores smoothing / bins instead of -inf log-likelihood.
  double smoothing = 0.02;
  std::array<double, kNumComponents> weights = default_weights();
  std::array<ComponentRange, kNumComponents> ranges = default_ranges();

  static std::array<double, kNumComponents> default_weights();
  static std::array<ComponentRange, kNumComponents> default_ranges();
  void validate() const;
};

struct ComponentHistogram {
  int component = 0;
  double lo = 0.0;
  double hi = 1.0;
  double smoothing = 0.0;
  int samples = 0;
  std::vector<double> prob;  // one entry per bin, sums to 1

  // Uniform bins over [lo, hi]; values outside clamp to the edge bins.
  int bin_of(double v) const;
  double prob_of(double v) const { return prob[(std::size_t)bin_of(v)]; }
};

ComponentHistogram build_histogram(int component, const MetricsConfig& cfg,
                                   const std::vector<double>& values);

struct NllResult {
  double nll = 0.0;
  double likelihood = 1.0;  // exp(-nll), in (0, 1]
};

NllResult component_nll(const ComponentHistogram& h,
                        const std::vector<double>& ground_truth);

// Per-agent feature series on the trajectory's own time grid: one sample
// per step for speeds and indicators, one fewer for the accelerations.
// `rewards` must be filled (the trajectory scored) before extraction.
std::array<std::vector<double>, kNumComponents> extract_features(
    const std::vector<AgentState>& states,
    const std::vector<StepReward>& rewards,
    const std::vector<Polyline>& road_edges);

// Mean Euclidean error against the recorded track over every future step
// and interest agent; the anchor state is shared and excluded.
double ade(const Scenario& s, const Rollout& ro);
double min_ade(const Scenario& s, const RolloutBatch& batch);

struct ScenarioMetrics {
  std::string name;
  double ade = 0.0;      // mean over rollouts
  double min_ade = 0.0;  // min over rollouts
  double collision_rate = 0.0;
  double offroad_rate = 0.0;
  std::array<double, kNumComponents> likelihood{};
  // Distance-to-road-edge drops out of mapless scenarios; absent components
  // are skipped and the weights renormalized rather than scored as zero.
  std::array<bool, kNumComponents> present{};
};

struct MetricReport {
  std::array<double, kNumComponents> weights{};
  std::vector<ScenarioMetrics> scenarios;
  double realism = 0.0;
};

// Scores a copy of the batch with the environment oracle, resamples the
// recorded tracks on the rollout time grid as ground truth, and compares
// the two: displacement errors, penalty rates, and per-component histogram
// likelihoods of the ground truth under the rollout distribution.
ScenarioMetrics evaluate_scenario(const Scenario& s, const RolloutBatch& batch,
                                  const MetricsConfig& cfg);

MetricReport evaluate(const std::vector<Scenario>& scenarios,
                      const std::vector<RolloutBatch>& batches,
                      const MetricsConfig& cfg);

// Weighted mean of component likelihoods over scenarios, weights
// renormalized over the components a scenario actually has. Throws unless
// the configured weights sum to 1.
double realism_score(const MetricReport& report);

}  // namespace motiongen
