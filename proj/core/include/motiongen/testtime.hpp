#pragma once

#include <cstdint>
#include <vector>

#include "motiongen/environment.hpp"
#include "motiongen/model.hpp"
#include "motiongen/scenario.hpp"

namespace motiongen {

struct TestTimeConfig {
  int n_final = 32;  // rollouts handed back to the caller
  int batch = 32;    // rollouts sampled per wave
  bool use_search = false;
  bool use_cluster = false;
  // Candidates gathered per output when clustering: n_final * oversample.
  // 0 derives ceil(budget / n_final), which fills the whole budget.
  int oversample = 0;
  int max_candidate_budget = 1024;
  double heading_scale = 2.0;  // meters one radian of heading counts for
  int horizon = 16;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  TokenizerConfig tokenizer;

  void validate() const;
};

// Endpoint signature of one rollout: (x, y, heading * heading_scale) of
// every interest agent's final state, concatenated in scenario order.
using RolloutFeature = std::vector<double>;

std::vector<RolloutFeature> rollout_features(const RolloutBatch& batch,
                                             double heading_scale);

// Greedy farthest-point seeding from the given seed, then PAM swaps to
// convergence: each round applies the single swap with the largest cost
// decrease, ties going to the lowest (medoid, candidate) index pair.
// Returns the k medoid indices in ascending order. `cost_trace`, when
// given, records the total within-cluster cost after seeding and after
// every applied swap; it never increases.
std::vector<int> k_medoids(const std::vector<RolloutFeature>& features,
                           int k, std::uint64_t seed,
                           std::vector<double>* cost_trace = nullptr);

struct TestTimeResult {
  RolloutBatch rollouts;  // exactly n_final entries, scored
  // Search could not gather its quota of clean rollouts within the budget.
  // When set, the output may contain least-violating fills; when clear and
  // use_search was on, every returned rollout scored zero penalties.
  bool budget_exhausted = false;
  int candidates = 0;  // rollouts sampled across all waves
  int feasible = 0;    // candidates that scored zero penalties
  std::vector<int> candidate_violations;  // per candidate, sampling order
  double sample_seconds = 0.0;
  double score_seconds = 0.0;
  double cluster_seconds = 0.0;
};

// Oversample -> filter -> cluster. Waves of `batch` rollouts accumulate
// candidates until the quota (n_final, or n_final * oversample when
// clustering) is met; with use_search only zero-penalty rollouts count.
// If the budget runs out first, the feasible set is topped up with the
// least-violating candidates and the result is flagged. Clustering picks
// medoids over endpoint features; otherwise the first n_final candidates
// pass through. Deterministic in (model, scenario, config).
TestTimeResult test_time_generate(const PolicyModel& m, const Scenario& s,
                                  const TestTimeConfig& cfg);

}  // namespace motiongen
