#include "motiongen/testtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "motiongen/common.hpp"
#include "motiongen/rng.hpp"

namespace motiongen {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

double feature_dist(const RolloutFeature& a, const RolloutFeature& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

void TestTimeConfig::validate() const {
  if (n_final < 1) throw InvalidArgument("test-time: n_final must be >= 1");
  if (batch < 1) throw InvalidArgument("test-time: batch must be >= 1");
  if (max_candidate_budget < n_final)
    throw InvalidArgument("test-time: budget must cover n_final rollouts");
  if (oversample < 0)
    throw InvalidArgument("test-time: oversample must be >= 0");
  if (heading_scale < 0.0)
    throw InvalidArgument("test-time: heading_scale must be >= 0");
  if (horizon < 1) throw InvalidArgument("test-time: horizon must be >= 1");
  if (temperature < 0.0)
    throw InvalidArgument("test-time: temperature must be >= 0");
}

std::vector<RolloutFeature> rollout_features(const RolloutBatch& batch,
                                             double heading_scale) {
  std::vector<RolloutFeature> out;
  out.reserve(batch.rollouts.size());
  for (const Rollout& ro : batch.rollouts) {
    RolloutFeature f;
    f.reserve(ro.agents.size() * 3);
    for (const AgentRollout& ar : ro.agents) {
      if (ar.states.empty())
        throw InvalidArgument("rollout_features: rollout has no states");
      const AgentState& end = ar.states.back();
      f.push_back(end.x);
      f.push_back(end.y);
      f.push_back(end.heading * heading_scale);
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<int> k_medoids(const std::vector<RolloutFeature>& features,
                           int k, std::uint64_t seed,
                           std::vector<double>* cost_trace) {
  const int n = (int)features.size();
  if (k < 1) throw InvalidArgument("k_medoids: k must be >= 1");
  if (k > n) throw InvalidArgument("k_medoids: k exceeds the point count");
  for (const RolloutFeature& f : features)
    if (f.size() != features[0].size())
      throw InvalidArgument("k_medoids: mixed feature dimensions");
  if (cost_trace) cost_trace->clear();

  std::vector<double> dist((size_t)n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d = feature_dist(features[i], features[j]);
      dist[(size_t)i * n + j] = d;
      dist[(size_t)j * n + i] = d;
    }
  auto d_at = [&](int i, int j) { return dist[(size_t)i * n + j]; };

  // Seeding: one random point, then repeatedly the point farthest from its
  // nearest chosen medoid (ties to the lowest index).
  Rng rng(seed);
  std::vector<char> chosen(n, 0);
  std::vector<int> medoids;
  medoids.reserve(k);
  std::vector<double> near(n, std::numeric_limits<double>::infinity());
  int first = (int)rng.uniform_int(0, n - 1);
  medoids.push_back(first);
  chosen[first] = 1;
  while ((int)medoids.size() < k) {
    int last = medoids.back();
    for (int i = 0; i < n; ++i) near[i] = std::min(near[i], d_at(i, last));
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      if (near[i] > best_d) {
        best_d = near[i];
        best = i;
      }
    }
    medoids.push_back(best);
    chosen[best] = 1;
  }

  // Assignment cache: nearest medoid and distance, plus the second-nearest
  // distance so swap deltas evaluate in O(n).
  std::vector<int> m1(n, -1);
  std::vector<double> d1(n, 0.0), d2(n, 0.0);
  auto reassign = [&]() {
    for (int i = 0; i < n; ++i) {
      double b1 = std::numeric_limits<double>::infinity(), b2 = b1;
      int arg = -1;
      for (int m : medoids) {
        double d = d_at(i, m);
        if (d < b1) {
          b2 = b1;
          b1 = d;
          arg = m;
        } else if (d < b2) {
          b2 = d;
        }
      }
      m1[i] = arg;
      d1[i] = b1;
      d2[i] = b2;
    }
    return std::accumulate(d1.begin(), d1.end(), 0.0);
  };
  double cost = reassign();
  if (cost_trace) cost_trace->push_back(cost);

  for (;;) {
    double best_delta = 0.0;
    int best_m = -1, best_o = -1;
    std::vector<int> order(medoids);
    std::sort(order.begin(), order.end());
    for (int m : order) {
      for (int o = 0; o < n; ++o) {
        if (chosen[o]) continue;
        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
          double d_new = (m1[i] == m) ? std::min(d2[i], d_at(i, o))
                                      : std::min(d1[i], d_at(i, o));
          delta += d_new - d1[i];
        }
        if (delta < best_delta) {
          best_delta = delta;
          best_m = m;
          best_o = o;
        }
      }
    }
    if (best_m < 0) break;
    chosen[best_m] = 0;
    chosen[best_o] = 1;
    *std::find(medoids.begin(), medoids.end(), best_m) = best_o;
    cost = reassign();
    if (cost_trace) cost_trace->push_back(cost);
  }

  std::sort(medoids.begin(), medoids.end());
  return medoids;
}

TestTimeResult test_time_generate(const PolicyModel& m, const Scenario& s,
                                  const TestTimeConfig& cfg) {
  cfg.validate();
  const int budget = cfg.max_candidate_budget;
  int quota = cfg.n_final;
  if (cfg.use_cluster) {
    int k_tt = cfg.oversample > 0 ? cfg.oversample
                                  : (budget + cfg.n_final - 1) / cfg.n_final;
    quota = std::min(cfg.n_final * k_tt, budget);
  }

  TestTimeResult res;
  std::vector<Rollout> pool;       // candidates that count toward the quota
  std::vector<Rollout> rejected;   // search discards, kept for the fallback
  std::vector<int> rejected_cost;  // violation counts aligned with the above
  const std::uint64_t wave_root = derive_seed(cfg.seed, "wave");
  double anchor_time = s.anchor_time;

  int wave = 0;
  while ((int)pool.size() < quota && res.candidates < budget) {
    RolloutConfig rc;
    rc.n_rollouts = std::min(cfg.batch, budget - res.candidates);
    rc.horizon = cfg.horizon;
    rc.temperature = cfg.temperature;
    rc.seed = derive_seed(wave_root, (std::uint64_t)wave++);
    rc.tokenizer = cfg.tokenizer;

    auto t0 = std::chrono::steady_clock::now();
    RolloutBatch wave_batch = rollout(m, s, rc);
    res.sample_seconds += seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    score_rollouts(s, wave_batch);
    anchor_time = wave_batch.anchor_time;
    for (Rollout& ro : wave_batch.rollouts) {
      int bad = summarize_penalties(ro).violations();
      res.candidates += 1;
      res.candidate_violations.push_back(bad);
      if (bad == 0) res.feasible += 1;
      if (!cfg.use_search || bad == 0) {
        if ((int)pool.size() < quota) pool.push_back(std::move(ro));
      } else {
        rejected.push_back(std::move(ro));
        rejected_cost.push_back(bad);
      }
    }
    res.score_seconds += seconds_since(t0);
  }

  if ((int)pool.size() < quota) {
    res.budget_exhausted = true;
    // Top up to n_final with the least-violating discards; stable sort keeps
    // sampling order among equals.
    std::vector<int> order(rejected.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return rejected_cost[a] < rejected_cost[b];
    });
    for (int idx : order) {
      if ((int)pool.size() >= cfg.n_final) break;
      pool.push_back(std::move(rejected[idx]));
    }
  }

  res.rollouts.anchor_time = anchor_time;
  if (cfg.use_cluster && (int)pool.size() > cfg.n_final) {
    auto t0 = std::chrono::steady_clock::now();
    RolloutBatch staging;
    staging.anchor_time = anchor_time;
    staging.rollouts = std::move(pool);
    std::vector<RolloutFeature> feats =
        rollout_features(staging, cfg.heading_scale);
    std::vector<int> centers =
        k_medoids(feats, cfg.n_final, derive_seed(cfg.seed, "cluster"));
    for (int c : centers)
      res.rollouts.rollouts.push_back(std::move(staging.rollouts[c]));
    res.cluster_seconds += seconds_since(t0);
  } else {
    if ((int)pool.size() > cfg.n_final) pool.resize(cfg.n_final);
    res.rollouts.rollouts = std::move(pool);
  }
  return res;
}

}  // namespace motiongen
