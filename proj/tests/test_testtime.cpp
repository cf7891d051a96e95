#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "motiongen/common.hpp"
#include "motiongen/rng.hpp"
#include "motiongen/testtime.hpp"

using namespace motiongen;

namespace {

PolicyModel mini_model(std::uint64_t seed = 41) {
  return PolicyModel::init(ModelConfig::preset("mini"), seed);
}

// Two interest agents cruising 4 km apart with no map: nothing to hit, so
// every candidate scores clean and pass-through behavior is isolated.
Scenario quiet_scenario() {
  Scenario s;
  s.name = "quiet";
  s.anchor_time = 1.0;
  s.horizon = 8.0;
  for (int a = 0; a < 2; ++a) {
    AgentTrack tr;
    tr.id = a;
    for (int k = 0; k <= 90; ++k) {
      AgentState st;
      st.ts = 0.1 * k;
      st.x = 2.0 * st.ts;
      st.y = 4000.0 * a;
      st.heading = 0.0;
      tr.states.push_back(st);
      tr.valid.push_back(true);
    }
    s.agents.push_back(tr);
    s.interest_ids.push_back(a);
  }
  return s;
}

Polyline square_edge(double cx, double cy, double half) {
  return Polyline({{cx - half, cy - half},
                   {cx + half, cy - half},
                   {cx + half, cy + half},
                   {cx - half, cy + half},
                   {cx - half, cy - half}});
}

// Quiet pair plus a road-edge square around the first agent. A uniform
// policy walks far enough that a `half` around 40 m splits the candidates
// into a healthy mix of clean and offroad rollouts.
Scenario walled_scenario(double half) {
  Scenario s = quiet_scenario();
  s.name = "walled";
  s.map_elements =
      segment_map({square_edge(0.0, 0.0, half)}, {MapType::kRoadEdge});
  return s;
}

// Two stationary agents boxed by walls a uniform policy escapes almost
// surely within a step or two: feasible rollouts effectively never happen.
Scenario boxed_scenario() {
  Scenario s;
  s.name = "boxed";
  s.anchor_time = 1.0;
  s.horizon = 8.0;
  for (int a = 0; a < 2; ++a) {
    AgentTrack tr;
    tr.id = a;
    for (int k = 0; k <= 90; ++k) {
      AgentState st;
      st.ts = 0.1 * k;
      st.x = 0.0;
      st.y = a == 0 ? -1.5 : 1.5;
      st.heading = 0.0;
      tr.states.push_back(st);
      tr.valid.push_back(true);
    }
    s.agents.push_back(tr);
    s.interest_ids.push_back(a);
  }
  s.map_elements =
      segment_map({square_edge(0.0, 0.0, 5.0)}, {MapType::kRoadEdge});
  return s;
}

TestTimeConfig tt_cfg(int n, int batch, int budget) {
  TestTimeConfig cfg;
  cfg.n_final = n;
  cfg.batch = batch;
  cfg.max_candidate_budget = budget;
  cfg.horizon = 16;
  cfg.seed = 19;
  return cfg;
}

double euclid(const RolloutFeature& a, const RolloutFeature& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

double assignment_cost(const std::vector<RolloutFeature>& feats,
                       const std::vector<int>& medoids) {
  double total = 0.0;
  for (const RolloutFeature& f : feats) {
    double best = std::numeric_limits<double>::infinity();
    for (int m : medoids) best = std::min(best, euclid(f, feats[(size_t)m]));
    total += best;
  }
  return total;
}

// Exhaustive optimum over every 3-subset, lexicographic order so the first
// strict minimum wins.
std::vector<int> brute_medoids3(const std::vector<RolloutFeature>& feats) {
  const int n = (int)feats.size();
  std::vector<int> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      for (int c = b + 1; c < n; ++c) {
        double cost = assignment_cost(feats, {a, b, c});
        if (cost < best_cost) {
          best_cost = cost;
          best = {a, b, c};
        }
      }
  return best;
}

std::vector<int> returned_violations(const TestTimeResult& res) {
  std::vector<int> out;
  for (const Rollout& ro : res.rollouts.rollouts)
    out.push_back(summarize_penalties(ro).violations());
  return out;
}

bool same_tokens(const Rollout& a, const Rollout& b) {
  if (a.seed != b.seed || a.agents.size() != b.agents.size()) return false;
  for (size_t i = 0; i < a.agents.size(); ++i)
    if (a.agents[i].tokens != b.agents[i].tokens) return false;
  return true;
}

}  // namespace

TEST_CASE("test-time config validation") {
  TestTimeConfig cfg = tt_cfg(4, 4, 16);
  CHECK_NOTHROW(cfg.validate());

  TestTimeConfig bad = cfg;
  bad.n_final = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.max_candidate_budget = 3;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.oversample = -1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.heading_scale = -0.5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.horizon = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.temperature = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("endpoint features concatenate scaled final poses") {
  RolloutBatch batch;
  batch.rollouts.resize(2);
  for (int r = 0; r < 2; ++r) {
    batch.rollouts[r].agents.resize(2);
    for (int a = 0; a < 2; ++a) {
      AgentRollout& ar = batch.rollouts[r].agents[a];
      AgentState mid;
      mid.x = -1.0;
      ar.states.push_back(mid);
      AgentState end;
      end.x = 10.0 * r + a;
      end.y = 3.0 + a;
      end.heading = 0.25 * (a + 1);
      ar.states.push_back(end);
    }
  }

  std::vector<RolloutFeature> feats = rollout_features(batch, 2.0);
  REQUIRE(feats.size() == 2);
  REQUIRE(feats[0].size() == 6);
  CHECK(feats[0] == RolloutFeature{0.0, 3.0, 0.5, 1.0, 4.0, 1.0});
  CHECK(feats[1] == RolloutFeature{10.0, 3.0, 0.5, 11.0, 4.0, 1.0});

  std::vector<RolloutFeature> wide = rollout_features(batch, 5.0);
  CHECK(wide[0][2] == doctest::Approx(1.25).epsilon(1e-12));

  batch.rollouts[0].agents[0].states.clear();
  CHECK_THROWS_AS(rollout_features(batch, 2.0), InvalidArgument);
}

TEST_CASE("k-medoids guards and degenerate inputs") {
  std::vector<RolloutFeature> pts = {{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}};
  CHECK_THROWS_AS(k_medoids(pts, 4, 1), InvalidArgument);
  CHECK_THROWS_AS(k_medoids(pts, 0, 1), InvalidArgument);
  std::vector<RolloutFeature> ragged = {{0.0, 0.0}, {1.0}};
  CHECK_THROWS_AS(k_medoids(ragged, 1, 1), InvalidArgument);

  // k == n: every point is its own medoid regardless of seed.
  for (std::uint64_t seed : {0ull, 7ull, 99ull}) {
    CHECK(k_medoids(pts, 3, seed) == std::vector<int>{0, 1, 2});
  }

  // All points identical: any k valid indices, zero cost from the start.
  std::vector<RolloutFeature> same(5, RolloutFeature{2.0, -1.0});
  std::vector<double> trace;
  std::vector<int> ids = k_medoids(same, 2, 13, &trace);
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] != ids[1]);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  for (int id : ids) CHECK((id >= 0 && id < 5));
  REQUIRE(trace.size() == 1);
  CHECK(trace[0] == 0.0);

  CHECK(k_medoids(pts, 2, 5) == k_medoids(pts, 2, 5));
}

TEST_CASE("k-medoids picks one medoid per separated pair") {
  // Three far-apart pairs; the optimum takes one point from each pair.
  std::vector<RolloutFeature> feats = {
      {0.0, 0.5}, {0.0, -0.5}, {100.0, 0.5},
      {100.0, -0.5}, {0.0, 100.5}, {0.0, 99.5},
  };
  std::vector<int> brute = brute_medoids3(feats);
  double brute_cost = assignment_cost(feats, brute);

  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    std::vector<int> got = k_medoids(feats, 3, seed);
    CHECK(assignment_cost(feats, got) ==
          doctest::Approx(brute_cost).epsilon(1e-12));
    // Pair membership: indices {0,1}, {2,3}, {4,5}.
    for (int p = 0; p < 3; ++p) {
      int hits = 0;
      for (int id : got)
        if (id / 2 == p) ++hits;
      CHECK(hits == 1);
    }
  }
}

TEST_CASE("k-medoids matches the exhaustive optimum on 12-point blobs") {
  for (std::uint64_t draw = 0; draw < 10; ++draw) {
    Rng rng(derive_seed(500, draw));
    std::vector<RolloutFeature> feats;
    const double cx[3] = {0.0, 60.0, -30.0};
    const double cy[3] = {0.0, 10.0, 55.0};
    for (int blob = 0; blob < 3; ++blob)
      for (int i = 0; i < 4; ++i)
        feats.push_back({cx[blob] + rng.normal(0.0, 0.5),
                         cy[blob] + rng.normal(0.0, 0.5)});

    std::vector<int> brute = brute_medoids3(feats);
    std::vector<int> got = k_medoids(feats, 3, derive_seed(501, draw));
    CHECK(got == brute);
    CHECK(assignment_cost(feats, got) ==
          doctest::Approx(assignment_cost(feats, brute)).epsilon(1e-12));
  }
}

TEST_CASE("PAM swap trace never increases and reruns identically") {
  Rng rng(4242);
  std::vector<RolloutFeature> feats;
  for (int i = 0; i < 40; ++i)
    feats.push_back({rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0)});

  std::vector<double> trace;
  std::vector<int> ids = k_medoids(feats, 5, 77, &trace);
  REQUIRE(ids.size() == 5);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  for (size_t i = 0; i + 1 < ids.size(); ++i) CHECK(ids[i] != ids[i + 1]);
  REQUIRE(!trace.empty());
  for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] < trace[i - 1]);
  CHECK(trace.back() ==
        doctest::Approx(assignment_cost(feats, ids)).epsilon(1e-12));

  std::vector<double> trace2;
  CHECK(k_medoids(feats, 5, 77, &trace2) == ids);
  CHECK(trace2 == trace);
}

TEST_CASE("pass-through returns the first sampled rollouts verbatim") {
  PolicyModel m = mini_model();
  Scenario s = quiet_scenario();
  TestTimeConfig cfg = tt_cfg(4, 4, 16);

  TestTimeResult res = test_time_generate(m, s, cfg);
  REQUIRE((int)res.rollouts.rollouts.size() == 4);
  CHECK(res.candidates == 4);
  CHECK(res.feasible == 4);
  CHECK(!res.budget_exhausted);
  CHECK(res.candidate_violations == std::vector<int>(4, 0));
  CHECK(res.sample_seconds > 0.0);
  CHECK(res.cluster_seconds == 0.0);

  // The output is wave zero of the derived seed chain, bit for bit.
  RolloutConfig rc;
  rc.n_rollouts = 4;
  rc.horizon = cfg.horizon;
  rc.temperature = cfg.temperature;
  rc.tokenizer = cfg.tokenizer;
  rc.seed = derive_seed(derive_seed(cfg.seed, "wave"), (std::uint64_t)0);
  RolloutBatch manual = rollout(m, s, rc);
  REQUIRE(manual.rollouts.size() == 4);
  for (int r = 0; r < 4; ++r)
    CHECK(same_tokens(res.rollouts.rollouts[(size_t)r],
                      manual.rollouts[(size_t)r]));
}

TEST_CASE("default oversample fills the candidate budget before clustering") {
  PolicyModel m = mini_model();
  Scenario s = quiet_scenario();
  TestTimeConfig cfg = tt_cfg(3, 8, 12);
  cfg.use_cluster = true;

  TestTimeResult res = test_time_generate(m, s, cfg);
  REQUIRE((int)res.rollouts.rollouts.size() == 3);
  CHECK(res.candidates == 12);  // ceil(12 / 3) * 3
  CHECK(!res.budget_exhausted);
  CHECK(res.cluster_seconds > 0.0);

  // Every returned rollout is one of the sampled candidates.
  std::vector<RolloutBatch> waves;
  const std::uint64_t root = derive_seed(cfg.seed, "wave");
  int left = 12, wave = 0;
  while (left > 0) {
    RolloutConfig rc;
    rc.n_rollouts = std::min(8, left);
    rc.horizon = cfg.horizon;
    rc.temperature = cfg.temperature;
    rc.tokenizer = cfg.tokenizer;
    rc.seed = derive_seed(root, (std::uint64_t)wave++);
    waves.push_back(rollout(m, s, rc));
    left -= rc.n_rollouts;
  }
  for (const Rollout& ro : res.rollouts.rollouts) {
    bool found = false;
    for (const RolloutBatch& wb : waves)
      for (const Rollout& cand : wb.rollouts)
        found = found || same_tokens(ro, cand);
    CHECK(found);
  }
}

TEST_CASE("search keeps only clean rollouts when the budget suffices") {
  PolicyModel m = mini_model();
  Scenario s = walled_scenario(40.0);
  TestTimeConfig cfg = tt_cfg(4, 8, 64);
  cfg.use_search = true;

  TestTimeResult res = test_time_generate(m, s, cfg);
  REQUIRE((int)res.rollouts.rollouts.size() == 4);
  CHECK(!res.budget_exhausted);
  CHECK(res.candidates <= 64);
  CHECK((int)res.candidate_violations.size() == res.candidates);
  int clean = 0;
  for (int v : res.candidate_violations)
    if (v == 0) ++clean;
  CHECK(clean == res.feasible);
  CHECK(res.feasible >= 4);
  // The walls actually bite for this seed; otherwise the filter is idle.
  CHECK(res.feasible < res.candidates);

  for (const Rollout& ro : res.rollouts.rollouts)
    CHECK(summarize_penalties(ro).violations() == 0);

  // Independent re-score agrees the returned set is violation free.
  RolloutBatch again = res.rollouts;
  score_rollouts(s, again);
  CHECK(summarize_penalties(again).violations() == 0);
}

TEST_CASE("exhausted search budget falls back to least-violating fill") {
  PolicyModel m = mini_model();
  Scenario s = boxed_scenario();
  TestTimeConfig cfg = tt_cfg(3, 4, 8);
  cfg.use_search = true;

  TestTimeResult res = test_time_generate(m, s, cfg);
  CHECK(res.budget_exhausted);
  CHECK(res.candidates == 8);
  CHECK(res.feasible < 3);
  REQUIRE((int)res.rollouts.rollouts.size() == 3);

  // The fill is the least-violating prefix of the candidate ranking.
  std::vector<int> got = returned_violations(res);
  CHECK(std::is_sorted(got.begin(), got.end()));
  std::vector<int> ranked = res.candidate_violations;
  std::sort(ranked.begin(), ranked.end());
  ranked.resize(3);
  CHECK(got == ranked);
}

TEST_CASE("test-time generation repeats bit-identically") {
  PolicyModel m = mini_model();
  Scenario s = walled_scenario(40.0);
  TestTimeConfig cfg = tt_cfg(3, 8, 32);
  cfg.use_search = true;
  cfg.use_cluster = true;
  cfg.oversample = 2;

  TestTimeResult a = test_time_generate(m, s, cfg);
  TestTimeResult b = test_time_generate(m, s, cfg);
  CHECK(a.candidates == b.candidates);
  CHECK(a.feasible == b.feasible);
  CHECK(a.budget_exhausted == b.budget_exhausted);
  CHECK(a.candidate_violations == b.candidate_violations);
  REQUIRE(a.rollouts.rollouts.size() == b.rollouts.rollouts.size());
  for (size_t r = 0; r < a.rollouts.rollouts.size(); ++r)
    CHECK(same_tokens(a.rollouts.rollouts[r], b.rollouts.rollouts[r]));
}
