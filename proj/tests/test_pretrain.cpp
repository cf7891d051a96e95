#include <doctest.h>

#include <cmath>
#include <vector>

#include "motiongen/common.hpp"
#include "motiongen/pretrain.hpp"
#include "motiongen/scenario_gen.hpp"

using namespace motiongen;

namespace {

std::vector<Scenario> small_corpus(int n, const char* tpl = "intersection") {
  std::vector<Scenario> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(generate_scenario(tpl, 100 + (std::uint64_t)i));
  }
  return out;
}

// Forward motion that lurches between 1 m and 14 m per half second. The
// bin difference between consecutive segments (~46) overflows the token
// span in every window, so each anchor must hit the clamp filter.
Scenario lurching_scenario() {
  Scenario s;
  s.name = "lurch";
  s.anchor_time = 1.0;
  s.horizon = 8.0;
  AgentTrack tr;
  tr.id = 0;
  auto seg_len = [](int i) { return i % 2 == 0 ? 1.0 : 14.0; };
  for (int k = 0; k <= 90; ++k) {
    const double t = 0.1 * k;
    const int i = (int)std::floor(t / 0.5 + 1e-9);
    double base = 0.0;
    for (int mseg = 0; mseg < i; ++mseg) base += seg_len(mseg);
    AgentState st;
    st.ts = t;
    st.x = base + (t - 0.5 * i) / 0.5 * seg_len(i);
    st.y = 0.0;
    st.heading = 0.0;
    tr.states.push_back(st);
    tr.valid.push_back(true);
  }
  s.agents.push_back(tr);
  s.interest_ids = {0};
  return s;
}

}  // namespace

TEST_CASE("sample building walks the anchor grid and shortens horizons") {
  const auto corpus = small_corpus(2);
  const ModelConfig mcfg = ModelConfig::preset("mini");
  PretrainConfig cfg;
  cfg.seed = 4;

  SampleCounters cnt;
  const auto samples = build_samples(corpus, mcfg, cfg, &cnt);
  CHECK(cnt.built == (int)samples.size());
  CHECK(cnt.built + cnt.skipped_short + cnt.skipped_clamped ==
        2 * cfg.anchor_count);
  REQUIRE(!samples.empty());

  for (const PretrainSample& sp : samples) {
    REQUIRE(!sp.agents.empty());
    const int S = (int)sp.agents.front().tokens.size();
    // 1 history token plus a future capped at 16 and clipped by track end.
    const int expect_future =
        std::min(16, (int)std::floor((9.0 - sp.anchor) / 0.5 + 1e-9));
    CHECK(S == 1 + expect_future);
    for (const DecoderAgent& da : sp.agents) {
      CHECK(da.group == 0);
      CHECK((int)da.tokens.size() == S);
      CHECK((int)da.poses.size() == S);
    }
    CHECK(sp.bg_targets.rows ==
          (int)sp.inputs.agent_ids.size() - sp.inputs.n_interest);
    CHECK(sp.bg_targets.cols == 2 * mcfg.background_steps);
  }
  // The grid spans anchors 1.0 .. 4.5.
  CHECK(samples.front().anchor == 1.0);
  CHECK(samples.back().anchor == 4.5);

  PretrainConfig capped = cfg;
  capped.horizon_tokens = 4;
  for (const auto& sp : build_samples(corpus, mcfg, capped)) {
    CHECK((int)sp.agents.front().tokens.size() <= 5);
  }

  capped.horizon_tokens = 30;  // would overflow max_positions
  CHECK_THROWS_AS(build_samples(corpus, mcfg, capped), InvalidArgument);
}

TEST_CASE("clamp filter drops unrepresentable ground truth") {
  const std::vector<Scenario> corpus = {lurching_scenario()};
  PretrainConfig cfg;
  SampleCounters cnt;
  const auto samples = build_samples(corpus, ModelConfig::preset("mini"), cfg,
                                     &cnt);
  CHECK(samples.empty());
  CHECK(cnt.skipped_clamped == cfg.anchor_count);
  CHECK(cnt.built == 0);
}

TEST_CASE("corpus split is deterministic, disjoint, and exhaustive") {
  const auto all = small_corpus(10, "straight");
  std::vector<Scenario> tr1, va1, tr2, va2;
  split_corpus(all, 0.1, 7, &tr1, &va1);
  split_corpus(all, 0.1, 7, &tr2, &va2);
  CHECK(tr1.size() == 9);
  CHECK(va1.size() == 1);
  REQUIRE(tr1.size() == tr2.size());
  for (std::size_t i = 0; i < tr1.size(); ++i) {
    CHECK(tr1[i].name == tr2[i].name);
  }
  CHECK(va1[0].name == va2[0].name);

  std::vector<Scenario> tr3, va3;
  split_corpus(all, 0.1, 8, &tr3, &va3);
  // Different seed, typically a different held-out pick.
  // (Not guaranteed for every pair, but stable for these.)
  CHECK(va3[0].name != va1[0].name);

  std::vector<std::string> names;
  for (const auto& s : tr1) names.push_back(s.name);
  for (const auto& s : va1) names.push_back(s.name);
  std::sort(names.begin(), names.end());
  CHECK(std::unique(names.begin(), names.end()) == names.end());
  CHECK(names.size() == all.size());
}

TEST_CASE("first optimization batch starts at exactly uniform cross-entropy") {
  const auto corpus = small_corpus(1);
  PolicyModel m = PolicyModel::init(ModelConfig::preset("mini"), 3);
  PretrainConfig cfg;
  cfg.epochs = 1;
  cfg.anchor_count = 1;
  cfg.seed = 9;
  const PretrainResult res = train_pretrain(m, corpus, {}, cfg);
  CHECK(std::abs(res.first_batch_ce - std::log(169.0)) < 1e-12);
  CHECK((int)res.epochs.size() == 1);
}

TEST_CASE("training overfits a tiny corpus") {
  const auto corpus = small_corpus(2, "curve");
  PolicyModel m = PolicyModel::init(ModelConfig::preset("mini"), 17);
  PretrainConfig cfg;
  cfg.epochs = 60;
  cfg.anchor_count = 1;  // single anchor: purest memorization setting
  cfg.lr_max = 3e-3;
  cfg.lr_min = 1e-4;
  cfg.seed = 21;

  const PretrainResult res = train_pretrain(m, corpus, corpus, cfg);
  REQUIRE((int)res.epochs.size() == 60);
  const EpochStats& first = res.epochs.front();
  const EpochStats& last = res.epochs.back();
  CHECK(last.train_ce < first.train_ce * 0.25);
  CHECK(last.train_ce < 1.0);
  // Same scenarios serve as "validation": memorization shows as accuracy.
  CHECK(last.val_accuracy > 0.7);
  CHECK(last.val_ce < 1.2);
  // Cosine schedule has decayed near the floor by the final step.
  CHECK(last.lr < first.lr);
  CHECK(last.lr < cfg.lr_min + 0.05 * (cfg.lr_max - cfg.lr_min));
}

TEST_CASE("background displacement head learns scripted others") {
  // straight seed 102 region: find a corpus entry with a non-interest agent.
  std::vector<Scenario> corpus;
  for (std::uint64_t seed = 100; seed < 140 && corpus.empty(); ++seed) {
    Scenario s = generate_scenario("straight", seed);
    if (s.agents.size() > s.interest_ids.size()) corpus.push_back(s);
  }
  REQUIRE(!corpus.empty());

  PolicyModel m = PolicyModel::init(ModelConfig::preset("mini"), 29);
  PretrainConfig cfg;
  cfg.epochs = 1;
  cfg.anchor_count = 1;
  cfg.seed = 31;

  const auto samples = build_samples(corpus, m.cfg, cfg);
  REQUIRE(!samples.empty());
  const PretrainSample& sp = samples.front();
  REQUIRE(sp.bg_targets.rows >= 1);
  double wsum = 0.0;
  for (double w : sp.bg_weights.data) wsum += w;
  REQUIRE(wsum > 0.0);

  auto bg_mse = [&](const PolicyModel& model) {
    Graph g(false);
    ParamBinding pb;
    pb.bind(g, model.params);
    SceneNodes scene = encode_scene(g, model, pb, sp.inputs);
    NodeId pred = background_forward(g, model, pb, scene, sp.inputs);
    const Tensor& p = g.value(pred);
    double acc = 0.0;
    for (int i = 0; i < p.size(); ++i) {
      const double d = p.data[i] - sp.bg_targets.data[i];
      acc += sp.bg_weights.data[i] * d * d;
    }
    return acc / wsum;
  };

  const double before = bg_mse(m);
  PretrainConfig train_cfg = cfg;
  train_cfg.epochs = 30;
  train_cfg.bg_weight = 1.0;  // isolate the auxiliary head's progress
  train_pretrain(m, corpus, {}, train_cfg);
  const double after = bg_mse(m);
  CHECK(after < before * 0.5);
}
