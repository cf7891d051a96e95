#include "motiongen/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "motiongen/common.hpp"
#include "motiongen/rng.hpp"

namespace motiongen {

void PretrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("pretrain: epochs must be >= 1");
  if (lr_max <= 0.0 || lr_min <= 0.0 || lr_min > lr_max) {
    throw InvalidArgument("pretrain: need 0 < lr_min <= lr_max");
  }
  if (anchor_count < 1 || anchor_step <= 0.0) {
    throw InvalidArgument("pretrain: bad anchor grid");
  }
  if (horizon_tokens < 1) {
    throw InvalidArgument("pretrain: horizon_tokens must be >= 1");
  }
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw InvalidArgument("pretrain: val_fraction must be in [0, 1)");
  }
  if (bg_weight < 0.0) throw InvalidArgument("pretrain: bg_weight < 0");
}

namespace {

// Ground-truth decoder rows for one agent: tokens from the window starting
// 1 s before the anchor, poses replayed through the same cursor the sampler
// uses, so training and rollout see identical geometry.
DecoderAgent forced_agent(const AgentTrack& tr, const TokenizerConfig& tok,
                          double anchor, int n_future, int scene_index,
                          const Pose2& scene_frame, int* clamps) {
  const double w0 = anchor - 2.0 * tok.dt;
  const TokenizedTrack tt = tokenize(tr, tok, w0, anchor + n_future * tok.dt);
  *clamps = tt.clamp_events;

  DecoderAgent da;
  da.scene_index = scene_index;
  da.group = 0;
  da.tokens = tt.tokens;
  RolloutCursor cur(tt.start, tt.ref_displacement, tok, tt.window_start);
  cur.seed_bins(tt.ref_bin_x, tt.ref_bin_y);
  da.poses.push_back(pose_to_frame(cur.pose(), scene_frame));
  for (std::size_t j = 1; j < da.tokens.size(); ++j) {
    cur.advance(da.tokens[j - 1]);
    da.poses.push_back(pose_to_frame(cur.pose(), scene_frame));
  }
  return da;
}

void fill_background(const Scenario& s, const SceneInputs& in, double anchor,
                     int bg_steps, double dt, PretrainSample* sp) {
  const int O = (int)in.agent_ids.size() - in.n_interest;
  sp->bg_targets = Tensor(O, 2 * bg_steps);
  sp->bg_weights = Tensor(O, 2 * bg_steps);
  for (int o = 0; o < O; ++o) {
    const AgentTrack& tr = s.agent_by_id(in.agent_ids[in.n_interest + o]);
    for (int k = 0; k < bg_steps; ++k) {
      const double ta = anchor + k * dt;
      const double tb = ta + dt;
      if (!tr.valid_over(ta, tb)) continue;
      const AgentState a = tr.state_at_time(ta);
      const AgentState b = tr.state_at_time(tb);
      const Vec2 d =
          Vec2{b.x - a.x, b.y - a.y}.rotated(-in.scene_frame.heading);
      sp->bg_targets.at(o, 2 * k) = d.x;
      sp->bg_targets.at(o, 2 * k + 1) = d.y;
      sp->bg_weights.at(o, 2 * k) = 1.0;
      sp->bg_weights.at(o, 2 * k + 1) = 1.0;
    }
  }
}

struct LossNodes {
  NodeId total = -1;
  NodeId ce = -1;
  int positions = 0;
};

LossNodes sample_loss(Graph& g, const PolicyModel& m, const ParamBinding& pb,
                      const PretrainSample& sp, double bg_weight) {
  SceneNodes scene = encode_scene(g, m, pb, sp.inputs);
  DecoderOut out = decoder_forward(g, m, pb, scene, sp.agents);
  std::vector<int> targets;
  for (const DecoderAgent& da : sp.agents) {
    targets.insert(targets.end(), da.tokens.begin(), da.tokens.end());
  }
  LossNodes ln;
  ln.positions = (int)targets.size();
  NodeId logp = g.log(g.softmax(out.logits));
  ln.ce = g.scale(g.reduce_mean_all(g.gather_cols(logp, targets)), -1.0);
  ln.total = ln.ce;

  double weight_sum = 0.0;
  for (double w : sp.bg_weights.data) weight_sum += w;
  if (bg_weight > 0.0 && weight_sum > 0.0) {
    NodeId pred = background_forward(g, m, pb, scene, sp.inputs);
    NodeId diff = g.sub(pred, g.input(sp.bg_targets));
    NodeId sq = g.mul(diff, diff);
    NodeId mse = g.scale(g.reduce_sum_all(g.mul(sq, g.input(sp.bg_weights))),
                         1.0 / weight_sum);
    ln.total = g.add(ln.total, g.scale(mse, bg_weight));
  }
  return ln;
}

}  // namespace

std::vector<PretrainSample> build_samples(const std::vector<Scenario>& corpus,
                                          const ModelConfig& mcfg,
                                          const PretrainConfig& cfg,
                                          SampleCounters* counters) {
  cfg.validate();
  mcfg.validate();
  if (cfg.horizon_tokens + 1 > mcfg.max_positions) {
    throw InvalidArgument("pretrain: horizon_tokens exceeds model positions");
  }
  SampleCounters local;
  SampleCounters& cnt = counters != nullptr ? *counters : local;
  const double dt = cfg.tokenizer.dt;

  std::vector<PretrainSample> samples;
  for (const Scenario& s : corpus) {
    const double track_end = s.anchor_time + s.horizon;
    for (int k = 0; k < cfg.anchor_count; ++k) {
      const double anchor = cfg.anchor_start + k * cfg.anchor_step;
      const int n_future = std::min(
          cfg.horizon_tokens,
          (int)std::floor((track_end - anchor) / dt + 1e-9));
      if (n_future < 1 || anchor - 2.0 * dt < -1e-9) {
        cnt.skipped_short += 1;
        continue;
      }

      PretrainSample sp;
      sp.scenario_name = s.name;
      sp.anchor = anchor;
      sp.inputs = build_scene_inputs(s, mcfg, anchor);
      bool clamped = false;
      for (int i = 0; i < sp.inputs.n_interest; ++i) {
        int clamps = 0;
        sp.agents.push_back(forced_agent(
            s.agent_by_id(sp.inputs.agent_ids[i]), cfg.tokenizer, anchor,
            n_future, i, sp.inputs.scene_frame, &clamps));
        if (clamps > 0) clamped = true;
      }
      if (clamped) {
        // A clamped difference means no token reproduces the recorded
        // motion; training on it would teach the wrong action.
        cnt.skipped_clamped += 1;
        continue;
      }
      fill_background(s, sp.inputs, anchor, mcfg.background_steps, dt, &sp);
      cnt.built += 1;
      samples.push_back(std::move(sp));
    }
  }
  return samples;
}

void split_corpus(const std::vector<Scenario>& all, double val_fraction,
                  std::uint64_t seed, std::vector<Scenario>* train,
                  std::vector<Scenario>* val) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw InvalidArgument("split: val_fraction must be in [0, 1)");
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "corpus_split"));
  std::shuffle(order.begin(), order.end(), rng.engine());

  std::size_t n_val = (std::size_t)std::lround(all.size() * val_fraction);
  if (val_fraction > 0.0 && all.size() > 1 && n_val == 0) n_val = 1;
  train->clear();
  val->clear();
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val : train)->push_back(all[order[i]]);
  }
}

EvalStats evaluate_samples(const PolicyModel& m,
                           const std::vector<PretrainSample>& samples) {
  EvalStats ev;
  double nll_sum = 0.0;
  int hits = 0;
  for (const PretrainSample& sp : samples) {
    Graph g(false);
    ParamBinding pb;
    pb.bind(g, m.params);
    SceneNodes scene = encode_scene(g, m, pb, sp.inputs);
    DecoderOut out = decoder_forward(g, m, pb, scene, sp.agents);
    const Tensor& logits = g.value(out.logits);
    int row = 0;
    for (const DecoderAgent& da : sp.agents) {
      for (int tok : da.tokens) {
        double mx = logits.at(row, 0);
        int arg = 0;
        for (int c = 1; c < logits.cols; ++c) {
          if (logits.at(row, c) > mx) {
            mx = logits.at(row, c);
            arg = c;
          }
        }
        double z = 0.0;
        for (int c = 0; c < logits.cols; ++c) {
          z += std::exp(logits.at(row, c) - mx);
        }
        nll_sum -= (logits.at(row, tok) - mx) - std::log(z);
        if (arg == tok) hits += 1;
        ev.positions += 1;
        row += 1;
      }
    }
  }
  if (ev.positions > 0) {
    ev.ce = nll_sum / ev.positions;
    ev.accuracy = (double)hits / ev.positions;
  }
  return ev;
}

PretrainResult train_pretrain(PolicyModel& m,
                              const std::vector<Scenario>& train_scenarios,
                              const std::vector<Scenario>& val_scenarios,
                              const PretrainConfig& cfg) {
  cfg.validate();
  PretrainResult res;
  const std::vector<PretrainSample> train_samples =
      build_samples(train_scenarios, m.cfg, cfg, &res.train_counters);
  const std::vector<PretrainSample> val_samples =
      build_samples(val_scenarios, m.cfg, cfg, &res.val_counters);
  if (train_samples.empty()) {
    throw InvalidArgument("pretrain: no usable training samples");
  }

  const std::int64_t total_steps =
      (std::int64_t)cfg.epochs * (std::int64_t)train_samples.size();
  Adam adam;
  Rng order_rng(derive_seed(cfg.seed, "epoch_order"));
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng.engine());
    double ce_sum = 0.0;
    double lr = cfg.lr_max;
    for (std::size_t idx : order) {
      Graph g(true);
      ParamBinding pb;
      pb.bind(g, m.params);
      const LossNodes ln =
          sample_loss(g, m, pb, train_samples[idx], cfg.bg_weight);
      if (step == 0) res.first_batch_ce = g.value(ln.ce).item();
      g.backward(ln.total);
      GradStore grads;
      pb.collect_grads(g, grads);
      lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min);
      adam.step(m.params, grads, lr);
      ce_sum += g.value(ln.ce).item();
      step += 1;
    }
    EpochStats es;
    es.train_ce = ce_sum / (double)train_samples.size();
    es.lr = lr;
    if (!val_samples.empty()) {
      const EvalStats ev = evaluate_samples(m, val_samples);
      es.val_ce = ev.ce;
      es.val_accuracy = ev.accuracy;
    }
    res.epochs.push_back(es);
  }
  return res;
}

}  // namespace motiongen
