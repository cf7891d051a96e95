#include "motiongen/posttrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "motiongen/common.hpp"
#include "motiongen/pretrain.hpp"
#include "motiongen/rng.hpp"

namespace motiongen {

PosttrainMethod posttrain_method_from_string(const std::string& name) {
  if (name == "sft") return PosttrainMethod::kSft;
  if (name == "reinforce") return PosttrainMethod::kReinforce;
  if (name == "a2c") return PosttrainMethod::kA2c;
  if (name == "grpo") return PosttrainMethod::kGrpo;
  throw InvalidArgument("unknown post-training method: " + name);
}

std::string to_string(PosttrainMethod method) {
  switch (method) {
    case PosttrainMethod::kSft: return "sft";
    case PosttrainMethod::kReinforce: return "reinforce";
    case PosttrainMethod::kA2c: return "a2c";
    case PosttrainMethod::kGrpo: return "grpo";
  }
  throw InvalidArgument("unknown post-training method id");
}

void PosttrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw InvalidArgument("posttrain: gamma must be in (0, 1]");
  }
  if (lambda_kl < 0.0 || lambda_h < 0.0) {
    throw InvalidArgument("posttrain: penalty weights must be nonnegative");
  }
  if (group_size < 2) {
    throw InvalidArgument("posttrain: group size must be at least 2");
  }
  if (horizon < 1) throw InvalidArgument("posttrain: horizon must be >= 1");
  if (!(temperature > 0.0)) {
    throw InvalidArgument("posttrain: temperature must be positive");
  }
  if (!(lr > 0.0) || !(sft_lr > 0.0)) {
    throw InvalidArgument("posttrain: learning rates must be positive");
  }
  if (epochs < 1) throw InvalidArgument("posttrain: epochs must be >= 1");
  if (!(std_floor > 0.0)) {
    throw InvalidArgument("posttrain: std floor must be positive");
  }
  if (collision_weight < 0.0 || collision_weight > 1.0) {
    throw InvalidArgument("posttrain: collision weight must be in [0, 1]");
  }
}

std::vector<double> discounted_returns(const std::vector<double>& rewards,
                                       double gamma) {
  std::vector<double> out(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t k = rewards.size(); k > 0; --k) {
    if (!std::isfinite(rewards[k - 1])) {
      throw InvalidArgument("discounted_returns: non-finite reward");
    }
    acc = rewards[k - 1] + gamma * acc;
    out[k - 1] = acc;
  }
  return out;
}

std::vector<double> group_normalize(const std::vector<double>& returns,
                                    double std_floor) {
  const std::size_t n = returns.size();
  if (n < 2) {
    throw InvalidArgument("group_normalize: need at least two members");
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= (double)n;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / (double)n);
  std::vector<double> out(n, 0.0);
  if (sd < std_floor) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = (returns[i] - mean) / sd;
  return out;
}

namespace {

// log(softmax(x)) per row with the exact arithmetic of the graph's softmax
// followed by its log, so feeding a frozen twin's rows back as inputs
// cancels the live policy's own rows to the bit while the parameters still
// match.
Tensor log_softmax_rows(const Tensor& x) {
  Tensor out(x.rows, x.cols);
  std::vector<double> e(x.cols);
  for (int r = 0; r < x.rows; ++r) {
    double mx = x.at(r, 0);
    for (int c = 1; c < x.cols; ++c) mx = std::max(mx, x.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < x.cols; ++c) {
      e[c] = std::exp(x.at(r, c) - mx);
      sum += e[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < x.cols; ++c) out.at(r, c) = std::log(e[c] * inv);
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r) {
    double mx = x.at(r, 0);
    for (int c = 1; c < x.cols; ++c) mx = std::max(mx, x.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < x.cols; ++c) {
      out.at(r, c) = std::exp(x.at(r, c) - mx);
      sum += out.at(r, c);
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < x.cols; ++c) out.at(r, c) *= inv;
  }
  return out;
}

}  // namespace

KlSummary kl_terms(const Tensor& policy_logits, const Tensor& ref_logits,
                   int n_rollouts, int n_agents, int horizon,
                   const std::vector<int>& actions, bool sampled_point) {
  const int rows = n_rollouts * n_agents * horizon;
  if (policy_logits.rows != rows || ref_logits.rows != rows ||
      policy_logits.cols != ref_logits.cols) {
    throw InvalidArgument("kl_terms: logit shape mismatch");
  }
  if (sampled_point && (int)actions.size() != rows) {
    throw InvalidArgument("kl_terms: one action per row required");
  }
  const Tensor p = softmax_rows(policy_logits);
  const Tensor lp = log_softmax_rows(policy_logits);
  const Tensor lr = log_softmax_rows(ref_logits);
  KlSummary out;
  out.per_step.assign((std::size_t)rows, 0.0);
  for (int r = 0; r < rows; ++r) {
    if (sampled_point) {
      const int a = actions[r];
      if (a < 0 || a >= p.cols) {
        throw InvalidArgument("kl_terms: action out of range");
      }
      out.per_step[r] = p.at(r, a) * (lp.at(r, a) - lr.at(r, a));
    } else {
      double s = 0.0;
      for (int c = 0; c < p.cols; ++c) {
        s += p.at(r, c) * (lp.at(r, c) - lr.at(r, c));
      }
      out.per_step[r] = s;
    }
  }
  double agg = 0.0;
  for (int b = 0; b < n_rollouts * n_agents; ++b) {
    double mx = out.per_step[(std::size_t)b * horizon];
    for (int t = 1; t < horizon; ++t) {
      mx = std::max(mx, out.per_step[(std::size_t)b * horizon + t]);
    }
    agg += mx;
  }
  out.aggregate = agg / (double)(n_rollouts * n_agents);
  return out;
}

PolicyLoss policy_loss(const PolicyModel& m, const PolicyModel* reference,
                       const Scenario& s, const RolloutBatch& group,
                       const PosttrainConfig& cfg,
                       const AdvantageTable* fixed) {
  cfg.validate();
  if (cfg.method == PosttrainMethod::kSft) {
    throw InvalidArgument("policy_loss: sft has no policy gradient");
  }
  if (group.rollouts.empty() || group.rollouts[0].agents.empty()) {
    throw InvalidArgument("policy_loss: empty group");
  }
  if (cfg.method == PosttrainMethod::kGrpo && cfg.lambda_kl > 0.0 &&
      reference == nullptr) {
    throw InvalidArgument("policy_loss: grpo needs a reference policy");
  }
  const int R = (int)group.rollouts.size();
  const int A = (int)group.rollouts[0].agents.size();
  const int T = (int)group.rollouts[0].agents[0].tokens.size();
  const int S = T + 1;
  for (const Rollout& ro : group.rollouts) {
    if ((int)ro.agents.size() != A) {
      throw InvalidArgument("policy_loss: ragged group");
    }
    for (const AgentRollout& ar : ro.agents) {
      if ((int)ar.tokens.size() != T || (int)ar.rewards.size() != T) {
        throw InvalidArgument("policy_loss: group not scored");
      }
    }
  }

  PolicyLoss res;
  AdvantageTable& tb = res.table;
  tb.n_rollouts = R;
  tb.n_agents = A;
  tb.horizon = T;
  const std::size_t cells = (std::size_t)R * A * T;
  tb.rewards.assign(cells, 0.0);
  tb.returns.assign(cells, 0.0);
  tb.advantages.assign(cells, 0.0);
  tb.entropy.assign(cells, 0.0);
  for (int r = 0; r < R; ++r) {
    for (int i = 0; i < A; ++i) {
      std::vector<double> rw(T);
      for (int t = 0; t < T; ++t) {
        rw[t] =
            group.rollouts[r].agents[i].rewards[t].combined(cfg.collision_weight);
      }
      const std::vector<double> ret = discounted_returns(rw, cfg.gamma);
      for (int t = 0; t < T; ++t) {
        tb.rewards[tb.at(r, i, t)] = rw[t];
        tb.returns[tb.at(r, i, t)] = ret[t];
      }
    }
  }

  const SceneInputs in = build_scene_inputs(s, m.cfg, group.anchor_time);
  Graph g(true);
  ParamBinding pb;
  pb.bind(g, m.params);
  const SceneNodes scene = encode_scene(g, m, pb, in);
  const std::vector<DecoderAgent> agents =
      decoder_batch_from_rollouts(in, group);
  const DecoderOut out = decoder_forward(g, m, pb, scene, agents);
  const int rows = R * A * S;

  if (fixed) {
    if (fixed->n_rollouts != R || fixed->n_agents != A || fixed->horizon != T) {
      throw InvalidArgument("policy_loss: fixed table shape mismatch");
    }
    tb.advantages = fixed->advantages;
  } else {
    switch (cfg.method) {
      case PosttrainMethod::kReinforce:
        tb.advantages = tb.returns;
        break;
      case PosttrainMethod::kA2c: {
        // The critic's estimate enters as plain numbers: the policy term
        // must not push gradient through the baseline it subtracts.
        const Tensor& v = g.value(out.values);
        for (int r = 0; r < R; ++r) {
          for (int i = 0; i < A; ++i) {
            for (int t = 0; t < T; ++t) {
              tb.advantages[tb.at(r, i, t)] =
                  tb.returns[tb.at(r, i, t)] -
                  v.at((r * A + i) * S + t + 1, 0);
            }
          }
        }
        break;
      }
      case PosttrainMethod::kGrpo: {
        std::vector<double> col(R);
        for (int i = 0; i < A; ++i) {
          for (int t = 0; t < T; ++t) {
            for (int r = 0; r < R; ++r) col[r] = tb.returns[tb.at(r, i, t)];
            const std::vector<double> adv =
                group_normalize(col, cfg.std_floor);
            for (int r = 0; r < R; ++r) tb.advantages[tb.at(r, i, t)] = adv[r];
          }
        }
        break;
      }
      case PosttrainMethod::kSft:
        break;  // rejected above
    }
  }

  std::vector<int> act((std::size_t)rows, 0);
  Tensor adv_rows(rows, 1);
  Tensor w_rows(rows, 1);
  Tensor ret_rows(rows, 1);
  for (int r = 0; r < R; ++r) {
    for (int i = 0; i < A; ++i) {
      const DecoderAgent& da = agents[(std::size_t)r * A + i];
      for (int j = 0; j < S; ++j) {
        const int row = (r * A + i) * S + j;
        act[(std::size_t)row] = da.tokens[(std::size_t)j];
        if (j >= 1) {
          adv_rows.at(row, 0) = tb.advantages[tb.at(r, i, j - 1)];
          ret_rows.at(row, 0) = tb.returns[tb.at(r, i, j - 1)];
          w_rows.at(row, 0) = 1.0;
        }
      }
    }
  }
  const double inv_actions = 1.0 / (double)((std::size_t)R * A * T);

  const NodeId p = g.softmax(out.logits);
  const NodeId logp = g.log(p);
  const NodeId chosen = g.gather_cols(logp, act);
  const NodeId policy_node = g.scale(
      g.reduce_sum_all(g.mul(chosen, g.input(adv_rows))), -inv_actions);
  NodeId total = policy_node;

  NodeId value_node = -1;
  if (cfg.method == PosttrainMethod::kA2c) {
    const NodeId diff = g.sub(out.values, g.input(ret_rows));
    value_node = g.scale(
        g.reduce_sum_all(g.mul(g.mul(diff, diff), g.input(w_rows))),
        inv_actions);
    total = g.add(total, value_node);
  }

  Tensor ones(m.cfg.vocab_size, 1);
  for (int c = 0; c < m.cfg.vocab_size; ++c) ones.at(c, 0) = 1.0;
  const NodeId ones_in = g.input(ones);
  const NodeId ent_col = g.scale(g.matmul(g.mul(p, logp), ones_in), -1.0);
  const NodeId ent_mean = g.scale(
      g.reduce_sum_all(g.mul(ent_col, g.input(w_rows))), inv_actions);

  NodeId kl_agg = -1;
  if (reference != nullptr) {
    Graph rg(false);
    ParamBinding rpb;
    rpb.bind(rg, reference->params);
    const SceneNodes rscene = encode_scene(rg, *reference, rpb, in);
    const DecoderOut rout = decoder_forward(rg, *reference, rpb, rscene, agents);
    const NodeId ref_in = g.input(log_softmax_rows(rg.value(rout.logits)));
    NodeId kl_col;
    if (cfg.sampled_kl) {
      kl_col = g.mul(g.gather_cols(p, act),
                     g.sub(chosen, g.gather_cols(ref_in, act)));
    } else {
      kl_col = g.matmul(g.mul(p, g.sub(logp, ref_in)), ones_in);
    }
    std::vector<NodeId> maxes;
    maxes.reserve((std::size_t)R * A);
    for (int b = 0; b < R * A; ++b) {
      maxes.push_back(g.col_max(g.slice_rows(kl_col, b * S + 1, T)));
    }
    kl_agg = g.reduce_mean_all(g.concat_rows(maxes));
    if (cfg.method == PosttrainMethod::kGrpo && cfg.lambda_kl > 0.0) {
      total = g.add(total, g.scale(kl_agg, cfg.lambda_kl));
    }
    tb.kl.assign(cells, 0.0);
    const Tensor& klv = g.value(kl_col);
    for (int r = 0; r < R; ++r) {
      for (int i = 0; i < A; ++i) {
        for (int t = 0; t < T; ++t) {
          tb.kl[tb.at(r, i, t)] = klv.at((r * A + i) * S + t + 1, 0);
        }
      }
    }
    tb.kl_aggregate = g.value(kl_agg).item();
    res.kl_term = tb.kl_aggregate;
  }
  if (cfg.method == PosttrainMethod::kGrpo && cfg.lambda_h > 0.0) {
    total = g.sub(total, g.scale(ent_mean, cfg.lambda_h));
  }

  const Tensor& entv = g.value(ent_col);
  for (int r = 0; r < R; ++r) {
    for (int i = 0; i < A; ++i) {
      for (int t = 0; t < T; ++t) {
        tb.entropy[tb.at(r, i, t)] = entv.at((r * A + i) * S + t + 1, 0);
      }
    }
  }

  g.backward(total);
  pb.collect_grads(g, res.grads);
  res.loss = g.value(total).item();
  res.policy_term = g.value(policy_node).item();
  if (value_node >= 0) res.value_term = g.value(value_node).item();
  res.entropy_mean = g.value(ent_mean).item();
  return res;
}

namespace {

void add_summary(PenaltySummary& acc, const PenaltySummary& one) {
  acc.collision_steps += one.collision_steps;
  acc.offroad_steps += one.offroad_steps;
  acc.total_steps += one.total_steps;
}

RolloutConfig rollout_config(const PosttrainConfig& cfg) {
  RolloutConfig rc;
  rc.n_rollouts = cfg.group_size;
  rc.horizon = cfg.horizon;
  rc.temperature = cfg.temperature;
  rc.tokenizer = cfg.tokenizer;
  return rc;
}

PenaltySummary eval_corpus(const PolicyModel& m,
                           const std::vector<Scenario>& corpus,
                           const PosttrainConfig& cfg,
                           std::uint64_t eval_seed) {
  RolloutConfig rc = rollout_config(cfg);
  PenaltySummary sum;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    rc.seed = derive_seed(eval_seed, (std::uint64_t)k);
    RolloutBatch batch = rollout(m, corpus[k], rc);
    score_rollouts(corpus[k], batch);
    add_summary(sum, summarize_penalties(batch));
  }
  return sum;
}

}  // namespace

PosttrainReport run_posttrain(PolicyModel& m,
                              const std::vector<Scenario>& corpus,
                              const PosttrainConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw InvalidArgument("posttrain: empty corpus");
  if (cfg.horizon + 1 > m.cfg.max_positions) {
    throw InvalidArgument("posttrain: horizon exceeds decoder positions");
  }

  PosttrainReport rep;
  const std::uint64_t eval_seed = derive_seed(cfg.seed, "posttrain_eval");
  rep.before = eval_corpus(m, corpus, cfg, eval_seed);

  if (cfg.method == PosttrainMethod::kSft) {
    RolloutConfig rc = rollout_config(cfg);
    const std::uint64_t sift_seed = derive_seed(cfg.seed, "sft_sift");
    std::vector<Scenario> implicated;
    for (std::size_t k = 0; k < corpus.size(); ++k) {
      rc.seed = derive_seed(sift_seed, (std::uint64_t)k);
      RolloutBatch batch = rollout(m, corpus[k], rc);
      score_rollouts(corpus[k], batch);
      if (summarize_penalties(batch).violations() > 0) {
        implicated.push_back(corpus[k]);
      }
    }
    rep.sft_scenarios = (int)implicated.size();
    if (implicated.empty()) {
      rep.warning = "sft: rollouts were violation-free, model left unchanged";
      rep.after = rep.before;
      return rep;
    }
    PretrainConfig pc;
    pc.epochs = cfg.epochs;
    pc.lr_max = cfg.sft_lr;
    pc.lr_min = cfg.sft_lr;
    pc.horizon_tokens = cfg.horizon;
    pc.seed = derive_seed(cfg.seed, "sft_tune");
    pc.tokenizer = cfg.tokenizer;
    const PretrainResult pr = train_pretrain(m, implicated, {}, pc);
    rep.updates = pr.train_counters.built * cfg.epochs;
  } else {
    const PolicyModel reference = m;  // pinned pretrained weights
    const PolicyModel* ref =
        cfg.method == PosttrainMethod::kGrpo ? &reference : nullptr;
    Adam adam;
    RolloutConfig rc = rollout_config(cfg);
    const std::uint64_t roll_seed = derive_seed(cfg.seed, "group_rollout");
    Rng order_rng(derive_seed(cfg.seed, "epoch_order"));
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), order_rng.engine());
      for (std::size_t k : order) {
        rc.seed = derive_seed(roll_seed, step);
        RolloutBatch batch = rollout(m, corpus[k], rc);
        score_rollouts(corpus[k], batch);
        const PolicyLoss pl = policy_loss(m, ref, corpus[k], batch, cfg);
        adam.step(m.params, pl.grads, cfg.lr);
        rep.losses.push_back(pl.loss);
        if (ref != nullptr) rep.kl_per_update.push_back(pl.kl_term);
        step += 1;
      }
    }
    rep.updates = (int)step;
    if (!rep.kl_per_update.empty()) {
      double s = 0.0;
      for (double v : rep.kl_per_update) {
        s += v;
        rep.max_kl = std::max(rep.max_kl, v);
      }
      rep.mean_kl = s / (double)rep.kl_per_update.size();
    }
  }

  rep.after = eval_corpus(m, corpus, cfg, eval_seed);
  return rep;
}

}  // namespace motiongen
