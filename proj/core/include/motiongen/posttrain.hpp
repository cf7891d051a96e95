#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motiongen/environment.hpp"
#include "motiongen/model.hpp"
#include "motiongen/scenario.hpp"

namespace motiongen {

enum class PosttrainMethod { kSft, kReinforce, kA2c, kGrpo };

PosttrainMethod posttrain_method_from_string(const std::string& name);
std::string to_string(PosttrainMethod method);

struct PosttrainConfig {
  PosttrainMethod method = PosttrainMethod::kGrpo;
  double gamma = 0.5;        // per-step reward discount
  double lambda_kl = 0.8;    // reference-KL weight, grpo only
  double lambda_h = 0.01;    // entropy bonus weight, grpo only
  int group_size = 8;        // parallel rollouts per initial state
  int horizon = 16;          // token steps per rollout
  double temperature = 1.0;  // > 0 so a group actually spreads
  double lr = 1e-5;
  double sft_lr = 3e-5;
  int epochs = 1;
  double std_floor = 1e-6;        // group spread below this zeroes advantages
  double collision_weight = 0.5;  // collision share of the combined reward
  // Keep only the sampled action's term of each step's KL instead of the
  // full-vocabulary sum. The full sum is the default: it is nonnegative and
  // vanishes exactly when the policies match, which the single-sample
  // estimator does not guarantee.
  bool sampled_kl = false;
  std::uint64_t seed = 0;
  TokenizerConfig tokenizer;

  void validate() const;
};

// Per-(rollout, agent, step) quantities behind one policy update, flattened
// rollout-major. `kl` and `kl_aggregate` stay zero unless a reference policy
// was given; `entropy` is always filled from the forward pass.
struct AdvantageTable {
  int n_rollouts = 0;
  int n_agents = 0;
  int horizon = 0;
  std::vector<double> rewards;
  std::vector<double> returns;
  std::vector<double> advantages;
  std::vector<double> kl;
  std::vector<double> entropy;
  double kl_aggregate = 0.0;

  std::size_t at(int r, int i, int t) const {
    return ((std::size_t)r * n_agents + i) * horizon + t;
  }
};

// R_t = sum_{k >= t} gamma^{k-t} r_k, evaluated right to left.
std::vector<double> discounted_returns(const std::vector<double>& rewards,
                                       double gamma);

// (x - mean) / population std across one group of returns; a spread below
// `std_floor` zeroes the whole group rather than dividing by noise. Needs
// at least two members.
std::vector<double> group_normalize(const std::vector<double>& returns,
                                    double std_floor);

struct KlSummary {
  std::vector<double> per_step;  // same (r, i, t) layout as AdvantageTable
  double aggregate = 0.0;        // mean over (r, i) of the max over t
};

// Numeric mirror of the in-graph KL penalty. Logit rows are action rows in
// (rollout, agent, step) order, `horizon` per agent. The default form sums
// pi * log(pi / pi_ref) over the whole vocabulary; the sampled form keeps
// only the chosen action's term (`actions` must then hold one id per row).
KlSummary kl_terms(const Tensor& policy_logits, const Tensor& ref_logits,
                   int n_rollouts, int n_agents, int horizon,
                   const std::vector<int>& actions, bool sampled_point);

struct PolicyLoss {
  double loss = 0.0;
  double policy_term = 0.0;   // -mean(advantage * logprob) over actions
  double value_term = 0.0;    // critic regression, a2c only
  double kl_term = 0.0;       // weight-free aggregate, needs a reference
  double entropy_mean = 0.0;  // mean policy entropy over action steps
  GradStore grads;
  AdvantageTable table;
};

// One differentiable pass over a scored group. Gradients flow only through
// the log-probabilities of the sampled actions (plus the value head for
// a2c); advantages enter as constants, so a2c's value estimate is detached
// from the policy term by construction. Passing `fixed` reuses a previous
// table's advantages instead of recomputing them, which keeps the loss a
// pure function of the parameters for finite-difference probes.
PolicyLoss policy_loss(const PolicyModel& m, const PolicyModel* reference,
                       const Scenario& s, const RolloutBatch& group,
                       const PosttrainConfig& cfg,
                       const AdvantageTable* fixed = nullptr);

struct PosttrainReport {
  PenaltySummary before;
  PenaltySummary after;
  int updates = 0;
  std::vector<double> losses;         // one per update
  std::vector<double> kl_per_update;  // aggregate per update, grpo only
  double mean_kl = 0.0;
  double max_kl = 0.0;
  int sft_scenarios = 0;  // violation-implicated scenarios kept for sft
  std::string warning;    // set when sft finds nothing to fix
};

// Fine-tunes in place and reports penalties before and after, measured with
// the same evaluation seeds so the comparison is paired. RL methods visit
// every scenario once per epoch: one group rollout from the anchor, scored,
// turned into advantages, one optimizer step. The reference policy is a
// frozen copy of the incoming model. SFT instead rolls the corpus out,
// keeps scenarios implicated in any violation and teacher-forces on their
// recorded futures at `sft_lr`; an empty set leaves the model untouched.
PosttrainReport run_posttrain(PolicyModel& m,
                              const std::vector<Scenario>& corpus,
                              const PosttrainConfig& cfg);

}  // namespace motiongen
