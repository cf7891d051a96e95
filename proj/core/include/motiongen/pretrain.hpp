#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motiongen/model.hpp"
#include "motiongen/scenario.hpp"
#include "motiongen/tokenizer.hpp"

namespace motiongen {

struct PretrainConfig {
  int epochs = 40;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  // Anchor grid for data augmentation: anchor_count anchors starting at
  // anchor_start, anchor_step apart. Later anchors trade future length for
  // sample diversity; the future window is capped at horizon_tokens.
  int anchor_count = 8;
  double anchor_start = 1.0;
  double anchor_step = 0.5;
  int horizon_tokens = 16;
  double val_fraction = 0.1;
  // Weight on the background-agent displacement MSE. Token cross-entropy is
  // tracked separately so its initial value stays exactly ln(vocab).
  double bg_weight = 0.05;
  std::uint64_t seed = 0;
  TokenizerConfig tokenizer;

  void validate() const;
};

// One teacher-forcing unit: a scenario viewed from one anchor. All interest
// agents share group 0 (they see each other socially, as in joint
// prediction); targets are the ground-truth token sequences.
struct PretrainSample {
  std::string scenario_name;
  double anchor = 1.0;
  SceneInputs inputs;
  std::vector<DecoderAgent> agents;
  // Background supervision: per non-interest agent, per step, the
  // scene-frame displacement (meters) and a 0/1 weight for coverage.
  Tensor bg_targets;  // (O, 2 * background_steps)
  Tensor bg_weights;  // same shape, step weights duplicated per axis
};

struct SampleCounters {
  int built = 0;
  int skipped_short = 0;    // no future token at this anchor
  int skipped_clamped = 0;  // ground truth not representable without clamps
};

std::vector<PretrainSample> build_samples(const std::vector<Scenario>& corpus,
                                          const ModelConfig& mcfg,
                                          const PretrainConfig& cfg,
                                          SampleCounters* counters = nullptr);

// Deterministic shuffled split; every scenario lands in exactly one side.
void split_corpus(const std::vector<Scenario>& all, double val_fraction,
                  std::uint64_t seed, std::vector<Scenario>* train,
                  std::vector<Scenario>* val);

struct EvalStats {
  double ce = 0.0;        // mean token cross-entropy, nats
  double accuracy = 0.0;  // top-1 over all positions
  int positions = 0;
};

EvalStats evaluate_samples(const PolicyModel& m,
                           const std::vector<PretrainSample>& samples);

struct EpochStats {
  double train_ce = 0.0;  // mean over the epoch's optimization steps
  double val_ce = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;  // learning rate of the epoch's last step
};

struct PretrainResult {
  double first_batch_ce = 0.0;  // before any update; ln(vocab) at init
  std::vector<EpochStats> epochs;
  SampleCounters train_counters;
  SampleCounters val_counters;
};

// Adam + cosine decay over all (epoch, sample) steps, one scenario-anchor
// sample per step. Mutates the model in place.
PretrainResult train_pretrain(PolicyModel& m,
                              const std::vector<Scenario>& train_scenarios,
                              const std::vector<Scenario>& val_scenarios,
                              const PretrainConfig& cfg);

}  // namespace motiongen
