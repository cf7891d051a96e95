#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motiongen/environment.hpp"
#include "motiongen/graph.hpp"
#include "motiongen/optim.hpp"
#include "motiongen/positional.hpp"
#include "motiongen/scenario.hpp"
#include "motiongen/tokenizer.hpp"

namespace motiongen {

struct ModelConfig {
  int d_model = 128;
  int n_heads = 8;
  int encoder_layers = 2;  // rounds of agent/map attention exchange
  int decoder_layers = 4;
  int ffn_mult = 4;
  int vocab_size = 169;
  int max_positions = 18;  // scene slot + token steps per agent
  int max_interest_agents = 8;
  int background_steps = 16;  // single-shot horizon for non-interest agents
  double coord_scale = 0.01;  // meters -> feature units for raw coordinates
  std::string size_preset;    // empty, or one of the preset names
  PEConfig pe;

  int head_dim() const { return n_heads > 0 ? d_model / n_heads : 0; }
  void validate() const;
  // mini | medium | big | large; widths step the parameter count roughly
  // 1 : 5 : 7.5 : 17 while every other knob stays at its default.
  static ModelConfig preset(const std::string& name);
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Scene encoder + autoregressive token decoder + value and background heads.
// All state lives in `params`; forward passes are free functions that build
// onto a caller-owned graph, so training and inference share one code path.
struct PolicyModel {
  ModelConfig cfg;
  ParamStore params;

  static PolicyModel init(const ModelConfig& cfg, std::uint64_t seed);
  // Tensor archive next to a .json config sidecar.
  void save(const std::string& path) const;
  static PolicyModel load(const std::string& path);
  std::size_t param_count() const;
};

// Instance-level inputs derived from a scenario at its anchor. Poses are
// expressed in the scene frame (first interest agent's anchor pose), which
// rides along with rigid motions of the world; vector features are either
// per-instance local or scene-frame depending on the embedding variant.
struct SceneInputs {
  std::vector<Tensor> map_vectors;   // (K, 7) per element
  std::vector<Pose2> map_poses;
  std::vector<int> map_types;
  std::vector<Tensor> agent_vectors;  // (K, 8) per agent, 1 s of history
  std::vector<Pose2> agent_poses;     // at the anchor
  std::vector<int> agent_types;
  std::vector<int> agent_ids;  // interest agents first, scenario order
  int n_interest = 0;
  Pose2 scene_frame;  // world pose the scene frame is anchored to
};

// Anchor defaults to the scenario's own; training slides it forward to mint
// extra samples from one recording (history window ends at the anchor).
SceneInputs build_scene_inputs(const Scenario& s, const ModelConfig& cfg);
SceneInputs build_scene_inputs(const Scenario& s, const ModelConfig& cfg,
                               double anchor_time);

struct SceneNodes {
  NodeId agent_tokens = -1;  // (A_all, d)
  NodeId map_tokens = -1;    // (M, d); -1 when the scenario has no map
  int n_interest = 0;
  // Copied from the inputs so downstream attention can rotate its keys.
  std::vector<Pose2> agent_poses;
  std::vector<Pose2> map_poses;
};

// Instance encoder: per-entity feature nets pooled to one token each, then
// alternating agent-self / agent-from-map / map-from-agent attention rounds.
// Map tokens never attend to each other.
SceneNodes encode_scene(Graph& g, const PolicyModel& m, const ParamBinding& pb,
                        const SceneInputs& in);

// One decoded agent: rows of the decoder batch, agent-major. Position 0
// takes the agent's encoded scene token; position j > 0 takes motion token
// tokens[j-1]; the logits at position j predict tokens[j]. poses[j] is the
// agent's pose (scene frame) when choosing that token. Agents with equal
// `group` share same-step attention; distinct groups never see each other,
// which is what lets independent rollouts batch into one pass.
struct DecoderAgent {
  int scene_index = 0;
  int group = 0;
  std::vector<int> tokens;
  std::vector<Pose2> poses;  // one per position: tokens.size() entries
};

struct DecoderOut {
  NodeId logits = -1;  // (rows, vocab)
  NodeId values = -1;  // (rows, 1), value-head estimate per position
  NodeId hidden = -1;  // (rows, d) final normalized activations
};

// Teacher-forced pass over every (agent, position) row. All agents must have
// the same position count; rows are ordered agent-major.
DecoderOut decoder_forward(Graph& g, const PolicyModel& m,
                           const ParamBinding& pb, const SceneNodes& scene,
                           const std::vector<DecoderAgent>& agents);

// Single-shot futures for non-interest agents: per-step scene-frame
// displacements at the token rate, (n_background, 2 * background_steps).
NodeId background_forward(Graph& g, const PolicyModel& m,
                          const ParamBinding& pb, const SceneNodes& scene,
                          const SceneInputs& in);

struct RolloutConfig {
  int n_rollouts = 32;
  int horizon = 16;
  double temperature = 1.0;  // 0 plays the argmax token
  std::uint64_t seed = 0;
  TokenizerConfig tokenizer;
};

// Samples token futures for every interest agent, detokenizing as it goes so
// each step's attention sees current poses. All rollouts advance together in
// one batched pass with cross-rollout attention masked. Deterministic in
// (model, scenario, config).
RolloutBatch rollout(const PolicyModel& m, const Scenario& s,
                     const RolloutConfig& rc);

// Rebuilds the teacher-forcing batch that reproduces a sampled rollout:
// token sequence = history token + sampled tokens, poses from the stored
// states. Row for agent a, position j sits at a * (horizon + 1) + j; the
// sampled actions are the targets at positions >= 1.
std::vector<DecoderAgent> decoder_batch_from_rollouts(
    const SceneInputs& in, const RolloutBatch& batch);

}  // namespace motiongen
