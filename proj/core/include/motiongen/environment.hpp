#pragma once

#include <cstdint>
#include <vector>

#include "motiongen/scenario.hpp"

namespace motiongen {

// Step penalties are 0 or -1 each; `combined` mixes them with a balance
// weight on the collision side.
struct StepReward {
  double r_collision = 0.0;
  double r_offroad = 0.0;

  double combined(double collision_weight = 0.5) const {
    return collision_weight * r_collision +
           (1.0 - collision_weight) * r_offroad;
  }
};

// One agent's sampled future at the 0.5 s token rate. `states` holds the
// anchor pose followed by one pose per token; `prefix_state` is the pose one
// segment before the anchor, kept so a decoder batch can be rebuilt from the
// rollout alone. `rewards` stays empty until score_rollouts fills it.
struct AgentRollout {
  int agent_id = 0;
  int history_token = 0;  // observed token for the last history segment
  int ref_bin_x = 0;
  int ref_bin_y = 0;
  AgentState prefix_state;
  std::vector<int> tokens;        // sampled, horizon entries
  std::vector<double> logprobs;   // of each sampled token, same length
  std::vector<AgentState> states; // anchor + one per token
  std::vector<StepReward> rewards;
};

struct Rollout {
  std::uint64_t seed = 0;
  std::vector<AgentRollout> agents;  // interest agents, scenario order
};

struct RolloutBatch {
  double anchor_time = 1.0;
  std::vector<Rollout> rollouts;
};

// Footprints of one agent at a step's start and end.
struct StepBoxes {
  OrientedBox before;
  OrientedBox after;
};

// Scores every entry against every other and the road edges. Collision: the
// end-pose box overlaps another agent's end-pose box (symmetric by
// construction). Offroad: any footprint corner's sweep from `before` to
// `after` crosses a road-edge polyline.
std::vector<StepReward> score_step(const std::vector<Polyline>& road_edges,
                                   const std::vector<StepBoxes>& agents);

// Fills rewards for every interest agent of every rollout. Each rollout is
// scored independently: its agents interact with each other and with the
// scripted futures of non-interest agents, never with other rollouts.
void score_rollouts(const Scenario& s, RolloutBatch& batch);

// Total penalty counts over a scored batch, the shared oracle for the
// test-time filter and the metric report.
struct PenaltySummary {
  int collision_steps = 0;
  int offroad_steps = 0;
  int total_steps = 0;

  int violations() const { return collision_steps + offroad_steps; }
  double collision_rate() const {
    return total_steps > 0 ? (double)collision_steps / total_steps : 0.0;
  }
  double offroad_rate() const {
    return total_steps > 0 ? (double)offroad_steps / total_steps : 0.0;
  }
};

PenaltySummary summarize_penalties(const Rollout& r);
PenaltySummary summarize_penalties(const RolloutBatch& batch);

}  // namespace motiongen
