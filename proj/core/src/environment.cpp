#include "motiongen/environment.hpp"

#include <cstddef>

#include "motiongen/common.hpp"

namespace motiongen {

std::vector<StepReward> score_step(const std::vector<Polyline>& road_edges,
                                   const std::vector<StepBoxes>& agents) {
  std::vector<StepReward> out(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    for (std::size_t j = 0; j < agents.size(); ++j) {
      if (j == i) continue;
      if (obb_intersects(agents[i].after, agents[j].after)) {
        out[i].r_collision = -1.0;
        break;
      }
    }
    const auto from = agents[i].before.corners();
    const auto to = agents[i].after.corners();
    bool crossed = false;
    for (int c = 0; c < 4 && !crossed; ++c) {
      for (const Polyline& edge : road_edges) {
        if (segment_crosses_polyline(from[c], to[c], edge)) {
          crossed = true;
          break;
        }
      }
    }
    if (crossed) out[i].r_offroad = -1.0;
  }
  return out;
}

namespace {

OrientedBox state_box(const AgentState& st, const AgentTrack& tr) {
  return {st.pose(), tr.length, tr.width};
}

}  // namespace

void score_rollouts(const Scenario& s, RolloutBatch& batch) {
  const std::vector<Polyline> edges = s.road_edges();

  for (Rollout& ro : batch.rollouts) {
    if (ro.agents.empty()) continue;
    const std::size_t steps = ro.agents.front().tokens.size();
    for (AgentRollout& ar : ro.agents) {
      if (ar.tokens.size() != steps || ar.states.size() != steps + 1) {
        throw InvalidArgument("score_rollouts: ragged rollout");
      }
      ar.rewards.clear();
      ar.rewards.reserve(steps);
    }

    for (std::size_t k = 0; k < steps; ++k) {
      const double t0 = ro.agents.front().states[k].ts;
      const double t1 = ro.agents.front().states[k + 1].ts;
      std::vector<StepBoxes> boxes;
      boxes.reserve(ro.agents.size());
      for (const AgentRollout& ar : ro.agents) {
        const AgentTrack& tr = s.agent_by_id(ar.agent_id);
        boxes.push_back(
            {state_box(ar.states[k], tr), state_box(ar.states[k + 1], tr)});
      }
      // Scripted futures of non-interest agents act as obstacles; they are
      // scored too but their rewards are dropped below.
      for (const AgentTrack& tr : s.agents) {
        if (s.is_interest(tr.id)) continue;
        if (!tr.valid_over(t0, t1)) continue;
        boxes.push_back({state_box(tr.state_at_time(t0), tr),
                         state_box(tr.state_at_time(t1), tr)});
      }
      const std::vector<StepReward> rewards = score_step(edges, boxes);
      for (std::size_t a = 0; a < ro.agents.size(); ++a) {
        ro.agents[a].rewards.push_back(rewards[a]);
      }
    }
  }
}

PenaltySummary summarize_penalties(const Rollout& r) {
  PenaltySummary sum;
  for (const AgentRollout& ar : r.agents) {
    for (const StepReward& sr : ar.rewards) {
      sum.total_steps += 1;
      if (sr.r_collision < 0.0) sum.collision_steps += 1;
      if (sr.r_offroad < 0.0) sum.offroad_steps += 1;
    }
  }
  return sum;
}

PenaltySummary summarize_penalties(const RolloutBatch& batch) {
  PenaltySummary sum;
  for (const Rollout& r : batch.rollouts) {
    const PenaltySummary part = summarize_penalties(r);
    sum.collision_steps += part.collision_steps;
    sum.offroad_steps += part.offroad_steps;
    sum.total_steps += part.total_steps;
  }
  return sum;
}

}  // namespace motiongen
