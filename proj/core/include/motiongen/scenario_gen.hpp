#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motiongen/scenario.hpp"

namespace motiongen {

// Procedural templates. All tracks are scripted, collision-free and on-road;
// the generator re-rolls deterministically (derived sub-seeds) in the rare
// case a draw violates either property, so generate_scenario(template, seed)
// is a pure function.
//
//   straight     multi-lane road, car following with mild accel changes
//   curve        arc road, constant-ish speeds
//   intersection crossing roads, scripted yields at the conflict point
//   merge        ramp joining a main road, merging vehicle yields
//
// intersection and merge place agents on intersecting paths and carry the
// safety-relevant structure used by post-training and search experiments.
std::vector<std::string> scenario_templates();
std::vector<std::string> hazard_templates();
bool is_hazard_template(const std::string& name);

Scenario generate_scenario(const std::string& template_name,
                           std::uint64_t seed);

}  // namespace motiongen
