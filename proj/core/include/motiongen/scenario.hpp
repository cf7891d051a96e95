#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motiongen/geometry.hpp"

namespace motiongen {

enum class MapType { kLane, kRoadEdge };
enum class AgentType { kVehicle, kPedestrian, kCyclist };

const char* to_string(MapType t);
const char* to_string(AgentType t);
MapType map_type_from_string(const std::string& s);
AgentType agent_type_from_string(const std::string& s);

// Default footprints by agent type (length x width, meters).
void default_footprint(AgentType t, double* length, double* width);

// One directed map segment: start, end, heading, length, type. Heading and
// length are redundant with the endpoints and must stay consistent (1e-6).
struct MapVector {
  double sx = 0.0, sy = 0.0;
  double ex = 0.0, ey = 0.0;
  double th = 0.0;  // atan2(ey - sy, ex - sx)
  double le = 0.0;  // hypot(ex - sx, ey - sy)
  MapType ty = MapType::kLane;
};

MapVector make_map_vector(const Vec2& s, const Vec2& e, MapType ty);

// A polyline piece after segmentation: <= 10 m for lanes, <= 20 m for road
// edges, vectors resampled at 1 m.
struct MapElement {
  MapType ty = MapType::kLane;
  std::vector<MapVector> vectors;

  Polyline polyline() const;
};

// Cuts raw polylines into elements and resamples vectors. Arc length is
// preserved within 1e-6 per element chain.
std::vector<MapElement> segment_map(const std::vector<Polyline>& polylines,
                                    const std::vector<MapType>& types,
                                    double lane_cut_m = 10.0,
                                    double edge_cut_m = 20.0,
                                    double resolution_m = 1.0);

struct AgentState {
  double x = 0.0, y = 0.0;
  double heading = 0.0;
  double ts = 0.0;  // seconds from scenario start

  Pose2 pose() const { return {x, y, heading}; }
};

struct AgentTrack {
  int id = 0;
  AgentType ty = AgentType::kVehicle;
  double length = 4.5;
  double width = 2.0;
  std::vector<AgentState> states;  // 10 Hz, strictly increasing ts
  std::vector<bool> valid;         // parallel to states

  OrientedBox box_at(std::size_t i) const;
  // Linear interpolation of position, shortest-arc for heading. Requires the
  // bracketing states to be valid.
  AgentState state_at_time(double t) const;
  bool valid_over(double t0, double t1) const;
};

struct Scenario {
  int version = 1;
  std::string name;
  std::string template_name;
  std::uint64_t seed = 0;
  double anchor_time = 1.0;   // seconds of history before the anchor: 1 s
  double horizon = 8.0;       // future seconds after the anchor
  std::vector<MapElement> map_elements;
  std::vector<AgentTrack> agents;
  std::vector<int> interest_ids;  // 2..8 entries, each an agent id

  const AgentTrack& agent_by_id(int id) const;
  bool is_interest(int id) const;
  std::vector<Polyline> road_edges() const;
};

// Structural validation shared by the generator and the loader. Throws
// FormatError with a reason on the first violation.
void validate_scenario(const Scenario& s);

// Canonical JSON (stable key order); loading rejects structural violations.
std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);
void save_scenario(const Scenario& s, const std::string& path);
Scenario load_scenario(const std::string& path);

// Applies one global rigid transform (rotate by `angle`, then translate) to
// every map vector and agent state. Used by invariance probes.
Scenario rigid_transform(const Scenario& s, double angle, const Vec2& shift);

// True if any pair of agent boxes overlaps at any common valid timestamp.
bool any_track_collision(const Scenario& s);

}  // namespace motiongen
