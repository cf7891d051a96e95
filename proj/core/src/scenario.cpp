#include "motiongen/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "motiongen/common.hpp"

namespace motiongen {

using ordered_json = nlohmann::ordered_json;

const char* to_string(MapType t) {
  switch (t) {
    case MapType::kLane:
      return "lane";
    case MapType::kRoadEdge:
      return "road_edge";
  }
  return "lane";
}

const char* to_string(AgentType t) {
  switch (t) {
    case AgentType::kVehicle:
      return "vehicle";
    case AgentType::kPedestrian:
      return "pedestrian";
    case AgentType::kCyclist:
      return "cyclist";
  }
  return "vehicle";
}

MapType map_type_from_string(const std::string& s) {
  if (s == "lane") return MapType::kLane;
  if (s == "road_edge") return MapType::kRoadEdge;
  throw FormatError("unknown map type: " + s);
}

AgentType agent_type_from_string(const std::string& s) {
  if (s == "vehicle") return AgentType::kVehicle;
  if (s == "pedestrian") return AgentType::kPedestrian;
  if (s == "cyclist") return AgentType::kCyclist;
  throw FormatError("unknown agent type: " + s);
}

void default_footprint(AgentType t, double* length, double* width) {
  switch (t) {
    case AgentType::kVehicle:
      *length = 4.5;
      *width = 2.0;
      return;
    case AgentType::kPedestrian:
      *length = 0.8;
      *width = 0.8;
      return;
    case AgentType::kCyclist:
      *length = 1.8;
      *width = 0.6;
      return;
  }
}

MapVector make_map_vector(const Vec2& s, const Vec2& e, MapType ty) {
  MapVector v;
  v.sx = s.x;
  v.sy = s.y;
  v.ex = e.x;
  v.ey = e.y;
  v.th = std::atan2(e.y - s.y, e.x - s.x);
  v.le = (e - s).norm();
  v.ty = ty;
  return v;
}

Polyline MapElement::polyline() const {
  std::vector<Vec2> pts;
  pts.reserve(vectors.size() + 1);
  pts.push_back({vectors.front().sx, vectors.front().sy});
  for (const MapVector& v : vectors) pts.push_back({v.ex, v.ey});
  return Polyline(std::move(pts));
}

namespace {

Vec2 point_at_arc(const Polyline& line, const std::vector<double>& cum,
                  double s) {
  // cum[i] is arc length up to points[i]; s clamped to the valid range.
  s = std::clamp(s, 0.0, cum.back());
  auto it = std::upper_bound(cum.begin(), cum.end(), s);
  std::size_t i = std::min<std::size_t>(it - cum.begin(), cum.size() - 1);
  if (i == 0) i = 1;
  const double seg = cum[i] - cum[i - 1];
  const double t = seg > 0.0 ? (s - cum[i - 1]) / seg : 0.0;
  const Vec2 a = line.points[i - 1], b = line.points[i];
  return a + (b - a) * t;
}

}  // namespace

std::vector<MapElement> segment_map(const std::vector<Polyline>& polylines,
                                    const std::vector<MapType>& types,
                                    double lane_cut_m, double edge_cut_m,
                                    double resolution_m) {
  if (polylines.size() != types.size()) {
    throw InvalidArgument("segment_map: polylines/types size mismatch");
  }
  std::vector<MapElement> out;
  for (std::size_t pi = 0; pi < polylines.size(); ++pi) {
    const Polyline& line = polylines[pi];
    const MapType ty = types[pi];
    const double cut = ty == MapType::kLane ? lane_cut_m : edge_cut_m;

    std::vector<double> cum(line.points.size(), 0.0);
    for (std::size_t i = 1; i < line.points.size(); ++i) {
      cum[i] = cum[i - 1] + (line.points[i] - line.points[i - 1]).norm();
    }
    const double total = cum.back();
    if (total <= 0.0) continue;

    const int pieces = std::max(1, (int)std::ceil(total / cut - 1e-9));
    const double piece_len = total / pieces;
    for (int p = 0; p < pieces; ++p) {
      const double s0 = p * piece_len;
      const double s1 = std::min(total, (p + 1) * piece_len);
      const int nvec = std::max(1, (int)std::ceil((s1 - s0) / resolution_m - 1e-9));
      const double step = (s1 - s0) / nvec;
      MapElement el;
      el.ty = ty;
      el.vectors.reserve(nvec);
      for (int k = 0; k < nvec; ++k) {
        const Vec2 a = point_at_arc(line, cum, s0 + k * step);
        const Vec2 b = point_at_arc(line, cum, s0 + (k + 1) * step);
        el.vectors.push_back(make_map_vector(a, b, ty));
      }
      out.push_back(std::move(el));
    }
  }
  return out;
}

OrientedBox AgentTrack::box_at(std::size_t i) const {
  return {states.at(i).pose(), length, width};
}

AgentState AgentTrack::state_at_time(double t) const {
  if (states.empty()) throw InvalidArgument("empty track");
  if (t <= states.front().ts) return states.front();
  if (t >= states.back().ts) return states.back();
  std::size_t hi = 1;
  while (hi < states.size() && states[hi].ts < t) ++hi;
  const AgentState& a = states[hi - 1];
  const AgentState& b = states[hi];
  const double u = (t - a.ts) / (b.ts - a.ts);
  AgentState s;
  s.x = a.x + (b.x - a.x) * u;
  s.y = a.y + (b.y - a.y) * u;
  s.heading = normalize_angle(a.heading + normalize_angle(b.heading - a.heading) * u);
  s.ts = t;
  return s;
}

bool AgentTrack::valid_over(double t0, double t1) const {
  if (states.empty()) return false;
  // Coverage first: state_at_time clamps at the ends, so a track that stops
  // short would otherwise pass as an endlessly frozen pose.
  if (states.front().ts > t0 + 1e-9 || states.back().ts < t1 - 1e-9) {
    return false;
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].ts >= t0 - 1e-9 && states[i].ts <= t1 + 1e-9 && !valid[i]) {
      return false;
    }
  }
  return true;
}

const AgentTrack& Scenario::agent_by_id(int id) const {
  for (const AgentTrack& a : agents) {
    if (a.id == id) return a;
  }
  throw InvalidArgument("unknown agent id " + std::to_string(id));
}

bool Scenario::is_interest(int id) const {
  return std::find(interest_ids.begin(), interest_ids.end(), id) !=
         interest_ids.end();
}

std::vector<Polyline> Scenario::road_edges() const {
  std::vector<Polyline> edges;
  for (const MapElement& el : map_elements) {
    if (el.ty == MapType::kRoadEdge) edges.push_back(el.polyline());
  }
  return edges;
}

void validate_scenario(const Scenario& s) {
  if (s.interest_ids.size() < 2 || s.interest_ids.size() > 8) {
    throw FormatError("interest count out of range [2, 8]: " +
                      std::to_string(s.interest_ids.size()));
  }
  if (s.anchor_time < 1.0 - 1e-9) {
    throw FormatError("anchor must leave at least 1 s of history");
  }
  for (int id : s.interest_ids) {
    const auto it =
        std::find_if(s.agents.begin(), s.agents.end(),
                     [id](const AgentTrack& t) { return t.id == id; });
    if (it == s.agents.end()) {
      throw FormatError("interest id " + std::to_string(id) +
                        " names no agent");
    }
    const AgentTrack& a = *it;
    if (!a.valid_over(s.anchor_time - 1.0, s.anchor_time)) {
      throw FormatError("interest agent " + std::to_string(id) +
                        " has gaps over the history window");
    }
  }
  for (const AgentTrack& a : s.agents) {
    if (a.states.empty()) throw FormatError("agent with no states");
    if (a.states.size() != a.valid.size()) {
      throw FormatError("agent valid mask size mismatch");
    }
    if (a.length <= 0.0 || a.width <= 0.0) {
      throw FormatError("agent footprint must be positive");
    }
    for (std::size_t i = 1; i < a.states.size(); ++i) {
      if (a.states[i].ts <= a.states[i - 1].ts) {
        throw FormatError("non-monotone timestamps for agent " +
                          std::to_string(a.id));
      }
    }
    for (const AgentState& st : a.states) {
      if (!std::isfinite(st.x) || !std::isfinite(st.y) ||
          !std::isfinite(st.heading)) {
        throw FormatError("non-finite agent state");
      }
    }
  }
  for (const MapElement& el : s.map_elements) {
    if (el.vectors.empty()) throw FormatError("map element with no vectors");
    double chain = 0.0;
    for (std::size_t i = 0; i < el.vectors.size(); ++i) {
      const MapVector& v = el.vectors[i];
      const double le = std::hypot(v.ex - v.sx, v.ey - v.sy);
      if (std::abs(le - v.le) > 1e-6) {
        throw FormatError("map vector length inconsistent with endpoints");
      }
      if (v.le > 0.0 &&
          std::abs(normalize_angle(std::atan2(v.ey - v.sy, v.ex - v.sx) - v.th)) >
              1e-6) {
        throw FormatError("map vector heading inconsistent with endpoints");
      }
      if (i > 0) {
        const MapVector& prev = el.vectors[i - 1];
        if (std::hypot(v.sx - prev.ex, v.sy - prev.ey) > 1e-6) {
          throw FormatError("map element vectors do not chain");
        }
      }
      chain += v.le;
    }
    if (chain <= 0.0) throw FormatError("map element arc length must be > 0");
  }
}

namespace {

ordered_json vector_to_json(const MapVector& v) {
  return ordered_json{{"sx", v.sx}, {"sy", v.sy}, {"ex", v.ex}, {"ey", v.ey},
                      {"th", v.th}, {"le", v.le}, {"ty", to_string(v.ty)}};
}

MapVector vector_from_json(const ordered_json& j) {
  MapVector v;
  v.sx = j.at("sx").get<double>();
  v.sy = j.at("sy").get<double>();
  v.ex = j.at("ex").get<double>();
  v.ey = j.at("ey").get<double>();
  v.th = j.at("th").get<double>();
  v.le = j.at("le").get<double>();
  v.ty = map_type_from_string(j.at("ty").get<std::string>());
  return v;
}

}  // namespace

std::string scenario_to_json(const Scenario& s) {
  ordered_json j;
  j["format"] = "scenario";
  j["version"] = s.version;
  j["name"] = s.name;
  j["template"] = s.template_name;
  j["seed"] = s.seed;
  j["anchor_time"] = s.anchor_time;
  j["horizon"] = s.horizon;
  j["map_elements"] = ordered_json::array();
  for (const MapElement& el : s.map_elements) {
    ordered_json je;
    je["ty"] = to_string(el.ty);
    je["vectors"] = ordered_json::array();
    for (const MapVector& v : el.vectors) je["vectors"].push_back(vector_to_json(v));
    j["map_elements"].push_back(std::move(je));
  }
  j["agents"] = ordered_json::array();
  for (const AgentTrack& a : s.agents) {
    ordered_json ja;
    ja["id"] = a.id;
    ja["ty"] = to_string(a.ty);
    ja["length"] = a.length;
    ja["width"] = a.width;
    ja["states"] = ordered_json::array();
    for (const AgentState& st : a.states) {
      ja["states"].push_back(ordered_json{
          {"x", st.x}, {"y", st.y}, {"heading", st.heading}, {"ts", st.ts}});
    }
    ja["valid"] = ordered_json::array();
    for (bool b : a.valid) ja["valid"].push_back(b);
    j["agents"].push_back(std::move(ja));
  }
  j["interest_ids"] = s.interest_ids;
  return j.dump(1) + "\n";
}

Scenario scenario_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw FormatError(std::string("scenario parse error: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "scenario") {
      throw FormatError("not a scenario file");
    }
    Scenario s;
    s.version = j.at("version").get<int>();
    if (s.version != 1) {
      throw FormatError("unsupported scenario version " +
                        std::to_string(s.version));
    }
    s.name = j.at("name").get<std::string>();
    s.template_name = j.at("template").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.anchor_time = j.at("anchor_time").get<double>();
    s.horizon = j.at("horizon").get<double>();
    for (const auto& je : j.at("map_elements")) {
      MapElement el;
      el.ty = map_type_from_string(je.at("ty").get<std::string>());
      for (const auto& jv : je.at("vectors")) el.vectors.push_back(vector_from_json(jv));
      s.map_elements.push_back(std::move(el));
    }
    for (const auto& ja : j.at("agents")) {
      AgentTrack a;
      a.id = ja.at("id").get<int>();
      a.ty = agent_type_from_string(ja.at("ty").get<std::string>());
      a.length = ja.at("length").get<double>();
      a.width = ja.at("width").get<double>();
      for (const auto& js : ja.at("states")) {
        AgentState st;
        st.x = js.at("x").get<double>();
        st.y = js.at("y").get<double>();
        st.heading = js.at("heading").get<double>();
        st.ts = js.at("ts").get<double>();
        a.states.push_back(st);
      }
      for (const auto& jb : ja.at("valid")) a.valid.push_back(jb.get<bool>());
      s.agents.push_back(std::move(a));
    }
    s.interest_ids = j.at("interest_ids").get<std::vector<int>>();
    validate_scenario(s);
    return s;
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("scenario field error: ") + e.what());
  }
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out << scenario_to_json(s);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

Scenario rigid_transform(const Scenario& s, double angle, const Vec2& shift) {
  Scenario out = s;
  const Pose2 frame{shift.x, shift.y, angle};
  for (MapElement& el : out.map_elements) {
    for (MapVector& v : el.vectors) {
      const Vec2 a = transform_from_frame({v.sx, v.sy}, frame);
      const Vec2 b = transform_from_frame({v.ex, v.ey}, frame);
      v = make_map_vector(a, b, v.ty);
    }
  }
  for (AgentTrack& a : out.agents) {
    for (AgentState& st : a.states) {
      const Vec2 p = transform_from_frame({st.x, st.y}, frame);
      st.x = p.x;
      st.y = p.y;
      st.heading = normalize_angle(st.heading + angle);
    }
  }
  return out;
}

bool any_track_collision(const Scenario& s) {
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    for (std::size_t j = i + 1; j < s.agents.size(); ++j) {
      const AgentTrack& a = s.agents[i];
      const AgentTrack& b = s.agents[j];
      for (std::size_t k = 0; k < a.states.size(); ++k) {
        if (!a.valid[k]) continue;
        if (k >= b.states.size() || !b.valid[k]) continue;
        if (std::abs(a.states[k].ts - b.states[k].ts) > 1e-9) continue;
        if (obb_intersects(a.box_at(k), b.box_at(k))) return true;
      }
    }
  }
  return false;
}

}  // namespace motiongen
