#include "motiongen/scenario_gen.hpp"

#include <algorithm>
#include <cmath>

#include "motiongen/common.hpp"
#include "motiongen/rng.hpp"

namespace motiongen {
namespace {

constexpr double kDt = 0.1;        // native track rate
constexpr double kDuration = 9.0;  // seconds, anchor at 1.0 + 8.0 future
constexpr int kSteps = 91;         // t = 0.0 .. 9.0 inclusive
constexpr double kLaneWidth = 3.6;
constexpr double kAccelMax = 2.5;  // keeps Verlet bin differences in range

// Piecewise line/arc path with exact tangent headings.
struct PathSeg {
  bool is_arc = false;
  Vec2 a, b;    // line endpoints
  Vec2 center;  // arc
  double r = 0.0, ang0 = 0.0, dang = 0.0;
  double len = 0.0;
};

struct Path {
  std::vector<PathSeg> segs;
  std::vector<double> cum;  // cumulative length after each segment

  double length() const { return cum.empty() ? 0.0 : cum.back(); }

  Pose2 pose_at(double s) const {
    s = std::clamp(s, 0.0, length());
    std::size_t i = 0;
    while (i + 1 < segs.size() && s > cum[i]) ++i;
    const double s0 = i == 0 ? 0.0 : cum[i - 1];
    const PathSeg& seg = segs[i];
    const double u = seg.len > 0.0 ? std::clamp((s - s0) / seg.len, 0.0, 1.0) : 0.0;
    if (!seg.is_arc) {
      const Vec2 p = seg.a + (seg.b - seg.a) * u;
      const double h = std::atan2(seg.b.y - seg.a.y, seg.b.x - seg.a.x);
      return {p.x, p.y, h};
    }
    const double ang = seg.ang0 + seg.dang * u;
    const Vec2 p = seg.center + Vec2{std::cos(ang), std::sin(ang)} * seg.r;
    const double h = normalize_angle(ang + (seg.dang >= 0.0 ? kPi / 2 : -kPi / 2));
    return {p.x, p.y, h};
  }
};

void append_line(Path& p, const Vec2& a, const Vec2& b) {
  PathSeg s;
  s.a = a;
  s.b = b;
  s.len = (b - a).norm();
  p.cum.push_back(p.length() + s.len);
  p.segs.push_back(s);
}

void append_arc(Path& p, const Vec2& center, double r, double ang0,
                double dang) {
  PathSeg s;
  s.is_arc = true;
  s.center = center;
  s.r = r;
  s.ang0 = ang0;
  s.dang = dang;
  s.len = std::abs(dang) * r;
  p.cum.push_back(p.length() + s.len);
  p.segs.push_back(s);
}

Path line_path(const Vec2& a, const Vec2& b) {
  Path p;
  append_line(p, a, b);
  return p;
}

// Arc with straight tails tangent at both ends, so movers never run off the
// parameterization within the 9 s window.
Path arc_with_tails(const Vec2& center, double r, double ang0, double span,
                    double tail) {
  const Vec2 p0 = center + Vec2{std::cos(ang0), std::sin(ang0)} * r;
  const Vec2 p1 = center + Vec2{std::cos(ang0 + span), std::sin(ang0 + span)} * r;
  const double h0 = ang0 + (span >= 0.0 ? kPi / 2 : -kPi / 2);
  const double h1 = ang0 + span + (span >= 0.0 ? kPi / 2 : -kPi / 2);
  Path p;
  append_line(p, p0 - Vec2{std::cos(h0), std::sin(h0)} * tail, p0);
  append_arc(p, center, r, ang0, span);
  append_line(p, p1, p1 + Vec2{std::cos(h1), std::sin(h1)} * tail);
  return p;
}

std::vector<Vec2> sample_path_points(const Path& p, double step) {
  std::vector<Vec2> pts;
  const int n = std::max(2, (int)std::ceil(p.length() / step) + 1);
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Pose2 q = p.pose_at(p.length() * i / (n - 1));
    pts.push_back({q.x, q.y});
  }
  return pts;
}

// Longitudinal plan simulated at 10 Hz. `hold_s` is a stop point honored
// until `release_t`; `leader` keeps a same-path following gap.
struct Mover {
  Path path;
  double s = 0.0;
  double v = 0.0;
  double cruise = 8.0;
  double cruise2 = 8.0;  // cruise after cruise_switch_t
  double cruise_switch_t = 1e9;
  double hold_s = 1e18;
  double release_t = 0.0;
  int leader = -1;  // index into the mover list, same path family
  double follow_gap = 10.0;
  AgentType ty = AgentType::kVehicle;
  bool interest = true;

  std::vector<double> s_hist, v_hist;
};

void simulate(std::vector<Mover>& movers) {
  for (Mover& m : movers) {
    m.s_hist.assign(kSteps, 0.0);
    m.v_hist.assign(kSteps, 0.0);
    m.s_hist[0] = m.s;
    m.v_hist[0] = m.v;
  }
  std::vector<double> s_now(movers.size()), v_now(movers.size());
  for (std::size_t i = 0; i < movers.size(); ++i) {
    s_now[i] = movers[i].s;
    v_now[i] = movers[i].v;
  }
  for (int k = 1; k < kSteps; ++k) {
    const double t = k * kDt;
    for (std::size_t i = 0; i < movers.size(); ++i) {
      Mover& m = movers[i];
      double v_des = t < m.cruise_switch_t ? m.cruise : m.cruise2;
      if (t < m.release_t) {
        // Smooth braking envelope toward a standstill 0.5 m before hold_s.
        const double d = m.hold_s - 0.5 - s_now[i];
        const double env = d > 0.0 ? std::sqrt(2.0 * 1.8 * d) : 0.0;
        v_des = std::min(v_des, env);
      }
      if (m.leader >= 0) {
        const double gap = movers[m.leader].s_hist[k - 1] - s_now[i] - m.follow_gap;
        v_des = std::min(v_des,
                         std::max(0.0, movers[m.leader].v_hist[k - 1] + 0.5 * gap));
      }
      const double a = std::clamp((v_des - v_now[i]) / 0.6, -kAccelMax, kAccelMax);
      v_now[i] = std::max(0.0, v_now[i] + a * kDt);
      s_now[i] += v_now[i] * kDt;
      m.s_hist[k] = s_now[i];
      m.v_hist[k] = v_now[i];
    }
  }
}

// First time the mover's rear bumper (center minus 2.4 m) is past `s_point`
// along its own path; kDuration if it never clears.
double clear_time(const Mover& m, double s_point) {
  for (int k = 0; k < kSteps; ++k) {
    if (m.s_hist[k] - 2.4 > s_point) return k * kDt;
  }
  return kDuration;
}

struct Layout {
  std::vector<Polyline> lines;
  std::vector<MapType> types;
  std::vector<Mover> movers;
  // (mover index, clear arc) of through traffic that yielders wait for.
  std::vector<std::pair<int, double>> through_clear;
};

void add_edge(Layout& lay, std::vector<Vec2> pts) {
  lay.lines.emplace_back(std::move(pts));
  lay.types.push_back(MapType::kRoadEdge);
}

void add_lane_line(Layout& lay, std::vector<Vec2> pts) {
  lay.lines.emplace_back(std::move(pts));
  lay.types.push_back(MapType::kLane);
}

// ---------------------------------------------------------------------------
// Templates. Geometry is laid out in a canonical frame, then the whole
// scenario is rotated and translated by a seeded rigid transform so
// coordinates carry no accidental alignment with the axes.

Layout build_straight(Rng& rng) {
  Layout lay;
  const double road_len = 190.0;
  const int n_lanes = 2 + (int)rng.uniform_int(0, 1);
  const double half = n_lanes * kLaneWidth / 2.0 + 0.6;
  const double x0 = -road_len / 2.0, x1 = road_len / 2.0;

  for (int l = 0; l < n_lanes; ++l) {
    const double y = -n_lanes * kLaneWidth / 2.0 + kLaneWidth * (l + 0.5);
    add_lane_line(lay, {{x0, y}, {x1, y}});
  }
  add_edge(lay, {{x0, -half}, {x1, -half}});
  add_edge(lay, {{x0, half}, {x1, half}});

  const int n_cars = 3 + (int)rng.uniform_int(0, 2);
  std::vector<int> lane_front(n_lanes, -1);
  for (int c = 0; c < n_cars; ++c) {
    const int lane = (int)rng.uniform_int(0, n_lanes - 1);
    const double y = -n_lanes * kLaneWidth / 2.0 + kLaneWidth * (lane + 0.5);
    Mover m;
    m.path = line_path({x0, y}, {x1, y});
    m.cruise = rng.uniform(6.0, 12.5);
    m.cruise2 = std::max(1.5, m.cruise + rng.uniform(-3.5, 3.5));
    m.cruise_switch_t = rng.uniform(2.0, 6.0);
    m.v = m.cruise * rng.uniform(0.85, 1.0);
    if (lane_front[lane] >= 0) {
      m.leader = lane_front[lane];
      m.s = std::max(0.0, lay.movers[m.leader].s - rng.uniform(22.0, 34.0));
      m.follow_gap = rng.uniform(10.0, 14.0);
    } else {
      m.s = rng.uniform(30.0, 60.0);
    }
    lane_front[lane] = (int)lay.movers.size();
    lay.movers.push_back(std::move(m));
  }
  if (rng.bernoulli(0.5)) {
    // Pedestrian on the sidewalk, context only.
    Mover ped;
    const double y = half + 1.2;
    ped.path = line_path({x0, y}, {x1, y});
    ped.s = rng.uniform(60.0, 120.0);
    ped.v = ped.cruise = ped.cruise2 = rng.uniform(1.0, 1.5);
    ped.ty = AgentType::kPedestrian;
    ped.interest = false;
    lay.movers.push_back(std::move(ped));
  }
  return lay;
}

Layout build_curve(Rng& rng) {
  Layout lay;
  const double R = rng.uniform(38.0, 65.0);
  const Vec2 C{0.0, R};
  const double span = rng.uniform(1.5, 2.1);  // radians of arc
  const double ang0 = -kPi / 2 - span / 2;
  const double tail = 48.0;
  const int n_lanes = 2;
  const double half = n_lanes * kLaneWidth / 2.0 + 0.6;

  std::vector<Path> lane_paths;
  for (int l = 0; l < n_lanes; ++l) {
    const double r = R - n_lanes * kLaneWidth / 2.0 + kLaneWidth * (l + 0.5);
    lane_paths.push_back(arc_with_tails(C, r, ang0, span, tail));
    add_lane_line(lay, sample_path_points(lane_paths.back(), 2.0));
  }
  add_edge(lay, sample_path_points(arc_with_tails(C, R - half, ang0, span, tail), 2.0));
  add_edge(lay, sample_path_points(arc_with_tails(C, R + half, ang0, span, tail), 2.0));

  const int n_cars = 3 + (int)rng.uniform_int(0, 1);
  std::vector<int> lane_front(n_lanes, -1);
  for (int c = 0; c < n_cars; ++c) {
    const int lane = (int)rng.uniform_int(0, n_lanes - 1);
    const double r = R - n_lanes * kLaneWidth / 2.0 + kLaneWidth * (lane + 0.5);
    Mover m;
    m.path = lane_paths[lane];
    const double vmax = std::min(9.5, std::sqrt(1.9 * r));
    m.cruise = m.cruise2 = rng.uniform(4.5, vmax);
    m.v = m.cruise * rng.uniform(0.9, 1.0);
    if (lane_front[lane] >= 0) {
      m.leader = lane_front[lane];
      m.s = std::max(0.0, lay.movers[m.leader].s - rng.uniform(20.0, 30.0));
    } else {
      m.s = rng.uniform(14.0, 34.0);
    }
    lane_front[lane] = (int)lay.movers.size();
    lay.movers.push_back(std::move(m));
  }
  return lay;
}

// Two perpendicular two-way roads. Crossing movers enter the junction in a
// scripted order with a seeded time margin, so ground truth is safe but
// tight enough that sampled rollouts can violate it.
Layout build_intersection(Rng& rng) {
  Layout lay;
  const double L = 95.0;
  const double W = kLaneWidth + 0.6;  // junction half width 4.2

  add_lane_line(lay, {{-L, -1.8}, {L, -1.8}});  // eastbound
  add_lane_line(lay, {{L, 1.8}, {-L, 1.8}});    // westbound
  add_lane_line(lay, {{1.8, -L}, {1.8, L}});    // northbound
  add_lane_line(lay, {{-1.8, L}, {-1.8, -L}});  // southbound
  // Road edges stop at the junction opening.
  add_edge(lay, {{-L, -W}, {-W, -W}});
  add_edge(lay, {{W, -W}, {L, -W}});
  add_edge(lay, {{-L, W}, {-W, W}});
  add_edge(lay, {{W, W}, {L, W}});
  add_edge(lay, {{-W, -L}, {-W, -W}});
  add_edge(lay, {{-W, W}, {-W, L}});
  add_edge(lay, {{W, -L}, {W, -W}});
  add_edge(lay, {{W, W}, {W, L}});

  // A: eastbound through traffic at fixed cruise; its front reaches the
  // junction at roughly t_conflict.
  Mover a;
  a.path = line_path({-L, -1.8}, {L, -1.8});
  a.cruise = a.cruise2 = rng.uniform(7.5, 11.0);
  a.v = a.cruise;
  const double t_conflict = rng.uniform(2.6, 4.4);
  a.s = std::max(5.0, (L - W - 2.25) - a.cruise * t_conflict);
  lay.through_clear.push_back({0, L + W});
  lay.movers.push_back(a);

  // B: crossing traffic that yields until the junction is clear.
  Mover b;
  const bool left_turn = rng.bernoulli(0.4);
  if (left_turn) {
    // Northbound, then left onto the westbound lane: quarter arc centered at
    // the (-W, -W) corner, radius W + 1.8.
    Path p = line_path({1.8, -L}, {1.8, -W});
    append_arc(p, {-W, -W}, W + 1.8, 0.0, kPi / 2);
    append_line(p, {-W, 1.8}, {-L, 1.8});
    b.path = std::move(p);
  } else {
    b.path = line_path({1.8, -L}, {1.8, L});
  }
  b.cruise = b.cruise2 = rng.uniform(5.5, 8.5);
  b.v = b.cruise * rng.uniform(0.8, 1.0);
  // Hold the front bumper (2.25 m ahead of center) short of the junction
  // line, and start far enough back that the braking envelope is reachable
  // from cruise (v^2 / (2*1.5) plus slack).
  b.hold_s = (L - W) - 2.25;
  b.s = std::max(5.0,
                 b.hold_s - b.cruise * b.cruise / 3.0 - rng.uniform(4.0, 12.0));
  b.release_t = 1e9;  // resolved against through traffic after simulation
  lay.movers.push_back(std::move(b));

  if (rng.bernoulli(0.55)) {
    // C: follows A eastbound; B must wait for it as well.
    Mover c;
    c.path = line_path({-L, -1.8}, {L, -1.8});
    c.cruise = c.cruise2 = a.cruise * rng.uniform(0.85, 1.05);
    c.v = c.cruise;
    c.leader = 0;
    c.s = std::max(2.0, a.s - rng.uniform(24.0, 36.0));
    c.follow_gap = rng.uniform(10.0, 14.0);
    lay.through_clear.push_back({(int)lay.movers.size(), L + W});
    lay.movers.push_back(std::move(c));
  } else {
    // C: westbound through traffic; B crosses its lane too.
    Mover c;
    c.path = line_path({L, 1.8}, {-L, 1.8});
    c.cruise = c.cruise2 = rng.uniform(7.0, 10.0);
    c.v = c.cruise;
    c.s = rng.uniform(20.0, 55.0);
    lay.through_clear.push_back({(int)lay.movers.size(), L + W});
    lay.movers.push_back(std::move(c));
  }
  if (rng.bernoulli(0.4)) {
    // Stationary vehicle parked on the shoulder, context only.
    Mover parked;
    const double y = -W - 1.6;
    parked.path = line_path({-L, y}, {L, y});
    parked.s = rng.uniform(30.0, 70.0);
    parked.v = parked.cruise = parked.cruise2 = 0.0;
    parked.interest = false;
    lay.movers.push_back(std::move(parked));
  }
  return lay;
}

Layout build_merge(Rng& rng) {
  Layout lay;
  const double x0 = -110.0, x1 = 90.0;
  const double y_lane = -1.8;
  const double half = kLaneWidth + 0.6;  // 4.2

  add_lane_line(lay, {{x0, y_lane}, {x1, y_lane}});
  add_lane_line(lay, {{x0, 1.8}, {x1, 1.8}});
  add_edge(lay, {{x0, half}, {x1, half}});

  // Ramp joins the right lane at x = 0 via a blend arc (right turn that
  // flattens the ramp heading to zero). Arc center sits below the join.
  const double theta = rng.uniform(0.22, 0.32);
  const double blend_r = 45.0;
  const Vec2 join{0.0, y_lane};
  const Vec2 blend_start{-blend_r * std::sin(theta),
                         y_lane - blend_r * (1.0 - std::cos(theta))};
  const double ramp_len = 85.0;
  const Vec2 ramp_dir{std::cos(theta), std::sin(theta)};
  const Vec2 ramp_start = blend_start - ramp_dir * ramp_len;

  Path ramp = line_path(ramp_start, blend_start);
  append_arc(ramp, {0.0, y_lane - blend_r}, blend_r, kPi / 2 + theta, -theta);
  append_line(ramp, join, {x1, y_lane});
  add_lane_line(lay, sample_path_points(ramp, 2.0));

  // Ramp edges offset 2.1 m either side, ending where they cross the main
  // road's bottom edge level; the bottom edge opens between those crossings.
  const Vec2 right_n{std::sin(theta), -std::cos(theta)};
  const Vec2 e_right0 = ramp_start + right_n * 2.1;
  const Vec2 e_left0 = ramp_start - right_n * 2.1;
  const double t_right = (-half - e_right0.y) / ramp_dir.y;
  const double t_left = (-half - e_left0.y) / ramp_dir.y;
  const Vec2 e_right1 = e_right0 + ramp_dir * t_right;
  const Vec2 e_left1 = e_left0 + ramp_dir * t_left;
  add_edge(lay, {e_right0, e_right1});
  add_edge(lay, {e_left0, e_left1});
  add_edge(lay, {{x0, -half}, e_left1});
  add_edge(lay, {e_right1, {x1, -half}});

  // M: main-road vehicle in the merge lane, constant cruise.
  Mover m;
  m.path = line_path({x0, y_lane}, {x1, y_lane});
  m.cruise = m.cruise2 = rng.uniform(8.0, 12.0);
  m.v = m.cruise;
  const double t_join = rng.uniform(2.8, 4.6);
  m.s = std::max(8.0, -x0 - m.cruise * t_join);
  lay.through_clear.push_back({0, -x0 + 6.0});
  lay.movers.push_back(m);

  // R: ramp vehicle, yields until M clears the mouth. The shallow blend arc
  // flattens slowly, so the hold point sits 18 m short of the join to keep
  // the whole footprint below the main lane while waiting.
  Mover r;
  const double s_join = ramp_len + blend_r * theta;
  r.path = std::move(ramp);
  r.cruise = r.cruise2 = rng.uniform(6.0, 9.0);
  r.v = r.cruise * rng.uniform(0.8, 1.0);
  r.hold_s = s_join - 18.0;
  r.s = std::max(4.0,
                 r.hold_s - r.cruise * r.cruise / 3.0 - rng.uniform(4.0, 12.0));
  r.release_t = 1e9;
  lay.movers.push_back(std::move(r));

  // M2: second main-road vehicle in the left lane.
  if (rng.bernoulli(0.7)) {
    Mover m2;
    m2.path = line_path({x0, 1.8}, {x1, 1.8});
    m2.cruise = m2.cruise2 = rng.uniform(8.0, 12.5);
    m2.v = m2.cruise;
    m2.s = rng.uniform(15.0, 70.0);
    lay.movers.push_back(std::move(m2));
  }
  return lay;
}

// Resolves scripted yields: movers with an unresolved release wait until all
// through traffic has cleared, plus a seeded margin.
void resolve_yields(Layout& lay, Rng& rng) {
  simulate(lay.movers);
  for (Mover& m : lay.movers) {
    if (m.release_t < 1e8) continue;
    double t_rel = 0.0;
    for (const auto& [idx, arc] : lay.through_clear) {
      t_rel = std::max(t_rel, clear_time(lay.movers[idx], arc));
    }
    m.release_t = t_rel + rng.uniform(0.35, 0.9);
  }
  simulate(lay.movers);
}

AgentTrack track_from_mover(const Mover& m, int id) {
  AgentTrack tr;
  tr.id = id;
  tr.ty = m.ty;
  default_footprint(m.ty, &tr.length, &tr.width);
  tr.states.reserve(kSteps);
  for (int k = 0; k < kSteps; ++k) {
    const Pose2 p = m.path.pose_at(m.s_hist[k]);
    tr.states.push_back({p.x, p.y, p.heading, k * kDt});
  }
  tr.valid.assign(kSteps, true);
  return tr;
}

Scenario assemble(Layout& lay, const std::string& template_name,
                  std::uint64_t seed, Rng& rng) {
  Scenario s;
  s.template_name = template_name;
  s.seed = seed;
  s.anchor_time = 1.0;
  s.horizon = 8.0;
  s.map_elements = segment_map(lay.lines, lay.types);

  int id = 0;
  for (const Mover& m : lay.movers) {
    s.agents.push_back(track_from_mover(m, id));
    if (m.interest) s.interest_ids.push_back(id);
    ++id;
  }
  const double ang = rng.uniform(-kPi, kPi);
  const Vec2 shift{rng.uniform(-60.0, 60.0), rng.uniform(-60.0, 60.0)};
  return rigid_transform(s, ang, shift);
}

bool offroad_in_gt(const Scenario& s) {
  const auto edges = s.road_edges();
  for (int id : s.interest_ids) {
    const AgentTrack& a = s.agent_by_id(id);
    for (std::size_t k = 1; k < a.states.size(); ++k) {
      const auto pc = OrientedBox{a.states[k - 1].pose(), a.length, a.width}.corners();
      const auto cc = OrientedBox{a.states[k].pose(), a.length, a.width}.corners();
      for (int c = 0; c < 4; ++c) {
        for (const Polyline& e : edges) {
          if (segment_crosses_polyline(pc[c], cc[c], e)) return true;
        }
      }
    }
  }
  return false;
}

Scenario generate_once(const std::string& template_name, std::uint64_t seed,
                       std::uint64_t attempt_seed) {
  Rng rng(attempt_seed);
  Layout lay;
  if (template_name == "straight") {
    lay = build_straight(rng);
  } else if (template_name == "curve") {
    lay = build_curve(rng);
  } else if (template_name == "intersection") {
    lay = build_intersection(rng);
  } else if (template_name == "merge") {
    lay = build_merge(rng);
  } else {
    throw InvalidArgument("unknown template: " + template_name);
  }
  resolve_yields(lay, rng);
  return assemble(lay, template_name, seed, rng);
}

}  // namespace

std::vector<std::string> scenario_templates() {
  return {"straight", "curve", "intersection", "merge"};
}

std::vector<std::string> hazard_templates() {
  return {"intersection", "merge"};
}

bool is_hazard_template(const std::string& name) {
  const auto h = hazard_templates();
  return std::find(h.begin(), h.end(), name) != h.end();
}

Scenario generate_scenario(const std::string& template_name,
                           std::uint64_t seed) {
  const std::uint64_t root = derive_seed(seed, "scenario:" + template_name);
  int collisions = 0, offroad = 0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Scenario s =
        generate_once(template_name, seed, derive_seed(root, (std::uint64_t)attempt));
    s.name = template_name + "_" + std::to_string(seed);
    if (any_track_collision(s)) {
      ++collisions;
      continue;
    }
    if (offroad_in_gt(s)) {
      ++offroad;
      continue;
    }
    validate_scenario(s);
    return s;
  }
  throw Error("could not produce a clean scenario for template " +
              template_name + ", seed " + std::to_string(seed) + " (" +
              std::to_string(collisions) + " collision rejects, " +
              std::to_string(offroad) + " offroad rejects)");
}

}  // namespace motiongen
