#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "motiongen/common.hpp"
#include "motiongen/geometry.hpp"
#include "motiongen/rng.hpp"
#include "motiongen/scenario.hpp"
#include "motiongen/scenario_gen.hpp"

using namespace motiongen;

namespace {

Scenario tiny_valid_scenario() {
  Scenario s;
  s.name = "tiny";
  s.template_name = "straight";
  s.seed = 1;
  Polyline lane({{-20, 0}, {120, 0}});
  Polyline edge_a({{-20, 5}, {120, 5}});
  Polyline edge_b({{-20, -5}, {120, -5}});
  s.map_elements = segment_map({lane, edge_a, edge_b},
                               {MapType::kLane, MapType::kRoadEdge,
                                MapType::kRoadEdge});
  for (int id = 0; id < 2; ++id) {
    AgentTrack t;
    t.id = id;
    t.ty = AgentType::kVehicle;
    t.length = 4.5;
    t.width = 2.0;
    for (int k = 0; k <= 90; ++k) {
      const double ts = k * 0.1;
      t.states.push_back({10.0 * ts + 20.0 * id, 0.0, 0.0, ts});
      t.valid.push_back(true);
    }
    s.agents.push_back(std::move(t));
    s.interest_ids.push_back(id);
  }
  return s;
}

}  // namespace

TEST_CASE("agent state interpolation is linear with shortest-arc heading") {
  AgentTrack t;
  t.states.push_back({0.0, 0.0, 3.0, 0.0});
  t.states.push_back({1.0, 2.0, -3.0, 0.1});
  t.valid = {true, true};
  const AgentState mid = t.state_at_time(0.05);
  CHECK(mid.x == doctest::Approx(0.5));
  CHECK(mid.y == doctest::Approx(1.0));
  // 3.0 -> -3.0 crosses pi, not zero.
  CHECK(std::abs(mid.heading) == doctest::Approx(kPi).epsilon(1e-6));
  const AgentState at0 = t.state_at_time(0.0);
  CHECK(at0.heading == doctest::Approx(3.0));
}

TEST_CASE("segment_map cuts polylines into bounded equal pieces") {
  // 35 m lane, 10 m cut: 4 pieces of 8.75 m, 9 unit-ish vectors each.
  const Polyline lane({{0, 0}, {35, 0}});
  const auto lane_elems = segment_map({lane}, {MapType::kLane});
  CHECK(lane_elems.size() == 4);
  double total = 0.0;
  for (const auto& e : lane_elems) {
    CHECK(e.ty == MapType::kLane);
    CHECK(e.vectors.size() == 9);
    double piece = 0.0;
    for (const auto& v : e.vectors) piece += v.le;
    CHECK(piece == doctest::Approx(8.75));
    total += piece;
    // Vectors chain head to tail.
    for (std::size_t i = 1; i < e.vectors.size(); ++i) {
      CHECK(e.vectors[i].sx == doctest::Approx(e.vectors[i - 1].ex));
      CHECK(e.vectors[i].sy == doctest::Approx(e.vectors[i - 1].ey));
    }
  }
  CHECK(total == doctest::Approx(35.0));

  // Edges use the longer 20 m cut.
  const Polyline edge({{0, 0}, {50, 0}});
  const auto edge_elems = segment_map({edge}, {MapType::kRoadEdge});
  CHECK(edge_elems.size() == 3);

  // An exact multiple of the cut does not grow an extra piece.
  const Polyline exact({{0, 0}, {30, 0}});
  CHECK(segment_map({exact}, {MapType::kLane}).size() == 3);

  // An L-bend keeps arc lengths, not chord lengths.
  const Polyline bend({{0, 0}, {6, 0}, {6, 6}});
  const auto bend_elems = segment_map({bend}, {MapType::kLane});
  double bend_total = 0.0;
  for (const auto& e : bend_elems) {
    for (const auto& v : e.vectors) bend_total += v.le;
  }
  CHECK(bend_total == doctest::Approx(12.0));
}

TEST_CASE("scenario json round-trips byte for byte") {
  const Scenario s = tiny_valid_scenario();
  const std::string a = scenario_to_json(s);
  const Scenario back = scenario_from_json(a);
  const std::string b = scenario_to_json(back);
  CHECK(a == b);
  CHECK(back.agents.size() == s.agents.size());
  CHECK(back.interest_ids == s.interest_ids);
  CHECK(back.map_elements.size() == s.map_elements.size());
  CHECK(back.agents[1].states[37].x ==
        doctest::Approx(s.agents[1].states[37].x).epsilon(1e-15));
}

TEST_CASE("scenario validation rejects structural violations") {
  SUBCASE("interest count") {
    Scenario s = tiny_valid_scenario();
    s.interest_ids = {0};
    CHECK_THROWS_WITH_AS(validate_scenario(s),
                         doctest::Contains("interest count"), FormatError);
  }
  SUBCASE("unknown interest id") {
    Scenario s = tiny_valid_scenario();
    s.interest_ids = {0, 99};
    CHECK_THROWS_AS(validate_scenario(s), FormatError);
  }
  SUBCASE("non-monotone timestamps") {
    Scenario s = tiny_valid_scenario();
    std::swap(s.agents[0].states[3].ts, s.agents[0].states[4].ts);
    CHECK_THROWS_WITH_AS(validate_scenario(s),
                         doctest::Contains("non-monotone"), FormatError);
  }
  SUBCASE("non-finite state") {
    Scenario s = tiny_valid_scenario();
    s.agents[0].states[5].x = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(validate_scenario(s), FormatError);
  }
  SUBCASE("bad footprint") {
    Scenario s = tiny_valid_scenario();
    s.agents[0].length = 0.0;
    CHECK_THROWS_AS(validate_scenario(s), FormatError);
  }
}

TEST_CASE("scenario file io raises typed errors") {
  CHECK_THROWS_AS(load_scenario("/nonexistent/nope.json"), IoError);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "motiongen_test_io";
  fs::create_directories(dir);
  const fs::path bad = dir / "bad.json";
  {
    FILE* f = std::fopen(bad.string().c_str(), "w");
    std::fputs("{ definitely not json", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_scenario(bad.string()), FormatError);

  const fs::path good = dir / "good.json";
  const Scenario s = tiny_valid_scenario();
  save_scenario(s, good.string());
  const Scenario loaded = load_scenario(good.string());
  CHECK(scenario_to_json(loaded) == scenario_to_json(s));
  fs::remove_all(dir);
}

TEST_CASE("rigid transforms preserve structure") {
  const Scenario s = tiny_valid_scenario();
  const Scenario moved = rigid_transform(s, 0.8, {12.0, -7.0});
  validate_scenario(moved);
  // Pairwise distances survive.
  const Vec2 d0{s.agents[0].states[10].x - s.agents[1].states[10].x,
                s.agents[0].states[10].y - s.agents[1].states[10].y};
  const Vec2 d1{moved.agents[0].states[10].x - moved.agents[1].states[10].x,
                moved.agents[0].states[10].y - moved.agents[1].states[10].y};
  CHECK(d0.norm() == doctest::Approx(d1.norm()).epsilon(1e-10));
  // Headings shift by the rotation angle.
  CHECK(normalize_angle(moved.agents[0].states[0].heading -
                        s.agents[0].states[0].heading) ==
        doctest::Approx(0.8));
  // Map arc lengths survive.
  double before = 0.0, after = 0.0;
  for (const auto& e : s.map_elements) {
    for (const auto& v : e.vectors) before += v.le;
  }
  for (const auto& e : moved.map_elements) {
    for (const auto& v : e.vectors) after += v.le;
  }
  CHECK(before == doctest::Approx(after).epsilon(1e-9));
  CHECK(any_track_collision(moved) == any_track_collision(s));
}

TEST_CASE("template registry") {
  const auto all = scenario_templates();
  CHECK(all == std::vector<std::string>{"straight", "curve", "intersection",
                                        "merge"});
  const auto hazard = hazard_templates();
  CHECK(hazard == std::vector<std::string>{"intersection", "merge"});
  CHECK(is_hazard_template("merge"));
  CHECK_FALSE(is_hazard_template("straight"));
  CHECK_THROWS_AS(generate_scenario("roundabout", 1), InvalidArgument);
}

TEST_CASE("generated scenarios are deterministic, valid, and clean") {
  for (const std::string& tmpl : scenario_templates()) {
    CAPTURE(tmpl);
    std::set<std::string> distinct;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      CAPTURE(seed);
      const Scenario s = generate_scenario(tmpl, seed);
      validate_scenario(s);
      CHECK(s.template_name == tmpl);
      CHECK_FALSE(any_track_collision(s));
      CHECK(s.interest_ids.size() >= 2);
      CHECK(s.interest_ids.size() <= 8);
      for (const auto& t : s.agents) {
        CHECK(t.valid_over(0.0, 9.0));
      }
      distinct.insert(scenario_to_json(s));
    }
    // Seeds actually vary the scene.
    CHECK(distinct.size() == 25);
    // Same seed, same bytes.
    CHECK(scenario_to_json(generate_scenario(tmpl, 3)) ==
          scenario_to_json(generate_scenario(tmpl, 3)));
  }
}

TEST_CASE("hazard templates stage conflicts that stay safe in ground truth") {
  for (const std::string& tmpl : hazard_templates()) {
    CAPTURE(tmpl);
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
      const Scenario s = generate_scenario(tmpl, seed);
      CHECK_FALSE(any_track_collision(s));
      // Interest agents approach each other meaningfully at some point.
      double min_gap = 1e18;
      const auto& a = s.agent_by_id(s.interest_ids[0]);
      const auto& b = s.agent_by_id(s.interest_ids[1]);
      for (std::size_t i = 0; i < a.states.size(); ++i) {
        const Vec2 d{a.states[i].x - b.states[i].x,
                     a.states[i].y - b.states[i].y};
        min_gap = std::min(min_gap, d.norm());
      }
      CHECK(min_gap < 30.0);
    }
  }
}
