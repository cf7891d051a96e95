#include <benchmark/benchmark.h>

#include "motiongen/geometry.hpp"
#include "motiongen/rng.hpp"

namespace {

using namespace motiongen;

std::vector<OrientedBox> random_boxes(int n) {
  Rng rng(7);
  std::vector<OrientedBox> boxes;
  boxes.reserve(n);
  for (int i = 0; i < n; ++i) {
    boxes.push_back({{rng.uniform(-30, 30), rng.uniform(-30, 30),
                      rng.uniform(-kPi, kPi)},
                     rng.uniform(2.0, 6.0),
                     rng.uniform(1.0, 2.5)});
  }
  return boxes;
}

void bm_obb_intersects(benchmark::State& state) {
  const auto boxes = random_boxes(256);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& a = boxes[i % boxes.size()];
    const auto& b = boxes[(i * 7 + 3) % boxes.size()];
    benchmark::DoNotOptimize(obb_intersects(a, b));
    ++i;
  }
}
BENCHMARK(bm_obb_intersects);

void bm_point_polyline_distance(benchmark::State& state) {
  Rng rng(11);
  std::vector<Vec2> pts;
  for (int i = 0; i < 200; ++i) {
    pts.push_back({i * 1.0, std::sin(i * 0.1) * 5.0});
  }
  Polyline line(pts);
  double x = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        point_polyline_distance({rng.uniform(0, 200), rng.uniform(-10, 10)},
                                line));
    benchmark::DoNotOptimize(x);
  }
}
BENCHMARK(bm_point_polyline_distance);

}  // namespace
