#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace motiongen {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  Vec2 rotated(double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
};

// Normalizes to (-pi, pi]. Idempotent: values already in range map to
// themselves exactly.
double normalize_angle(double a);

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, normalized to (-pi, pi]

  Vec2 position() const { return {x, y}; }
};

// Expresses a world point in the local frame of `frame`.
Vec2 transform_to_frame(const Vec2& point, const Pose2& frame);
// Inverse of transform_to_frame: local point back to world coordinates.
Vec2 transform_from_frame(const Vec2& point, const Pose2& frame);
// Composes a pose with a frame change; heading stays normalized.
Pose2 pose_to_frame(const Pose2& pose, const Pose2& frame);
Pose2 pose_from_frame(const Pose2& pose, const Pose2& frame);

// Axis-aligned footprint of `length` along the pose heading, `width` across.
struct OrientedBox {
  Pose2 center;
  double length = 0.0;
  double width = 0.0;

  std::array<Vec2, 4> corners() const;
};

// Separating-axis test over the four edge normals of the two boxes.
// Touching boundaries count as intersecting (boxes are closed sets).
bool obb_intersects(const OrientedBox& a, const OrientedBox& b);

struct Polyline {
  std::vector<Vec2> points;

  // Requires >= 2 points, consecutive points distinct.
  explicit Polyline(std::vector<Vec2> pts);
  Polyline() = default;

  double arc_length() const;
};

// Closed-segment intersection; collinear overlaps and shared endpoints count.
bool segments_intersect(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                        const Vec2& b1);

// True if segment [a, b] intersects any segment of the polyline.
bool segment_crosses_polyline(const Vec2& a, const Vec2& b,
                              const Polyline& line);

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);
double point_polyline_distance(const Vec2& p, const Polyline& line);

}  // namespace motiongen
