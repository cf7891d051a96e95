#include "motiongen/geometry.hpp"

#include <algorithm>

#include "motiongen/common.hpp"

namespace motiongen {

double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r = kPi;
  return r;
}

Vec2 transform_to_frame(const Vec2& point, const Pose2& frame) {
  return (point - frame.position()).rotated(-frame.heading);
}

Vec2 transform_from_frame(const Vec2& point, const Pose2& frame) {
  return point.rotated(frame.heading) + frame.position();
}

Pose2 pose_to_frame(const Pose2& pose, const Pose2& frame) {
  const Vec2 p = transform_to_frame(pose.position(), frame);
  return {p.x, p.y, normalize_angle(pose.heading - frame.heading)};
}

Pose2 pose_from_frame(const Pose2& pose, const Pose2& frame) {
  const Vec2 p = transform_from_frame(pose.position(), frame);
  return {p.x, p.y, normalize_angle(pose.heading + frame.heading)};
}

std::array<Vec2, 4> OrientedBox::corners() const {
  const double hl = 0.5 * length, hw = 0.5 * width;
  const Vec2 fwd = Vec2{1.0, 0.0}.rotated(center.heading);
  const Vec2 left = Vec2{0.0, 1.0}.rotated(center.heading);
  const Vec2 c = center.position();
  return {
      c + fwd * hl + left * hw,
      c + fwd * hl - left * hw,
      c - fwd * hl - left * hw,
      c - fwd * hl + left * hw,
  };
}

namespace {

// Projects box corners onto `axis` and returns the covered interval.
std::pair<double, double> project(const std::array<Vec2, 4>& corners,
                                  const Vec2& axis) {
  double lo = corners[0].dot(axis), hi = lo;
  for (int i = 1; i < 4; ++i) {
    const double v = corners[i].dot(axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

}  // namespace

bool obb_intersects(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes = {
      Vec2{1.0, 0.0}.rotated(a.center.heading),
      Vec2{0.0, 1.0}.rotated(a.center.heading),
      Vec2{1.0, 0.0}.rotated(b.center.heading),
      Vec2{0.0, 1.0}.rotated(b.center.heading),
  };
  for (const Vec2& axis : axes) {
    const auto [alo, ahi] = project(ca, axis);
    const auto [blo, bhi] = project(cb, axis);
    // Strict gap required to separate: touching intervals still intersect.
    if (ahi < blo || bhi < alo) return false;
  }
  return true;
}

Polyline::Polyline(std::vector<Vec2> pts) : points(std::move(pts)) {
  if (points.size() < 2) {
    throw InvalidArgument("polyline needs at least 2 points");
  }
  for (std::size_t i = 1; i < points.size(); ++i) {
    if ((points[i] - points[i - 1]).norm() == 0.0) {
      throw InvalidArgument("polyline has duplicate consecutive points");
    }
  }
}

double Polyline::arc_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    len += (points[i] - points[i - 1]).norm();
  }
  return len;
}

namespace {

int orientation_sign(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double v = (b - a).cross(c - a);
  if (v > 0.0) return 1;
  if (v < 0.0) return -1;
  return 0;
}

// Assumes a, b, c collinear: is c within the closed bounding box of [a, b]?
bool on_segment(const Vec2& a, const Vec2& b, const Vec2& c) {
  return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= c.y && c.y <= std::max(a.y, b.y);
}

}  // namespace

bool segments_intersect(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                        const Vec2& b1) {
  const int o1 = orientation_sign(a0, a1, b0);
  const int o2 = orientation_sign(a0, a1, b1);
  const int o3 = orientation_sign(b0, b1, a0);
  const int o4 = orientation_sign(b0, b1, a1);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a0, a1, b0)) return true;
  if (o2 == 0 && on_segment(a0, a1, b1)) return true;
  if (o3 == 0 && on_segment(b0, b1, a0)) return true;
  if (o4 == 0 && on_segment(b0, b1, a1)) return true;
  return false;
}

bool segment_crosses_polyline(const Vec2& a, const Vec2& b,
                              const Polyline& line) {
  for (std::size_t i = 1; i < line.points.size(); ++i) {
    if (segments_intersect(a, b, line.points[i - 1], line.points[i])) {
      return true;
    }
  }
  return false;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

double point_polyline_distance(const Vec2& p, const Polyline& line) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < line.points.size(); ++i) {
    best = std::min(best,
                    point_segment_distance(p, line.points[i - 1], line.points[i]));
  }
  return best;
}

}  // namespace motiongen
