#include <doctest.h>

#include <cmath>
#include <vector>

#include "motiongen/common.hpp"
#include "motiongen/graph.hpp"
#include "motiongen/positional.hpp"
#include "motiongen/rng.hpp"

using namespace motiongen;

namespace {

std::vector<double> random_vec(Rng& rng, int n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// Applies one row of a rotary angle matrix to a vector, pair by pair. This
// is what Graph::rotary_apply does to a full matrix.
std::vector<double> rotate_row(const std::vector<double>& v, const Tensor& ang,
                               int row) {
  std::vector<double> out = v;
  for (int p = 0; 2 * p + 1 < (int)v.size(); ++p) {
    const double c = std::cos(ang.at(row, p)), s = std::sin(ang.at(row, p));
    const double a = out[2 * p], b = out[2 * p + 1];
    out[2 * p] = c * a - s * b;
    out[2 * p + 1] = s * a + c * b;
  }
  return out;
}

// Query/key dot product after encoding both poses, the quantity attention
// logits are made of.
double rotary_logit(const std::vector<double>& q, const std::vector<double>& k,
                    const Pose2& pq, const Pose2& pk, const PEConfig& cfg) {
  const Tensor ang = rotary_angles({pq, pk}, cfg);
  return dot(rotate_row(q, ang, 0), rotate_row(k, ang, 1));
}

}  // namespace

TEST_CASE("sinusoidal code matches the interleaved sin/cos form") {
  const std::vector<double> z = sinusoidal_pe(0, 8);
  for (int i = 0; i < 8; i += 2) {
    CHECK(z[i] == 0.0);
    CHECK(z[i + 1] == 1.0);
  }
  const std::vector<double> p1 = sinusoidal_pe(1, 4);
  CHECK(p1[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(p1[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(p1[2] == doctest::Approx(std::sin(0.01)).epsilon(1e-15));
  CHECK(p1[3] == doctest::Approx(std::cos(0.01)).epsilon(1e-15));

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int pos = (int)rng.uniform_int(0, 1000000);
    for (double v : sinusoidal_pe(pos, 16)) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }

  const Tensor table = sinusoidal_pe_table(5, 6);
  CHECK(table.rows == 5);
  CHECK(table.cols == 6);
  const std::vector<double> row3 = sinusoidal_pe(3, 6);
  for (int c = 0; c < 6; ++c) CHECK(table.at(3, c) == row3[c]);

  CHECK_THROWS_AS(sinusoidal_pe(-1, 4), InvalidArgument);
  CHECK_THROWS_AS(sinusoidal_pe(0, 5), InvalidArgument);
}

TEST_CASE("position frequency ladder spans the configured period") {
  const std::vector<double> th = position_thetas(16, 200.0);
  CHECK(th.size() == 4);
  CHECK(th[0] == doctest::Approx(2.0 * kPi / 200.0).epsilon(1e-15));
  CHECK(th[3] ==
        doctest::Approx(2.0 * kPi / 200.0 * std::pow(10000.0, -0.75))
            .epsilon(1e-12));
  for (std::size_t l = 1; l < th.size(); ++l) CHECK(th[l] < th[l - 1]);
  CHECK_THROWS_AS(position_thetas(6, 200.0), InvalidArgument);
  CHECK_THROWS_AS(position_thetas(0, 200.0), InvalidArgument);
}

TEST_CASE("position rotation is an isometry exposing only relative offsets") {
  Rng rng(11);
  const std::vector<double> th = position_thetas(8, 200.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::vector<double> q = random_vec(rng, 8);
    const std::vector<double> k = random_vec(rng, 8);
    const double x1 = rng.uniform(-120.0, 120.0);
    const double y1 = rng.uniform(-120.0, 120.0);
    const double x2 = rng.uniform(-120.0, 120.0);
    const double y2 = rng.uniform(-120.0, 120.0);

    CHECK(rope_position(q, 0.0, 0.0, th) == q);
    CHECK(norm(rope_position(q, x1, y1, th)) ==
          doctest::Approx(norm(q)).epsilon(1e-12));

    const double lhs =
        dot(rope_position(q, x1, y1, th), rope_position(k, x2, y2, th));
    const double rhs = dot(q, rope_position(k, x2 - x1, y2 - y1, th));
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
}

TEST_CASE("direction rotation composes additively") {
  Rng rng(13);
  const std::vector<double> q0 = random_vec(rng, 6);
  CHECK(rope_direction(q0, 0.0) == q0);
  const std::vector<double> neg = rope_direction(q0, kPi);
  for (std::size_t i = 0; i < q0.size(); ++i) {
    CHECK(std::abs(neg[i] + q0[i]) < 1e-15);
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const std::vector<double> q = random_vec(rng, 6);
    const std::vector<double> k = random_vec(rng, 6);
    const double a = rng.uniform(-10.0, 10.0);
    const double b = rng.uniform(-10.0, 10.0);
    const std::vector<double> chained =
        rope_direction(rope_direction(q, a), b);
    const std::vector<double> direct = rope_direction(q, a + b);
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(std::abs(chained[i] - direct[i]) < 1e-12);
    }
    const double lhs = dot(rope_direction(q, a), rope_direction(k, b));
    const double rhs = dot(q, rope_direction(k, b - a));
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
}

TEST_CASE("rotation helpers reject mismatched shapes") {
  const std::vector<double> th = position_thetas(8, 200.0);
  CHECK_THROWS_AS(rope_position(std::vector<double>(6), 1.0, 1.0, th),
                  InvalidArgument);
  CHECK_THROWS_AS(
      rope_position(std::vector<double>(8), 1.0, 1.0, {0.1}),
      InvalidArgument);
  CHECK_THROWS_AS(rope_direction(std::vector<double>(5), 1.0),
                  InvalidArgument);
}

TEST_CASE("angle matrix lays heads out as alternating position/direction") {
  PEConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  const std::vector<Pose2> poses{{3.0, -2.0, 0.7}, {-40.0, 55.0, -2.1}};
  const Tensor ang = rotary_angles(poses, cfg);
  CHECK(ang.rows == 2);
  CHECK(ang.cols == 8);
  const std::vector<double> th = position_thetas(8, cfg.position_period);
  CHECK(ang.at(0, 0) == 3.0 * th[0]);
  CHECK(ang.at(0, 1) == -2.0 * th[0]);
  CHECK(ang.at(0, 2) == 3.0 * th[1]);
  CHECK(ang.at(0, 3) == -2.0 * th[1]);
  for (int p = 4; p < 8; ++p) CHECK(ang.at(0, p) == 0.7);
  CHECK(ang.at(1, 0) == -40.0 * th[0]);
  for (int p = 4; p < 8; ++p) CHECK(ang.at(1, p) == -2.1);

  // Graph application agrees with the reference rotations head by head.
  Rng rng(17);
  Tensor x(2, 16);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  Graph g(false);
  const NodeId rot = g.rotary_apply(g.input(x), ang);
  for (int r = 0; r < 2; ++r) {
    std::vector<double> head0(8), head1(8);
    for (int c = 0; c < 8; ++c) head0[c] = x.at(r, c);
    for (int c = 0; c < 8; ++c) head1[c] = x.at(r, 8 + c);
    const std::vector<double> want0 =
        rope_position(head0, poses[r].x, poses[r].y, th);
    const std::vector<double> want1 = rope_direction(head1, poses[r].heading);
    for (int c = 0; c < 8; ++c) {
      CHECK(g.value(rot).at(r, c) == want0[c]);
      CHECK(g.value(rot).at(r, 8 + c) == want1[c]);
    }
  }
}

TEST_CASE("rotary logits depend on poses only through their differences") {
  PEConfig cfg;
  cfg.d_model = 24;
  cfg.n_heads = 3;  // heads: position, direction, position
  Rng rng(23);
  auto random_pose = [&rng]() {
    return Pose2{rng.uniform(-120.0, 120.0), rng.uniform(-120.0, 120.0),
                 rng.uniform(-kPi, kPi)};
  };
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> q = random_vec(rng, 24);
    const std::vector<double> k = random_vec(rng, 24);
    const Pose2 pa = random_pose();
    const Pose2 pb = random_pose();

    // Identical poses cancel entirely: same logits as no encoding at all.
    CHECK(std::abs(rotary_logit(q, k, pa, pa, cfg) - dot(q, k)) < 1e-9);

    // A shared translation leaves offsets and headings alone.
    const double tx = rng.uniform(-80.0, 80.0);
    const double ty = rng.uniform(-80.0, 80.0);
    const Pose2 pa_t{pa.x + tx, pa.y + ty, pa.heading};
    const Pose2 pb_t{pb.x + tx, pb.y + ty, pb.heading};
    CHECK(std::abs(rotary_logit(q, k, pa, pb, cfg) -
                   rotary_logit(q, k, pa_t, pb_t, cfg)) < 1e-9);
  }
}

TEST_CASE("scene-frame poses make logits rigid-motion invariant") {
  // Raw world coordinates are only translation-relative: rotating the world
  // turns every position offset, which positional heads can see. The model
  // therefore re-expresses poses in a frame owned by the scene before
  // building angles; that frame rides along with any rigid motion.
  PEConfig cfg;
  cfg.d_model = 24;
  cfg.n_heads = 3;
  Rng rng(29);
  double worst_canonical = 0.0;
  double worst_raw = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> q = random_vec(rng, 24);
    const std::vector<double> k = random_vec(rng, 24);
    const Pose2 pa{rng.uniform(-120.0, 120.0), rng.uniform(-120.0, 120.0),
                   rng.uniform(-kPi, kPi)};
    const Pose2 pb{rng.uniform(-120.0, 120.0), rng.uniform(-120.0, 120.0),
                   rng.uniform(-kPi, kPi)};
    const Pose2 motion{rng.uniform(-200.0, 200.0), rng.uniform(-200.0, 200.0),
                       rng.uniform(-kPi, kPi)};
    const Pose2 pa2 = pose_from_frame(pa, motion);
    const Pose2 pb2 = pose_from_frame(pb, motion);

    const double canon_before =
        rotary_logit(q, k, pose_to_frame(pa, pa), pose_to_frame(pb, pa), cfg);
    const double canon_after = rotary_logit(
        q, k, pose_to_frame(pa2, pa2), pose_to_frame(pb2, pa2), cfg);
    worst_canonical =
        std::max(worst_canonical, std::abs(canon_before - canon_after));

    const double raw_before = rotary_logit(q, k, pa, pb, cfg);
    const double raw_after = rotary_logit(q, k, pa2, pb2, cfg);
    worst_raw = std::max(worst_raw, std::abs(raw_before - raw_after));
  }
  CHECK(worst_canonical < 1e-6);
  // And the precaution is not vacuous: raw poses do drift under rotation.
  CHECK(worst_raw > 1e-3);
}

TEST_CASE("config validation and variant names") {
  for (PEVariant v : {PEVariant::kNone, PEVariant::kVanilla, PEVariant::kDrope,
                      PEVariant::kGlobalDrope}) {
    CHECK(pe_variant_from_string(to_string(v)) == v);
  }
  CHECK_THROWS_AS(pe_variant_from_string("rope"), InvalidArgument);

  CHECK(head_is_positional(0));
  CHECK(!head_is_positional(1));
  CHECK(head_is_positional(2));

  PEConfig ok;
  ok.validate();

  PEConfig uneven;
  uneven.d_model = 130;
  uneven.n_heads = 8;
  CHECK_THROWS_AS(uneven.validate(), InvalidArgument);

  PEConfig thin;
  thin.d_model = 24;
  thin.n_heads = 4;  // head_dim 6, no room for x/y blocks
  CHECK_THROWS_AS(thin.validate(), InvalidArgument);

  PEConfig flat;
  flat.position_period = 0.0;
  CHECK_THROWS_AS(flat.validate(), InvalidArgument);
}
