#pragma once

#include <string>
#include <vector>

#include "motiongen/geometry.hpp"
#include "motiongen/tensor.hpp"

namespace motiongen {

// How instance geometry reaches attention. Rotary variants turn query/key
// pairs by pose-derived angles so dot products see relative pose only;
// kVanilla adds classic interleaved sin/cos codes to the inputs instead, and
// kNone leaves geometry entirely to the feature vectors. kGlobalDrope uses
// the same rotary math as kDrope but feeds the model scene-frame features
// rather than per-instance local ones; the split lives in the featurizer.
enum class PEVariant { kNone, kVanilla, kDrope, kGlobalDrope };

PEVariant pe_variant_from_string(const std::string& s);
const char* to_string(PEVariant v);

struct PEConfig {
  PEVariant variant = PEVariant::kGlobalDrope;
  int d_model = 128;
  int n_heads = 8;
  // Meters of travel along one axis that take the fastest rotary block
  // through a full turn. Deeper blocks slow down geometrically, mirroring
  // the classic sinusoidal frequency ladder.
  double position_period = 200.0;

  int head_dim() const { return n_heads > 0 ? d_model / n_heads : 0; }
  void validate() const;
};

// Heads alternate between position-encoding and heading-encoding roles,
// starting with position; odd head counts get the extra positional head.
inline bool head_is_positional(int head) { return head % 2 == 0; }

// Per-block angular frequencies for position rotation. head_dim must be a
// multiple of 4: each block spends one pair on x and one on y.
std::vector<double> position_thetas(int head_dim, double period);

// Interleaved sin/cos code of an integer position; d_model must be even.
std::vector<double> sinusoidal_pe(int pos, int d_model);
// Rows 0..count-1 stacked, ready to add onto an input matrix.
Tensor sinusoidal_pe_table(int count, int d_model);

// Rotates a head-sized vector by a 2-D position: block l's first pair turns
// by px*theta_l, its second pair by py*theta_l.
std::vector<double> rope_position(const std::vector<double>& x, double px,
                                  double py,
                                  const std::vector<double>& thetas);
// Rotates every consecutive pair by the same angle.
std::vector<double> rope_direction(const std::vector<double>& x, double alpha);

// Per-pair rotation angles for Graph::rotary_apply: row i encodes poses[i]
// across all heads back to back. Positional heads get the x/y block angles,
// directional heads repeat the heading. The caller picks the frame the poses
// are expressed in; dot products only ever expose differences between rows,
// so a frame shared by queries and keys cancels out.
Tensor rotary_angles(const std::vector<Pose2>& poses, const PEConfig& cfg);

}  // namespace motiongen
