#pragma once

#include <vector>

#include "motiongen/geometry.hpp"
#include "motiongen/scenario.hpp"

namespace motiongen {

enum class TokenizerMode { kAgentCentric, kSceneCentric };

// Per-axis displacement quantizer plus the Verlet difference vocabulary.
// A trajectory window is cut into dt segments; each segment displacement is
// binned per axis, and tokens encode clamped differences between consecutive
// bin pairs, so "repeat the previous motion" is always the same token.
struct TokenizerConfig {
  double dt = 0.5;
  int bins_per_axis = 128;
  double range = 18.0;  // displacements live in [-range, range)
  int verlet_span = 6;
  TokenizerMode mode = TokenizerMode::kAgentCentric;

  int tokens_per_axis() const { return 2 * verlet_span + 1; }
  int vocab_size() const { return tokens_per_axis() * tokens_per_axis(); }
  double bin_width() const { return 2.0 * range / bins_per_axis; }
};

// floor((d + range) / width) clamped to [0, bins-1]. A 1e-9 nudge snaps
// values that land within rounding noise below a bin edge up into that bin,
// so axis-aligned motion quantizes identically before and after a global
// rigid transform of the scene.
int quantize(double displacement, const TokenizerConfig& cfg);
double bin_center(int bin, const TokenizerConfig& cfg);

// (dx, dy) in [-span, span]^2 <-> flat index; (0, 0) sits at the middle of
// the vocabulary (84 for the default span of 6).
int token_index(int dx, int dy, const TokenizerConfig& cfg);
int token_dx(int index, const TokenizerConfig& cfg);
int token_dy(int index, const TokenizerConfig& cfg);

struct TokenizedTrack {
  Pose2 start;            // pose at the window start, global frame
  Vec2 ref_displacement;  // exact first-segment displacement, global frame
  int ref_bin_x = 0;
  int ref_bin_y = 0;
  std::vector<int> tokens;    // one per segment after the reference
  double window_start = 0.0;  // seconds; segments end at window_start + k*dt
  int clamp_events = 0;       // per-axis differences that exceeded the span
};

// Cuts [window_start, window_end] into dt segments sampled from the track,
// quantizes per-segment displacements (agent mode: in a frame aligned with
// the previous segment's motion; scene mode: global axes), and emits the
// clamped bin differences as tokens. Throws InvalidArgument when the track
// does not cover the window.
TokenizedTrack tokenize(const AgentTrack& track, const TokenizerConfig& cfg,
                        double window_start = 0.0, double window_end = 9.0);

// Inverse chain: the reference segment is replayed exactly from the stored
// displacement; every later segment decodes to the center of its cumulated
// bin pair. Clamp-free tokenize followed by detokenize reproduces the bin
// sequence exactly and each local displacement to within half a bin.
std::vector<AgentState> detokenize(const TokenizedTrack& tt,
                                   const TokenizerConfig& cfg);

// Incremental decoder used by autoregressive rollout: seed with the window
// start pose and the observed reference displacement, then advance once per
// sampled token. Cumulated bins are clamped back into range, since sampled
// sequences (unlike encoded ones) can walk off the grid.
class RolloutCursor {
 public:
  RolloutCursor(const Pose2& start, const Vec2& ref_displacement,
                const TokenizerConfig& cfg, double window_start = 0.0);

  AgentState advance(int token);

  // Overrides the bin pair inferred from the reference displacement; used
  // when decoding a stored track whose reference bins are authoritative.
  void seed_bins(int bx, int by);

  // Pose after the most recently decoded segment. heading follows motion
  // direction while fast enough, else carries the previous value.
  const Pose2& pose() const { return pose_; }
  double time() const { return t_; }
  int bin_x() const { return bx_; }
  int bin_y() const { return by_; }

 private:
  TokenizerConfig cfg_;
  Pose2 pose_;
  double t_ = 0.0;
  int bx_ = 0;
  int by_ = 0;
};

struct ModeConsistency {
  bool agent_tokens_equal = false;
  bool scene_tokens_equal = false;
};

// Tokenizes every agent before and after a global rigid transform of the
// scenario and reports, per mode, whether all token sequences survived.
// Agent-centric tokens are invariant; scene-centric tokens generally are not.
ModeConsistency mode_consistency_probe(const Scenario& s,
                                       const Pose2& transform);

}  // namespace motiongen
