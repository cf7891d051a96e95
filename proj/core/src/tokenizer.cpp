#include "motiongen/tokenizer.hpp"

#include <algorithm>
#include <cmath>

#include "motiongen/common.hpp"

namespace motiongen {

namespace {

// Absorbs ~1e-16 coordinate noise for displacements that sit exactly on a
// bin edge (straight-line motion in the agent frame has local y == 0, which
// is an edge under the floor convention).
constexpr double kEdgeSnap = 1e-9;

// Below this speed the motion direction is unreliable; the frame heading is
// carried forward instead.
constexpr double kMinFrameSpeed = 0.1;  // m/s

double frame_heading(double prev, const Vec2& disp,
                     const TokenizerConfig& cfg) {
  if (disp.norm() / cfg.dt >= kMinFrameSpeed) return std::atan2(disp.y, disp.x);
  return prev;
}

}  // namespace

int quantize(double displacement, const TokenizerConfig& cfg) {
  const int bin =
      (int)std::floor((displacement + cfg.range + kEdgeSnap) / cfg.bin_width());
  return std::clamp(bin, 0, cfg.bins_per_axis - 1);
}

double bin_center(int bin, const TokenizerConfig& cfg) {
  return -cfg.range + (bin + 0.5) * cfg.bin_width();
}

int token_index(int dx, int dy, const TokenizerConfig& cfg) {
  const int s = cfg.verlet_span;
  if (dx < -s || dx > s || dy < -s || dy > s) {
    throw InvalidArgument("token component out of span");
  }
  return (dx + s) * cfg.tokens_per_axis() + (dy + s);
}

int token_dx(int index, const TokenizerConfig& cfg) {
  if (index < 0 || index >= cfg.vocab_size()) {
    throw InvalidArgument("token index out of range");
  }
  return index / cfg.tokens_per_axis() - cfg.verlet_span;
}

int token_dy(int index, const TokenizerConfig& cfg) {
  if (index < 0 || index >= cfg.vocab_size()) {
    throw InvalidArgument("token index out of range");
  }
  return index % cfg.tokens_per_axis() - cfg.verlet_span;
}

TokenizedTrack tokenize(const AgentTrack& track, const TokenizerConfig& cfg,
                        double window_start, double window_end) {
  const int segments = (int)std::round((window_end - window_start) / cfg.dt);
  if (segments < 2) throw InvalidArgument("tokenization window too short");
  if (std::abs(window_start + segments * cfg.dt - window_end) > 1e-9) {
    throw InvalidArgument("window is not a whole number of segments");
  }
  if (!track.valid_over(window_start, window_end)) {
    throw InvalidArgument("track does not cover the tokenization window");
  }

  std::vector<Vec2> points((std::size_t)segments + 1);
  for (int k = 0; k <= segments; ++k) {
    const AgentState st = track.state_at_time(window_start + k * cfg.dt);
    points[k] = {st.x, st.y};
  }
  const AgentState start_state = track.state_at_time(window_start);

  TokenizedTrack tt;
  tt.start = start_state.pose();
  tt.ref_displacement = points[1] - points[0];
  tt.window_start = window_start;

  const bool agent_mode = cfg.mode == TokenizerMode::kAgentCentric;
  double h = agent_mode ? tt.start.heading : 0.0;
  int prev_bx = 0, prev_by = 0;
  for (int k = 0; k < segments; ++k) {
    const Vec2 d = points[k + 1] - points[k];
    const Vec2 local = agent_mode ? d.rotated(-h) : d;
    const int bx = quantize(local.x, cfg);
    const int by = quantize(local.y, cfg);
    if (k == 0) {
      tt.ref_bin_x = bx;
      tt.ref_bin_y = by;
    } else {
      const int raw_dx = bx - prev_bx;
      const int raw_dy = by - prev_by;
      const int cdx = std::clamp(raw_dx, -cfg.verlet_span, cfg.verlet_span);
      const int cdy = std::clamp(raw_dy, -cfg.verlet_span, cfg.verlet_span);
      tt.clamp_events += (cdx != raw_dx) + (cdy != raw_dy);
      tt.tokens.push_back(token_index(cdx, cdy, cfg));
    }
    prev_bx = bx;
    prev_by = by;
    if (agent_mode) h = frame_heading(h, d, cfg);
  }
  return tt;
}

RolloutCursor::RolloutCursor(const Pose2& start, const Vec2& ref_displacement,
                             const TokenizerConfig& cfg, double window_start)
    : cfg_(cfg), t_(window_start + cfg.dt) {
  pose_.x = start.x + ref_displacement.x;
  pose_.y = start.y + ref_displacement.y;
  pose_.heading = frame_heading(start.heading, ref_displacement, cfg_);
  const bool agent_mode = cfg_.mode == TokenizerMode::kAgentCentric;
  const Vec2 local = agent_mode ? ref_displacement.rotated(-start.heading)
                                : ref_displacement;
  bx_ = quantize(local.x, cfg_);
  by_ = quantize(local.y, cfg_);
}

void RolloutCursor::seed_bins(int bx, int by) {
  if (bx < 0 || bx >= cfg_.bins_per_axis || by < 0 || by >= cfg_.bins_per_axis) {
    throw InvalidArgument("reference bin out of range");
  }
  bx_ = bx;
  by_ = by;
}

AgentState RolloutCursor::advance(int token) {
  bx_ = std::clamp(bx_ + token_dx(token, cfg_), 0, cfg_.bins_per_axis - 1);
  by_ = std::clamp(by_ + token_dy(token, cfg_), 0, cfg_.bins_per_axis - 1);
  const Vec2 local{bin_center(bx_, cfg_), bin_center(by_, cfg_)};
  const bool agent_mode = cfg_.mode == TokenizerMode::kAgentCentric;
  const Vec2 d = agent_mode ? local.rotated(pose_.heading) : local;
  pose_.x += d.x;
  pose_.y += d.y;
  pose_.heading = frame_heading(pose_.heading, d, cfg_);
  t_ += cfg_.dt;
  return {pose_.x, pose_.y, pose_.heading, t_};
}

std::vector<AgentState> detokenize(const TokenizedTrack& tt,
                                   const TokenizerConfig& cfg) {
  std::vector<AgentState> out;
  out.reserve(tt.tokens.size() + 2);
  out.push_back({tt.start.x, tt.start.y, tt.start.heading, tt.window_start});
  RolloutCursor cur(tt.start, tt.ref_displacement, cfg, tt.window_start);
  cur.seed_bins(tt.ref_bin_x, tt.ref_bin_y);
  out.push_back({cur.pose().x, cur.pose().y, cur.pose().heading, cur.time()});
  for (int token : tt.tokens) out.push_back(cur.advance(token));
  return out;
}

ModeConsistency mode_consistency_probe(const Scenario& s,
                                       const Pose2& transform) {
  const Scenario moved =
      rigid_transform(s, transform.heading, Vec2{transform.x, transform.y});
  const double t0 = s.anchor_time - 1.0;
  const double t1 = s.anchor_time + s.horizon;

  ModeConsistency res{true, true};
  TokenizerConfig cfg;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    for (TokenizerMode mode :
         {TokenizerMode::kAgentCentric, TokenizerMode::kSceneCentric}) {
      cfg.mode = mode;
      const TokenizedTrack a = tokenize(s.agents[i], cfg, t0, t1);
      const TokenizedTrack b = tokenize(moved.agents[i], cfg, t0, t1);
      const bool equal = a.tokens == b.tokens;
      if (mode == TokenizerMode::kAgentCentric) {
        res.agent_tokens_equal = res.agent_tokens_equal && equal;
      } else {
        res.scene_tokens_equal = res.scene_tokens_equal && equal;
      }
    }
  }
  return res;
}

}  // namespace motiongen
