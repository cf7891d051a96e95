#include "motiongen/positional.hpp"

#include <cmath>

#include "motiongen/common.hpp"

namespace motiongen {

PEVariant pe_variant_from_string(const std::string& s) {
  if (s == "none") return PEVariant::kNone;
  if (s == "vanilla") return PEVariant::kVanilla;
  if (s == "drope") return PEVariant::kDrope;
  if (s == "global_drope") return PEVariant::kGlobalDrope;
  throw InvalidArgument("unknown positional embedding variant '" + s + "'");
}

const char* to_string(PEVariant v) {
  switch (v) {
    case PEVariant::kNone: return "none";
    case PEVariant::kVanilla: return "vanilla";
    case PEVariant::kDrope: return "drope";
    case PEVariant::kGlobalDrope: return "global_drope";
  }
  throw InvalidArgument("bad PEVariant");
}

void PEConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0) {
    throw InvalidArgument("d_model and n_heads must be positive");
  }
  if (d_model % n_heads != 0) {
    throw InvalidArgument("d_model must divide evenly into heads");
  }
  if (head_dim() % 4 != 0) {
    throw InvalidArgument("head_dim must be a multiple of 4 for rotary blocks");
  }
  if (position_period <= 0.0) {
    throw InvalidArgument("position_period must be positive");
  }
}

std::vector<double> position_thetas(int head_dim, double period) {
  if (head_dim <= 0 || head_dim % 4 != 0) {
    throw InvalidArgument("head_dim must be a positive multiple of 4");
  }
  const int blocks = head_dim / 4;
  std::vector<double> thetas(blocks);
  const double base = 2.0 * kPi / period;
  for (int l = 0; l < blocks; ++l) {
    thetas[l] = base * std::pow(10000.0, -(double)l / (double)blocks);
  }
  return thetas;
}

std::vector<double> sinusoidal_pe(int pos, int d_model) {
  if (pos < 0) throw InvalidArgument("position must be non-negative");
  if (d_model <= 0 || d_model % 2 != 0) {
    throw InvalidArgument("d_model must be positive and even");
  }
  std::vector<double> out(d_model);
  for (int i = 0; i < d_model / 2; ++i) {
    const double rate = std::pow(10000.0, (double)(2 * i) / (double)d_model);
    out[2 * i] = std::sin((double)pos / rate);
    out[2 * i + 1] = std::cos((double)pos / rate);
  }
  return out;
}

Tensor sinusoidal_pe_table(int count, int d_model) {
  Tensor t(count, d_model);
  for (int r = 0; r < count; ++r) {
    const std::vector<double> row = sinusoidal_pe(r, d_model);
    for (int c = 0; c < d_model; ++c) t.at(r, c) = row[c];
  }
  return t;
}

namespace {

void rotate_pair(double* p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double a = p[0], b = p[1];
  p[0] = c * a - s * b;
  p[1] = s * a + c * b;
}

}  // namespace

std::vector<double> rope_position(const std::vector<double>& x, double px,
                                  double py,
                                  const std::vector<double>& thetas) {
  if (x.size() % 4 != 0) {
    throw InvalidArgument("position rotation needs a multiple of 4 dims");
  }
  if (thetas.size() != x.size() / 4) {
    throw InvalidArgument("theta schedule does not match vector width");
  }
  std::vector<double> out = x;
  for (std::size_t l = 0; l < thetas.size(); ++l) {
    rotate_pair(&out[4 * l], px * thetas[l]);
    rotate_pair(&out[4 * l + 2], py * thetas[l]);
  }
  return out;
}

std::vector<double> rope_direction(const std::vector<double>& x, double alpha) {
  if (x.size() % 2 != 0) {
    throw InvalidArgument("direction rotation needs an even dim count");
  }
  std::vector<double> out = x;
  for (std::size_t p = 0; p + 1 < out.size(); p += 2) {
    rotate_pair(&out[p], alpha);
  }
  return out;
}

Tensor rotary_angles(const std::vector<Pose2>& poses, const PEConfig& cfg) {
  cfg.validate();
  const int hd = cfg.head_dim();
  const int pairs_per_head = hd / 2;
  const std::vector<double> thetas =
      position_thetas(hd, cfg.position_period);
  Tensor angles((int)poses.size(), cfg.d_model / 2);
  for (std::size_t r = 0; r < poses.size(); ++r) {
    for (int h = 0; h < cfg.n_heads; ++h) {
      double* row = &angles.at((int)r, h * pairs_per_head);
      if (head_is_positional(h)) {
        for (int l = 0; l < hd / 4; ++l) {
          row[2 * l] = poses[r].x * thetas[l];
          row[2 * l + 1] = poses[r].y * thetas[l];
        }
      } else {
        for (int p = 0; p < pairs_per_head; ++p) row[p] = poses[r].heading;
      }
    }
  }
  return angles;
}

}  // namespace motiongen
