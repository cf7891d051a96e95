#include "motiongen/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "motiongen/common.hpp"
#include "motiongen/checkpoint.hpp"
#include "motiongen/rng.hpp"

namespace motiongen {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kMaskOff = -1e9;

const std::set<std::string>& preset_names() {
  static const std::set<std::string> names = {"", "mini", "medium", "big",
                                              "large"};
  return names;
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0) {
    throw InvalidArgument("model: d_model and n_heads must be positive");
  }
  if (d_model % n_heads != 0) {
    throw InvalidArgument("model: d_model must divide evenly into heads");
  }
  if (encoder_layers < 1 || decoder_layers < 1) {
    throw InvalidArgument("model: need at least one encoder and decoder layer");
  }
  if (ffn_mult < 1) throw InvalidArgument("model: ffn_mult must be >= 1");
  if (vocab_size < 2) throw InvalidArgument("model: vocab_size must be >= 2");
  if (max_positions < 2) {
    throw InvalidArgument("model: max_positions must cover scene slot + tokens");
  }
  if (max_interest_agents < 1) {
    throw InvalidArgument("model: max_interest_agents must be >= 1");
  }
  if (background_steps < 1) {
    throw InvalidArgument("model: background_steps must be >= 1");
  }
  if (coord_scale <= 0.0) {
    throw InvalidArgument("model: coord_scale must be positive");
  }
  if (preset_names().count(size_preset) == 0) {
    throw InvalidArgument("model: unknown size preset '" + size_preset + "'");
  }
  if (pe.d_model != d_model || pe.n_heads != n_heads) {
    throw InvalidArgument("model: pe config out of sync with model widths");
  }
  pe.validate();
}

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig cfg;
  if (name == "mini") {
    cfg.d_model = 16;
    cfg.n_heads = 2;
  } else if (name == "medium") {
    cfg.d_model = 40;
    cfg.n_heads = 5;
  } else if (name == "big") {
    cfg.d_model = 48;
    cfg.n_heads = 6;
  } else if (name == "large") {
    cfg.d_model = 72;
    cfg.n_heads = 9;
  } else {
    throw InvalidArgument("model: unknown size preset '" + name + "'");
  }
  cfg.size_preset = name;
  cfg.pe.d_model = cfg.d_model;
  cfg.pe.n_heads = cfg.n_heads;
  cfg.validate();
  return cfg;
}

std::string model_config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["d_model"] = cfg.d_model;
  j["n_heads"] = cfg.n_heads;
  j["encoder_layers"] = cfg.encoder_layers;
  j["decoder_layers"] = cfg.decoder_layers;
  j["ffn_mult"] = cfg.ffn_mult;
  j["vocab_size"] = cfg.vocab_size;
  j["max_positions"] = cfg.max_positions;
  j["max_interest_agents"] = cfg.max_interest_agents;
  j["background_steps"] = cfg.background_steps;
  j["coord_scale"] = cfg.coord_scale;
  j["size_preset"] = cfg.size_preset;
  j["pe"]["variant"] = to_string(cfg.pe.variant);
  j["pe"]["position_period"] = cfg.pe.position_period;
  return j.dump(2) + "\n";
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("model config: not a JSON object");
  ModelConfig cfg;
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "d_model") cfg.d_model = val.get<int>();
      else if (key == "n_heads") cfg.n_heads = val.get<int>();
      else if (key == "encoder_layers") cfg.encoder_layers = val.get<int>();
      else if (key == "decoder_layers") cfg.decoder_layers = val.get<int>();
      else if (key == "ffn_mult") cfg.ffn_mult = val.get<int>();
      else if (key == "vocab_size") cfg.vocab_size = val.get<int>();
      else if (key == "max_positions") cfg.max_positions = val.get<int>();
      else if (key == "max_interest_agents")
        cfg.max_interest_agents = val.get<int>();
      else if (key == "background_steps") cfg.background_steps = val.get<int>();
      else if (key == "coord_scale") cfg.coord_scale = val.get<double>();
      else if (key == "size_preset") cfg.size_preset = val.get<std::string>();
      else if (key == "pe") {
        if (!val.is_object()) throw FormatError("model config: pe not an object");
        for (const auto& [pk, pv] : val.items()) {
          if (pk == "variant")
            cfg.pe.variant = pe_variant_from_string(pv.get<std::string>());
          else if (pk == "position_period")
            cfg.pe.position_period = pv.get<double>();
          else
            throw FormatError("model config: unknown key pe." + pk);
        }
      } else {
        throw FormatError("model config: unknown key " + key);
      }
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  cfg.pe.d_model = cfg.d_model;
  cfg.pe.n_heads = cfg.n_heads;
  cfg.validate();
  return cfg;
}

namespace {

// One parameter's name, shape, and init class. kWeight draws normal(0, 0.02),
// kZero and kOne are deterministic. Spec order fixes the RNG draw order, so
// init is reproducible regardless of map iteration.
enum class Init { kWeight, kZero, kOne };

struct ParamSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  Init init = Init::kWeight;
};

void push_attn(std::vector<ParamSpec>& v, const std::string& p, int d,
               bool cross) {
  if (cross) {
    v.push_back({p + ".ln_q.g", 1, d, Init::kOne});
    v.push_back({p + ".ln_q.b", 1, d, Init::kZero});
    v.push_back({p + ".ln_kv.g", 1, d, Init::kOne});
    v.push_back({p + ".ln_kv.b", 1, d, Init::kZero});
  } else {
    v.push_back({p + ".ln.g", 1, d, Init::kOne});
    v.push_back({p + ".ln.b", 1, d, Init::kZero});
  }
  for (const char* s : {".q", ".k", ".v", ".o"}) {
    v.push_back({p + s + ".w", d, d, Init::kWeight});
    v.push_back({p + s + ".b", 1, d, Init::kZero});
  }
}

void push_ffn(std::vector<ParamSpec>& v, const std::string& p, int d,
              int mult) {
  v.push_back({p + ".ln.g", 1, d, Init::kOne});
  v.push_back({p + ".ln.b", 1, d, Init::kZero});
  v.push_back({p + ".fc1.w", d, mult * d, Init::kWeight});
  v.push_back({p + ".fc1.b", 1, mult * d, Init::kZero});
  v.push_back({p + ".fc2.w", mult * d, d, Init::kWeight});
  v.push_back({p + ".fc2.b", 1, d, Init::kZero});
}

void push_feature_net(std::vector<ParamSpec>& v, const std::string& p,
                      int in_dim, int d) {
  v.push_back({p + ".l0.w", in_dim, d, Init::kWeight});
  v.push_back({p + ".l0.b", 1, d, Init::kZero});
  for (int i = 1; i < 3; ++i) {
    const std::string li = p + ".l" + std::to_string(i);
    v.push_back({li + ".w", 2 * d, d, Init::kWeight});
    v.push_back({li + ".b", 1, d, Init::kZero});
  }
}

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  const int d = cfg.d_model;
  std::vector<ParamSpec> v;
  push_feature_net(v, "enc.agent.feat", 8, d);
  push_feature_net(v, "enc.map.feat", 7, d);
  v.push_back({"enc.agent.type_emb", 3, d, Init::kWeight});
  v.push_back({"enc.map.type_emb", 2, d, Init::kWeight});
  for (int r = 0; r < cfg.encoder_layers; ++r) {
    const std::string pr = "enc.r" + std::to_string(r);
    push_attn(v, pr + ".a2a", d, false);
    push_attn(v, pr + ".a2m", d, true);
    push_attn(v, pr + ".m2a", d, true);
    push_ffn(v, pr + ".affn", d, cfg.ffn_mult);
    push_ffn(v, pr + ".mffn", d, cfg.ffn_mult);
  }
  v.push_back({"dec.ctx_proj.w", d, d, Init::kWeight});
  v.push_back({"dec.ctx_proj.b", 1, d, Init::kZero});
  v.push_back({"dec.tok_emb", cfg.vocab_size, d, Init::kWeight});
  v.push_back({"dec.time_emb", cfg.max_positions, d, Init::kWeight});
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string pl = "dec.l" + std::to_string(l);
    push_attn(v, pl + ".t", d, false);
    push_attn(v, pl + ".s", d, false);
    push_attn(v, pl + ".m", d, true);
    push_attn(v, pl + ".o", d, true);
    push_ffn(v, pl + ".ffn", d, cfg.ffn_mult);
  }
  v.push_back({"dec.final_ln.g", 1, d, Init::kOne});
  v.push_back({"dec.final_ln.b", 1, d, Init::kZero});
  // Zero heads: the first forward emits a uniform token distribution and a
  // zero value estimate, so losses start from known baselines.
  v.push_back({"head.token.w", d, cfg.vocab_size, Init::kZero});
  v.push_back({"head.token.b", 1, cfg.vocab_size, Init::kZero});
  v.push_back({"head.value.w", d, 1, Init::kZero});
  v.push_back({"head.value.b", 1, 1, Init::kZero});
  push_attn(v, "bg.attn", d, true);
  push_ffn(v, "bg.ffn", d, cfg.ffn_mult);
  v.push_back({"bg.final_ln.g", 1, d, Init::kOne});
  v.push_back({"bg.final_ln.b", 1, d, Init::kZero});
  v.push_back({"bg.head.w", d, 2 * cfg.background_steps, Init::kZero});
  v.push_back({"bg.head.b", 1, 2 * cfg.background_steps, Init::kZero});
  return v;
}

}  // namespace

PolicyModel PolicyModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PolicyModel m;
  m.cfg = cfg;
  Rng rng(derive_seed(seed, "model_init"));
  for (const ParamSpec& s : param_specs(cfg)) {
    Tensor t(s.rows, s.cols);
    if (s.init == Init::kWeight) {
      for (double& x : t.data) x = rng.normal(0.0, 0.02);
    } else if (s.init == Init::kOne) {
      for (double& x : t.data) x = 1.0;
    }
    m.params.emplace(s.name, std::move(t));
  }
  return m;
}

void PolicyModel::save(const std::string& path) const {
  save_tensor_archive(path, params);
  const std::string sidecar = path + ".json";
  FILE* f = std::fopen(sidecar.c_str(), "wb");
  if (!f) throw IoError("cannot write " + sidecar);
  const std::string text = model_config_to_json(cfg);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
}

PolicyModel PolicyModel::load(const std::string& path) {
  const std::string sidecar = path + ".json";
  FILE* f = std::fopen(sidecar.c_str(), "rb");
  if (!f) throw IoError("cannot read " + sidecar);
  std::string text;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, got);
  std::fclose(f);

  PolicyModel m;
  m.cfg = model_config_from_json(text);
  m.params = load_tensor_archive(path);
  // The archive must carry exactly the tensors this config implies.
  const auto specs = param_specs(m.cfg);
  if (specs.size() != m.params.size()) {
    throw FormatError("checkpoint: parameter count does not match config");
  }
  for (const ParamSpec& s : specs) {
    auto it = m.params.find(s.name);
    if (it == m.params.end()) {
      throw FormatError("checkpoint: missing tensor " + s.name);
    }
    if (it->second.rows != s.rows || it->second.cols != s.cols) {
      throw FormatError("checkpoint: shape mismatch for " + s.name);
    }
  }
  return m;
}

std::size_t PolicyModel::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += (std::size_t)t.size();
  return n;
}

namespace {

// Heading of a short displacement, with the end-state heading as fallback
// when the segment is too slow to define a direction (< 0.1 m/s).
double segment_heading(const Vec2& d, double dt, double fallback) {
  const double dist = std::sqrt(d.x * d.x + d.y * d.y);
  if (dist / dt < 0.1) return fallback;
  return std::atan2(d.y, d.x);
}

Tensor agent_feature_rows(const AgentTrack& tr, double t0, double t1,
                          const Pose2& frame, const ModelConfig& cfg) {
  const int steps = (int)std::lround((t1 - t0) / 0.1);
  Tensor rows(steps, 8);
  const double cs = cfg.coord_scale;
  for (int k = 0; k < steps; ++k) {
    const double ta = t0 + 0.1 * k;
    const double tb = std::min(t1, ta + 0.1);
    const AgentState a = tr.state_at_time(ta);
    const AgentState b = tr.state_at_time(tb);
    const Vec2 pa = transform_to_frame({a.x, a.y}, frame);
    const Vec2 pb = transform_to_frame({b.x, b.y}, frame);
    const Vec2 d{b.x - a.x, b.y - a.y};
    const double th = segment_heading(d, tb - ta, b.heading);
    rows.at(k, 0) = pa.x * cs;
    rows.at(k, 1) = pa.y * cs;
    rows.at(k, 2) = pb.x * cs;
    rows.at(k, 3) = pb.y * cs;
    rows.at(k, 4) = normalize_angle(th - frame.heading);
    rows.at(k, 5) = std::sqrt(d.x * d.x + d.y * d.y);
    rows.at(k, 6) = (double)(int)tr.ty;
    rows.at(k, 7) = tb - t1;
  }
  return rows;
}

Tensor map_feature_rows(const MapElement& el, const Pose2& frame,
                        const ModelConfig& cfg) {
  Tensor rows((int)el.vectors.size(), 7);
  const double cs = cfg.coord_scale;
  for (int k = 0; k < (int)el.vectors.size(); ++k) {
    const MapVector& v = el.vectors[k];
    const Vec2 s = transform_to_frame({v.sx, v.sy}, frame);
    const Vec2 e = transform_to_frame({v.ex, v.ey}, frame);
    rows.at(k, 0) = s.x * cs;
    rows.at(k, 1) = s.y * cs;
    rows.at(k, 2) = e.x * cs;
    rows.at(k, 3) = e.y * cs;
    rows.at(k, 4) = normalize_angle(v.th - frame.heading);
    rows.at(k, 5) = v.le;
    rows.at(k, 6) = (double)(int)v.ty;
  }
  return rows;
}

Pose2 element_pose(const MapElement& el) {
  const MapVector& v0 = el.vectors.front();
  return {v0.sx, v0.sy, v0.th};
}

}  // namespace

SceneInputs build_scene_inputs(const Scenario& s, const ModelConfig& cfg) {
  return build_scene_inputs(s, cfg, s.anchor_time);
}

SceneInputs build_scene_inputs(const Scenario& s, const ModelConfig& cfg,
                               double anchor_time) {
  cfg.validate();
  if (s.interest_ids.empty()) {
    throw InvalidArgument("scene inputs: scenario has no interest agents");
  }
  const double t1 = anchor_time;
  const double t0 = t1 - 1.0;

  SceneInputs in;
  in.scene_frame = s.agent_by_id(s.interest_ids[0]).state_at_time(t1).pose();
  // kDrope reads each instance in its own local frame; every other variant
  // shares the scene frame, so instance geometry must reach attention some
  // other way (rotary angles, sinusoids, or not at all).
  const bool local_frames = cfg.pe.variant == PEVariant::kDrope;

  std::vector<int> order;
  for (int id : s.interest_ids) order.push_back(id);
  for (const AgentTrack& tr : s.agents) {
    if (!s.is_interest(tr.id) && tr.valid_over(t0, t1)) order.push_back(tr.id);
  }
  in.n_interest = (int)s.interest_ids.size();

  for (int id : order) {
    const AgentTrack& tr = s.agent_by_id(id);
    if (!tr.valid_over(t0, t1)) {
      throw InvalidArgument("scene inputs: interest agent lacks history");
    }
    const Pose2 anchor = tr.state_at_time(t1).pose();
    const Pose2 feat_frame = local_frames ? anchor : in.scene_frame;
    in.agent_vectors.push_back(agent_feature_rows(tr, t0, t1, feat_frame, cfg));
    in.agent_poses.push_back(pose_to_frame(anchor, in.scene_frame));
    in.agent_types.push_back((int)tr.ty);
    in.agent_ids.push_back(id);
  }

  for (const MapElement& el : s.map_elements) {
    if (el.vectors.empty()) continue;
    const Pose2 world = element_pose(el);
    const Pose2 feat_frame = local_frames ? world : in.scene_frame;
    in.map_vectors.push_back(map_feature_rows(el, feat_frame, cfg));
    in.map_poses.push_back(pose_to_frame(world, in.scene_frame));
    in.map_types.push_back((int)el.ty);
  }
  return in;
}

namespace {

// Shared shorthand for graph construction against bound parameters.
struct Ctx {
  Graph& g;
  const ParamBinding& pb;
  const ModelConfig& cfg;

  NodeId p(const std::string& name) const { return pb.at(name); }
};

NodeId affine(Ctx& c, NodeId x, const std::string& prefix) {
  return c.g.add(c.g.matmul(x, c.p(prefix + ".w")), c.p(prefix + ".b"));
}

NodeId lnorm(Ctx& c, NodeId x, const std::string& prefix) {
  NodeId n = c.g.layer_norm(x);
  return c.g.add(c.g.mul(n, c.p(prefix + ".g")), c.p(prefix + ".b"));
}

// Multi-head attention. Rotary angle matrices (may be null) are applied to
// the full-width q/k before the head split; the per-head role split is baked
// into the angle layout. `mask` is additive, 0 for allowed and -1e9 for
// blocked pairs.
NodeId mha(Ctx& c, const std::string& prefix, NodeId q_in, NodeId kv_in,
           const Tensor* mask, const Tensor* ang_q, const Tensor* ang_k) {
  const int hd = c.cfg.head_dim();
  NodeId q = affine(c, q_in, prefix + ".q");
  NodeId k = affine(c, kv_in, prefix + ".k");
  NodeId v = affine(c, kv_in, prefix + ".v");
  if (ang_q != nullptr) q = c.g.rotary_apply(q, *ang_q);
  if (ang_k != nullptr) k = c.g.rotary_apply(k, *ang_k);
  NodeId mask_in = -1;
  if (mask != nullptr) mask_in = c.g.input(*mask);
  std::vector<NodeId> heads;
  for (int h = 0; h < c.cfg.n_heads; ++h) {
    NodeId qh = c.g.slice_cols(q, h * hd, hd);
    NodeId kh = c.g.slice_cols(k, h * hd, hd);
    NodeId vh = c.g.slice_cols(v, h * hd, hd);
    NodeId scores = c.g.scale(c.g.matmul(qh, kh, true), 1.0 / std::sqrt(hd));
    if (mask_in >= 0) scores = c.g.add(scores, mask_in);
    heads.push_back(c.g.matmul(c.g.softmax(scores), vh));
  }
  return affine(c, c.g.concat_cols(heads), prefix + ".o");
}

NodeId self_block(Ctx& c, const std::string& prefix, NodeId x,
                  const Tensor* mask, const Tensor* ang) {
  NodeId n = lnorm(c, x, prefix + ".ln");
  return c.g.add(x, mha(c, prefix, n, n, mask, ang, ang));
}

NodeId cross_block(Ctx& c, const std::string& prefix, NodeId x, NodeId kv,
                   const Tensor* mask, const Tensor* ang_q,
                   const Tensor* ang_k) {
  NodeId nq = lnorm(c, x, prefix + ".ln_q");
  NodeId nk = lnorm(c, kv, prefix + ".ln_kv");
  return c.g.add(x, mha(c, prefix, nq, nk, mask, ang_q, ang_k));
}

NodeId ffn_block(Ctx& c, const std::string& prefix, NodeId x) {
  NodeId h = c.g.gelu(affine(c, lnorm(c, x, prefix + ".ln"), prefix + ".fc1"));
  return c.g.add(x, affine(c, h, prefix + ".fc2"));
}

// PointNet-style per-instance net: three gelu layers, each after the first
// seeing its input concatenated with the running column-max pool, then a
// final pool down to one row.
NodeId feature_net(Ctx& c, const std::string& prefix, NodeId x) {
  const int rows = c.g.value(x).rows;
  NodeId h = c.g.gelu(affine(c, x, prefix + ".l0"));
  for (int i = 1; i < 3; ++i) {
    NodeId pooled = c.g.col_max(h);
    NodeId tiled = pooled;
    if (rows > 1) {
      tiled = c.g.concat_rows(std::vector<NodeId>((std::size_t)rows, pooled));
    }
    NodeId cat = c.g.concat_cols({h, tiled});
    h = c.g.gelu(affine(c, cat, prefix + ".l" + std::to_string(i)));
  }
  return c.g.col_max(h);
}

bool uses_rotary(const ModelConfig& cfg) {
  return cfg.pe.variant == PEVariant::kDrope ||
         cfg.pe.variant == PEVariant::kGlobalDrope;
}

}  // namespace

SceneNodes encode_scene(Graph& g, const PolicyModel& m, const ParamBinding& pb,
                        const SceneInputs& in) {
  Ctx c{g, pb, m.cfg};
  const int A = (int)in.agent_vectors.size();
  const int M = (int)in.map_vectors.size();
  if (A == 0) throw InvalidArgument("encode_scene: no agents");
  if (in.n_interest < 1 || in.n_interest > A) {
    throw InvalidArgument("encode_scene: bad interest count");
  }

  std::vector<NodeId> agent_toks, map_toks;
  for (int i = 0; i < A; ++i) {
    agent_toks.push_back(feature_net(c, "enc.agent.feat",
                                     g.input(in.agent_vectors[i])));
  }
  for (int i = 0; i < M; ++i) {
    map_toks.push_back(feature_net(c, "enc.map.feat",
                                   g.input(in.map_vectors[i])));
  }

  NodeId a = g.concat_rows(agent_toks);
  a = g.add(a, g.embedding_lookup(c.p("enc.agent.type_emb"), in.agent_types));
  NodeId mm = -1;
  if (M > 0) {
    mm = g.concat_rows(map_toks);
    mm = g.add(mm, g.embedding_lookup(c.p("enc.map.type_emb"), in.map_types));
  }
  if (m.cfg.pe.variant == PEVariant::kVanilla) {
    a = g.add(a, g.input(sinusoidal_pe_table(A, m.cfg.d_model)));
    if (M > 0) mm = g.add(mm, g.input(sinusoidal_pe_table(M, m.cfg.d_model)));
  }

  Tensor ang_a, ang_m;
  const Tensor* pa = nullptr;
  const Tensor* pm = nullptr;
  if (uses_rotary(m.cfg)) {
    ang_a = rotary_angles(in.agent_poses, m.cfg.pe);
    pa = &ang_a;
    if (M > 0) {
      ang_m = rotary_angles(in.map_poses, m.cfg.pe);
      pm = &ang_m;
    }
  }

  for (int r = 0; r < m.cfg.encoder_layers; ++r) {
    const std::string pr = "enc.r" + std::to_string(r);
    a = self_block(c, pr + ".a2a", a, nullptr, pa);
    if (M > 0) {
      a = cross_block(c, pr + ".a2m", a, mm, nullptr, pa, pm);
      mm = cross_block(c, pr + ".m2a", mm, a, nullptr, pm, pa);
    }
    a = ffn_block(c, pr + ".affn", a);
    if (M > 0) mm = ffn_block(c, pr + ".mffn", mm);
  }

  SceneNodes out;
  out.agent_tokens = a;
  out.map_tokens = mm;
  out.n_interest = in.n_interest;
  out.agent_poses = in.agent_poses;
  out.map_poses = in.map_poses;
  return out;
}

namespace {

// Additive decoder masks over agent-major rows. Temporal: same agent, key
// position <= query position. Social: same position, same group (self
// included). Everything else is blocked.
Tensor temporal_mask(const std::vector<DecoderAgent>& agents, int S) {
  const int n = (int)agents.size() * S;
  Tensor m(n, n, kMaskOff);
  for (int a = 0; a < (int)agents.size(); ++a) {
    for (int j = 0; j < S; ++j) {
      for (int jk = 0; jk <= j; ++jk) {
        m.at(a * S + j, a * S + jk) = 0.0;
      }
    }
  }
  return m;
}

Tensor social_mask(const std::vector<DecoderAgent>& agents, int S) {
  const int n = (int)agents.size() * S;
  Tensor m(n, n, kMaskOff);
  for (int a = 0; a < (int)agents.size(); ++a) {
    for (int b = 0; b < (int)agents.size(); ++b) {
      if (agents[a].group != agents[b].group) continue;
      for (int j = 0; j < S; ++j) {
        m.at(a * S + j, b * S + j) = 0.0;
      }
    }
  }
  return m;
}

}  // namespace

DecoderOut decoder_forward(Graph& g, const PolicyModel& m,
                           const ParamBinding& pb, const SceneNodes& scene,
                           const std::vector<DecoderAgent>& agents) {
  Ctx c{g, pb, m.cfg};
  if (agents.empty()) throw InvalidArgument("decoder: no agents");
  const int S = (int)agents.front().tokens.size();
  const int A_all = (int)scene.agent_poses.size();
  if (S < 1 || S > m.cfg.max_positions) {
    throw InvalidArgument("decoder: position count out of range");
  }
  for (const DecoderAgent& ag : agents) {
    if ((int)ag.tokens.size() != S || (int)ag.poses.size() != S) {
      throw InvalidArgument("decoder: agents must share one position count");
    }
    if (ag.scene_index < 0 || ag.scene_index >= A_all) {
      throw InvalidArgument("decoder: scene_index out of range");
    }
    for (int t : ag.tokens) {
      if (t < 0 || t >= m.cfg.vocab_size) {
        throw InvalidArgument("decoder: token out of vocabulary");
      }
    }
  }

  // Input rows: position 0 projects the agent's scene token, later positions
  // embed the previous token. Time embeddings cover every position.
  std::vector<NodeId> agent_rows;
  std::vector<int> time_ids;
  std::vector<Pose2> row_poses;
  for (const DecoderAgent& ag : agents) {
    NodeId ctx_tok = g.slice_rows(scene.agent_tokens, ag.scene_index, 1);
    NodeId first = affine(c, ctx_tok, "dec.ctx_proj");
    if (S > 1) {
      std::vector<int> prev(ag.tokens.begin(), ag.tokens.end() - 1);
      NodeId toks = g.embedding_lookup(c.p("dec.tok_emb"), prev);
      agent_rows.push_back(g.concat_rows({first, toks}));
    } else {
      agent_rows.push_back(first);
    }
    for (int j = 0; j < S; ++j) {
      time_ids.push_back(j);
      row_poses.push_back(ag.poses[j]);
    }
  }
  NodeId x = agent_rows.size() > 1 ? g.concat_rows(agent_rows) : agent_rows[0];
  x = g.add(x, g.embedding_lookup(c.p("dec.time_emb"), time_ids));
  if (m.cfg.pe.variant == PEVariant::kVanilla) {
    Tensor pe((int)time_ids.size(), m.cfg.d_model);
    for (int r = 0; r < pe.rows; ++r) {
      const std::vector<double> row = sinusoidal_pe(time_ids[r], m.cfg.d_model);
      for (int cc = 0; cc < m.cfg.d_model; ++cc) pe.at(r, cc) = row[cc];
    }
    x = g.add(x, g.input(std::move(pe)));
  }

  Tensor ang_rows, ang_map, ang_agents;
  const Tensor* pr = nullptr;
  const Tensor* pm = nullptr;
  const Tensor* po = nullptr;
  if (uses_rotary(m.cfg)) {
    ang_rows = rotary_angles(row_poses, m.cfg.pe);
    pr = &ang_rows;
    if (scene.map_tokens >= 0) {
      ang_map = rotary_angles(scene.map_poses, m.cfg.pe);
      pm = &ang_map;
    }
    ang_agents = rotary_angles(scene.agent_poses, m.cfg.pe);
    po = &ang_agents;
  }
  const Tensor t_mask = temporal_mask(agents, S);
  const Tensor s_mask = social_mask(agents, S);

  for (int l = 0; l < m.cfg.decoder_layers; ++l) {
    const std::string pl = "dec.l" + std::to_string(l);
    x = self_block(c, pl + ".t", x, &t_mask, pr);
    x = self_block(c, pl + ".s", x, &s_mask, pr);
    if (scene.map_tokens >= 0) {
      x = cross_block(c, pl + ".m", x, scene.map_tokens, nullptr, pr, pm);
    }
    x = cross_block(c, pl + ".o", x, scene.agent_tokens, nullptr, pr, po);
    x = ffn_block(c, pl + ".ffn", x);
  }

  DecoderOut out;
  out.hidden = lnorm(c, x, "dec.final_ln");
  out.logits = affine(c, out.hidden, "head.token");
  out.values = affine(c, out.hidden, "head.value");
  return out;
}

NodeId background_forward(Graph& g, const PolicyModel& m,
                          const ParamBinding& pb, const SceneNodes& scene,
                          const SceneInputs& in) {
  Ctx c{g, pb, m.cfg};
  const int A = (int)in.agent_poses.size();
  const int O = A - in.n_interest;
  if (O <= 0) return -1;

  NodeId q = g.slice_rows(scene.agent_tokens, in.n_interest, O);
  NodeId kv = scene.map_tokens >= 0
                  ? g.concat_rows({scene.agent_tokens, scene.map_tokens})
                  : scene.agent_tokens;
  Tensor ang_q, ang_k;
  const Tensor* pq = nullptr;
  const Tensor* pk = nullptr;
  if (uses_rotary(m.cfg)) {
    std::vector<Pose2> q_poses(in.agent_poses.begin() + in.n_interest,
                               in.agent_poses.end());
    std::vector<Pose2> k_poses = in.agent_poses;
    if (scene.map_tokens >= 0) {
      k_poses.insert(k_poses.end(), in.map_poses.begin(), in.map_poses.end());
    }
    ang_q = rotary_angles(q_poses, m.cfg.pe);
    ang_k = rotary_angles(k_poses, m.cfg.pe);
    pq = &ang_q;
    pk = &ang_k;
  }
  NodeId x = cross_block(c, "bg.attn", q, kv, nullptr, pq, pk);
  x = ffn_block(c, "bg.ffn", x);
  return affine(c, lnorm(c, x, "bg.final_ln"), "bg.head");
}

namespace {

// Raw-tensor twins of the graph ops, bit-for-bit the same arithmetic, used
// by the incremental rollout path so sampling does not pay tape overhead.
Tensor t_affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out(x.rows, w.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.data.data() + (std::size_t)i * x.cols;
    double* oi = out.data.data() + (std::size_t)i * w.cols;
    for (int k = 0; k < x.cols; ++k) {
      const double xv = xi[k];
      if (xv == 0.0) continue;
      const double* wk = w.data.data() + (std::size_t)k * w.cols;
      for (int j = 0; j < w.cols; ++j) oi[j] += xv * wk[j];
    }
    for (int j = 0; j < w.cols; ++j) oi[j] += b.data[j];
  }
  return out;
}

Tensor t_lnorm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  Tensor out(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < x.cols; ++c) mu += x.at(r, c);
    mu /= x.cols;
    double var = 0.0;
    for (int c = 0; c < x.cols; ++c) {
      const double d = x.at(r, c) - mu;
      var += d * d;
    }
    var /= x.cols;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int c = 0; c < x.cols; ++c) {
      out.at(r, c) = (x.at(r, c) - mu) * inv * gain.data[c] + bias.data[c];
    }
  }
  return out;
}

void t_gelu(Tensor& x) {
  for (double& v : x.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
}

void t_rotary(Tensor& x, const Tensor& ang) {
  for (int r = 0; r < x.rows; ++r) {
    for (int p = 0; p < x.cols / 2; ++p) {
      const double c = std::cos(ang.at(r, p));
      const double s = std::sin(ang.at(r, p));
      const double x0 = x.at(r, 2 * p), x1 = x.at(r, 2 * p + 1);
      x.at(r, 2 * p) = c * x0 - s * x1;
      x.at(r, 2 * p + 1) = s * x0 + c * x1;
    }
  }
}

void t_add_inplace(Tensor& x, const Tensor& y) {
  for (int i = 0; i < x.size(); ++i) x.data[i] += y.data[i];
}

// Attention of one query row over `count` cached rows, one head at a time.
// Mirrors the graph path: scaled dot, max-subtracted softmax, weighted sum.
void attend_row(const double* q, const Tensor& kc, const Tensor& vc, int count,
                int n_heads, int hd, double* out) {
  const double inv_scale = 1.0 / std::sqrt((double)hd);
  std::vector<double> scores((std::size_t)count);
  for (int h = 0; h < n_heads; ++h) {
    const int off = h * hd;
    for (int t = 0; t < count; ++t) {
      const double* kt = kc.data.data() + (std::size_t)t * kc.cols + off;
      double acc = 0.0;
      for (int u = 0; u < hd; ++u) acc += q[off + u] * kt[u];
      scores[t] = acc * inv_scale;
    }
    double mx = scores[0];
    for (int t = 1; t < count; ++t) mx = std::max(mx, scores[t]);
    double sum = 0.0;
    for (int t = 0; t < count; ++t) {
      scores[t] = std::exp(scores[t] - mx);
      sum += scores[t];
    }
    const double inv = 1.0 / sum;
    for (int t = 0; t < count; ++t) scores[t] *= inv;
    for (int u = 0; u < hd; ++u) {
      double acc = 0.0;
      for (int t = 0; t < count; ++t) {
        acc += scores[t] * vc.data[(std::size_t)t * vc.cols + h * hd + u];
      }
      out[off + u] = acc;
    }
  }
}

struct AttnWeights {
  const Tensor *ln_g, *ln_b, *lnq_g, *lnq_b;
  const Tensor *qw, *qb, *kw, *kb, *vw, *vb, *ow, *ob;
};

AttnWeights attn_weights(const ParamStore& p, const std::string& prefix,
                         bool cross) {
  AttnWeights w{};
  if (cross) {
    w.lnq_g = &p.at(prefix + ".ln_q.g");
    w.lnq_b = &p.at(prefix + ".ln_q.b");
    w.ln_g = &p.at(prefix + ".ln_kv.g");
    w.ln_b = &p.at(prefix + ".ln_kv.b");
  } else {
    w.ln_g = &p.at(prefix + ".ln.g");
    w.ln_b = &p.at(prefix + ".ln.b");
    w.lnq_g = w.ln_g;
    w.lnq_b = w.ln_b;
  }
  w.qw = &p.at(prefix + ".q.w");
  w.qb = &p.at(prefix + ".q.b");
  w.kw = &p.at(prefix + ".k.w");
  w.kb = &p.at(prefix + ".k.b");
  w.vw = &p.at(prefix + ".v.w");
  w.vb = &p.at(prefix + ".v.b");
  w.ow = &p.at(prefix + ".o.w");
  w.ob = &p.at(prefix + ".o.b");
  return w;
}

struct FfnWeights {
  const Tensor *ln_g, *ln_b, *w1, *b1, *w2, *b2;
};

FfnWeights ffn_weights(const ParamStore& p, const std::string& prefix) {
  return {&p.at(prefix + ".ln.g"), &p.at(prefix + ".ln.b"),
          &p.at(prefix + ".fc1.w"), &p.at(prefix + ".fc1.b"),
          &p.at(prefix + ".fc2.w"), &p.at(prefix + ".fc2.b")};
}

// Precomputed key/value matrix for a static context (map elements or agent
// scene tokens), rotary already applied to keys.
struct StaticKV {
  Tensor k, v;
};

StaticKV static_kv(const Tensor& toks, const AttnWeights& w,
                   const Tensor* ang) {
  StaticKV kv;
  Tensor n = t_lnorm(toks, *w.ln_g, *w.ln_b);
  kv.k = t_affine(n, *w.kw, *w.kb);
  kv.v = t_affine(n, *w.vw, *w.vb);
  if (ang != nullptr) t_rotary(kv.k, *ang);
  return kv;
}

int sample_token(const std::vector<double>& logits, double temperature,
                 Rng& rng, double* logprob) {
  const int n = (int)logits.size();
  double mx = logits[0];
  int arg = 0;
  for (int i = 1; i < n; ++i) {
    if (logits[i] > mx) {
      mx = logits[i];
      arg = i;
    }
  }
  // Policy log-probs are always reported at temperature 1: that is the
  // distribution RL objectives differentiate, whatever the sampler did.
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(logits[i] - mx);
  int pick = arg;
  if (temperature > 0.0) {
    double zt = 0.0;
    std::vector<double> pt((std::size_t)n);
    for (int i = 0; i < n; ++i) {
      pt[i] = std::exp((logits[i] - mx) / temperature);
      zt += pt[i];
    }
    const double u = rng.uniform(0.0, zt);
    double cum = 0.0;
    pick = n - 1;
    for (int i = 0; i < n; ++i) {
      cum += pt[i];
      if (u < cum) {
        pick = i;
        break;
      }
    }
  }
  *logprob = (logits[pick] - mx) - std::log(z);
  return pick;
}

}  // namespace

RolloutBatch rollout(const PolicyModel& m, const Scenario& s,
                     const RolloutConfig& rc) {
  m.cfg.validate();
  if (rc.n_rollouts < 1) throw InvalidArgument("rollout: need n_rollouts >= 1");
  if (rc.horizon < 1) throw InvalidArgument("rollout: need horizon >= 1");
  if (rc.horizon + 1 > m.cfg.max_positions) {
    throw InvalidArgument("rollout: horizon exceeds model positions");
  }
  if (rc.temperature < 0.0) {
    throw InvalidArgument("rollout: negative temperature");
  }
  if (rc.tokenizer.vocab_size() != m.cfg.vocab_size) {
    throw InvalidArgument("rollout: tokenizer vocabulary does not match model");
  }

  const SceneInputs in = build_scene_inputs(s, m.cfg);
  const ParamStore& P = m.params;
  const int d = m.cfg.d_model;
  const int hd = m.cfg.head_dim();
  const int H = m.cfg.n_heads;
  const int L = m.cfg.decoder_layers;
  const int A = in.n_interest;
  const int B = rc.n_rollouts;
  const int n_streams = B * A;
  const int S = rc.horizon + 1;
  const double dt = rc.tokenizer.dt;
  const bool rot = uses_rotary(m.cfg);

  // Scene encoding runs once on a gradient-free graph; the token loop below
  // works on raw tensors with per-layer caches.
  Graph g(false);
  ParamBinding pb;
  pb.bind(g, P);
  const SceneNodes scene = encode_scene(g, m, pb, in);
  const Tensor agent_toks = g.value(scene.agent_tokens);
  const Tensor* map_toks_ptr = nullptr;
  Tensor map_toks;
  if (scene.map_tokens >= 0) {
    map_toks = g.value(scene.map_tokens);
    map_toks_ptr = &map_toks;
  }

  Tensor ang_map, ang_agents;
  if (rot) {
    if (map_toks_ptr != nullptr) ang_map = rotary_angles(in.map_poses, m.cfg.pe);
    ang_agents = rotary_angles(in.agent_poses, m.cfg.pe);
  }

  // Per-agent history: the token window just before the anchor provides the
  // reference displacement, the observed first token, and the prefix pose.
  struct AgentSetup {
    TokenizedTrack tt;
    Tensor ctx;  // (1, d) projected scene token
    AgentState prefix;
  };
  std::vector<AgentSetup> setup((std::size_t)A);
  for (int a = 0; a < A; ++a) {
    const AgentTrack& tr = s.agent_by_id(in.agent_ids[a]);
    AgentSetup& su = setup[a];
    su.tt = tokenize(tr, rc.tokenizer, s.anchor_time - 2.0 * dt, s.anchor_time);
    Tensor tok_row(1, d);
    for (int cc = 0; cc < d; ++cc) tok_row.at(0, cc) = agent_toks.at(a, cc);
    su.ctx = t_affine(tok_row, P.at("dec.ctx_proj.w"), P.at("dec.ctx_proj.b"));
    RolloutCursor cur(su.tt.start, su.tt.ref_displacement, rc.tokenizer,
                      su.tt.window_start);
    cur.seed_bins(su.tt.ref_bin_x, su.tt.ref_bin_y);
    su.prefix = {cur.pose().x, cur.pose().y, cur.pose().heading, cur.time()};
  }

  std::vector<AttnWeights> wt, ws, wm, wo;
  std::vector<FfnWeights> wf;
  std::vector<StaticKV> map_kv, oth_kv;
  for (int l = 0; l < L; ++l) {
    const std::string pl = "dec.l" + std::to_string(l);
    wt.push_back(attn_weights(P, pl + ".t", false));
    ws.push_back(attn_weights(P, pl + ".s", false));
    wm.push_back(attn_weights(P, pl + ".m", true));
    wo.push_back(attn_weights(P, pl + ".o", true));
    wf.push_back(ffn_weights(P, pl + ".ffn"));
    if (map_toks_ptr != nullptr) {
      map_kv.push_back(static_kv(*map_toks_ptr, wm.back(),
                                 rot ? &ang_map : nullptr));
    }
    oth_kv.push_back(static_kv(agent_toks, wo.back(),
                               rot ? &ang_agents : nullptr));
  }
  const Tensor& fin_g = P.at("dec.final_ln.g");
  const Tensor& fin_b = P.at("dec.final_ln.b");
  const Tensor& head_w = P.at("head.token.w");
  const Tensor& head_b = P.at("head.token.b");
  const Tensor& tok_emb = P.at("dec.tok_emb");
  const Tensor& time_emb = P.at("dec.time_emb");

  // Streams are rollout-major: stream r * A + a. Temporal caches hold one
  // (S, d) block per stream per layer.
  std::vector<std::vector<Tensor>> kcache(L), vcache(L);
  for (int l = 0; l < L; ++l) {
    kcache[l].assign((std::size_t)n_streams, Tensor(S, d));
    vcache[l].assign((std::size_t)n_streams, Tensor(S, d));
  }

  RolloutBatch batch;
  batch.anchor_time = s.anchor_time;
  batch.rollouts.resize((std::size_t)B);
  std::vector<RolloutCursor> cursors;
  std::vector<Rng> rngs;
  cursors.reserve((std::size_t)n_streams);
  for (int r = 0; r < B; ++r) {
    Rollout& ro = batch.rollouts[r];
    ro.seed = derive_seed(rc.seed, (std::uint64_t)r);
    ro.agents.resize((std::size_t)A);
    for (int a = 0; a < A; ++a) {
      const AgentSetup& su = setup[a];
      AgentRollout& ar = ro.agents[a];
      ar.agent_id = in.agent_ids[a];
      ar.history_token = su.tt.tokens.at(0);
      ar.ref_bin_x = su.tt.ref_bin_x;
      ar.ref_bin_y = su.tt.ref_bin_y;
      ar.prefix_state = su.prefix;
      RolloutCursor cur(su.tt.start, su.tt.ref_displacement, rc.tokenizer,
                        su.tt.window_start);
      cur.seed_bins(su.tt.ref_bin_x, su.tt.ref_bin_y);
      cursors.push_back(cur);
      rngs.emplace_back(derive_seed(ro.seed, (std::uint64_t)a));
    }
  }

  // One token slot per stream: the input token for the current position.
  std::vector<int> cur_token((std::size_t)n_streams, 0);
  std::vector<double> q_buf, ctx_buf;

  for (int j = 0; j < S; ++j) {
    // Inputs for this position.
    Tensor x(n_streams, d);
    for (int sid = 0; sid < n_streams; ++sid) {
      const int a = sid % A;
      double* row = x.data.data() + (std::size_t)sid * d;
      if (j == 0) {
        for (int cc = 0; cc < d; ++cc) row[cc] = setup[a].ctx.data[cc];
      } else {
        const double* te =
            tok_emb.data.data() + (std::size_t)cur_token[sid] * d;
        for (int cc = 0; cc < d; ++cc) row[cc] = te[cc];
      }
      const double* tj = time_emb.data.data() + (std::size_t)j * d;
      for (int cc = 0; cc < d; ++cc) row[cc] += tj[cc];
    }
    if (m.cfg.pe.variant == PEVariant::kVanilla) {
      const std::vector<double> pe = sinusoidal_pe(j, d);
      for (int sid = 0; sid < n_streams; ++sid) {
        double* row = x.data.data() + (std::size_t)sid * d;
        for (int cc = 0; cc < d; ++cc) row[cc] += pe[cc];
      }
    }

    Tensor ang_rows;
    if (rot) {
      std::vector<Pose2> poses((std::size_t)n_streams);
      for (int sid = 0; sid < n_streams; ++sid) {
        poses[sid] = pose_to_frame(cursors[sid].pose(), in.scene_frame);
      }
      ang_rows = rotary_angles(poses, m.cfg.pe);
    }

    for (int l = 0; l < L; ++l) {
      // Temporal self-attention over this stream's cached positions.
      {
        const AttnWeights& w = wt[l];
        Tensor n = t_lnorm(x, *w.ln_g, *w.ln_b);
        Tensor q = t_affine(n, *w.qw, *w.qb);
        Tensor k = t_affine(n, *w.kw, *w.kb);
        Tensor v = t_affine(n, *w.vw, *w.vb);
        if (rot) {
          t_rotary(q, ang_rows);
          t_rotary(k, ang_rows);
        }
        Tensor ctx(n_streams, d);
        for (int sid = 0; sid < n_streams; ++sid) {
          Tensor& kc = kcache[l][sid];
          Tensor& vc = vcache[l][sid];
          for (int cc = 0; cc < d; ++cc) {
            kc.at(j, cc) = k.at(sid, cc);
            vc.at(j, cc) = v.at(sid, cc);
          }
          attend_row(q.data.data() + (std::size_t)sid * d, kc, vc, j + 1, H,
                     hd, ctx.data.data() + (std::size_t)sid * d);
        }
        t_add_inplace(x, t_affine(ctx, *w.ow, *w.ob));
      }
      // Social attention within each rollout at this position.
      {
        const AttnWeights& w = ws[l];
        Tensor n = t_lnorm(x, *w.ln_g, *w.ln_b);
        Tensor q = t_affine(n, *w.qw, *w.qb);
        Tensor k = t_affine(n, *w.kw, *w.kb);
        Tensor v = t_affine(n, *w.vw, *w.vb);
        if (rot) {
          t_rotary(q, ang_rows);
          t_rotary(k, ang_rows);
        }
        Tensor ctx(n_streams, d);
        for (int r = 0; r < B; ++r) {
          // Views of this rollout's block rows.
          Tensor kb(A, d), vb(A, d);
          for (int a = 0; a < A; ++a) {
            for (int cc = 0; cc < d; ++cc) {
              kb.at(a, cc) = k.at(r * A + a, cc);
              vb.at(a, cc) = v.at(r * A + a, cc);
            }
          }
          for (int a = 0; a < A; ++a) {
            attend_row(q.data.data() + (std::size_t)(r * A + a) * d, kb, vb, A,
                       H, hd, ctx.data.data() + (std::size_t)(r * A + a) * d);
          }
        }
        t_add_inplace(x, t_affine(ctx, *w.ow, *w.ob));
      }
      // Map and agent-context cross-attention over precomputed kv.
      if (map_toks_ptr != nullptr) {
        const AttnWeights& w = wm[l];
        Tensor n = t_lnorm(x, *w.lnq_g, *w.lnq_b);
        Tensor q = t_affine(n, *w.qw, *w.qb);
        if (rot) t_rotary(q, ang_rows);
        Tensor ctx(n_streams, d);
        for (int sid = 0; sid < n_streams; ++sid) {
          attend_row(q.data.data() + (std::size_t)sid * d, map_kv[l].k,
                     map_kv[l].v, map_kv[l].k.rows, H, hd,
                     ctx.data.data() + (std::size_t)sid * d);
        }
        t_add_inplace(x, t_affine(ctx, *w.ow, *w.ob));
      }
      {
        const AttnWeights& w = wo[l];
        Tensor n = t_lnorm(x, *w.lnq_g, *w.lnq_b);
        Tensor q = t_affine(n, *w.qw, *w.qb);
        if (rot) t_rotary(q, ang_rows);
        Tensor ctx(n_streams, d);
        for (int sid = 0; sid < n_streams; ++sid) {
          attend_row(q.data.data() + (std::size_t)sid * d, oth_kv[l].k,
                     oth_kv[l].v, oth_kv[l].k.rows, H, hd,
                     ctx.data.data() + (std::size_t)sid * d);
        }
        t_add_inplace(x, t_affine(ctx, *w.ow, *w.ob));
      }
      {
        const FfnWeights& w = wf[l];
        Tensor h = t_affine(t_lnorm(x, *w.ln_g, *w.ln_b), *w.w1, *w.b1);
        t_gelu(h);
        t_add_inplace(x, t_affine(h, *w.w2, *w.b2));
      }
    }

    if (j == 0) {
      // Position 0 predicts the observed history token; nothing to sample.
      // Advancing by that token moves every cursor to the anchor pose.
      for (int sid = 0; sid < n_streams; ++sid) {
        const int a = sid % A;
        cur_token[sid] = setup[a].tt.tokens.at(0);
        const AgentState st = cursors[sid].advance(cur_token[sid]);
        batch.rollouts[sid / A].agents[a].states.push_back(st);
      }
      continue;
    }

    const Tensor logits = t_affine(t_lnorm(x, fin_g, fin_b), head_w, head_b);
    std::vector<double> row((std::size_t)m.cfg.vocab_size);
    for (int sid = 0; sid < n_streams; ++sid) {
      for (int cc = 0; cc < m.cfg.vocab_size; ++cc) {
        row[cc] = logits.at(sid, cc);
      }
      double lp = 0.0;
      const int tok = sample_token(row, rc.temperature, rngs[sid], &lp);
      AgentRollout& ar = batch.rollouts[sid / A].agents[sid % A];
      ar.tokens.push_back(tok);
      ar.logprobs.push_back(lp);
      ar.states.push_back(cursors[sid].advance(tok));
      cur_token[sid] = tok;
    }
  }
  return batch;
}

std::vector<DecoderAgent> decoder_batch_from_rollouts(
    const SceneInputs& in, const RolloutBatch& batch) {
  std::vector<DecoderAgent> out;
  for (int r = 0; r < (int)batch.rollouts.size(); ++r) {
    const Rollout& ro = batch.rollouts[r];
    for (const AgentRollout& ar : ro.agents) {
      DecoderAgent da;
      da.group = r;
      da.scene_index = -1;
      for (int i = 0; i < (int)in.agent_ids.size(); ++i) {
        if (in.agent_ids[i] == ar.agent_id) {
          da.scene_index = i;
          break;
        }
      }
      if (da.scene_index < 0) {
        throw InvalidArgument("rollout batch: agent missing from scene inputs");
      }
      if (ar.states.size() != ar.tokens.size() + 1) {
        throw InvalidArgument("rollout batch: states do not match tokens");
      }
      da.tokens.push_back(ar.history_token);
      da.tokens.insert(da.tokens.end(), ar.tokens.begin(), ar.tokens.end());
      da.poses.push_back(pose_to_frame(ar.prefix_state.pose(), in.scene_frame));
      for (std::size_t i = 0; i + 1 < ar.states.size(); ++i) {
        da.poses.push_back(pose_to_frame(ar.states[i].pose(), in.scene_frame));
      }
      out.push_back(std::move(da));
    }
  }
  return out;
}

}  // namespace motiongen
