#include "caad/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace caad {

using ad::Tensor;

namespace {
constexpr double kFeatScale = 0.1;  // meters -> feature units

// raw-bias value putting the initial sigma near 0.3 m
double sigma_bias(const ModelConfig& c) {
  const double frac = (0.3 - c.sigma_min) / (c.sigma_max - c.sigma_min);
  return std::log(frac / (1.0 - frac));
}

std::vector<geo::Vec2> resample_fixed(const geo::Polyline& line, int n) {
  std::vector<geo::Vec2> out;
  const double len = line.length();
  if (len < 1e-9) {
    out.assign(static_cast<std::size_t>(n), line.pts.front());
    return out;
  }
  const auto res = geo::resample_arclength(line, len / (n - 1));
  out = res.line.pts;
  while (static_cast<int>(out.size()) > n) out.pop_back();
  while (static_cast<int>(out.size()) < n) out.push_back(line.pts.back());
  return out;
}
}  // namespace

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "embed_dim=" << embed_dim << "\nheads=" << heads << "\nrounds=" << rounds
     << "\nffn_mult=" << ffn_mult << "\njoint_modes=" << joint_modes
     << "\nmarginal_modes=" << marginal_modes << "\nt_fut=" << t_fut << "\np_sp=" << p_sp
     << "\nsigma_min=" << sigma_min << "\nsigma_max=" << sigma_max
     << "\njoint_branch=" << (joint_branch ? 1 : 0) << "\nroute_feat_points=" << route_feat_points
     << "\ndrivable_feat_points=" << drivable_feat_points << "\n";
  return os.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "embed_dim") c.embed_dim = std::stoi(val);
    else if (key == "heads") c.heads = std::stoi(val);
    else if (key == "rounds") c.rounds = std::stoi(val);
    else if (key == "ffn_mult") c.ffn_mult = std::stoi(val);
    else if (key == "joint_modes") c.joint_modes = std::stoi(val);
    else if (key == "marginal_modes") c.marginal_modes = std::stoi(val);
    else if (key == "t_fut") c.t_fut = std::stoi(val);
    else if (key == "p_sp") c.p_sp = std::stoi(val);
    else if (key == "sigma_min") c.sigma_min = std::stod(val);
    else if (key == "sigma_max") c.sigma_max = std::stod(val);
    else if (key == "joint_branch") c.joint_branch = std::stoi(val) != 0;
    else if (key == "route_feat_points") c.route_feat_points = std::stoi(val);
    else if (key == "drivable_feat_points") c.drivable_feat_points = std::stoi(val);
  }
  return c;
}

std::vector<double> cv_anchor(const AgentState& a, int t_fut, double dt) {
  const Vec2 v = a.velocity();
  const Pose2& c = a.current();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(t_fut) * 2);
  for (int k = 1; k <= t_fut; ++k) {
    out.push_back(c.x + v.x * dt * k);
    out.push_back(c.y + v.y * dt * k);
  }
  return out;
}

CaadModel::CaadModel(const ModelConfig& config, std::uint64_t param_seed) : cfg_(config) {
  if (config.embed_dim % config.heads != 0)
    throw std::invalid_argument("ModelConfig: embed_dim must be divisible by heads");
  if (config.joint_modes < 2) throw std::invalid_argument("ModelConfig: joint_modes must be >= 2");
  Rng rng(param_seed);
  const int C = cfg_.embed_dim;
  const int T = cfg_.t_fut;
  const int hist_in = 1 + kHistorySteps * 4 + 2;  // is_ego flag, poses, footprint
  hist_mlp_ = nn::make_mlp(params_, "enc.hist", hist_in, C, C, rng);
  const int map_in = (cfg_.route_feat_points + cfg_.drivable_feat_points) * 2;
  map_mlp_ = nn::make_mlp(params_, "enc.map", map_in, C, C, rng);
  for (int r = 0; r < cfg_.rounds; ++r)
    enc_attn_.push_back(nn::make_attention_block(params_, "enc.attn" + std::to_string(r), C,
                                                 cfg_.heads, cfg_.ffn_mult, rng));
  agent_traj_head_ = nn::make_mlp(params_, "heads.agent_traj", C, C,
                                  cfg_.marginal_modes * T * 2, rng, 0.1);
  agent_logit_head_ = nn::make_linear(params_, "heads.agent_logit", C, cfg_.marginal_modes, rng, 0.5);
  ego_tp_head_ = nn::make_mlp(params_, "heads.ego_tp", C, C, T * 2, rng, 0.1);
  ego_tp_sigma_head_ = nn::make_zero_linear(params_, "heads.ego_tp_sigma", C, T * 2);
  for (double& b : ego_tp_sigma_head_.b.values()) b = sigma_bias(cfg_);
  ego_sp_head_ = nn::make_mlp(params_, "heads.ego_sp", C, C, cfg_.p_sp - 1, rng, 0.1);
  if (cfg_.joint_branch) {
    const int M = cfg_.joint_modes;
    ego_mode_embed_ = params_.create("joint.ego_modes", {M, C},
                                     nn::normal_init(static_cast<std::int64_t>(M) * C, 0.5, rng));
    agent_mode_embed_ = params_.create("joint.agent_modes", {M, C},
                                       nn::normal_init(static_cast<std::int64_t>(M) * C, 0.5, rng));
    for (int r = 0; r < cfg_.rounds; ++r) {
      joint_entity_attn_.push_back(nn::make_attention_block(
          params_, "joint.entity_attn" + std::to_string(r), C, cfg_.heads, cfg_.ffn_mult, rng));
      joint_mode_attn_.push_back(nn::make_attention_block(
          params_, "joint.mode_attn" + std::to_string(r), C, cfg_.heads, cfg_.ffn_mult, rng));
    }
    ego_joint_head_ = nn::make_mlp(params_, "joint.ego_head", C, C, T * 4 + 1, rng, 0.1);
    for (int e = 0; e < T * 2; ++e)
      ego_joint_head_.l2.b.values()[static_cast<std::size_t>(T * 2 + e)] = sigma_bias(cfg_);
    agent_joint_head_ = nn::make_mlp(params_, "joint.agent_head", C, C, T * 2 + 1, rng, 0.1);
  }
}

bool CaadModel::is_agent_joint_head_param(const std::string& name) const {
  return name.rfind("joint.agent_head.", 0) == 0;
}

Tensor CaadModel::entity_features(const Scene& scene) const {
  const int n = static_cast<int>(scene.agents.size());
  const int in = 1 + kHistorySteps * 4 + 2;
  std::vector<double> feats;
  feats.reserve(static_cast<std::size_t>(n + 1) * in);
  auto push_entity = [&](const AgentState& a, bool is_ego) {
    feats.push_back(is_ego ? 1.0 : 0.0);
    for (const Pose2& p : a.history) {
      feats.push_back(p.x * kFeatScale);
      feats.push_back(p.y * kFeatScale);
      feats.push_back(std::cos(p.heading));
      feats.push_back(std::sin(p.heading));
    }
    feats.push_back(a.footprint.length * kFeatScale);
    feats.push_back(a.footprint.width * kFeatScale);
  };
  push_entity(scene.ego, true);
  for (const AgentState& a : scene.agents) push_entity(a, false);
  return Tensor::from({n + 1, in}, std::move(feats));
}

Tensor CaadModel::map_features(const Scene& scene) const {
  std::vector<double> feats;
  for (const Vec2& p : resample_fixed(scene.route, cfg_.route_feat_points)) {
    feats.push_back(p.x * kFeatScale);
    feats.push_back(p.y * kFeatScale);
  }
  geo::Polyline boundary;
  boundary.pts = scene.drivable.verts;
  boundary.pts.push_back(scene.drivable.verts.front());
  for (const Vec2& p : resample_fixed(boundary, cfg_.drivable_feat_points)) {
    feats.push_back(p.x * kFeatScale);
    feats.push_back(p.y * kFeatScale);
  }
  const int n_feats = static_cast<int>(feats.size());
  return Tensor::from({1, n_feats}, std::move(feats));
}

MarginalEmbeddings CaadModel::encode(const Scene& scene) const {
  MarginalEmbeddings out;
  out.n_agents = static_cast<int>(scene.agents.size());
  Tensor entity_tokens = hist_mlp_.forward(entity_features(scene));
  Tensor map_token = map_mlp_.forward(map_features(scene));
  Tensor tokens = ad::concat_rows({entity_tokens, map_token});
  for (const auto& block : enc_attn_) tokens = block.forward(tokens);
  out.tokens = tokens;
  return out;
}

Tensor CaadModel::agent_mode_attention(const Tensor& stack, int layer) const {
  if (!cfg_.joint_branch) throw std::logic_error("agent_mode_attention: joint branch disabled");
  if (stack.dim(0) != 1 + cfg_.joint_modes)
    throw std::invalid_argument("agent_mode_attention: stack must have 1+M tokens");
  return joint_mode_attn_[static_cast<std::size_t>(layer)].forward(stack);
}

ModelOutput CaadModel::forward(const Scene& scene) const {
  const int T = cfg_.t_fut;
  const int K = cfg_.marginal_modes;
  const int n = static_cast<int>(scene.agents.size());

  ModelOutput out;
  out.n_agents = n;
  out.ego_anchor = cv_anchor(scene.ego, T, cfg_.dt);
  for (const AgentState& a : scene.agents) out.agent_anchor.push_back(cv_anchor(a, T, cfg_.dt));

  MarginalEmbeddings emb = encode(scene);

  // marginal heads
  Tensor entity_rows = ad::slice_rows(emb.tokens, 0, n + 1);
  Tensor ego_row = ad::row(entity_rows, 0);
  Tensor ego_anchor_t = Tensor::from({T * 2}, out.ego_anchor);
  out.ego_tp_mu = ad::add(ad::reshape(ego_tp_head_.forward(ego_row), {T * 2}), ego_anchor_t);
  Tensor sig_raw = ad::reshape(ego_tp_sigma_head_.forward(ego_row), {T * 2});
  out.ego_tp_sigma = ad::add_scalar(
      ad::mul_scalar(ad::sigmoid(sig_raw), cfg_.sigma_max - cfg_.sigma_min), cfg_.sigma_min);

  {
    // spatial head: heading increments integrated at fixed 2 m steps
    Tensor dpsi = ad::reshape(ego_sp_head_.forward(ego_row), {cfg_.p_sp - 1});
    Tensor psi = ad::cumsum(dpsi);
    Tensor dx = ad::mul_scalar(ad::cos(psi), cfg_.sp_spacing);
    Tensor dy = ad::mul_scalar(ad::sin(psi), cfg_.sp_spacing);
    Tensor xs = ad::reshape(ad::cumsum(dx), {cfg_.p_sp - 1, 1});
    Tensor ys = ad::reshape(ad::cumsum(dy), {cfg_.p_sp - 1, 1});
    Tensor pts = ad::concat_cols({xs, ys});
    Tensor origin = Tensor::zeros({1, 2});
    out.ego_sp = ad::reshape(ad::concat_rows({origin, pts}), {cfg_.p_sp * 2});
  }

  if (n > 0) {
    Tensor agent_rows = ad::slice_rows(emb.tokens, 1, n);
    Tensor offsets = agent_traj_head_.forward(agent_rows);   // [N, K*T*2]
    Tensor logits = agent_logit_head_.forward(agent_rows);   // [N, K]
    for (int i = 0; i < n; ++i) {
      Tensor anchor_rep = Tensor::zeros({K * T * 2});
      for (int k = 0; k < K; ++k)
        for (int e = 0; e < T * 2; ++e)
          anchor_rep.values()[static_cast<std::size_t>(k * T * 2 + e)] = out.agent_anchor[static_cast<std::size_t>(i)][static_cast<std::size_t>(e)];
      out.agent_candidates.push_back(
          ad::add(ad::reshape(ad::row(offsets, i), {K * T * 2}), anchor_rep));
      out.agent_logits.push_back(ad::reshape(ad::row(logits, i), {K}));
    }
  }

  if (!cfg_.joint_branch) return out;

  // ---- joint branch: ego-centric scene modes ------------------------------
  out.has_joint = true;
  const int M = cfg_.joint_modes;
  std::vector<Tensor> stacks;  // entity stacks [(1+M), C]; index 0 = ego
  stacks.push_back(ad::concat_rows({ego_row, ego_mode_embed_}));
  for (int i = 0; i < n; ++i)
    stacks.push_back(ad::concat_rows({ad::row(entity_rows, 1 + i), agent_mode_embed_}));
  Tensor map_row = emb.map();

  for (int r = 0; r < cfg_.rounds; ++r) {
    // entity self-attention over the decoded (slot 0) embeddings plus map
    std::vector<Tensor> slot0;
    for (const Tensor& st : stacks) slot0.push_back(ad::row(st, 0));
    slot0.push_back(map_row);
    Tensor ent = joint_entity_attn_[static_cast<std::size_t>(r)].forward(ad::concat_rows(slot0));
    map_row = ad::row(ent, n + 1);
    // slot-0 updates feed forward into the next round's stacks
    for (int e = 0; e <= n; ++e) {
      Tensor updated = ad::concat_rows({ad::row(ent, e), ad::slice_rows(stacks[static_cast<std::size_t>(e)], 1, M)});
      stacks[static_cast<std::size_t>(e)] = agent_mode_attention(updated, r);
    }
  }

  // joint heads
  Tensor ego_modes = ad::slice_rows(stacks[0], 1, M);             // [M, C]
  Tensor ego_dec = ego_joint_head_.forward(ego_modes);            // [M, T*4+1]
  std::vector<Tensor> mode_logits;
  for (int m = 0; m < M; ++m) {
    Tensor dec = ad::row(ego_dec, m);
    Tensor mu = ad::add(ad::reshape(ad::slice_cols(dec, 0, T * 2), {T * 2}), ego_anchor_t);
    Tensor sraw = ad::reshape(ad::slice_cols(dec, T * 2, T * 2), {T * 2});
    Tensor sigma = ad::add_scalar(
        ad::mul_scalar(ad::sigmoid(sraw), cfg_.sigma_max - cfg_.sigma_min), cfg_.sigma_min);
    out.ego_mode_mu.push_back(mu);
    out.ego_mode_sigma.push_back(sigma);
    mode_logits.push_back(ad::reshape(ad::slice_cols(dec, T * 4, 1), {1}));
  }
  out.ego_mode_logits = ad::reshape(ad::concat_rows(mode_logits), {M});

  out.agent_mode_traj.assign(static_cast<std::size_t>(M), {});
  for (int i = 0; i < n; ++i) {
    Tensor agent_modes = ad::slice_rows(stacks[static_cast<std::size_t>(1 + i)], 1, M);
    Tensor dec = agent_joint_head_.forward(agent_modes);  // [M, T*2+1]
    Tensor anchor_t = Tensor::from({T * 2}, out.agent_anchor[static_cast<std::size_t>(i)]);
    std::vector<Tensor> logit_rows;
    for (int m = 0; m < M; ++m) {
      Tensor dm = ad::row(dec, m);
      out.agent_mode_traj[static_cast<std::size_t>(m)].push_back(
          ad::add(ad::reshape(ad::slice_cols(dm, 0, T * 2), {T * 2}), anchor_t));
      logit_rows.push_back(ad::reshape(ad::slice_cols(dm, T * 2, 1), {1}));
    }
    out.agent_mode_logits.push_back(ad::reshape(ad::concat_rows(logit_rows), {M}));
  }
  return out;
}

Tensor ModelOutput::candidate(int agent, int k, int t_fut) const {
  Tensor flat = agent_candidates[static_cast<std::size_t>(agent)];
  return ad::reshape(
      ad::slice_cols(ad::reshape(flat, {1, static_cast<int>(flat.size())}), k * t_fut * 2, t_fut * 2),
      {t_fut * 2});
}

namespace {
TrajectoryTP to_traj(const std::vector<double>& flat, int offset, int t_fut) {
  TrajectoryTP t;
  for (int k = 0; k < t_fut; ++k)
    t.points.push_back({flat[static_cast<std::size_t>(offset + 2 * k)],
                        flat[static_cast<std::size_t>(offset + 2 * k + 1)]});
  return t;
}
}  // namespace

MarginalPredictionSet ModelOutput::to_marginal_set(int k_modes, int t_fut) const {
  MarginalPredictionSet set;
  for (int i = 0; i < n_agents; ++i) {
    const auto& flat = agent_candidates[static_cast<std::size_t>(i)].values();
    std::vector<TrajectoryTP> cands;
    for (int k = 0; k < k_modes; ++k) cands.push_back(to_traj(flat, k * t_fut * 2, t_fut));
    set.candidates.push_back(std::move(cands));
    set.logits.push_back(agent_logits[static_cast<std::size_t>(i)].values());
  }
  return set;
}

std::vector<SceneHypothesis> ModelOutput::to_hypotheses(int t_fut) const {
  std::vector<SceneHypothesis> hyps;
  if (!has_joint) return hyps;
  const int M = static_cast<int>(ego_mode_mu.size());
  for (int m = 0; m < M; ++m) {
    SceneHypothesis h;
    h.mode_index = m;
    h.ego_traj = to_traj(ego_mode_mu[static_cast<std::size_t>(m)].values(), 0, t_fut);
    h.ego_sigma = ego_mode_sigma[static_cast<std::size_t>(m)].values();
    h.ego_mode_logit = ego_mode_logits.values()[static_cast<std::size_t>(m)];
    for (int i = 0; i < n_agents; ++i) {
      h.agent_trajs.push_back(
          to_traj(agent_mode_traj[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)].values(), 0, t_fut));
      h.agent_mode_logits.push_back(
          agent_mode_logits[static_cast<std::size_t>(i)].values()[static_cast<std::size_t>(m)]);
    }
    hyps.push_back(std::move(h));
  }
  return hyps;
}

TrajectoryTP ModelOutput::ego_plan_tp() const {
  return to_traj(ego_tp_mu.values(), 0, static_cast<int>(ego_tp_mu.size()) / 2);
}

TrajectorySP ModelOutput::ego_plan_sp() const {
  TrajectorySP sp;
  const auto& flat = ego_sp.values();
  for (std::size_t k = 0; 2 * k + 1 < flat.size(); ++k)
    sp.points.push_back({flat[2 * k], flat[2 * k + 1]});
  return sp;
}

}  // namespace caad
