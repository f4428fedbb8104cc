#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caad/nn.hpp"
#include "caad/scene.hpp"

namespace caad {

struct ModelConfig {
  int embed_dim = 64;       // C
  int heads = 4;
  int rounds = 2;           // encoder rounds and joint refinement layers
  int ffn_mult = 4;
  int joint_modes = 6;      // M
  int marginal_modes = 6;   // K
  int t_fut = kFutureSteps;
  int p_sp = kSpatialPoints;
  double dt = kDt;
  double sp_spacing = kSpatialSpacing;
  double sigma_min = 0.05;
  double sigma_max = 5.0;
  bool joint_branch = true;
  int route_feat_points = 8;
  int drivable_feat_points = 12;

  std::string serialize() const;                   // key=value lines
  static ModelConfig deserialize(const std::string& text);
};

// One joint scene mode: ego trajectory with per-coordinate sigma plus one
// trajectory per agent under the same mode index.
struct SceneHypothesis {
  int mode_index = 0;
  TrajectoryTP ego_traj;                  // mean
  std::vector<double> ego_sigma;          // T*2 entries, meters
  std::vector<TrajectoryTP> agent_trajs;  // N entries
  double ego_mode_logit = 0.0;
  std::vector<double> agent_mode_logits;  // N entries (logit of this mode per agent)
};

struct MarginalPredictionSet {
  std::vector<std::vector<TrajectoryTP>> candidates;  // [N][K]
  std::vector<std::vector<double>> logits;            // [N][K]
};

// Graph-facing forward results. Tensors stay connected to the tape so losses
// can backpropagate; the to_* helpers snapshot plain values for geometry and
// scoring code.
struct ModelOutput {
  int n_agents = 0;

  nn::Tensor ego_tp_mu;      // [T*2]
  nn::Tensor ego_tp_sigma;   // [T*2]
  nn::Tensor ego_sp;         // [P*2]
  std::vector<nn::Tensor> agent_candidates;   // per agent [K*T*2]
  std::vector<nn::Tensor> agent_logits;       // per agent [K]

  bool has_joint = false;
  nn::Tensor ego_mode_logits;                     // [M]
  std::vector<nn::Tensor> ego_mode_mu;            // M x [T*2]
  std::vector<nn::Tensor> ego_mode_sigma;         // M x [T*2]
  std::vector<std::vector<nn::Tensor>> agent_mode_traj;  // [M][N] x [T*2]
  std::vector<nn::Tensor> agent_mode_logits;      // per agent [M]

  // flattened constant-velocity anchors used by the heads
  std::vector<double> ego_anchor;                 // T*2
  std::vector<std::vector<double>> agent_anchor;  // [N] x T*2

  nn::Tensor candidate(int agent, int k, int t_fut) const;  // [T*2] view

  MarginalPredictionSet to_marginal_set(int k_modes, int t_fut) const;
  std::vector<SceneHypothesis> to_hypotheses(int t_fut) const;
  TrajectoryTP ego_plan_tp() const;
  TrajectorySP ego_plan_sp() const;
};

struct MarginalEmbeddings {
  nn::Tensor tokens;  // [(1+N+1), C]: ego, agents, map
  int n_agents = 0;

  nn::Tensor ego() const { return ad::row(tokens, 0); }
  nn::Tensor agent(int i) const { return ad::row(tokens, 1 + i); }
  nn::Tensor map() const { return ad::row(tokens, 1 + n_agents); }
};

// Compact CaAD network: shared history encoder with entity self-attention,
// marginal trajectory heads, learned joint-mode embeddings refined by
// Agent-Mode Attention, and joint heads emitting per-mode scene hypotheses
// with a Gaussian ego output.
class CaadModel {
 public:
  CaadModel(const ModelConfig& config, std::uint64_t param_seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Scene must already be in the ego frame.
  MarginalEmbeddings encode(const Scene& scene) const;
  ModelOutput forward(const Scene& scene) const;

  // Agent-Mode Attention for one entity stack [(1+M), C] at refinement layer r.
  nn::Tensor agent_mode_attention(const nn::Tensor& stack, int layer) const;

  // Parameters of the per-agent joint decoder; frozen during ego-scope
  // alignment.
  bool is_agent_joint_head_param(const std::string& name) const;

 private:
  nn::Tensor entity_features(const Scene& scene) const;
  nn::Tensor map_features(const Scene& scene) const;

  ModelConfig cfg_;
  nn::ParamStore params_;
  nn::Mlp hist_mlp_;
  nn::Mlp map_mlp_;
  std::vector<nn::AttentionBlock> enc_attn_;
  // joint branch
  nn::Tensor ego_mode_embed_;    // [M, C]
  nn::Tensor agent_mode_embed_;  // [M, C]
  std::vector<nn::AttentionBlock> joint_entity_attn_;
  std::vector<nn::AttentionBlock> joint_mode_attn_;
  nn::Mlp ego_joint_head_;   // C -> T*4 + 1
  nn::Mlp agent_joint_head_; // C -> T*2 + 1
  // marginal heads
  nn::Mlp agent_traj_head_;  // C -> K*T*2
  nn::Linear agent_logit_head_;  // C -> K
  nn::Mlp ego_tp_head_;      // C -> T*2
  nn::Linear ego_tp_sigma_head_;  // C -> T*2
  nn::Mlp ego_sp_head_;      // C -> P-1 heading increments
};

// anchors: constant-velocity extrapolation in the ego frame
std::vector<double> cv_anchor(const AgentState& a, int t_fut, double dt);

}  // namespace caad
