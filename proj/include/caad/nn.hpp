#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "caad/rng.hpp"
#include "caad/tensor.hpp"

namespace caad::nn {

using ad::Tensor;

// Ordered registry of named parameters. Iteration order is creation order,
// which the optimizer and checkpoint format rely on for determinism.
class ParamStore {
 public:
  Tensor create(const std::string& name, ad::Shape shape, std::vector<double> init);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return map_.count(name) > 0; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t total_size() const;
  void zero_grads();

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Tensor> map_;
};

std::vector<double> normal_init(std::int64_t n, double stddev, Rng& rng);

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
  Tensor forward(const Tensor& x) const;  // [m,in] -> [m,out]
};

Linear make_linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
                   double w_scale = 1.0);
Linear make_zero_linear(ParamStore& ps, const std::string& name, int in, int out);

// Two-layer perceptron with GELU.
struct Mlp {
  Linear l1, l2;
  Tensor forward(const Tensor& x) const;
};

Mlp make_mlp(ParamStore& ps, const std::string& name, int in, int hidden, int out, Rng& rng,
             double out_scale = 1.0);

// Pre-normalization multi-head self-attention block with a position-wise
// feed-forward, both with residual connections. No positional encoding: the
// block is permutation-equivariant over tokens.
struct AttentionBlock {
  int heads = 4;
  bool prenorm = true;
  double ln_eps = 1e-12;
  Linear q, k, v, o, ff1, ff2;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;

  Tensor forward(const Tensor& tokens) const;  // [L,C] -> [L,C]
};

AttentionBlock make_attention_block(ParamStore& ps, const std::string& name, int dim, int heads,
                                    int ffn_mult, Rng& rng);

}  // namespace caad::nn
