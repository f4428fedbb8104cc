#include "caad/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace caad::nn {

Tensor ParamStore::create(const std::string& name, ad::Shape shape, std::vector<double> init) {
  if (map_.count(name)) throw std::logic_error("ParamStore: duplicate parameter '" + name + "'");
  Tensor t = Tensor::leaf(std::move(shape), std::move(init), true);
  names_.push_back(name);
  map_.emplace(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& name : names_) n += static_cast<std::size_t>(map_.at(name).size());
  return n;
}

void ParamStore::zero_grads() {
  for (const auto& name : names_) {
    Tensor t = map_.at(name);
    t.impl_->ensure_grad();
    t.zero_grad();
  }
}

std::vector<double> normal_init(std::int64_t n, double stddev, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return v;
}

Tensor Linear::forward(const Tensor& x) const { return ad::add_rowvec(ad::matmul(x, w), b); }

Linear make_linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
                   double w_scale) {
  const double stddev = w_scale / std::sqrt(static_cast<double>(in));
  Linear l;
  l.w = ps.create(name + ".w", {in, out}, normal_init(static_cast<std::int64_t>(in) * out, stddev, rng));
  l.b = ps.create(name + ".b", {out}, std::vector<double>(static_cast<std::size_t>(out), 0.0));
  return l;
}

Linear make_zero_linear(ParamStore& ps, const std::string& name, int in, int out) {
  Linear l;
  l.w = ps.create(name + ".w", {in, out}, std::vector<double>(static_cast<std::size_t>(in) * out, 0.0));
  l.b = ps.create(name + ".b", {out}, std::vector<double>(static_cast<std::size_t>(out), 0.0));
  return l;
}

Tensor Mlp::forward(const Tensor& x) const { return l2.forward(ad::gelu(l1.forward(x))); }

Mlp make_mlp(ParamStore& ps, const std::string& name, int in, int hidden, int out, Rng& rng,
             double out_scale) {
  Mlp m;
  m.l1 = make_linear(ps, name + ".l1", in, hidden, rng);
  m.l2 = make_linear(ps, name + ".l2", hidden, out, rng, out_scale);
  return m;
}

Tensor AttentionBlock::forward(const Tensor& tokens) const {
  const int dim = tokens.dim(1);
  if (dim % heads != 0)
    throw std::invalid_argument("AttentionBlock: dim " + std::to_string(dim) +
                                " not divisible by head count " + std::to_string(heads));
  const int hd = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor h = tokens;
  if (prenorm) h = ad::add_rowvec(ad::mul_rowvec(ad::layer_norm(h, ln_eps), ln1_g), ln1_b);
  Tensor qm = q.forward(h), km = k.forward(h), vm = v.forward(h);
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int i = 0; i < heads; ++i) {
    Tensor qh = ad::slice_cols(qm, i * hd, hd);
    Tensor kh = ad::slice_cols(km, i * hd, hd);
    Tensor vh = ad::slice_cols(vm, i * hd, hd);
    Tensor att = ad::softmax(ad::mul_scalar(ad::matmul(qh, ad::transpose(kh)), scale));
    head_outs.push_back(ad::matmul(att, vh));
  }
  Tensor x = ad::add(tokens, o.forward(ad::concat_cols(head_outs)));

  Tensor h2 = x;
  if (prenorm) h2 = ad::add_rowvec(ad::mul_rowvec(ad::layer_norm(h2, ln_eps), ln2_g), ln2_b);
  return ad::add(x, ff2.forward(ad::gelu(ff1.forward(h2))));
}

AttentionBlock make_attention_block(ParamStore& ps, const std::string& name, int dim, int heads,
                                    int ffn_mult, Rng& rng) {
  if (dim % heads != 0)
    throw std::invalid_argument("make_attention_block: dim " + std::to_string(dim) +
                                " not divisible by head count " + std::to_string(heads));
  AttentionBlock b;
  b.heads = heads;
  b.q = make_linear(ps, name + ".q", dim, dim, rng);
  b.k = make_linear(ps, name + ".k", dim, dim, rng);
  b.v = make_linear(ps, name + ".v", dim, dim, rng);
  b.o = make_linear(ps, name + ".o", dim, dim, rng, 0.5);
  b.ff1 = make_linear(ps, name + ".ff1", dim, dim * ffn_mult, rng);
  b.ff2 = make_linear(ps, name + ".ff2", dim * ffn_mult, dim, rng, 0.5);
  b.ln1_g = ps.create(name + ".ln1.g", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 1.0));
  b.ln1_b = ps.create(name + ".ln1.b", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  b.ln2_g = ps.create(name + ".ln2.g", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 1.0));
  b.ln2_b = ps.create(name + ".ln2.b", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  return b;
}

}  // namespace caad::nn
