#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "caad/nn.hpp"
#include "caad/rng.hpp"
#include "caad/tensor.hpp"
#include "test_support.hpp"

using namespace caad;
using ad::Tensor;
using testing::close;
using testing::finite_diff;
using testing::random_leaf;

TEST_CASE("matmul identity and hand product") {
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor x = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(ad::matmul(eye, x).values() == x.values());

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {1, 1});
  const auto c = ad::matmul(a, b).values();
  CHECK(c[0] == doctest::Approx(3.0));
  CHECK(c[1] == doctest::Approx(7.0));

  CHECK_THROWS_AS(ad::matmul(a, Tensor::from({3, 1}, {1, 1, 1})), std::invalid_argument);
}

TEST_CASE("matmul gradient of sum equals ones * b^T and matches finite differences") {
  Rng rng(7);
  Tensor a = random_leaf({4, 5}, rng);
  Tensor b = random_leaf({5, 3}, rng);
  {
    ad::Tape tape;
    ad::sum(ad::matmul(a, b)).backward();
  }
  // analytic: dA = ones(4,3) * b^T
  for (int i = 0; i < 4; ++i)
    for (int p = 0; p < 5; ++p) {
      double expect = 0.0;
      for (int j = 0; j < 3; ++j) expect += b.values()[static_cast<std::size_t>(p * 3 + j)];
      CHECK(close(a.grad()[static_cast<std::size_t>(i * 5 + p)], expect, 1e-12));
    }
  const auto fd = finite_diff(a, [&] { return ad::sum(ad::matmul(a, b)).item(); });
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(close(a.grad()[i], fd[i], 1e-4));
}

TEST_CASE("softmax values") {
  const auto u = ad::softmax(Tensor::from({3}, {0, 0, 0})).values();
  for (double v : u) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const auto s = ad::softmax(Tensor::from({3}, {1000, 0, 0})).values();
  CHECK(std::abs(s[0] - 1.0) < 1e-12);
  CHECK(s[1] < 1e-12);
  CHECK(std::isfinite(s[0]));

  double total = 0.0;
  Rng rng(3);
  Tensor x = random_leaf({5}, rng, 3.0);
  const Tensor sm = ad::softmax(x);
  for (double v : sm.values()) total += v;
  CHECK(std::abs(total - 1.0) < 1e-12);

  CHECK_THROWS_AS(ad::softmax(Tensor::from({2}, {std::nan(""), 0.0})), std::domain_error);
}

TEST_CASE("softmax gradient matches finite differences") {
  Rng rng(11);
  Tensor x = random_leaf({6}, rng, 2.0);
  Tensor w = Tensor::from({6}, {0.3, -1.0, 2.0, 0.1, -0.4, 1.3});
  auto f = [&] { return ad::sum(ad::mul(ad::softmax(x), w)).item(); };
  {
    ad::Tape tape;
    ad::sum(ad::mul(ad::softmax(x), w)).backward();
  }
  const auto fd = finite_diff(x, f);
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(close(x.grad()[i], fd[i], 1e-4, 1e-8));
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::leaf({3}, {1, 2, 3});
  {
    ad::Tape tape;
    ad::sum(x).backward();
  }
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));

  Tensor y = Tensor::leaf({2}, {1, 2});
  {
    ad::Tape tape;
    ad::sum(ad::mul(y, y)).backward();
  }
  CHECK(y.grad()[0] == doctest::Approx(2.0));
  CHECK(y.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("repeated backward on a consumed tape errors") {
  Tensor x = Tensor::leaf({2}, {1, 2});
  ad::Tape tape;
  Tensor loss = ad::sum(ad::mul(x, x));
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), std::logic_error);
}

TEST_CASE("non-scalar loss errors") {
  Tensor x = Tensor::leaf({2}, {1, 2});
  ad::Tape tape;
  Tensor y = ad::mul(x, x);
  CHECK_THROWS_AS(y.backward(), std::invalid_argument);
}

TEST_CASE("primitive gradients match finite differences over 10 seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tensor a = random_leaf({3, 4}, rng);
    Tensor b = random_leaf({3, 4}, rng);
    Tensor v = random_leaf({4}, rng);
    Tensor m1 = random_leaf({3, 4}, rng);
    Tensor m2 = random_leaf({4, 2}, rng);
    Tensor pos = Tensor::leaf({3, 4}, [&] {
      std::vector<double> vals(12);
      for (double& x : vals) x = 0.5 + rng.uniform(0.0, 2.0);
      return vals;
    }());
    Tensor w = random_leaf({3, 4}, rng);  // weights fixed in f below

    struct Case {
      const char* name;
      Tensor leaf;
      std::function<Tensor()> graph;
    };
    std::vector<Case> cases;
    cases.push_back({"add", a, [&] { return ad::add(a, b); }});
    cases.push_back({"sub", a, [&] { return ad::sub(a, b); }});
    cases.push_back({"mul", b, [&] { return ad::mul(a, b); }});
    cases.push_back({"div", b, [&] { return ad::div(a, pos); }});
    cases.push_back({"div_num", a, [&] { return ad::div(a, pos); }});
    cases.push_back({"matmul", m1, [&] { return ad::matmul(m1, m2); }});
    cases.push_back({"matmul_rhs", m2, [&] { return ad::matmul(m1, m2); }});
    cases.push_back({"transpose", m1, [&] { return ad::transpose(m1); }});
    cases.push_back({"add_rowvec", v, [&] { return ad::add_rowvec(a, v); }});
    cases.push_back({"mul_rowvec", v, [&] { return ad::mul_rowvec(a, v); }});
    cases.push_back({"div_rowvec", v, [&] {
                       Tensor vp = ad::add_scalar(ad::mul(v, v), 0.5);
                       return ad::div_rowvec(a, vp);
                     }});
    cases.push_back({"softmax", a, [&] { return ad::softmax(a); }});
    cases.push_back({"layer_norm", a, [&] { return ad::layer_norm(a, 1e-12); }});
    cases.push_back({"gelu", a, [&] { return ad::gelu(a); }});
    cases.push_back({"exp", a, [&] { return ad::exp(a); }});
    cases.push_back({"log", pos, [&] { return ad::log(pos); }});
    cases.push_back({"sigmoid", a, [&] { return ad::sigmoid(a); }});
    cases.push_back({"sin", a, [&] { return ad::sin(a); }});
    cases.push_back({"cos", a, [&] { return ad::cos(a); }});
    cases.push_back({"pow", pos, [&] { return ad::pow_const(pos, 1.7); }});
    cases.push_back({"min_elem", a, [&] { return ad::min_elem(a, b); }});
    cases.push_back({"cumsum", v, [&] { return ad::cumsum(v); }});
    cases.push_back({"slice", m1, [&] { return ad::slice_cols(ad::slice_rows(m1, 1, 2), 1, 3); }});
    cases.push_back({"concat", m1, [&] { return ad::concat_rows({m1, ad::slice_rows(m1, 0, 1)}); }});
    cases.push_back({"sum_rows", a, [&] {
                       return ad::reshape(ad::sum_rows(a), {3, 1});
                     }});
    cases.push_back({"mean", a, [&] {
                       return ad::reshape(ad::mean(a), {1, 1});
                     }});

    for (auto& c : cases) {
      auto scalarize = [&]() -> Tensor {
        Tensor out = c.graph();
        Tensor probe = Tensor::from(out.shape(), [&] {
          Rng prng(seed * 131 + 7);
          std::vector<double> vals(static_cast<std::size_t>(out.size()));
          for (double& x : vals) x = prng.normal();
          return vals;
        }());
        return ad::sum(ad::mul(out, probe));
      };
      c.leaf.zero_grad();
      {
        ad::Tape tape;
        scalarize().backward();
      }
      std::vector<double> analytic = c.leaf.grad();
      const auto fd = finite_diff(c.leaf, [&] { return scalarize().item(); });
      for (std::size_t i = 0; i < fd.size(); ++i) {
        INFO("op ", c.name, " seed ", seed, " index ", i);
        CHECK(close(analytic[i], fd[i], 1e-4, 1e-7));
      }
    }
  }
}

TEST_CASE("layer_norm row statistics before affine") {
  Rng rng(5);
  Tensor x = random_leaf({4, 16}, rng, 3.0);
  Tensor y = ad::layer_norm(x, 1e-12);
  for (int i = 0; i < 4; ++i) {
    double mu = 0.0, var = 0.0;
    for (int j = 0; j < 16; ++j) mu += y.values()[static_cast<std::size_t>(i * 16 + j)];
    mu /= 16;
    for (int j = 0; j < 16; ++j) {
      const double d = y.values()[static_cast<std::size_t>(i * 16 + j)] - mu;
      var += d * d;
    }
    var /= 16;
    CHECK(std::abs(mu) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-8);
  }
}

namespace {
nn::AttentionBlock zeroed_block(nn::ParamStore& ps, int dim, int heads) {
  Rng rng(1);
  nn::AttentionBlock blk = nn::make_attention_block(ps, "blk", dim, heads, 4, rng);
  for (const auto& name : ps.names()) {
    nn::Tensor t = ps.get(name);
    if (name.find(".ln") == std::string::npos)
      std::fill(t.values().begin(), t.values().end(), 0.0);
  }
  return blk;
}
}  // namespace

TEST_CASE("attention block with zero projections is the identity") {
  nn::ParamStore ps;
  nn::AttentionBlock blk = zeroed_block(ps, 8, 4);
  Rng rng(2);
  Tensor x = random_leaf({5, 8}, rng);
  const Tensor y = blk.forward(x);
  for (std::size_t i = 0; i < x.values().size(); ++i)
    CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-14));
}

TEST_CASE("attention with identity value path adds the token mean") {
  nn::ParamStore ps;
  nn::AttentionBlock blk = zeroed_block(ps, 6, 1);
  blk.prenorm = false;  // normalization disabled
  for (int i = 0; i < 6; ++i) {
    blk.v.w.values()[static_cast<std::size_t>(i * 6 + i)] = 1.0;
    blk.o.w.values()[static_cast<std::size_t>(i * 6 + i)] = 1.0;
  }
  Rng rng(4);
  Tensor x = random_leaf({4, 6}, rng);
  const Tensor y = blk.forward(x);
  for (int j = 0; j < 6; ++j) {
    double mean = 0.0;
    for (int i = 0; i < 4; ++i) mean += x.values()[static_cast<std::size_t>(i * 6 + j)];
    mean /= 4;
    for (int i = 0; i < 4; ++i) {
      const double expect = x.values()[static_cast<std::size_t>(i * 6 + j)] + mean;
      CHECK(y.values()[static_cast<std::size_t>(i * 6 + j)] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention block is permutation-equivariant over tokens") {
  nn::ParamStore ps;
  Rng rng(9);
  nn::AttentionBlock blk = nn::make_attention_block(ps, "blk", 8, 4, 4, rng);
  const int L = 6;
  Tensor x = random_leaf({L, 8}, rng);
  const Tensor y = blk.forward(x);

  // permute tokens 2..L cyclically
  std::vector<int> perm{0, 1, 3, 4, 5, 2};
  std::vector<double> px(x.values().size());
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < 8; ++j)
      px[static_cast<std::size_t>(i * 8 + j)] =
          x.values()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)] * 8 + j)];
  const Tensor py = blk.forward(Tensor::from({L, 8}, px));
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(std::abs(py.values()[static_cast<std::size_t>(i * 8 + j)] -
                     y.values()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)] * 8 + j)]) < 1e-10);
}

TEST_CASE("attention rejects dim not divisible by heads") {
  nn::ParamStore ps;
  Rng rng(1);
  CHECK_THROWS_AS(nn::make_attention_block(ps, "bad", 6, 4, 4, rng), std::invalid_argument);
}

TEST_CASE("forward pass is bit-deterministic") {
  nn::ParamStore ps;
  Rng rng(13);
  nn::AttentionBlock blk = nn::make_attention_block(ps, "blk", 8, 2, 4, rng);
  Tensor x = random_leaf({3, 8}, rng);
  const Tensor y1 = blk.forward(x);
  const Tensor y2 = blk.forward(x);
  CHECK(y1.values() == y2.values());
}

TEST_CASE("attention block gradient matches finite differences") {
  nn::ParamStore ps;
  Rng rng(17);
  nn::AttentionBlock blk = nn::make_attention_block(ps, "blk", 8, 2, 2, rng);
  Tensor x = random_leaf({4, 8}, rng, 0.5);
  auto f = [&] { return ad::mean(blk.forward(x)).item(); };
  ps.zero_grads();
  x.zero_grad();
  {
    ad::Tape tape;
    ad::mean(blk.forward(x)).backward();
  }
  const auto fd_x = finite_diff(x, f);
  for (std::size_t i = 0; i < fd_x.size(); ++i) CHECK(close(x.grad()[i], fd_x[i], 1e-4, 1e-7));
  for (const char* pname : {"blk.q.w", "blk.v.w", "blk.ff1.w", "blk.ln1.g"}) {
    nn::Tensor p = ps.get(pname);
    const auto fd = finite_diff(p, f);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      INFO("param ", pname, " index ", i);
      CHECK(close(p.grad()[i], fd[i], 1e-4, 1e-7));
    }
  }
}
