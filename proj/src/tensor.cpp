#include "caad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace caad::ad {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

thread_local Tape* g_tape = nullptr;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void check_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

bool any_tracked(std::initializer_list<const Tensor*> ts) {
  if (g_tape == nullptr) return false;
  for (const Tensor* t : ts)
    if (t->impl_->tracked()) return true;
  return false;
}

Tensor make_result(Shape shape, std::vector<double> value) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(value);
  return Tensor(impl);
}

// Record a node for `out` whose backward closure is `back`. Inputs are kept
// alive by the node for the duration of the tape.
void track(Tensor& out, std::vector<Tensor> ins, std::function<void()> back) {
  Tape::Node node;
  node.out = out.impl_;
  node.ins.reserve(ins.size());
  for (auto& t : ins) node.ins.push_back(t.impl_);
  node.back = std::move(back);
  out.impl_->node = g_tape->record(std::move(node));
}
}  // namespace

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape s) {
  auto n = numel(s);
  return make_result(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(Shape s, double v) {
  auto n = numel(s);
  return make_result(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
}

Tensor Tensor::scalar(double v) { return make_result({1}, {v}); }

Tensor Tensor::from(Shape s, std::vector<double> data) {
  if (numel(s) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("Tensor::from: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(s));
  return make_result(std::move(s), std::move(data));
}

Tensor Tensor::leaf(Shape s, std::vector<double> data, bool requires_grad) {
  Tensor t = from(std::move(s), std::move(data));
  t.impl_->requires_grad = requires_grad;
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar, shape " + shape_str(shape()));
  return impl_->value[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!impl_) throw std::logic_error("Tensor::grad: undefined tensor");
  const_cast<TensorImpl*>(impl_.get())->ensure_grad();
  return impl_->grad;
}

void Tensor::backward() const {
  Tape* t = Tape::current();
  if (t == nullptr) throw std::logic_error("backward: no active tape");
  t->backward(*this);
}

Tape::Tape() {
  prev_ = g_tape;
  g_tape = this;
}

Tape::~Tape() { g_tape = prev_; }

Tape* Tape::current() { return g_tape; }

int Tape::record(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("backward: tape already consumed by a previous backward pass");
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  consumed_ = true;

  loss.impl_->ensure_grad();
  loss.impl_->grad[0] = 1.0;
  if (loss.impl_->node < 0) return;  // loss is a leaf; nothing else to do

  // Mark ancestors of the loss so each needed node runs exactly once.
  std::vector<char> needed(nodes_.size(), 0);
  std::vector<int> stack{loss.impl_->node};
  needed[static_cast<std::size_t>(loss.impl_->node)] = 1;
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    for (const auto& in : nodes_[static_cast<std::size_t>(i)].ins) {
      if (in->node >= 0 && !needed[static_cast<std::size_t>(in->node)]) {
        needed[static_cast<std::size_t>(in->node)] = 1;
        stack.push_back(in->node);
      }
    }
  }
  for (int i = loss.impl_->node; i >= 0; --i) {
    if (!needed[static_cast<std::size_t>(i)]) continue;
    Node& n = nodes_[static_cast<std::size_t>(i)];
    n.out->ensure_grad();
    for (auto& in : n.ins) in->ensure_grad();
    n.back();
  }
}

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> v(a.values());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.values()[i];
  Tensor out = make_result(a.shape(), std::move(v));
  if (any_tracked({&a, &b})) {
    auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
    track(out, {a, b}, [ai, bi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i];
        bi->grad[i] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> v(a.values());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= b.values()[i];
  Tensor out = make_result(a.shape(), std::move(v));
  if (any_tracked({&a, &b})) {
    auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
    track(out, {a, b}, [ai, bi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i];
        bi->grad[i] -= oi->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> v(a.values());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.values()[i];
  Tensor out = make_result(a.shape(), std::move(v));
  if (any_tracked({&a, &b})) {
    auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
    track(out, {a, b}, [ai, bi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i] * bi->value[i];
        bi->grad[i] += oi->grad[i] * ai->value[i];
      }
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  std::vector<double> v(a.values());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] /= b.values()[i];
  Tensor out = make_result(a.shape(), std::move(v));
  if (any_tracked({&a, &b})) {
    auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
    track(out, {a, b}, [ai, bi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i] / bi->value[i];
        bi->grad[i] -= oi->grad[i] * oi->value[i] / bi->value[i];
      }
    });
  }
  return out;
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> v(a.values());
  for (double& x : v) x += s;
  Tensor out = make_result(a.shape(), std::move(v));
  if (any_tracked({&a})) {
    auto ai = a.impl_, oi = out.impl_;
    track(out, {a}, [ai, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> v(a.values());
  for (double& x : v) x *= s;
  Tensor out = make_result(a.shape(), std::move(v));
  if (any_tracked({&a})) {
    auto ai = a.impl_, oi = out.impl_;
    track(out, {a}, [ai, oi, s] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * s;
    });
  }
  return out;
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    shape_error("matmul", a.shape(), b.shape());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m) * n, 0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      double* crow = v.data() + i * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  Tensor out = make_result({m, n}, std::move(v));
  if (any_tracked({&a, &b})) {
    auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
    track(out, {a, b}, [ai, bi, oi, m, k, n] {
      const double* gc = oi->grad.data();
      // dA += dC * B^T
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = gc + i * n;
          const double* brow = bi->value.data() + p * n;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ai->grad[static_cast<std::size_t>(i) * k + p] += acc;
        }
      // dB += A^T * dC
      for (int p = 0; p < k; ++p)
        for (int i = 0; i < m; ++i) {
          const double aip = ai->value[static_cast<std::size_t>(i) * k + p];
          const double* grow = gc + i * n;
          double* brow = bi->grad.data() + p * n;
          for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("transpose: expected 2-D, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> v(a.values().size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j) * m + i] = a.values()[static_cast<std::size_t>(i) * n + j];
  Tensor out = make_result({n, m}, std::move(v));
  if (any_tracked({&a})) {
    auto ai = a.impl_, oi = out.impl_;
    track(out, {a}, [ai, oi, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          ai->grad[static_cast<std::size_t>(i) * n + j] += oi->grad[static_cast<std::size_t>(j) * m + i];
    });
  }
  return out;
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  Tensor out = Tensor::scalar(acc);
  if (any_tracked({&a})) {
    auto ai = a.impl_, oi = out.impl_;
    track(out, {a}, [ai, oi] {
      for (double& g : ai->grad) g += oi->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  Tensor out = Tensor::scalar(acc * inv);
  if (any_tracked({&a})) {
    auto ai = a.impl_, oi = out.impl_;
    track(out, {a}, [ai, oi, inv] {
      for (double& g : ai->grad) g += oi->grad[0] * inv;
    });
  }
  return out;
}

Tensor sum_rows(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("sum_rows: expected 2-D, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(i)] += a.values()[static_cast<std::size_t>(i) * n + j];
  Tensor out = make_result({m}, std::move(v));
  if (any_tracked({&a})) {
    auto ai = a.impl_, oi = out.impl_;
    track(out, {a}, [ai, oi, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ai->grad[static_cast<std::size_t>(i) * n + j] += oi->grad[static_cast<std::size_t>(i)];
    });
  }
  return out;
}

// ---- row-vector broadcasts --------------------------------------------------

namespace {
void check_rowvec(const std::string& op, const Tensor& x, const Tensor& v) {
  if (x.ndim() != 2 || v.ndim() != 1 || v.dim(0) != x.dim(1)) shape_error(op, x.shape(), v.shape());
}
}  // namespace

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  check_rowvec("add_rowvec", x, v);
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out_v(x.values());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out_v[static_cast<std::size_t>(i) * n + j] += v.values()[static_cast<std::size_t>(j)];
  Tensor out = make_result(x.shape(), std::move(out_v));
  if (any_tracked({&x, &v})) {
    auto xi = x.impl_, vi = v.impl_, oi = out.impl_;
    track(out, {x, v}, [xi, vi, oi, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double g = oi->grad[static_cast<std::size_t>(i) * n + j];
          xi->grad[static_cast<std::size_t>(i) * n + j] += g;
          vi->grad[static_cast<std::size_t>(j)] += g;
        }
    });
  }
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  check_rowvec("mul_rowvec", x, v);
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out_v(x.values());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out_v[static_cast<std::size_t>(i) * n + j] *= v.values()[static_cast<std::size_t>(j)];
  Tensor out = make_result(x.shape(), std::move(out_v));
  if (any_tracked({&x, &v})) {
    auto xi = x.impl_, vi = v.impl_, oi = out.impl_;
    track(out, {x, v}, [xi, vi, oi, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          const double g = oi->grad[idx];
          xi->grad[idx] += g * vi->value[static_cast<std::size_t>(j)];
          vi->grad[static_cast<std::size_t>(j)] += g * xi->value[idx];
        }
    });
  }
  return out;
}

Tensor div_rowvec(const Tensor& x, const Tensor& v) {
  check_rowvec("div_rowvec", x, v);
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out_v(x.values());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out_v[static_cast<std::size_t>(i) * n + j] /= v.values()[static_cast<std::size_t>(j)];
  Tensor out = make_result(x.shape(), std::move(out_v));
  if (any_tracked({&x, &v})) {
    auto xi = x.impl_, vi = v.impl_, oi = out.impl_;
    track(out, {x, v}, [xi, vi, oi, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          const double g = oi->grad[idx];
          const double vj = vi->value[static_cast<std::size_t>(j)];
          xi->grad[idx] += g / vj;
          vi->grad[static_cast<std::size_t>(j)] -= g * oi->value[idx] / vj;
        }
    });
  }
  return out;
}

// ---- slicing / joining ------------------------------------------------------

Tensor row(const Tensor& x, int i) { return slice_rows(x, i, 1); }

Tensor slice_rows(const Tensor& x, int start, int count) {
  if (x.ndim() != 2 || start < 0 || count < 0 || start + count > x.dim(0))
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(start) + "," +
                                std::to_string(start + count) + ") for shape " + shape_str(x.shape()));
  const int n = x.dim(1);
  std::vector<double> v(x.values().begin() + static_cast<std::ptrdiff_t>(start) * n,
                        x.values().begin() + static_cast<std::ptrdiff_t>(start + count) * n);
  Tensor out = make_result({count, n}, std::move(v));
  if (any_tracked({&x})) {
    auto xi = x.impl_, oi = out.impl_;
    track(out, {x}, [xi, oi, start, n, count] {
      for (std::size_t i = 0; i < static_cast<std::size_t>(count) * n; ++i)
        xi->grad[static_cast<std::size_t>(start) * n + i] += oi->grad[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int start, int count) {
  if (x.ndim() != 2 || start < 0 || count < 0 || start + count > x.dim(1))
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(start) + "," +
                                std::to_string(start + count) + ") for shape " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m) * count);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < count; ++j)
      v[static_cast<std::size_t>(i) * count + j] = x.values()[static_cast<std::size_t>(i) * n + start + j];
  Tensor out = make_result({m, count}, std::move(v));
  if (any_tracked({&x})) {
    auto xi = x.impl_, oi = out.impl_;
    track(out, {x}, [xi, oi, m, n, start, count] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < count; ++j)
          xi->grad[static_cast<std::size_t>(i) * n + start + j] += oi->grad[static_cast<std::size_t>(i) * count + j];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input");
  const int n = xs.front().ndim() == 1 ? xs.front().dim(0) : xs.front().dim(1);
  int m = 0;
  for (const Tensor& t : xs) {
    const int tn = t.ndim() == 1 ? t.dim(0) : t.dim(1);
    if (tn != n) shape_error("concat_rows", xs.front().shape(), t.shape());
    m += t.ndim() == 1 ? 1 : t.dim(0);
  }
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m) * n);
  for (const Tensor& t : xs) v.insert(v.end(), t.values().begin(), t.values().end());
  Tensor out = make_result({m, n}, std::move(v));
  bool tracked = false;
  if (g_tape)
    for (const Tensor& t : xs) tracked = tracked || t.impl_->tracked();
  if (tracked) {
    auto oi = out.impl_;
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const Tensor& t : xs) ins.push_back(t.impl_);
    track(out, xs, [ins, oi] {
      std::size_t off = 0;
      for (const auto& in : ins) {
        for (std::size_t i = 0; i < in->grad.size(); ++i) in->grad[i] += oi->grad[off + i];
        off += in->grad.size();
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
  const int m = xs.front().dim(0);
  int n = 0;
  for (const Tensor& t : xs) {
    if (t.ndim() != 2 || t.dim(0) != m) shape_error("concat_cols", xs.front().shape(), t.shape());
    n += t.dim(1);
  }
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  int col = 0;
  for (const Tensor& t : xs) {
    const int tn = t.dim(1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < tn; ++j)
        v[static_cast<std::size_t>(i) * n + col + j] = t.values()[static_cast<std::size_t>(i) * tn + j];
    col += tn;
  }
  Tensor out = make_result({m, n}, std::move(v));
  bool tracked = false;
  if (g_tape)
    for (const Tensor& t : xs) tracked = tracked || t.impl_->tracked();
  if (tracked) {
    auto oi = out.impl_;
    std::vector<std::shared_ptr<TensorImpl>> ins;
    std::vector<int> widths;
    for (const Tensor& t : xs) {
      ins.push_back(t.impl_);
      widths.push_back(t.dim(1));
    }
    track(out, xs, [ins, oi, m, n, widths] {
      int col = 0;
      for (std::size_t k = 0; k < ins.size(); ++k) {
        const int tn = widths[k];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < tn; ++j)
            ins[k]->grad[static_cast<std::size_t>(i) * tn + j] += oi->grad[static_cast<std::size_t>(i) * n + col + j];
        col += tn;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape s) {
  if (numel(s) != x.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(s));
  Tensor out = make_result(std::move(s), x.values());
  if (any_tracked({&x})) {
    auto xi = x.impl_, oi = out.impl_;
    track(out, {x}, [xi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor select_index(const Tensor& x, std::int64_t i) {
  if (i < 0 || i >= x.size())
    throw std::invalid_argument("select_index: index " + std::to_string(i) + " out of range for " +
                                shape_str(x.shape()));
  Tensor out = Tensor::scalar(x.values()[static_cast<std::size_t>(i)]);
  if (any_tracked({&x})) {
    auto xi = x.impl_, oi = out.impl_;
    track(out, {x}, [xi, oi, i] { xi->grad[static_cast<std::size_t>(i)] += oi->grad[0]; });
  }
  return out;
}

// ---- normalization ----------------------------------------------------------

namespace {
void rows_view(const Tensor& x, int& m, int& n) {
  if (x.ndim() == 1) {
    m = 1;
    n = x.dim(0);
  } else if (x.ndim() == 2) {
    m = x.dim(0);
    n = x.dim(1);
  } else {
    throw std::invalid_argument("expected 1-D or 2-D tensor, got " + shape_str(x.shape()));
  }
}
}  // namespace

Tensor softmax(const Tensor& x) {
  int m, n;
  rows_view(x, m, n);
  for (double v : x.values())
    if (std::isnan(v)) throw std::domain_error("softmax: NaN input");
  std::vector<double> v(x.values().size());
  for (int i = 0; i < m; ++i) {
    const double* xr = x.data() + static_cast<std::ptrdiff_t>(i) * n;
    double* yr = v.data() + static_cast<std::ptrdiff_t>(i) * n;
    double mx = xr[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      denom += yr[j];
    }
    for (int j = 0; j < n; ++j) yr[j] /= denom;
  }
  Tensor out = make_result(x.shape(), std::move(v));
  if (any_tracked({&x})) {
    auto xi = x.impl_, oi = out.impl_;
    track(out, {x}, [xi, oi, m, n] {
      for (int i = 0; i < m; ++i) {
        const double* y = oi->value.data() + static_cast<std::ptrdiff_t>(i) * n;
        const double* gy = oi->grad.data() + static_cast<std::ptrdiff_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
        double* gx = xi->grad.data() + static_cast<std::ptrdiff_t>(i) * n;
        for (int j = 0; j < n; ++j) gx[j] += (gy[j] - dot) * y[j];
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, double eps) {
  int m, n;
  rows_view(x, m, n);
  std::vector<double> v(x.values().size());
  std::vector<double> inv_std(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double* xr = x.data() + static_cast<std::ptrdiff_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xr[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    double* yr = v.data() + static_cast<std::ptrdiff_t>(i) * n;
    for (int j = 0; j < n; ++j) yr[j] = (xr[j] - mu) * is;
  }
  Tensor out = make_result(x.shape(), std::move(v));
  if (any_tracked({&x})) {
    auto xi = x.impl_, oi = out.impl_;
    track(out, {x}, [xi, oi, m, n, inv_std] {
      for (int i = 0; i < m; ++i) {
        const double* xh = oi->value.data() + static_cast<std::ptrdiff_t>(i) * n;
        const double* gy = oi->grad.data() + static_cast<std::ptrdiff_t>(i) * n;
        double mg = 0.0, mgx = 0.0;
        for (int j = 0; j < n; ++j) {
          mg += gy[j];
          mgx += gy[j] * xh[j];
        }
        mg /= n;
        mgx /= n;
        const double is = inv_std[static_cast<std::size_t>(i)];
        double* gx = xi->grad.data() + static_cast<std::ptrdiff_t>(i) * n;
        for (int j = 0; j < n; ++j) gx[j] += is * (gy[j] - mg - xh[j] * mgx);
      }
    });
  }
  return out;
}

// ---- nonlinearities ---------------------------------------------------------

namespace {
template <typename F, typename DF>
Tensor unary_op(const Tensor& x, F f, DF df) {
  std::vector<double> v(x.values());
  for (double& e : v) e = f(e);
  Tensor out = make_result(x.shape(), std::move(v));
  if (any_tracked({&x})) {
    auto xi = x.impl_, oi = out.impl_;
    track(out, {x}, [xi, oi, df] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i)
        xi->grad[i] += oi->grad[i] * df(xi->value[i], oi->value[i]);
    });
  }
  return out;
}
}  // namespace

Tensor gelu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v / kSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v / kSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sin(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

Tensor pow_const(const Tensor& x, double p) {
  return unary_op(
      x, [p](double v) { return std::pow(v, p); },
      [p](double v, double) { return p == 0.0 ? 0.0 : p * std::pow(v, p - 1.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary_op(
      x, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor min_elem(const Tensor& a, const Tensor& b) {
  check_same_shape("min_elem", a, b);
  std::vector<double> v(a.values());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::min(v[i], b.values()[i]);
  Tensor out = make_result(a.shape(), std::move(v));
  if (any_tracked({&a, &b})) {
    auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
    track(out, {a, b}, [ai, bi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        if (ai->value[i] <= bi->value[i])
          ai->grad[i] += oi->grad[i];
        else
          bi->grad[i] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor cumsum(const Tensor& x) {
  if (x.ndim() != 1) throw std::invalid_argument("cumsum: expected 1-D, got " + shape_str(x.shape()));
  std::vector<double> v(x.values());
  for (std::size_t i = 1; i < v.size(); ++i) v[i] += v[i - 1];
  Tensor out = make_result(x.shape(), std::move(v));
  if (any_tracked({&x})) {
    auto xi = x.impl_, oi = out.impl_;
    track(out, {x}, [xi, oi] {
      double acc = 0.0;
      for (std::size_t i = oi->grad.size(); i-- > 0;) {
        acc += oi->grad[i];
        xi->grad[i] += acc;
      }
    });
  }
  return out;
}

Tensor apply_mask(const Tensor& x, const std::vector<double>& mask01) {
  if (mask01.size() != x.values().size())
    throw std::invalid_argument("apply_mask: mask length " + std::to_string(mask01.size()) +
                                " does not match tensor " + shape_str(x.shape()));
  std::vector<double> v(x.values());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask01[i] != 0.0 ? v[i] : 0.0;
  Tensor out = make_result(x.shape(), std::move(v));
  if (any_tracked({&x})) {
    auto xi = x.impl_, oi = out.impl_;
    auto mask = mask01;
    track(out, {x}, [xi, oi, mask] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i)
        if (mask[i] != 0.0) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

}  // namespace caad::ad
