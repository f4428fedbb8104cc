#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace caad::ad {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until gradients flow
  bool requires_grad = false;
  int node = -1;  // index on the recording tape, -1 for leaves and untracked results

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
  bool tracked() const { return requires_grad || node >= 0; }
};

// Value-semantics handle over shared storage. Copies alias the same buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v);
  static Tensor from(Shape s, std::vector<double> data);
  // A leaf participating in gradient computation (model parameter or probe input).
  static Tensor leaf(Shape s, std::vector<double> data, bool requires_grad = true);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->value.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }

  std::vector<double>& values() { return impl_->value; }
  const std::vector<double>& values() const { return impl_->value; }
  double* data() { return impl_->value.data(); }
  const double* data() const { return impl_->value.data(); }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  const std::vector<double>& grad() const;
  double grad_at(std::int64_t i) const { return grad()[static_cast<std::size_t>(i)]; }
  void zero_grad() {
    if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  // Runs reverse-mode accumulation on the active tape. The loss must be scalar.
  void backward() const;

  std::shared_ptr<TensorImpl> impl_;  // exposed for the op layer and tests

  explicit Tensor(std::shared_ptr<TensorImpl> i) : impl_(std::move(i)) {}
};

// Records primitive operations in topological order during a forward episode.
// One backward pass per tape; a second backward throws.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  struct Node {
    std::shared_ptr<TensorImpl> out;
    std::vector<std::shared_ptr<TensorImpl>> ins;
    std::function<void()> back;
  };

  int record(Node n);
  void backward(const Tensor& loss);
  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
};

// ---- primitive operations -------------------------------------------------
// All ops are pure with respect to their inputs; results are recorded on the
// active tape when any input is tracked.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_rows(const Tensor& a);  // [m,n] -> [m]

// broadcast a length-n vector over the rows of an [m,n] matrix
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor mul_rowvec(const Tensor& x, const Tensor& v);
Tensor div_rowvec(const Tensor& x, const Tensor& v);

Tensor row(const Tensor& x, int i);                       // [m,n] -> [1,n]
Tensor slice_rows(const Tensor& x, int start, int count);
Tensor slice_cols(const Tensor& x, int start, int count);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor reshape(const Tensor& x, Shape s);
Tensor select_index(const Tensor& x, std::int64_t i);     // flat index -> scalar

Tensor softmax(const Tensor& x);             // along last axis (1-D or 2-D)
Tensor layer_norm(const Tensor& x, double eps);  // along last axis, no affine

Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor pow_const(const Tensor& x, double p);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor min_elem(const Tensor& a, const Tensor& b);
Tensor cumsum(const Tensor& x);  // 1-D prefix sums
Tensor apply_mask(const Tensor& x, const std::vector<double>& mask01);

}  // namespace caad::ad
