#pragma once

#include <functional>
#include <memory>

#include "fas/core/kernels.hpp"
#include "fas/core/tensor.hpp"

namespace fas::core::ad {

struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    // Gradients are only accumulated into nodes that require them; a frozen
    // network shared across threads is therefore never written during
    // backward passes that only differentiate with respect to the input.
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (!has_grad) {
            grad = Tensor(value.shape());
            has_grad = true;
        }
        return grad;
    }
};

// Handle to a tape node. Graphs are built by the free functions below and
// freed when the last Var referencing them goes out of scope; parameter
// leaves survive inside their layers.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Var leaf(Tensor t, bool requires_grad = true) {
        auto n = std::make_shared<Node>();
        n->value = std::move(t);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    bool valid() const { return node_ != nullptr; }
    const Tensor& val() const { return node_->value; }
    Tensor& val() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad_mut() { return node_->ensure_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool r) {
        if (node_) node_->requires_grad = r;
    }
    void zero_grad() {
        if (node_ && node_->has_grad) node_->grad.fill(0.0);
    }
    std::shared_ptr<Node> node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Runs reverse-mode accumulation from a scalar root (shape [1]).
void backward(const Var& root);

Var constant(Tensor t);

// elementwise (same shape)
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var rsub_scalar(double s, const Var& a); // s - a
Var square(const Var& a);
Var abs_(const Var& a);
Var sqrt_(const Var& a, double eps = 1e-12);
Var leaky_relu(const Var& a, double slope = 0.1);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var softplus(const Var& a);
Var clamp_min(const Var& a, double lo);

// x:[n,ci,h,w] w:[co,ci,k,k] b:[co] (optional)
Var conv2d(const Var& x, const Var& w, const Var& b, int64_t stride, int64_t pad);
// x:[n,in] w:[out,in] b:[out] (optional) -> [n,out]
Var dense(const Var& x, const Var& w, const Var& b);
Var matmul_nt(const Var& a, const Var& b); // [n,d] x [c,d]^T -> [n,c]

Var avg_pool(const Var& x, int64_t k);
Var upsample_nearest2(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var global_avg_pool(const Var& x); // [n,c,h,w] -> [n,c]

Var l2_normalize_rows(const Var& x, double eps = 1e-12);    // [n,d]
Var channel_l2_normalize(const Var& x, double eps = 1e-10); // [n,c,h,w], across c
Var scale_channels(const Var& x, Tensor weights);           // constant per-channel scale

Var rowwise_dot(const Var& a, const Var& b); // [n,d],[n,d] -> [n]
Var logsumexp_rows(const Var& x);            // [n,c] -> [n]
Var select_cols(const Var& x, std::vector<int64_t> idx); // [n,c] -> [n]

Var sum_all(const Var& x);  // -> [1]
Var mean_all(const Var& x); // -> [1]

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return mul_scalar(a, s); }

} // namespace fas::core::ad
