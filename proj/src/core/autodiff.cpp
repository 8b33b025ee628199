#include "fas/core/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace fas::core::ad {

namespace K = fas::core::kernels;

void backward(const Var& root) {
    if (root.val().numel() != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    if (!root.node()->requires_grad) return; // nothing below wants a gradient
    // iterative post-order topo sort over the requires_grad subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->inputs.size()) {
            Node* child = n->inputs[idx++].get();
            if (child->requires_grad && visited.insert(child).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->has_grad) n->backward_fn(*n);
    }
}

Var constant(Tensor t) { return Var::leaf(std::move(t), false); }

namespace {

Var make(Tensor value, std::vector<std::shared_ptr<Node>> inputs,
         std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& in : inputs)
        if (in->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->inputs = std::move(inputs);
        n->backward_fn = std::move(fn);
    }
    return Var(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.val().same_shape(b.val()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a.val().shape()) + " vs " +
                                    Tensor::shape_str(b.val().shape()));
}

bool wants(const Node& self, size_t i) { return self.inputs[i]->requires_grad; }

} // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.val().shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a.val()[i] + b.val()[i];
    return make(std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (size_t k = 0; k < 2; ++k) {
            if (!wants(self, k)) continue;
            Tensor& g = self.inputs[k]->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.val()[i] - b.val()[i];
    return make(std::move(out), {a.node(), b.node()}, [](Node& self) {
        if (wants(self, 0)) {
            Tensor& ga = self.inputs[0]->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
        }
        if (wants(self, 1)) {
            Tensor& gb = self.inputs[1]->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) gb[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.val()[i] * b.val()[i];
    return make(std::move(out), {a.node(), b.node()}, [](Node& self) {
        const Tensor& av = self.inputs[0]->value;
        const Tensor& bv = self.inputs[1]->value;
        if (wants(self, 0)) {
            Tensor& ga = self.inputs[0]->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i] * bv[i];
        }
        if (wants(self, 1)) {
            Tensor& gb = self.inputs[1]->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) gb[i] += self.grad[i] * av[i];
        }
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.val()[i] + s;
    return make(std::move(out), {a.node()}, [](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
    });
}

Var mul_scalar(const Var& a, double s) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.val()[i] * s;
    return make(std::move(out), {a.node()}, [s](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i] * s;
    });
}

Var rsub_scalar(double s, const Var& a) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = s - a.val()[i];
    return make(std::move(out), {a.node()}, [](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] -= self.grad[i];
    });
}

Var square(const Var& a) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.val()[i] * a.val()[i];
    return make(std::move(out), {a.node()}, [](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        const Tensor& av = self.inputs[0]->value;
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            ga[i] += self.grad[i] * 2.0 * av[i];
    });
}

Var abs_(const Var& a) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(a.val()[i]);
    return make(std::move(out), {a.node()}, [](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        const Tensor& av = self.inputs[0]->value;
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            ga[i] += self.grad[i] * (av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0));
    });
}

Var sqrt_(const Var& a, double eps) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(a.val()[i] + eps);
    return make(std::move(out), {a.node()}, [](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            ga[i] += self.grad[i] * 0.5 / self.value[i];
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double v = a.val()[i];
        out[i] = v > 0.0 ? v : slope * v;
    }
    return make(std::move(out), {a.node()}, [slope](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        const Tensor& av = self.inputs[0]->value;
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            ga[i] += self.grad[i] * (av[i] > 0.0 ? 1.0 : slope);
    });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var sigmoid(const Var& a) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double v = a.val()[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                          : std::exp(v) / (1.0 + std::exp(v));
    }
    return make(std::move(out), {a.node()}, [](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            const double y = self.value[i];
            ga[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Var tanh_(const Var& a) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(a.val()[i]);
    return make(std::move(out), {a.node()}, [](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            const double y = self.value[i];
            ga[i] += self.grad[i] * (1.0 - y * y);
        }
    });
}

Var softplus(const Var& a) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double v = a.val()[i];
        out[i] = v > 30.0 ? v : std::log1p(std::exp(std::min(v, 30.0)));
    }
    return make(std::move(out), {a.node()}, [](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        const Tensor& av = self.inputs[0]->value;
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            const double v = av[i];
            const double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                        : std::exp(v) / (1.0 + std::exp(v));
            ga[i] += self.grad[i] * sig;
        }
    });
}

Var clamp_min(const Var& a, double lo) {
    Tensor out(a.val().shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(a.val()[i], lo);
    return make(std::move(out), {a.node()}, [lo](Node& self) {
        Tensor& ga = self.inputs[0]->ensure_grad();
        const Tensor& av = self.inputs[0]->value;
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            if (av[i] > lo) ga[i] += self.grad[i];
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int64_t stride, int64_t pad) {
    const Tensor* bias = b.valid() ? &b.val() : nullptr;
    Tensor y = K::conv2d_forward(x.val(), w.val(), bias, stride, pad, K::default_exec());
    std::vector<std::shared_ptr<Node>> inputs{x.node(), w.node()};
    if (b.valid()) inputs.push_back(b.node());
    const bool has_bias = b.valid();
    return make(std::move(y), std::move(inputs), [stride, pad, has_bias](Node& self) {
        Node* xn = self.inputs[0].get();
        Node* wn = self.inputs[1].get();
        Tensor* dx = xn->requires_grad ? &xn->ensure_grad() : nullptr;
        Tensor* dw = wn->requires_grad ? &wn->ensure_grad() : nullptr;
        Tensor* db = nullptr;
        if (has_bias && self.inputs[2]->requires_grad)
            db = &self.inputs[2]->ensure_grad();
        K::conv2d_backward(xn->value, wn->value, self.grad, stride, pad,
                           dx, dw, db, K::default_exec());
    });
}

Var dense(const Var& x, const Var& w, const Var& b) {
    const int64_t n = x.val().dim(0), in = x.val().dim(1), out_d = w.val().dim(0);
    if (w.val().dim(1) != in) throw std::invalid_argument("dense: dim mismatch");
    Tensor y({n, out_d});
    K::gemm_nt(x.val().data(), w.val().data(), y.data(), n, in, out_d, false,
               K::default_exec());
    if (b.valid()) {
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < out_d; ++j) y.at(i, j) += b.val()[j];
    }
    std::vector<std::shared_ptr<Node>> inputs{x.node(), w.node()};
    if (b.valid()) inputs.push_back(b.node());
    const bool has_bias = b.valid();
    return make(std::move(y), std::move(inputs), [n, in, out_d, has_bias](Node& self) {
        Node* xn = self.inputs[0].get();
        Node* wn = self.inputs[1].get();
        if (xn->requires_grad) {
            // dx[n,in] += dy[n,out] * w[out,in]
            K::gemm(self.grad.data(), wn->value.data(), xn->ensure_grad().data(), n,
                    out_d, in, true, K::default_exec());
        }
        if (wn->requires_grad) {
            // dw[out,in] += dy[n,out]^T * x[n,in]
            K::gemm_tn(self.grad.data(), xn->value.data(), wn->ensure_grad().data(),
                       out_d, n, in, true, K::default_exec());
        }
        if (has_bias && self.inputs[2]->requires_grad) {
            Tensor& db = self.inputs[2]->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < out_d; ++j) db[j] += self.grad.at(i, j);
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) { return dense(a, b, Var()); }

Var avg_pool(const Var& x, int64_t k) {
    Tensor y = K::avg_pool(x.val(), k, K::default_exec());
    auto in_shape = x.val().shape();
    return make(std::move(y), {x.node()}, [k, in_shape](Node& self) {
        Tensor d = K::avg_pool_backward(self.grad, k, in_shape, K::default_exec());
        Tensor& gx = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < d.numel(); ++i) gx[i] += d[i];
    });
}

Var upsample_nearest2(const Var& x) {
    Tensor y = K::upsample_nearest2(x.val(), K::default_exec());
    return make(std::move(y), {x.node()}, [](Node& self) {
        Tensor d = K::upsample_nearest2_backward(self.grad, K::default_exec());
        Tensor& gx = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < d.numel(); ++i) gx[i] += d[i];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw std::invalid_argument("concat_channels: shape mismatch");
    const int64_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
    const int64_t h = av.dim(2), w = av.dim(3), hw = h * w;
    Tensor y({n, ca + cb, h, w});
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(av.data() + i * ca * hw, ca * hw, y.data() + i * (ca + cb) * hw);
        std::copy_n(bv.data() + i * cb * hw, cb * hw,
                    y.data() + i * (ca + cb) * hw + ca * hw);
    }
    return make(std::move(y), {a.node(), b.node()}, [n, ca, cb, hw](Node& self) {
        const bool wa = wants(self, 0), wb = wants(self, 1);
        Tensor* ga = wa ? &self.inputs[0]->ensure_grad() : nullptr;
        Tensor* gb = wb ? &self.inputs[1]->ensure_grad() : nullptr;
        for (int64_t i = 0; i < n; ++i) {
            const double* g = self.grad.data() + i * (ca + cb) * hw;
            if (ga) {
                double* pa = ga->data() + i * ca * hw;
                for (int64_t j = 0; j < ca * hw; ++j) pa[j] += g[j];
            }
            if (gb) {
                double* pb = gb->data() + i * cb * hw;
                for (int64_t j = 0; j < cb * hw; ++j) pb[j] += g[ca * hw + j];
            }
        }
    });
}

Var global_avg_pool(const Var& x) {
    const Tensor& xv = x.val();
    const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Tensor y({n, c});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) {
            const double* p = xv.data() + (i * c + j) * hw;
            double acc = 0.0;
            for (int64_t t = 0; t < hw; ++t) acc += p[t];
            y.at(i, j) = acc / static_cast<double>(hw);
        }
    return make(std::move(y), {x.node()}, [n, c, hw](Node& self) {
        Tensor& gx = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < c; ++j) {
                const double g = self.grad.at(i, j) / static_cast<double>(hw);
                double* p = gx.data() + (i * c + j) * hw;
                for (int64_t t = 0; t < hw; ++t) p[t] += g;
            }
    });
}

Var l2_normalize_rows(const Var& x, double eps) {
    const Tensor& xv = x.val();
    const int64_t n = xv.dim(0), d = xv.dim(1);
    Tensor y({n, d});
    std::vector<double> norms(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += xv.at(i, j) * xv.at(i, j);
        const double nr = std::sqrt(s + eps);
        norms[static_cast<size_t>(i)] = nr;
        for (int64_t j = 0; j < d; ++j) y.at(i, j) = xv.at(i, j) / nr;
    }
    return make(std::move(y), {x.node()}, [n, d, norms](Node& self) {
        Tensor& gx = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < d; ++j)
                dot += self.grad.at(i, j) * self.value.at(i, j);
            const double nr = norms[static_cast<size_t>(i)];
            for (int64_t j = 0; j < d; ++j)
                gx.at(i, j) += (self.grad.at(i, j) - self.value.at(i, j) * dot) / nr;
        }
    });
}

Var channel_l2_normalize(const Var& x, double eps) {
    const Tensor& xv = x.val();
    const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int64_t hw = h * w;
    Tensor y(xv.shape());
    Tensor norms({n, 1, h, w});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t t = 0; t < hw; ++t) {
            double s = 0.0;
            for (int64_t j = 0; j < c; ++j) {
                const double v = xv.data()[(i * c + j) * hw + t];
                s += v * v;
            }
            const double nr = std::sqrt(s + eps);
            norms.data()[i * hw + t] = nr;
            for (int64_t j = 0; j < c; ++j)
                y.data()[(i * c + j) * hw + t] = xv.data()[(i * c + j) * hw + t] / nr;
        }
    return make(std::move(y), {x.node()}, [n, c, hw, norms](Node& self) {
        Tensor& gx = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t t = 0; t < hw; ++t) {
                double dot = 0.0;
                for (int64_t j = 0; j < c; ++j)
                    dot += self.grad.data()[(i * c + j) * hw + t] *
                           self.value.data()[(i * c + j) * hw + t];
                const double nr = norms.data()[i * hw + t];
                for (int64_t j = 0; j < c; ++j) {
                    const int64_t idx = (i * c + j) * hw + t;
                    gx.data()[idx] +=
                        (self.grad.data()[idx] - self.value.data()[idx] * dot) / nr;
                }
            }
    });
}

Var scale_channels(const Var& x, Tensor weights) {
    const Tensor& xv = x.val();
    const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    if (weights.numel() != c)
        throw std::invalid_argument("scale_channels: weight count mismatch");
    Tensor y(xv.shape());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) {
            const double wv = weights[j];
            const double* src = xv.data() + (i * c + j) * hw;
            double* dst = y.data() + (i * c + j) * hw;
            for (int64_t t = 0; t < hw; ++t) dst[t] = src[t] * wv;
        }
    return make(std::move(y), {x.node()}, [n, c, hw, weights](Node& self) {
        Tensor& gx = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < c; ++j) {
                const double wv = weights[j];
                const double* g = self.grad.data() + (i * c + j) * hw;
                double* dst = gx.data() + (i * c + j) * hw;
                for (int64_t t = 0; t < hw; ++t) dst[t] += g[t] * wv;
            }
    });
}

Var rowwise_dot(const Var& a, const Var& b) {
    check_same_shape(a, b, "rowwise_dot");
    const int64_t n = a.val().dim(0), d = a.val().dim(1);
    Tensor y({n});
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += a.val().at(i, j) * b.val().at(i, j);
        y[i] = s;
    }
    return make(std::move(y), {a.node(), b.node()}, [n, d](Node& self) {
        const Tensor& av = self.inputs[0]->value;
        const Tensor& bv = self.inputs[1]->value;
        const bool wa = wants(self, 0), wb = wants(self, 1);
        Tensor* ga = wa ? &self.inputs[0]->ensure_grad() : nullptr;
        Tensor* gb = wb ? &self.inputs[1]->ensure_grad() : nullptr;
        for (int64_t i = 0; i < n; ++i) {
            const double g = self.grad[i];
            for (int64_t j = 0; j < d; ++j) {
                if (ga) ga->at(i, j) += g * bv.at(i, j);
                if (gb) gb->at(i, j) += g * av.at(i, j);
            }
        }
    });
}

Var logsumexp_rows(const Var& x) {
    const int64_t n = x.val().dim(0), c = x.val().dim(1);
    Tensor y({n});
    Tensor softmax({n, c});
    for (int64_t i = 0; i < n; ++i) {
        double m = x.val().at(i, 0);
        for (int64_t j = 1; j < c; ++j) m = std::max(m, x.val().at(i, j));
        double s = 0.0;
        for (int64_t j = 0; j < c; ++j) s += std::exp(x.val().at(i, j) - m);
        y[i] = m + std::log(s);
        for (int64_t j = 0; j < c; ++j)
            softmax.at(i, j) = std::exp(x.val().at(i, j) - m) / s;
    }
    return make(std::move(y), {x.node()}, [n, c, softmax](Node& self) {
        Tensor& gx = self.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < c; ++j)
                gx.at(i, j) += self.grad[i] * softmax.at(i, j);
    });
}

Var select_cols(const Var& x, std::vector<int64_t> idx) {
    const int64_t n = x.val().dim(0);
    if (static_cast<int64_t>(idx.size()) != n)
        throw std::invalid_argument("select_cols: index count mismatch");
    Tensor y({n});
    for (int64_t i = 0; i < n; ++i) y[i] = x.val().at(i, idx[static_cast<size_t>(i)]);
    return make(std::move(y), {x.node()}, [idx](Node& self) {
        Tensor& gx = self.inputs[0]->ensure_grad();
        const int64_t c = gx.dim(1);
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            gx[i * c + idx[static_cast<size_t>(i)]] += self.grad[i];
    });
}

Var sum_all(const Var& x) {
    Tensor y({1});
    y[0] = x.val().sum();
    return make(std::move(y), {x.node()}, [](Node& self) {
        Tensor& gx = self.inputs[0]->ensure_grad();
        const double g = self.grad[0];
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

Var mean_all(const Var& x) {
    const double inv = 1.0 / static_cast<double>(x.val().numel());
    Tensor y({1});
    y[0] = x.val().sum() * inv;
    return make(std::move(y), {x.node()}, [inv](Node& self) {
        Tensor& gx = self.inputs[0]->ensure_grad();
        const double g = self.grad[0] * inv;
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

} // namespace fas::core::ad
