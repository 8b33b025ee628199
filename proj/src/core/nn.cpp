#include "fas/core/nn.hpp"

#include <cmath>

namespace fas::core::nn {

Tensor kaiming_conv(int64_t co, int64_t ci, int64_t k, Rng& rng) {
    Tensor w({co, ci, k, k});
    const double std = std::sqrt(2.0 / static_cast<double>(ci * k * k));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, std);
    return w;
}

Tensor kaiming_dense(int64_t out, int64_t in, Rng& rng) {
    Tensor w({out, in});
    const double std = std::sqrt(2.0 / static_cast<double>(in));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, std);
    return w;
}

Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

Conv2d::Conv2d(ParamSet& ps, const std::string& name, int64_t ci, int64_t co,
               int64_t k, int64_t stride_, int64_t pad_, Rng& rng, double w_scale)
    : stride(stride_), pad(pad_) {
    Tensor wt = kaiming_conv(co, ci, k, rng);
    if (w_scale != 1.0)
        for (int64_t i = 0; i < wt.numel(); ++i) wt[i] *= w_scale;
    w = ps.add(name + ".w", std::move(wt));
    b = ps.add(name + ".b", zeros({co}));
}

Dense::Dense(ParamSet& ps, const std::string& name, int64_t in, int64_t out, Rng& rng) {
    w = ps.add(name + ".w", kaiming_dense(out, in, rng));
    b = ps.add(name + ".b", zeros({out}));
}

ad::Var angular_margin_ce(const ad::Var& emb, const ad::Var& head_w,
                          const std::vector<int64_t>& targets,
                          const std::vector<double>& margins, double scale) {
    const int64_t n = emb.val().dim(0);
    const int64_t n_cls = head_w.val().dim(0);
    if (static_cast<int64_t>(targets.size()) != n ||
        static_cast<int64_t>(margins.size()) != n)
        throw std::invalid_argument("angular_margin_ce: target/margin count mismatch");
    ad::Var en = ad::l2_normalize_rows(emb);
    ad::Var wn = ad::l2_normalize_rows(head_w);
    ad::Var cosm = ad::matmul_nt(en, wn); // [n, n_cls]
    // adjusted = cos * A - sin * B with A,B constant one-hot margin masks
    Tensor A({n, n_cls}, 1.0), B({n, n_cls}, 0.0);
    for (int64_t i = 0; i < n; ++i) {
        const double m = margins[static_cast<size_t>(i)];
        A.at(i, targets[static_cast<size_t>(i)]) = std::cos(m);
        B.at(i, targets[static_cast<size_t>(i)]) = std::sin(m);
    }
    ad::Var sinm =
        ad::sqrt_(ad::clamp_min(ad::rsub_scalar(1.0, ad::square(cosm)), 1e-12), 0.0);
    ad::Var adjusted =
        ad::sub(ad::mul(cosm, ad::constant(A)), ad::mul(sinm, ad::constant(B)));
    ad::Var logits = ad::mul_scalar(adjusted, scale);
    ad::Var lse = ad::logsumexp_rows(logits);
    ad::Var tgt = ad::select_cols(logits, targets);
    return ad::mean_all(ad::sub(lse, tgt));
}

void Adam::step(ParamSet& ps) {
    if (m_.empty()) {
        m_.resize(ps.size());
        v_.resize(ps.size());
        for (size_t i = 0; i < ps.size(); ++i) {
            m_[i] = Tensor(ps.var(i).val().shape());
            v_[i] = Tensor(ps.var(i).val().shape());
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < ps.size(); ++i) {
        ad::Var& p = ps.var(i);
        Tensor& g = p.grad_mut();
        Tensor& val = p.val();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t j = 0; j < val.numel(); ++j) {
            const double gj = g[j] + weight_decay_ * val[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            val[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

} // namespace fas::core::nn
