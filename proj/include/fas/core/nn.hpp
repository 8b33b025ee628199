#pragma once

#include <map>
#include <string>

#include "fas/core/autodiff.hpp"
#include "fas/core/rng.hpp"

namespace fas::core::nn {

// Named trainable leaves. Networks register their parameters here so the
// optimizer and the checkpoint writer see one flat list.
class ParamSet {
public:
    ad::Var add(const std::string& name, Tensor init) {
        ad::Var v = ad::Var::leaf(std::move(init));
        names_.push_back(name);
        vars_.push_back(v);
        return v;
    }

    size_t size() const { return vars_.size(); }
    const std::string& name(size_t i) const { return names_[i]; }
    ad::Var& var(size_t i) { return vars_[i]; }
    const ad::Var& var(size_t i) const { return vars_[i]; }

    void zero_grads() {
        for (auto& v : vars_) v.zero_grad();
    }

    // Frozen parameters collect no gradients, so backward passes through a
    // frozen network are read-only and safe to run concurrently.
    void set_trainable(bool trainable) {
        for (auto& v : vars_) v.set_requires_grad(trainable);
    }

    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& v : vars_) n += v.val().numel();
        return n;
    }

    std::map<std::string, Tensor> state() const {
        std::map<std::string, Tensor> m;
        for (size_t i = 0; i < vars_.size(); ++i) m[names_[i]] = vars_[i].val();
        return m;
    }

    void load_state(const std::map<std::string, Tensor>& m) {
        for (size_t i = 0; i < vars_.size(); ++i) {
            auto it = m.find(names_[i]);
            if (it == m.end())
                throw std::runtime_error("ParamSet: missing tensor " + names_[i]);
            if (!(it->second.shape() == vars_[i].val().shape()))
                throw std::runtime_error("ParamSet: shape mismatch for " + names_[i]);
            vars_[i].val() = it->second;
        }
    }

private:
    std::vector<std::string> names_;
    std::vector<ad::Var> vars_;
};

Tensor kaiming_conv(int64_t co, int64_t ci, int64_t k, Rng& rng);
Tensor kaiming_dense(int64_t out, int64_t in, Rng& rng);
Tensor zeros(std::vector<int64_t> shape);

struct Conv2d {
    ad::Var w, b;
    int64_t stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(ParamSet& ps, const std::string& name, int64_t ci, int64_t co,
           int64_t k, int64_t stride_, int64_t pad_, Rng& rng, double w_scale = 1.0);

    ad::Var operator()(const ad::Var& x) const { return ad::conv2d(x, w, b, stride, pad); }
};

struct Dense {
    ad::Var w, b;

    Dense() = default;
    Dense(ParamSet& ps, const std::string& name, int64_t in, int64_t out, Rng& rng);

    ad::Var operator()(const ad::Var& x) const { return ad::dense(x, w, b); }
};

class Adam {
public:
    explicit Adam(double lr, double weight_decay = 0.0)
        : lr_(lr), weight_decay_(weight_decay) {}

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    void step(ParamSet& ps);

private:
    double lr_;
    double weight_decay_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Multiplies the learning rate by `factor` each time the observed validation
// loss fails to improve by at least `min_delta` for `patience` consecutive
// epochs.
class PlateauSchedule {
public:
    PlateauSchedule(double factor = 0.8, int patience = 5, double min_delta = 1e-4)
        : factor_(factor), patience_(patience), min_delta_(min_delta) {}

    // Returns the cumulative LR multiplier after observing this epoch's value.
    double observe(double val_loss) {
        if (val_loss < best_ - min_delta_) {
            best_ = val_loss;
            bad_ = 0;
        } else {
            if (++bad_ >= patience_) {
                mult_ *= factor_;
                bad_ = 0;
            }
        }
        return mult_;
    }

    double multiplier() const { return mult_; }

private:
    double factor_;
    int patience_;
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_ = 0;
    double mult_ = 1.0;
};

// lr = base * factor^(floor(step / every))
inline double step_decay_lr(double base, int64_t step, int64_t every, double factor) {
    int64_t k = every > 0 ? step / every : 0;
    double m = 1.0;
    for (int64_t i = 0; i < k; ++i) m *= factor;
    return base * m;
}

// Cross-entropy over scaled cosine logits where each row's target class gets
// an additive angular margin: logit_target = s * cos(theta + m_row).
// emb rows and head_w rows are L2-normalized internally.
ad::Var angular_margin_ce(const ad::Var& emb, const ad::Var& head_w,
                          const std::vector<int64_t>& targets,
                          const std::vector<double>& margins, double scale);

} // namespace fas::core::nn
