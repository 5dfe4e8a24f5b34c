#include "hybridtrain/solvers.hpp"

#include <cmath>

namespace hybridtrain {

void SolverConfig::validate() const {
    if (lr <= 0.0) throw ValidationError("solver lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ValidationError("solver momentum must be in [0,1)");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ValidationError("adam betas must be in [0,1)");
    if (epsilon <= 0.0) throw ValidationError("adam epsilon must be > 0");
}

namespace {

void check_finite(const Tensor& grads, const std::string& name) {
    if (!grads.all_finite())
        throw DivergenceError("non-finite gradient in " + (name.empty() ? "<unnamed>" : name));
}

} // namespace

void sgd_momentum_step(Tensor& params, const Tensor& grads, Tensor& velocity,
                       double lr, double momentum, const std::string& name) {
    if (!params.same_shape(grads) || !params.same_shape(velocity))
        throw ShapeError("sgd step: param/grad/velocity shapes disagree");
    check_finite(grads, name);
    for (std::size_t i = 0; i < params.numel(); ++i) {
        velocity.data[i] = momentum * velocity.data[i] + grads.data[i];
        params.data[i] -= lr * velocity.data[i];
    }
}

void adam_step(Tensor& params, const Tensor& grads, Tensor& m, Tensor& v,
               std::uint64_t t, double lr, double beta1, double beta2,
               double epsilon, const std::string& name) {
    if (!params.same_shape(grads) || !params.same_shape(m) || !params.same_shape(v))
        throw ShapeError("adam step: param/grad/moment shapes disagree");
    check_finite(grads, name);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.numel(); ++i) {
        const double g = grads.data[i];
        m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
        v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        params.data[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
    }
}

SolverState::SolverState(SolverConfig cfg, const std::vector<const Tensor*>& params,
                         std::string name)
    : cfg_(cfg), name_(std::move(name)) {
    cfg_.validate();
    for (const Tensor* p : params) {
        buf1_.push_back(Tensor::zeros(p->shape));
        if (cfg_.kind == SolverKind::adam) buf2_.push_back(Tensor::zeros(p->shape));
    }
}

void SolverState::step(const std::vector<Tensor*>& params,
                       const std::vector<const Tensor*>& grads) {
    if (params.size() != buf1_.size() || grads.size() != buf1_.size())
        throw ShapeError("solver step: block tensor count mismatch in " + name_);
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (cfg_.kind == SolverKind::sgd_momentum) {
            sgd_momentum_step(*params[i], *grads[i], buf1_[i], cfg_.lr, cfg_.momentum, name_);
        } else {
            adam_step(*params[i], *grads[i], buf1_[i], buf2_[i], t_, cfg_.lr,
                      cfg_.beta1, cfg_.beta2, cfg_.epsilon, name_);
        }
    }
}

} // namespace hybridtrain
