#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hybridtrain/tensor.hpp"

namespace hybridtrain {

enum class SolverKind { sgd_momentum, adam };

struct SolverConfig {
    SolverKind kind = SolverKind::sgd_momentum;
    double lr = 1e-3;
    double momentum = 0.0;   // sgd
    double beta1 = 0.9;      // adam
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

/// Heavy-ball momentum: v <- mu*v + g; p <- p - lr*v.
/// Throws DivergenceError (tagged with `name`) on non-finite gradients.
void sgd_momentum_step(Tensor& params, const Tensor& grads, Tensor& velocity,
                       double lr, double momentum, const std::string& name = "");

/// Adam with bias correction; t must already be incremented for this step.
void adam_step(Tensor& params, const Tensor& grads, Tensor& m, Tensor& v,
               std::uint64_t t, double lr, double beta1, double beta2,
               double epsilon, const std::string& name = "");

/// Per-parameter-block solver state: one buffer set per tensor in the block.
class SolverState {
public:
    SolverState(SolverConfig cfg, const std::vector<const Tensor*>& params,
                std::string name = "");

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    std::uint64_t step_count() const { return t_; }
    const SolverConfig& config() const { return cfg_; }
    const std::vector<Tensor>& first_buffers() const { return buf1_; }

private:
    SolverConfig cfg_;
    std::string name_;
    std::uint64_t t_ = 0;
    std::vector<Tensor> buf1_;  // velocity (sgd) or first moment (adam)
    std::vector<Tensor> buf2_;  // second moment (adam)
};

} // namespace hybridtrain
