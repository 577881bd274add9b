#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "egossl/param_store.hpp"

namespace egossl::optim {

using numerics::ParamStore;
using numerics::Tensor;

// Selects parameter groups by name prefix ("video." covers every parameter
// under the video encoder). Construction validates each prefix against the
// store so a typo fails loudly instead of silently training everything.
class FreezeMask {
public:
    FreezeMask() = default;
    FreezeMask(const ParamStore& params, const std::vector<std::string>& prefixes);

    bool frozen(const std::string& name) const;
    bool empty() const { return prefixes_.empty(); }

private:
    std::vector<std::string> prefixes_;
};

// Applies one update from the gradients currently held by the store.
// Parameters matched by the mask keep both their value and any optimizer
// state untouched.
class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(ParamStore& params, const FreezeMask& mask) = 0;
    void step(ParamStore& params) { step(params, FreezeMask{}); }
};

class Sgd final : public Optimizer {
public:
    explicit Sgd(double lr) : lr_(lr) {}
    using Optimizer::step;
    void step(ParamStore& params, const FreezeMask& mask) override;

private:
    double lr_;
};

class Adam final : public Optimizer {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
    using Optimizer::step;
    void step(ParamStore& params, const FreezeMask& mask) override;

    std::uint64_t steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    // First/second moment estimates, created lazily per parameter name.
    std::unordered_map<std::string, Tensor> m_, v_;
};

}  // namespace egossl::optim
