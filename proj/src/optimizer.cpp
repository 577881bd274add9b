#include "egossl/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace egossl::optim {

namespace {

bool has_prefix(const std::string& name, const std::string& prefix) {
    return name.rfind(prefix, 0) == 0;
}

void check_aligned(const Tensor& p, const Tensor& g) {
    if (!p.same_shape(g)) throw std::runtime_error("parameter/gradient mismatch");
}

}  // namespace

FreezeMask::FreezeMask(const ParamStore& params, const std::vector<std::string>& prefixes) {
    for (const auto& prefix : prefixes) {
        bool hit = false;
        for (const auto& name : params.names()) {
            if (has_prefix(name, prefix)) {
                hit = true;
                break;
            }
        }
        if (!hit) throw std::invalid_argument("no such parameter group: " + prefix);
        prefixes_.push_back(prefix);
    }
}

bool FreezeMask::frozen(const std::string& name) const {
    for (const auto& prefix : prefixes_) {
        if (has_prefix(name, prefix)) return true;
    }
    return false;
}

void Sgd::step(ParamStore& params, const FreezeMask& mask) {
    for (const auto& name : params.names()) {
        if (mask.frozen(name)) continue;
        auto& p = params.tensor(name);
        const auto& g = params.grad(name);
        check_aligned(p, g);
        for (std::size_t i = 0; i < p.size(); ++i) p.data[i] -= lr_ * g.data[i];
    }
}

void Adam::step(ParamStore& params, const FreezeMask& mask) {
    ++t_;
    const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& name : params.names()) {
        if (mask.frozen(name)) continue;
        auto& p = params.tensor(name);
        const auto& g = params.grad(name);
        check_aligned(p, g);
        auto& m = m_.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        auto& v = v_.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        check_aligned(p, m);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g.data[i];
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bias1;
            const double vhat = v.data[i] / bias2;
            p.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace egossl::optim
