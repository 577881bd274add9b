#pragma once
// Named parameter tensors with matching gradient accumulators. One training
// loop owns a store exclusively; read-only snapshots may be shared for
// evaluation.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "egossl/tensor.hpp"

namespace egossl::numerics {

class ParamStore {
  public:
    Tensor& create(const std::string& name, Tensor init) {
        if (entries_.count(name)) {
            throw std::invalid_argument("duplicate parameter: " + name);
        }
        order_.push_back(name);
        auto& e = entries_[name];
        e.grad = Tensor::zeros(init.shape);
        e.value = std::move(init);
        return e.value;
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Tensor& tensor(const std::string& name) { return entry(name).value; }
    const Tensor& tensor(const std::string& name) const { return entry(name).value; }
    Tensor& grad(const std::string& name) { return entry(name).grad; }
    const Tensor& grad(const std::string& name) const { return entry(name).grad; }

    // Insertion order; fixed for serialization and optimizer sweeps.
    const std::vector<std::string>& names() const { return order_; }

    void zero_grads() {
        for (auto& [name, e] : entries_) {
            for (auto& g : e.grad.data) g = 0.0;
        }
    }

    std::size_t total_parameters() const {
        std::size_t n = 0;
        for (const auto& [name, e] : entries_) n += e.value.size();
        return n;
    }

  private:
    struct Entry {
        Tensor value;
        Tensor grad;
    };

    Entry& entry(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
        return it->second;
    }

    std::vector<std::string> order_;
    std::unordered_map<std::string, Entry> entries_;
};

}  // namespace egossl::numerics
