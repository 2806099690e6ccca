#include "sgma/parameters.hpp"

#include <algorithm>

#include "sgma/error.hpp"

namespace sgma {

Var ParameterStore::add(const std::string& name, Tensor value) {
    if (contains(name)) throw UsageError("duplicate parameter name: " + name);
    Var v(std::move(value), true);
    entries_.emplace_back(name, v);
    return v;
}

Var ParameterStore::add_normal(const std::string& name, Shape shape, double stddev, RngStream& rng) {
    Tensor t(std::move(shape));
    for (double& x : t.values()) x = rng.normal(0.0, stddev);
    return add(name, std::move(t));
}

Var ParameterStore::add_constant(const std::string& name, Shape shape, double value) {
    return add(name, Tensor(std::move(shape), value));
}

const Var& ParameterStore::get(const std::string& name) const {
    for (const auto& [n, v] : entries_)
        if (n == name) return v;
    throw UsageError("unknown parameter: " + name);
}

bool ParameterStore::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

int64_t ParameterStore::scalar_count() const { return scalar_count(""); }

int64_t ParameterStore::scalar_count(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& [name, v] : entries_)
        if (name.rfind(prefix, 0) == 0) n += v.value().numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& [name, v] : entries_) v.zero_grad();
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
    if (other.entries_.size() != entries_.size()) throw UsageError("parameter stores differ in size");
    for (size_t i = 0; i < entries_.size(); ++i) {
        auto& [name, v] = entries_[i];
        const auto& [oname, ov] = other.entries_[i];
        if (name != oname || v.shape() != ov.shape())
            throw UsageError("parameter mismatch: " + name + " vs " + oname);
        v.mutable_value() = ov.value();
    }
}

}  // namespace sgma
