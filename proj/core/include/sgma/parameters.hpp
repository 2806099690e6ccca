#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sgma/autograd.hpp"
#include "sgma/rng.hpp"

namespace sgma {

/// Ordered registry of trainable tensors. Registration order is the
/// serialization order of checkpoints and the update order of the optimizer.
class ParameterStore {
public:
    Var add(const std::string& name, Tensor value);
    /// Draws N(0, stddev^2) entries.
    Var add_normal(const std::string& name, Shape shape, double stddev, RngStream& rng);
    Var add_constant(const std::string& name, Shape shape, double value);

    const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
    const Var& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    size_t size() const { return entries_.size(); }
    int64_t scalar_count() const;
    /// Scalar count of parameters whose names start with `prefix`.
    int64_t scalar_count(const std::string& prefix) const;

    void zero_grad();
    /// Copies every value from `other`; names and shapes must match.
    void copy_values_from(const ParameterStore& other);

private:
    std::vector<std::pair<std::string, Var>> entries_;
};

}  // namespace sgma
