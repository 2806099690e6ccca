#include "sgma/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sgma/error.hpp"

namespace sgma {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw ShapeError("tensor of shape " + shape_str(shape_) + " given " + std::to_string(data_.size()) +
                         " values");
}

int64_t Tensor::dim(int axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + shape_str(shape_));
    return shape_[static_cast<size_t>(axis)];
}

int64_t Tensor::flat_index(std::initializer_list<int64_t> index) const {
    if (static_cast<int>(index.size()) != rank())
        throw ShapeError("index rank does not match tensor shape " + shape_str(shape_));
    int64_t flat = 0;
    size_t axis = 0;
    for (int64_t i : index) {
        if (i < 0 || i >= shape_[axis]) throw ShapeError("index out of range for shape " + shape_str(shape_));
        flat = flat * shape_[axis] + i;
        ++axis;
    }
    return flat;
}

double& Tensor::at(std::initializer_list<int64_t> index) { return data_[static_cast<size_t>(flat_index(index))]; }

double Tensor::at(std::initializer_list<int64_t> index) const {
    return data_[static_cast<size_t>(flat_index(index))];
}

Tensor Tensor::reshaped(Shape shape) const {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
}

void Tensor::reshape(Shape shape) {
    if (shape_numel(shape) != numel())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    shape_ = std::move(shape);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add_(const Tensor& other) {
    if (other.numel() != numel())
        throw ShapeError("add_: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    double* dst = data_.data();
    const double* src = other.data();
    const int64_t n = numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

void Tensor::scale_(double factor) {
    for (double& v : data_) v *= factor;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace sgma
