#include "sgma/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kernels.hpp"
#include "sgma/error.hpp"

namespace sgma::ops {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

int normalize_axis(int axis, int rank, const char* op) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError(std::string(op) + ": axis out of range");
    return axis;
}

struct AxisSplit {
    int64_t outer = 1;
    int64_t length = 1;
    int64_t inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
    s.length = shape[static_cast<size_t>(axis)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

inline void axpy(double a, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double* x, const double* y, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    out.add_(b.value());
    return Var::make_result(std::move(out), {a, b}, [](Node& self) {
        for (auto& in : self.inputs)
            if (in->requires_grad) in->ensure_grad().add_(self.grad);
    });
}

Var add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("add_n: empty input list");
    Tensor out = xs[0].value();
    for (size_t i = 1; i < xs.size(); ++i) {
        require_same_shape(xs[0], xs[i], "add_n");
        out.add_(xs[i].value());
    }
    return Var::make_result(std::move(out), xs, [](Node& self) {
        for (auto& in : self.inputs)
            if (in->requires_grad) in->ensure_grad().add_(self.grad);
    });
}

Var scale(const Var& x, double factor) {
    Tensor out = x.value();
    out.scale_(factor);
    return Var::make_result(std::move(out), {x}, [factor](Node& self) {
        Tensor& g = self.inputs[0]->ensure_grad();
        const double* src = self.grad.data();
        double* dst = g.data();
        for (int64_t i = 0; i < g.numel(); ++i) dst[i] += factor * src[i];
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return Var::make_result(std::move(out), {x}, [](Node& self) {
        self.inputs[0]->ensure_grad().add_(self.grad);
    });
}

Var concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat: empty input list");
    const Shape& first = xs[0].shape();
    axis = normalize_axis(axis, static_cast<int>(first.size()), "concat");
    Shape out_shape = first;
    out_shape[static_cast<size_t>(axis)] = 0;
    for (const Var& x : xs) {
        const Shape& s = x.shape();
        if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
            if (static_cast<int>(d) != axis && s[d] != first[d])
                throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(first));
        out_shape[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
    }
    Tensor out(out_shape);
    const AxisSplit o = split_at(out_shape, axis);
    const int64_t out_row = o.length * o.inner;
    std::vector<int64_t> offsets;
    int64_t offset = 0;
    for (const Var& x : xs) {
        offsets.push_back(offset);
        const AxisSplit s = split_at(x.shape(), axis);
        const int64_t row = s.length * s.inner;
        for (int64_t r = 0; r < o.outer; ++r)
            std::copy_n(x.value().data() + r * row, row, out.data() + r * out_row + offset * o.inner);
        offset += s.length;
    }
    return Var::make_result(std::move(out), xs, [axis, offsets, o, out_row](Node& self) {
        for (size_t i = 0; i < self.inputs.size(); ++i) {
            Node& in = *self.inputs[i];
            if (!in.requires_grad) continue;
            const AxisSplit s = split_at(in.value.shape(), axis);
            const int64_t row = s.length * s.inner;
            Tensor& g = in.ensure_grad();
            for (int64_t r = 0; r < o.outer; ++r) {
                const double* src = self.grad.data() + r * out_row + offsets[i] * o.inner;
                double* dst = g.data() + r * row;
                for (int64_t j = 0; j < row; ++j) dst[j] += src[j];
            }
        }
    });
}

Var slice(const Var& x, int axis, int64_t start, int64_t length) {
    axis = normalize_axis(axis, x.value().rank(), "slice");
    const AxisSplit s = split_at(x.shape(), axis);
    if (start < 0 || length < 0 || start + length > s.length)
        throw ShapeError("slice: range out of bounds for " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = length;
    Tensor out(out_shape);
    const int64_t in_row = s.length * s.inner;
    const int64_t out_row = length * s.inner;
    for (int64_t r = 0; r < s.outer; ++r)
        std::copy_n(x.value().data() + r * in_row + start * s.inner, out_row, out.data() + r * out_row);
    return Var::make_result(std::move(out), {x}, [s, start, in_row, out_row](Node& self) {
        Tensor& g = self.inputs[0]->ensure_grad();
        for (int64_t r = 0; r < s.outer; ++r) {
            const double* src = self.grad.data() + r * out_row;
            double* dst = g.data() + r * in_row + start * s.inner;
            for (int64_t j = 0; j < out_row; ++j) dst[j] += src[j];
        }
    });
}

Var stack(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw ShapeError("stack: empty input list");
    const Shape base = xs[0].shape();
    axis = normalize_axis(axis, static_cast<int>(base.size()) + 1, "stack");
    std::vector<Var> expanded;
    expanded.reserve(xs.size());
    Shape with_axis = base;
    with_axis.insert(with_axis.begin() + axis, 1);
    for (const Var& x : xs) {
        if (x.shape() != base) throw ShapeError("stack: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(base));
        expanded.push_back(reshape(x, with_axis));
    }
    return concat(expanded, axis);
}

Var select_per_sample(const std::vector<Var>& xs, const std::vector<int>& choice) {
    if (xs.empty()) throw ShapeError("select_per_sample: empty input list");
    const Shape& shape = xs[0].shape();
    if (shape.empty() || shape[0] != static_cast<int64_t>(choice.size()))
        throw ShapeError("select_per_sample: choice count does not match batch size");
    for (const Var& x : xs)
        if (x.shape() != shape) throw ShapeError("select_per_sample: shape mismatch");
    for (int c : choice)
        if (c < 0 || c >= static_cast<int>(xs.size())) throw ShapeError("select_per_sample: choice out of range");
    const int64_t row = shape_numel(shape) / shape[0];
    Tensor out(shape);
    for (size_t b = 0; b < choice.size(); ++b)
        std::copy_n(xs[static_cast<size_t>(choice[b])].value().data() + static_cast<int64_t>(b) * row, row,
                    out.data() + static_cast<int64_t>(b) * row);
    return Var::make_result(std::move(out), xs, [choice, row](Node& self) {
        for (size_t b = 0; b < choice.size(); ++b) {
            Node& in = *self.inputs[static_cast<size_t>(choice[b])];
            if (!in.requires_grad) continue;
            const double* src = self.grad.data() + static_cast<int64_t>(b) * row;
            double* dst = in.ensure_grad().data() + static_cast<int64_t>(b) * row;
            for (int64_t j = 0; j < row; ++j) dst[j] += src[j];
        }
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (xs.empty() || ws.size() != 2 || xs.back() != ws[0])
        throw ShapeError("linear: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
    const int64_t cin = ws[0];
    const int64_t cout = ws[1];
    if (bias.defined() && bias.value().numel() != cout) throw ShapeError("linear: bias width mismatch");
    const int64_t rows = x.value().numel() / cin;
    Shape out_shape = xs;
    out_shape.back() = cout;
    Tensor out(out_shape);
    kernels::gemm(x.value().data(), rows, cin, weight.value().data(), cout, out.data(),
                  bias.defined() ? bias.value().data() : nullptr, false);
    std::vector<Var> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return Var::make_result(std::move(out), inputs, [rows, cin, cout](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        const double* g = self.grad.data();
        if (xn.requires_grad) {
            std::vector<double> wt(static_cast<size_t>(cin * cout));
            kernels::transpose(wn.value.data(), cin, cout, wt.data());
            kernels::gemm(g, rows, cout, wt.data(), cin, xn.ensure_grad().data(), nullptr, true);
        }
        if (wn.requires_grad) {
            std::vector<double> xt(static_cast<size_t>(rows * cin));
            kernels::transpose(xn.value.data(), rows, cin, xt.data());
            kernels::gemm(xt.data(), cin, rows, g, cout, wn.ensure_grad().data(), nullptr, true);
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad)
            kernels::column_sums(g, rows, cout, self.inputs[2]->ensure_grad().data());
    });
}

namespace {

struct ConvGeometry {
    int64_t n, h, w, cin, k, cout, oh, ow, stride, padding;

    int64_t rows() const { return n * oh * ow; }
    int64_t patch() const { return k * k * cin; }
};

// Patch matrix [N*OH*OW, k*k*Cin] ordered (ky, kx, c); padded taps are zero.
std::vector<double> im2col(const double* in, const ConvGeometry& g) {
    std::vector<double> col(static_cast<size_t>(g.rows() * g.patch()), 0.0);
    for (int64_t b = 0; b < g.n; ++b)
        for (int64_t oy = 0; oy < g.oh; ++oy)
            for (int64_t ox = 0; ox < g.ow; ++ox) {
                double* dst = col.data() + ((b * g.oh + oy) * g.ow + ox) * g.patch();
                for (int64_t ky = 0; ky < g.k; ++ky) {
                    const int64_t iy = oy * g.stride - g.padding + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int64_t kx = 0; kx < g.k; ++kx) {
                        const int64_t ix = ox * g.stride - g.padding + kx;
                        if (ix < 0 || ix >= g.w) continue;
                        std::copy_n(in + ((b * g.h + iy) * g.w + ix) * g.cin, g.cin,
                                    dst + (ky * g.k + kx) * g.cin);
                    }
                }
            }
    return col;
}

void col2im_add(const double* col, const ConvGeometry& g, double* dx) {
    for (int64_t b = 0; b < g.n; ++b)
        for (int64_t oy = 0; oy < g.oh; ++oy)
            for (int64_t ox = 0; ox < g.ow; ++ox) {
                const double* src = col + ((b * g.oh + oy) * g.ow + ox) * g.patch();
                for (int64_t ky = 0; ky < g.k; ++ky) {
                    const int64_t iy = oy * g.stride - g.padding + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int64_t kx = 0; kx < g.k; ++kx) {
                        const int64_t ix = ox * g.stride - g.padding + kx;
                        if (ix < 0 || ix >= g.w) continue;
                        double* d = dx + ((b * g.h + iy) * g.w + ix) * g.cin;
                        const double* s = src + (ky * g.k + kx) * g.cin;
                        for (int64_t c = 0; c < g.cin; ++c) d[c] += s[c];
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (xs.size() != 4 || ws.size() != 4 || ws[0] != ws[1] || ws[2] != xs[3])
        throw ShapeError("conv2d: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
    if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
    ConvGeometry geo{xs[0], xs[1], xs[2], xs[3], ws[0], ws[3], 0, 0, stride, padding};
    geo.oh = (geo.h + 2 * padding - geo.k) / stride + 1;
    geo.ow = (geo.w + 2 * padding - geo.k) / stride + 1;
    if (geo.oh <= 0 || geo.ow <= 0) throw ShapeError("conv2d: kernel larger than padded input");
    if (bias.defined() && bias.value().numel() != geo.cout) throw ShapeError("conv2d: bias width mismatch");
    Tensor out({geo.n, geo.oh, geo.ow, geo.cout});
    {
        const std::vector<double> col = im2col(x.value().data(), geo);
        kernels::gemm(col.data(), geo.rows(), geo.patch(), weight.value().data(), geo.cout, out.data(),
                      bias.defined() ? bias.value().data() : nullptr, false);
    }
    std::vector<Var> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return Var::make_result(std::move(out), inputs, [geo](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        const double* g = self.grad.data();
        if (xn.requires_grad) {
            std::vector<double> wt(static_cast<size_t>(geo.patch() * geo.cout));
            kernels::transpose(wn.value.data(), geo.patch(), geo.cout, wt.data());
            std::vector<double> dcol(static_cast<size_t>(geo.rows() * geo.patch()));
            kernels::gemm(g, geo.rows(), geo.cout, wt.data(), geo.patch(), dcol.data(), nullptr, false);
            col2im_add(dcol.data(), geo, xn.ensure_grad().data());
        }
        if (wn.requires_grad) {
            const std::vector<double> col = im2col(xn.value.data(), geo);
            std::vector<double> colt(col.size());
            kernels::transpose(col.data(), geo.rows(), geo.patch(), colt.data());
            kernels::gemm(colt.data(), geo.patch(), geo.rows(), g, geo.cout, wn.ensure_grad().data(), nullptr, true);
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad)
            kernels::column_sums(g, geo.rows(), geo.cout, self.inputs[2]->ensure_grad().data());
    });
}

Var depthwise_conv2d(const Var& x, const Var& weight, const Var& bias) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (xs.size() != 4 || ws.size() != 3 || ws[0] != ws[1] || ws[2] != xs[3])
        throw ShapeError("depthwise_conv2d: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
    const int64_t k = ws[0];
    if (k % 2 == 0) throw ShapeError("depthwise_conv2d: kernel size must be odd");
    const int64_t n = xs[0], h = xs[1], w = xs[2], c = xs[3];
    const int64_t pad = k / 2;
    if (bias.defined() && bias.value().numel() != c) throw ShapeError("depthwise_conv2d: bias width mismatch");
    Tensor out(xs);
    const double* in = x.value().data();
    const double* wt = weight.value().data();
    const double* bv = bias.defined() ? bias.value().data() : nullptr;
    for (int64_t b = 0; b < n; ++b)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                double* o = out.data() + ((b * h + y) * w + xx) * c;
                const int64_t ky0 = std::max<int64_t>(0, pad - y), ky1 = std::min<int64_t>(k, h + pad - y);
                const int64_t kx0 = std::max<int64_t>(0, pad - xx), kx1 = std::min<int64_t>(k, w + pad - xx);
                int64_t ch = 0;
                for (; ch + 8 <= c; ch += 8) {
                    kernels::v8d acc = bv ? kernels::load8(bv + ch) : kernels::v8d{};
                    for (int64_t ky = ky0; ky < ky1; ++ky)
                        for (int64_t kx = kx0; kx < kx1; ++kx)
                            acc += kernels::load8(in + ((b * h + y - pad + ky) * w + xx - pad + kx) * c + ch) *
                                   kernels::load8(wt + (ky * k + kx) * c + ch);
                    kernels::store8(o + ch, acc);
                }
                for (; ch < c; ++ch) {
                    double acc = bv ? bv[ch] : 0.0;
                    for (int64_t ky = ky0; ky < ky1; ++ky)
                        for (int64_t kx = kx0; kx < kx1; ++kx)
                            acc += in[((b * h + y - pad + ky) * w + xx - pad + kx) * c + ch] * wt[(ky * k + kx) * c + ch];
                    o[ch] = acc;
                }
            }
    std::vector<Var> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return Var::make_result(std::move(out), inputs, [=](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        const double* g = self.grad.data();
        const double* inv = xn.value.data();
        const double* wv = wn.value.data();
        // dx[p] = sum over taps of g[p - tap + pad] * w[tap]
        if (xn.requires_grad) {
            double* dx = xn.ensure_grad().data();
            for (int64_t b = 0; b < n; ++b)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t xx = 0; xx < w; ++xx) {
                        double* d = dx + ((b * h + y) * w + xx) * c;
                        const int64_t ky0 = std::max<int64_t>(0, y + pad - (h - 1)), ky1 = std::min<int64_t>(k, y + pad + 1);
                        const int64_t kx0 = std::max<int64_t>(0, xx + pad - (w - 1)), kx1 = std::min<int64_t>(k, xx + pad + 1);
                        int64_t ch = 0;
                        for (; ch + 8 <= c; ch += 8) {
                            kernels::v8d acc{};
                            for (int64_t ky = ky0; ky < ky1; ++ky)
                                for (int64_t kx = kx0; kx < kx1; ++kx)
                                    acc += kernels::load8(g + ((b * h + y + pad - ky) * w + xx + pad - kx) * c + ch) *
                                           kernels::load8(wv + (ky * k + kx) * c + ch);
                            kernels::store8(d + ch, kernels::load8(d + ch) + acc);
                        }
                        for (; ch < c; ++ch) {
                            double acc = 0.0;
                            for (int64_t ky = ky0; ky < ky1; ++ky)
                                for (int64_t kx = kx0; kx < kx1; ++kx)
                                    acc += g[((b * h + y + pad - ky) * w + xx + pad - kx) * c + ch] * wv[(ky * k + kx) * c + ch];
                            d[ch] += acc;
                        }
                    }
        }
        // dw[tap] = sum over pixels of g[p] * x[p + tap - pad]
        if (wn.requires_grad) {
            double* dw = wn.ensure_grad().data();
            for (int64_t ky = 0; ky < k; ++ky)
                for (int64_t kx = 0; kx < k; ++kx) {
                    double* d = dw + (ky * k + kx) * c;
                    const int64_t y0 = std::max<int64_t>(0, pad - ky), y1 = std::min<int64_t>(h, h + pad - ky);
                    const int64_t x0 = std::max<int64_t>(0, pad - kx), x1 = std::min<int64_t>(w, w + pad - kx);
                    int64_t ch = 0;
                    for (; ch + 8 <= c; ch += 8) {
                        kernels::v8d acc{};
                        for (int64_t b = 0; b < n; ++b)
                            for (int64_t y = y0; y < y1; ++y)
                                for (int64_t xx = x0; xx < x1; ++xx)
                                    acc += kernels::load8(g + ((b * h + y) * w + xx) * c + ch) *
                                           kernels::load8(inv + ((b * h + y - pad + ky) * w + xx - pad + kx) * c + ch);
                        kernels::store8(d + ch, kernels::load8(d + ch) + acc);
                    }
                    for (; ch < c; ++ch) {
                        double acc = 0.0;
                        for (int64_t b = 0; b < n; ++b)
                            for (int64_t y = y0; y < y1; ++y)
                                for (int64_t xx = x0; xx < x1; ++xx)
                                    acc += g[((b * h + y) * w + xx) * c + ch] *
                                           inv[((b * h + y - pad + ky) * w + xx - pad + kx) * c + ch];
                        d[ch] += acc;
                    }
                }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad)
            kernels::column_sums(g, n * h * w, c, self.inputs[2]->ensure_grad().data());
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Shape& xs = x.shape();
    if (xs.empty()) throw ShapeError("layer_norm: scalar input");
    const int64_t c = xs.back();
    if (gamma.value().numel() != c || beta.value().numel() != c) throw ShapeError("layer_norm: affine width mismatch");
    const int64_t rows = x.value().numel() / c;
    Tensor out(xs);
    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(x.value().numel()));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    const double* gv = gamma.value().data();
    const double* bv = beta.value().data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* in = x.value().data() + r * c;
        double mean = 0.0;
        for (int64_t i = 0; i < c; ++i) mean += in[i];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t i = 0; i < c; ++i) var += (in[i] - mean) * (in[i] - mean);
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(r)] = is;
        double* xh = xhat->data() + r * c;
        double* o = out.data() + r * c;
        for (int64_t i = 0; i < c; ++i) {
            xh[i] = (in[i] - mean) * is;
            o[i] = gv[i] * xh[i] + bv[i];
        }
    }
    return Var::make_result(std::move(out), {x, gamma, beta}, [rows, c, xhat, inv_std](Node& self) {
        Node& xn = *self.inputs[0];
        Node& gn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const double* g = self.grad.data();
        const double* gv = gn.value.data();
        double* dx = xn.requires_grad ? xn.ensure_grad().data() : nullptr;
        double* dg = gn.requires_grad ? gn.ensure_grad().data() : nullptr;
        double* db = bn.requires_grad ? bn.ensure_grad().data() : nullptr;
        std::vector<double> dxh(static_cast<size_t>(c));
        for (int64_t r = 0; r < rows; ++r) {
            const double* go = g + r * c;
            const double* xh = xhat->data() + r * c;
            if (dg)
                for (int64_t i = 0; i < c; ++i) dg[i] += go[i] * xh[i];
            if (db)
                for (int64_t i = 0; i < c; ++i) db[i] += go[i];
            if (!dx) continue;
            double mean_d = 0.0, mean_dx = 0.0;
            for (int64_t i = 0; i < c; ++i) {
                dxh[static_cast<size_t>(i)] = go[i] * gv[i];
                mean_d += dxh[static_cast<size_t>(i)];
                mean_dx += dxh[static_cast<size_t>(i)] * xh[i];
            }
            mean_d /= static_cast<double>(c);
            mean_dx /= static_cast<double>(c);
            const double is = (*inv_std)[static_cast<size_t>(r)];
            for (int64_t i = 0; i < c; ++i)
                dx[r * c + i] += is * (dxh[static_cast<size_t>(i)] - mean_d - xh[i] * mean_dx);
        }
    });
}

Var gelu(const Var& x) {
    Tensor out(x.shape());
    const double* in = x.value().data();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * std::numbers::sqrt2 / 2.0));
    return Var::make_result(std::move(out), {x}, [](Node& self) {
        Node& xn = *self.inputs[0];
        double* dx = xn.ensure_grad().data();
        const double* in = xn.value.data();
        const double* g = self.grad.data();
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (int64_t i = 0; i < xn.value.numel(); ++i) {
            const double v = in[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            dx[i] += g[i] * (cdf + v * pdf);
        }
    });
}

Var mean(const Var& x, int axis) {
    axis = normalize_axis(axis, x.value().rank(), "mean");
    const AxisSplit s = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + axis);
    Tensor out(out_shape);
    const double inv = 1.0 / static_cast<double>(s.length);
    const double* in = x.value().data();
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t l = 0; l < s.length; ++l) axpy(inv, in + (o * s.length + l) * s.inner, out.data() + o * s.inner, s.inner);
    return Var::make_result(std::move(out), {x}, [s, inv](Node& self) {
        double* dx = self.inputs[0]->ensure_grad().data();
        const double* g = self.grad.data();
        for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t l = 0; l < s.length; ++l) axpy(inv, g + o * s.inner, dx + (o * s.length + l) * s.inner, s.inner);
    });
}

Var softmax(const Var& x, int axis) {
    axis = normalize_axis(axis, x.value().rank(), "softmax");
    const AxisSplit s = split_at(x.shape(), axis);
    Tensor out(x.shape());
    const double* in = x.value().data();
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t i = 0; i < s.inner; ++i) {
            const int64_t base = o * s.length * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t l = 0; l < s.length; ++l) mx = std::max(mx, in[base + l * s.inner]);
            double sum = 0.0;
            for (int64_t l = 0; l < s.length; ++l) {
                const double e = std::exp(in[base + l * s.inner] - mx);
                out[base + l * s.inner] = e;
                sum += e;
            }
            for (int64_t l = 0; l < s.length; ++l) out[base + l * s.inner] /= sum;
        }
    return Var::make_result(out, {x}, [s, out](Node& self) {
        double* dx = self.inputs[0]->ensure_grad().data();
        const double* g = self.grad.data();
        for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t i = 0; i < s.inner; ++i) {
                const int64_t base = o * s.length * s.inner + i;
                double inner = 0.0;
                for (int64_t l = 0; l < s.length; ++l) inner += g[base + l * s.inner] * out[base + l * s.inner];
                for (int64_t l = 0; l < s.length; ++l) {
                    const int64_t idx = base + l * s.inner;
                    dx[idx] += out[idx] * (g[idx] - inner);
                }
            }
    });
}

namespace {

struct LinearTap {
    int64_t i0, i1;
    double w0, w1;
};

// Half-pixel source coordinates clamped at zero, matching the usual
// align_corners=false convention of deep-learning frameworks.
std::vector<LinearTap> resize_taps(int64_t in, int64_t out) {
    std::vector<LinearTap> taps(static_cast<size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        int64_t i0 = static_cast<int64_t>(src);
        if (i0 > in - 1) i0 = in - 1;
        const int64_t i1 = i0 < in - 1 ? i0 + 1 : i0;
        const double frac = src - static_cast<double>(i0);
        taps[static_cast<size_t>(o)] = {i0, i1, 1.0 - frac, frac};
    }
    return taps;
}

}  // namespace

Var resize_bilinear(const Var& x, int64_t out_h, int64_t out_w) {
    const Shape& xs = x.shape();
    if (xs.size() != 4) throw ShapeError("resize_bilinear: expected [N,H,W,C], got " + shape_str(xs));
    if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_bilinear: empty output size");
    const int64_t n = xs[0], h = xs[1], w = xs[2], c = xs[3];
    if (h == out_h && w == out_w) return reshape(x, xs);
    const auto ty = resize_taps(h, out_h);
    const auto tx = resize_taps(w, out_w);
    Tensor out({n, out_h, out_w, c});
    const double* in = x.value().data();
    for (int64_t b = 0; b < n; ++b)
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const LinearTap& yy = ty[static_cast<size_t>(oy)];
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const LinearTap& xx = tx[static_cast<size_t>(ox)];
                double* o = out.data() + ((b * out_h + oy) * out_w + ox) * c;
                axpy(yy.w0 * xx.w0, in + ((b * h + yy.i0) * w + xx.i0) * c, o, c);
                axpy(yy.w0 * xx.w1, in + ((b * h + yy.i0) * w + xx.i1) * c, o, c);
                axpy(yy.w1 * xx.w0, in + ((b * h + yy.i1) * w + xx.i0) * c, o, c);
                axpy(yy.w1 * xx.w1, in + ((b * h + yy.i1) * w + xx.i1) * c, o, c);
            }
        }
    return Var::make_result(std::move(out), {x}, [=](Node& self) {
        double* dx = self.inputs[0]->ensure_grad().data();
        const double* g = self.grad.data();
        for (int64_t b = 0; b < n; ++b)
            for (int64_t oy = 0; oy < out_h; ++oy) {
                const LinearTap& yy = ty[static_cast<size_t>(oy)];
                for (int64_t ox = 0; ox < out_w; ++ox) {
                    const LinearTap& xx = tx[static_cast<size_t>(ox)];
                    const double* go = g + ((b * out_h + oy) * out_w + ox) * c;
                    axpy(yy.w0 * xx.w0, go, dx + ((b * h + yy.i0) * w + xx.i0) * c, c);
                    axpy(yy.w0 * xx.w1, go, dx + ((b * h + yy.i0) * w + xx.i1) * c, c);
                    axpy(yy.w1 * xx.w0, go, dx + ((b * h + yy.i1) * w + xx.i0) * c, c);
                    axpy(yy.w1 * xx.w1, go, dx + ((b * h + yy.i1) * w + xx.i1) * c, c);
                }
            }
    });
}

Var batched_matmul_tn(const Var& a, const Var& x) {
    const Shape& as = a.shape();
    const Shape& xs = x.shape();
    if (as.size() != 3 || xs.size() != 3 || as[0] != xs[0] || as[1] != xs[1])
        throw ShapeError("batched_matmul_tn: " + shape_str(as) + " vs " + shape_str(xs));
    const int64_t nb = as[0], p = as[1], k = as[2], c = xs[2];
    Tensor out({nb, k, c});
    for (int64_t b = 0; b < nb; ++b)
        for (int64_t i = 0; i < p; ++i) {
            const double* ar = a.value().data() + (b * p + i) * k;
            const double* xr = x.value().data() + (b * p + i) * c;
            for (int64_t j = 0; j < k; ++j) axpy(ar[j], xr, out.data() + (b * k + j) * c, c);
        }
    return Var::make_result(std::move(out), {a, x}, [nb, p, k, c](Node& self) {
        Node& an = *self.inputs[0];
        Node& xn = *self.inputs[1];
        const double* g = self.grad.data();
        double* da = an.requires_grad ? an.ensure_grad().data() : nullptr;
        double* dx = xn.requires_grad ? xn.ensure_grad().data() : nullptr;
        for (int64_t b = 0; b < nb; ++b)
            for (int64_t i = 0; i < p; ++i) {
                const double* ar = an.value.data() + (b * p + i) * k;
                const double* xr = xn.value.data() + (b * p + i) * c;
                for (int64_t j = 0; j < k; ++j) {
                    const double* gr = g + (b * k + j) * c;
                    if (da) da[(b * p + i) * k + j] += dot(gr, xr, c);
                    if (dx) axpy(ar[j], gr, dx + (b * p + i) * c, c);
                }
            }
    });
}

AttentionResult pixel_attention(const Var& query, const Var& key, const Var& value, int heads,
                                bool mean_over_queries) {
    const Shape& qs = query.shape();
    const Shape& ks = key.shape();
    if (ks.size() != 4 || value.shape() != ks) throw ShapeError("pixel_attention: key/value must be [B,P,M,C]");
    if (qs.size() != 4 || qs[0] != ks[0] || qs[3] != ks[3] || (qs[1] != 1 && qs[1] != ks[1]))
        throw ShapeError("pixel_attention: query " + shape_str(qs) + " incompatible with key " + shape_str(ks));
    const int64_t nb = ks[0], np = ks[1], nm = ks[2], c = ks[3];
    const int64_t nq = qs[2];
    const bool shared_query = qs[1] == 1;
    if (heads <= 0 || c % heads != 0)
        throw ConfigError("pixel_attention: channel count " + std::to_string(c) + " not divisible by " +
                          std::to_string(heads) + " heads");
    if (nm < 1 || nq < 1) throw ShapeError("pixel_attention: need at least one key and one query");
    const int64_t d = c / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    // Per-head weights, [B, P, H, Q, M].
    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(nb * np * heads * nq * nm));
    Tensor out = mean_over_queries ? Tensor({nb, np, c}) : Tensor({nb, np, nq, c});
    Tensor avg({nb, np, nq, nm});
    const double* qv = query.value().data();
    const double* kv = key.value().data();
    const double* vv = value.value().data();
    const double inv_q = 1.0 / static_cast<double>(nq);
    const double inv_h = 1.0 / static_cast<double>(heads);
    std::vector<double> logits(static_cast<size_t>(nm));
    for (int64_t b = 0; b < nb; ++b)
        for (int64_t p = 0; p < np; ++p) {
            const double* qp = qv + (b * qs[1] + (shared_query ? 0 : p)) * nq * c;
            const double* kp = kv + (b * np + p) * nm * c;
            const double* vp = vv + (b * np + p) * nm * c;
            for (int64_t h = 0; h < heads; ++h)
                for (int64_t q = 0; q < nq; ++q) {
                    double mx = -std::numeric_limits<double>::infinity();
                    for (int64_t m = 0; m < nm; ++m) {
                        logits[static_cast<size_t>(m)] = scale * dot(qp + q * c + h * d, kp + m * c + h * d, d);
                        mx = std::max(mx, logits[static_cast<size_t>(m)]);
                    }
                    double sum = 0.0;
                    for (int64_t m = 0; m < nm; ++m) {
                        logits[static_cast<size_t>(m)] = std::exp(logits[static_cast<size_t>(m)] - mx);
                        sum += logits[static_cast<size_t>(m)];
                    }
                    double* pr = probs->data() + (((b * np + p) * heads + h) * nq + q) * nm;
                    double* o = mean_over_queries ? out.data() + (b * np + p) * c + h * d
                                                  : out.data() + ((b * np + p) * nq + q) * c + h * d;
                    const double w_out = mean_over_queries ? inv_q : 1.0;
                    for (int64_t m = 0; m < nm; ++m) {
                        pr[m] = logits[static_cast<size_t>(m)] / sum;
                        avg[((b * np + p) * nq + q) * nm + m] += inv_h * pr[m];
                        axpy(w_out * pr[m], vp + m * c + h * d, o, d);
                    }
                }
        }

    Var result = Var::make_result(std::move(out), {query, key, value}, [=](Node& self) {
        Node& qn = *self.inputs[0];
        Node& kn = *self.inputs[1];
        Node& vn = *self.inputs[2];
        const double* g = self.grad.data();
        const double* q_val = qn.value.data();
        const double* k_val = kn.value.data();
        const double* v_val = vn.value.data();
        double* dq = qn.requires_grad ? qn.ensure_grad().data() : nullptr;
        double* dk = kn.requires_grad ? kn.ensure_grad().data() : nullptr;
        double* dv = vn.requires_grad ? vn.ensure_grad().data() : nullptr;
        std::vector<double> ds(static_cast<size_t>(nm));
        for (int64_t b = 0; b < nb; ++b)
            for (int64_t p = 0; p < np; ++p) {
                const int64_t q_off = (b * qs[1] + (shared_query ? 0 : p)) * nq * c;
                const int64_t kv_off = (b * np + p) * nm * c;
                for (int64_t h = 0; h < heads; ++h)
                    for (int64_t q = 0; q < nq; ++q) {
                        const double* pr = probs->data() + (((b * np + p) * heads + h) * nq + q) * nm;
                        const double* go = mean_over_queries ? g + (b * np + p) * c + h * d
                                                             : g + ((b * np + p) * nq + q) * c + h * d;
                        const double w_out = mean_over_queries ? inv_q : 1.0;
                        double weighted = 0.0;
                        for (int64_t m = 0; m < nm; ++m) {
                            const double da = w_out * dot(go, v_val + kv_off + m * c + h * d, d);
                            ds[static_cast<size_t>(m)] = da;
                            weighted += pr[m] * da;
                            if (dv) axpy(w_out * pr[m], go, dv + kv_off + m * c + h * d, d);
                        }
                        for (int64_t m = 0; m < nm; ++m) {
                            const double dl = scale * pr[m] * (ds[static_cast<size_t>(m)] - weighted);
                            if (dq) axpy(dl, k_val + kv_off + m * c + h * d, dq + q_off + q * c + h * d, d);
                            if (dk) axpy(dl, q_val + q_off + q * c + h * d, dk + kv_off + m * c + h * d, d);
                        }
                    }
            }
    });
    return {std::move(result), std::move(avg)};
}

Var cross_entropy(const Var& logits, const std::vector<int32_t>& labels, int32_t ignore_index) {
    const Shape& ls = logits.shape();
    if (ls.empty()) throw ShapeError("cross_entropy: scalar logits");
    const int64_t k = ls.back();
    const int64_t rows = logits.value().numel() / k;
    if (static_cast<int64_t>(labels.size()) != rows)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                         " logit rows");
    const double* lv = logits.value().data();
    int64_t counted = 0;
    double total = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        const int32_t y = labels[static_cast<size_t>(r)];
        if (y == ignore_index) continue;
        if (y < 0 || y >= k) throw ValidationError("cross_entropy: label " + std::to_string(y) + " outside [0, K)");
        const double* row = lv + r * k;
        double mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        total += mx + std::log(sum) - row[y];
        ++counted;
    }
    if (counted == 0) throw ValidationError("cross_entropy: every pixel carries the ignore index");
    Tensor out({1}, total / static_cast<double>(counted));
    return Var::make_result(std::move(out), {logits}, [labels, ignore_index, rows, k, counted](Node& self) {
        Node& ln = *self.inputs[0];
        double* dl = ln.ensure_grad().data();
        const double* lv = ln.value.data();
        const double g = self.grad[0] / static_cast<double>(counted);
        for (int64_t r = 0; r < rows; ++r) {
            const int32_t y = labels[static_cast<size_t>(r)];
            if (y == ignore_index) continue;
            const double* row = lv + r * k;
            double mx = row[0];
            for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (int64_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
            for (int64_t j = 0; j < k; ++j) dl[r * k + j] += g * (std::exp(row[j] - mx) / sum - (j == y ? 1.0 : 0.0));
        }
    });
}

}  // namespace sgma::ops
