#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sgma/sgf.hpp"
#include "sgma/tensor.hpp"

/// Deliberately naive reference implementations: explicit loops, no shared code
/// with the library beyond the Tensor container.
namespace sgma::oracle {

/// row (length cin) times W [cin, cout] plus bias.
inline std::vector<double> affine(const double* row, const Tensor& w, const Tensor& b) {
    const int64_t cin = w.dim(0), cout = w.dim(1);
    std::vector<double> out(static_cast<size_t>(cout));
    for (int64_t o = 0; o < cout; ++o) {
        double acc = b[o];
        for (int64_t i = 0; i < cin; ++i) acc += row[i] * w[i * cout + o];
        out[static_cast<size_t>(o)] = acc;
    }
    return out;
}

/// proto[b][k][c] = sum over m, pixel of weight(m, pixel, k) * semantic[m][pixel][c],
/// where weight is the raw compact value or its softmax over all (m, pixel).
inline Tensor prototypes(const std::vector<Tensor>& compacts, const std::vector<Tensor>& semantics, bool softmax) {
    const int64_t nb = compacts[0].dim(0), np = compacts[0].dim(1) * compacts[0].dim(2);
    const int64_t nk = compacts[0].dim(3), nc = semantics[0].dim(3);
    const auto nm = static_cast<int64_t>(compacts.size());
    Tensor out({nb, nk, nc});
    for (int64_t b = 0; b < nb; ++b)
        for (int64_t k = 0; k < nk; ++k) {
            double mx = -1e300, z = 0.0;
            if (softmax) {
                for (int64_t m = 0; m < nm; ++m)
                    for (int64_t p = 0; p < np; ++p) mx = std::max(mx, compacts[m][(b * np + p) * nk + k]);
                for (int64_t m = 0; m < nm; ++m)
                    for (int64_t p = 0; p < np; ++p) z += std::exp(compacts[m][(b * np + p) * nk + k] - mx);
            }
            for (int64_t c = 0; c < nc; ++c) {
                double acc = 0.0;
                for (int64_t m = 0; m < nm; ++m)
                    for (int64_t p = 0; p < np; ++p) {
                        double wgt = compacts[m][(b * np + p) * nk + k];
                        if (softmax) wgt = std::exp(wgt - mx) / z;
                        acc += wgt * semantics[m][(b * np + p) * nc + c];
                    }
                out[(b * nk + k) * nc + c] = acc;
            }
        }
    return out;
}

struct AttentionOut {
    std::vector<double> output;   // C
    std::vector<double> weights;  // M, averaged over heads
};

/// One query against M keys/values, multi-head, then the output projection.
inline AttentionOut attend(const std::vector<double>& q, const std::vector<std::vector<double>>& keys,
                           const std::vector<std::vector<double>>& values, int heads, const AttentionParams& p) {
    const auto c = static_cast<int64_t>(q.size());
    const int64_t d = c / heads;
    const size_t nm = keys.size();
    std::vector<double> concat(static_cast<size_t>(c), 0.0);
    AttentionOut out;
    out.weights.assign(nm, 0.0);
    for (int h = 0; h < heads; ++h) {
        std::vector<double> logits(nm);
        for (size_t m = 0; m < nm; ++m) {
            double dot = 0.0;
            for (int64_t i = 0; i < d; ++i) dot += q[static_cast<size_t>(h * d + i)] * keys[m][static_cast<size_t>(h * d + i)];
            logits[m] = dot / std::sqrt(static_cast<double>(d));
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (size_t m = 0; m < nm; ++m) {
            const double a = logits[m] / z;
            out.weights[m] += a / heads;
            for (int64_t i = 0; i < d; ++i)
                concat[static_cast<size_t>(h * d + i)] += a * values[m][static_cast<size_t>(h * d + i)];
        }
    }
    out.output = affine(concat.data(), p.wo.value(), p.bo.value());
    return out;
}

struct SpatialOut {
    Tensor guided;   // [B, H, W, C]
    Tensor weights;  // [B, P, K, M]
};

inline SpatialOut spatial(const Tensor& protos, const std::vector<Tensor>& semantics, const AttentionParams& p,
                          int heads) {
    const int64_t nb = semantics[0].dim(0), np = semantics[0].dim(1) * semantics[0].dim(2);
    const int64_t nc = semantics[0].dim(3), nk = protos.dim(1);
    const size_t nm = semantics.size();
    SpatialOut out{Tensor(semantics[0].shape()), Tensor({nb, np, nk, static_cast<int64_t>(nm)})};
    for (int64_t b = 0; b < nb; ++b)
        for (int64_t px = 0; px < np; ++px) {
            std::vector<std::vector<double>> keys, values;
            for (size_t m = 0; m < nm; ++m) {
                const double* row = semantics[m].data() + (b * np + px) * nc;
                keys.push_back(affine(row, p.wk.value(), p.bk.value()));
                values.push_back(affine(row, p.wv.value(), p.bv.value()));
            }
            for (int64_t k = 0; k < nk; ++k) {
                const auto q = affine(protos.data() + (b * nk + k) * nc, p.wq.value(), p.bq.value());
                const AttentionOut a = attend(q, keys, values, heads, p);
                for (int64_t c = 0; c < nc; ++c) out.guided[(b * np + px) * nc + c] += a.output[static_cast<size_t>(c)] / static_cast<double>(nk);
                for (size_t m = 0; m < nm; ++m) out.weights[((b * np + px) * nk + k) * static_cast<int64_t>(nm) + static_cast<int64_t>(m)] = a.weights[m];
            }
        }
    return out;
}

struct RobustOut {
    Tensor fused;       // [B, H, W, C]
    Tensor robustness;  // [B, M, H, W]
};

inline RobustOut robust(const Tensor& guided, const std::vector<Tensor>& semantics, const AttentionParams& p,
                        int heads) {
    const int64_t nb = semantics[0].dim(0), h = semantics[0].dim(1), w = semantics[0].dim(2), nc = semantics[0].dim(3);
    const int64_t np = h * w;
    const auto nm = static_cast<int64_t>(semantics.size());
    RobustOut out{Tensor(semantics[0].shape()), Tensor({nb, nm, h, w})};
    for (int64_t b = 0; b < nb; ++b)
        for (int64_t px = 0; px < np; ++px) {
            std::vector<std::vector<double>> keys, values;
            for (int64_t m = 0; m < nm; ++m) {
                const double* row = semantics[static_cast<size_t>(m)].data() + (b * np + px) * nc;
                keys.push_back(affine(row, p.wk.value(), p.bk.value()));
                values.push_back(affine(row, p.wv.value(), p.bv.value()));
            }
            const auto q = affine(guided.data() + (b * np + px) * nc, p.wq.value(), p.bq.value());
            const AttentionOut a = attend(q, keys, values, heads, p);
            for (int64_t c = 0; c < nc; ++c) out.fused[(b * np + px) * nc + c] = a.output[static_cast<size_t>(c)];
            for (int64_t m = 0; m < nm; ++m) out.robustness[(b * nm + m) * np + px] = a.weights[static_cast<size_t>(m)];
        }
    return out;
}

struct SetMetrics {
    std::vector<double> iou, f1;  // NaN where the class is absent from both maps
    double miou = 0.0, mf1 = 0.0;
};

/// Per-class IoU = |P & G| / |P | G| and F1 = 2|P & G| / (|P| + |G|) over pixel index sets.
inline SetMetrics set_metrics(const std::vector<int32_t>& pred, const std::vector<int32_t>& gt, int num_classes,
                              int32_t ignore) {
    SetMetrics r;
    int present = 0;
    for (int k = 0; k < num_classes; ++k) {
        std::vector<size_t> ps, gs, inter, uni;
        for (size_t i = 0; i < gt.size(); ++i) {
            if (gt[i] == ignore) continue;
            if (pred[i] == k) ps.push_back(i);
            if (gt[i] == k) gs.push_back(i);
        }
        std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(), std::back_inserter(inter));
        std::set_union(ps.begin(), ps.end(), gs.begin(), gs.end(), std::back_inserter(uni));
        if (uni.empty()) {
            r.iou.push_back(std::nan(""));
            r.f1.push_back(std::nan(""));
            continue;
        }
        ++present;
        r.iou.push_back(static_cast<double>(inter.size()) / static_cast<double>(uni.size()));
        r.f1.push_back(2.0 * static_cast<double>(inter.size()) / static_cast<double>(ps.size() + gs.size()));
        r.miou += r.iou.back();
        r.mf1 += r.f1.back();
    }
    r.miou /= present;
    r.mf1 /= present;
    return r;
}

}  // namespace sgma::oracle
