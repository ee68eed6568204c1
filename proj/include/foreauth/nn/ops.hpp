#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "foreauth/nn/tensor.hpp"

namespace foreauth::nn {

template <typename S>
using EigenRowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using EigenMap = Eigen::Map<EigenRowMat<S>>;
template <typename S>
using EigenConstMap = Eigen::Map<const EigenRowMat<S>>;

namespace detail {

template <typename S>
TensorT<S> make_result(Shape shape, std::vector<S> values, std::vector<TensorT<S>> parents,
                       std::function<void(TensorNode<S>&)> backward) {
    auto n = std::make_shared<TensorNode<S>>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    n->requires_grad = rg;
    if (rg) {
        n->grad.assign(n->values.size(), S(0));
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_ptr());
        n->backward_fn = std::move(backward);
    }
    return TensorT<S>(std::move(n));
}

inline int last_dim(const Shape& s) { return s.back(); }
inline int row_count(const Shape& s) { return shape_size(s) / s.back(); }

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<S> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return detail::make_result<S>(a.shape(), std::move(out), {a, b}, [](TensorNode<S>& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = *n.parents[static_cast<std::size_t>(k)];
            if (!p.requires_grad) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
        }
    });
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<S> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return detail::make_result<S>(a.shape(), std::move(out), {a, b}, [](TensorNode<S>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
    });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<S> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return detail::make_result<S>(a.shape(), std::move(out), {a, b}, [](TensorNode<S>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.values[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.values[i];
    });
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S factor) {
    std::vector<S> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
    return detail::make_result<S>(a.shape(), std::move(out), {a}, [factor](TensorNode<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * factor;
    });
}

/// Adds a length-d bias vector across the last dimension of x.
template <typename S>
TensorT<S> add_bias(const TensorT<S>& x, const TensorT<S>& bias) {
    if (bias.rank() != 1 || bias.dim(0) != detail::last_dim(x.shape()))
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last dim of " + shape_str(x.shape()));
    const int d = bias.dim(0);
    const int rows = detail::row_count(x.shape());
    std::vector<S> out(x.values().size());
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(r) * d + j] = x.values()[static_cast<std::size_t>(r) * d + j] + bias.values()[static_cast<std::size_t>(j)];
    return detail::make_result<S>(x.shape(), std::move(out), {x, bias}, [rows, d](TensorNode<S>& n) {
        auto& px = *n.parents[0];
        auto& pb = *n.parents[1];
        if (px.requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) px.grad[i] += n.grad[i];
        if (pb.requires_grad)
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < d; ++j) pb.grad[static_cast<std::size_t>(j)] += n.grad[static_cast<std::size_t>(r) * d + j];
    });
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
    std::vector<S> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > S(0) ? x.values()[i] : S(0);
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [](TensorNode<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (p.values[i] > S(0)) p.grad[i] += n.grad[i];
    });
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    std::vector<S> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = static_cast<double>(x.values()[i]);
        const double y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        out[i] = static_cast<S>(y);
    }
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [](TensorNode<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const S y = n.values[i];
            p.grad[i] += n.grad[i] * y * (S(1) - y);
        }
    });
}

// ---------------------------------------------------------------------------
// Matrix products (Eigen-backed GEMM)
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
void gemm(const S* a, int an, int ak, bool ta, const S* b, int bk, int bm, bool tb, S* c, S alpha, S beta) {
    // C = beta*C + alpha * op(A) op(B). Raw buffers are row-major (an x ak)
    // and (bk x bm); op transposes when the flag is set.
    EigenConstMap<S> A(a, an, ak);
    EigenConstMap<S> B(b, bk, bm);
    EigenMap<S> C(c, ta ? ak : an, tb ? bk : bm);
    if (beta == S(0)) C.setZero();
    if (!ta && !tb)
        C.noalias() += alpha * (A * B);
    else if (ta && !tb)
        C.noalias() += alpha * (A.transpose() * B);
    else if (!ta && tb)
        C.noalias() += alpha * (A * B.transpose());
    else
        C.noalias() += alpha * (A.transpose() * B.transpose());
}

} // namespace detail

/// Matrix product. Supported shapes:
///   (n,k) x (k,m)     -> (n,m)
///   (B,n,k) x (k,m)   -> (B,n,m)   position-wise projection
///   (B,n,k) x (B,k,m) -> (B,n,m)   batched product
template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    const int ra = a.rank(), rb = b.rank();
    if (ra == 2 && rb == 2) {
        const int n = a.dim(0), k = a.dim(1), k2 = b.dim(0), m = b.dim(1);
        if (k != k2) throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
        std::vector<S> out(static_cast<std::size_t>(n) * m);
        detail::gemm(a.values().data(), n, k, false, b.values().data(), k, m, false, out.data(), S(1), S(0));
        return detail::make_result<S>({n, m}, std::move(out), {a, b}, [n, k, m](TensorNode<S>& nd) {
            auto& pa = *nd.parents[0];
            auto& pb = *nd.parents[1];
            if (pa.requires_grad) // dA += dC * B^T
                detail::gemm(nd.grad.data(), n, m, false, pb.values.data(), k, m, true, pa.grad.data(), S(1), S(1));
            if (pb.requires_grad) // dB += A^T * dC
                detail::gemm(pa.values.data(), n, k, true, nd.grad.data(), n, m, false, pb.grad.data(), S(1), S(1));
        });
    }
    if (ra == 3 && rb == 2) {
        const int bsz = a.dim(0), n = a.dim(1), k = a.dim(2), k2 = b.dim(0), m = b.dim(1);
        if (k != k2) throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
        const int rows = bsz * n;
        std::vector<S> out(static_cast<std::size_t>(rows) * m);
        detail::gemm(a.values().data(), rows, k, false, b.values().data(), k, m, false, out.data(), S(1), S(0));
        return detail::make_result<S>({bsz, n, m}, std::move(out), {a, b}, [rows, k, m](TensorNode<S>& nd) {
            auto& pa = *nd.parents[0];
            auto& pb = *nd.parents[1];
            if (pa.requires_grad)
                detail::gemm(nd.grad.data(), rows, m, false, pb.values.data(), k, m, true, pa.grad.data(), S(1), S(1));
            if (pb.requires_grad)
                detail::gemm(pa.values.data(), rows, k, true, nd.grad.data(), rows, m, false, pb.grad.data(), S(1), S(1));
        });
    }
    if (ra == 3 && rb == 3) {
        const int bsz = a.dim(0), n = a.dim(1), k = a.dim(2);
        if (b.dim(0) != bsz || b.dim(1) != k)
            throw ShapeError("matmul: batched dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
        const int m = b.dim(2);
        std::vector<S> out(static_cast<std::size_t>(bsz) * n * m);
        for (int i = 0; i < bsz; ++i)
            detail::gemm(a.values().data() + static_cast<std::size_t>(i) * n * k, n, k, false,
                         b.values().data() + static_cast<std::size_t>(i) * k * m, k, m, false,
                         out.data() + static_cast<std::size_t>(i) * n * m, S(1), S(0));
        return detail::make_result<S>({bsz, n, m}, std::move(out), {a, b}, [bsz, n, k, m](TensorNode<S>& nd) {
            auto& pa = *nd.parents[0];
            auto& pb = *nd.parents[1];
            for (int i = 0; i < bsz; ++i) {
                const std::size_t oa = static_cast<std::size_t>(i) * n * k;
                const std::size_t ob = static_cast<std::size_t>(i) * k * m;
                const std::size_t oc = static_cast<std::size_t>(i) * n * m;
                if (pa.requires_grad)
                    detail::gemm(nd.grad.data() + oc, n, m, false, pb.values.data() + ob, k, m, true, pa.grad.data() + oa, S(1), S(1));
                if (pb.requires_grad)
                    detail::gemm(pa.values.data() + oa, n, k, true, nd.grad.data() + oc, n, m, false, pb.grad.data() + ob, S(1), S(1));
            }
        });
    }
    throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
}

/// Swaps the last two dimensions (rank 2 or 3).
template <typename S>
TensorT<S> transpose_last2(const TensorT<S>& x) {
    if (x.rank() < 2) throw ShapeError("transpose_last2: rank must be >= 2");
    const int bsz = x.rank() == 3 ? x.dim(0) : 1;
    const int n = x.dim(x.rank() - 2), m = x.dim(x.rank() - 1);
    Shape out_shape = x.shape();
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    std::vector<S> out(x.values().size());
    for (int b = 0; b < bsz; ++b) {
        const std::size_t off = static_cast<std::size_t>(b) * n * m;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) out[off + static_cast<std::size_t>(j) * n + i] = x.values()[off + static_cast<std::size_t>(i) * m + j];
    }
    return detail::make_result<S>(std::move(out_shape), std::move(out), {x}, [bsz, n, m](TensorNode<S>& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        for (int b = 0; b < bsz; ++b) {
            const std::size_t off = static_cast<std::size_t>(b) * n * m;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) p.grad[off + static_cast<std::size_t>(i) * m + j] += nd.grad[off + static_cast<std::size_t>(j) * n + i];
        }
    });
}

/// Copy-reshape preserving element order; gradient passes straight through.
template <typename S>
TensorT<S> reshape(const TensorT<S>& x, Shape shape) {
    check_shape_valid(shape);
    if (shape_size(shape) != x.size())
        throw ShapeError("reshape: size mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
    std::vector<S> out = x.values();
    return detail::make_result<S>(std::move(shape), std::move(out), {x}, [](TensorNode<S>& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < nd.grad.size(); ++i) p.grad[i] += nd.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Slicing and concatenation
// ---------------------------------------------------------------------------

/// Slice along the last dimension: keeps columns [offset, offset+len).
template <typename S>
TensorT<S> slice_lastdim(const TensorT<S>& x, int offset, int len) {
    const int d = detail::last_dim(x.shape());
    if (offset < 0 || len <= 0 || offset + len > d)
        throw ShapeError("slice_lastdim: [" + std::to_string(offset) + "," + std::to_string(offset + len) + ") out of " + std::to_string(d));
    const int rows = detail::row_count(x.shape());
    Shape out_shape = x.shape();
    out_shape.back() = len;
    std::vector<S> out(static_cast<std::size_t>(rows) * len);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < len; ++j) out[static_cast<std::size_t>(r) * len + j] = x.values()[static_cast<std::size_t>(r) * d + offset + j];
    return detail::make_result<S>(std::move(out_shape), std::move(out), {x}, [rows, d, offset, len](TensorNode<S>& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < len; ++j) p.grad[static_cast<std::size_t>(r) * d + offset + j] += nd.grad[static_cast<std::size_t>(r) * len + j];
    });
}

/// Slice along the time axis (dim 0 for rank 2, dim 1 for rank 3).
template <typename S>
TensorT<S> slice_time(const TensorT<S>& x, int offset, int len) {
    const int time_axis = x.rank() == 3 ? 1 : 0;
    if (x.rank() < 2) throw ShapeError("slice_time: rank must be >= 2");
    const int t = x.dim(time_axis);
    if (offset < 0 || len <= 0 || offset + len > t)
        throw ShapeError("slice_time: [" + std::to_string(offset) + "," + std::to_string(offset + len) + ") out of " + std::to_string(t));
    const int bsz = x.rank() == 3 ? x.dim(0) : 1;
    const int d = detail::last_dim(x.shape());
    Shape out_shape = x.shape();
    out_shape[static_cast<std::size_t>(time_axis)] = len;
    std::vector<S> out(static_cast<std::size_t>(bsz) * len * d);
    for (int b = 0; b < bsz; ++b)
        for (int i = 0; i < len; ++i)
            std::copy_n(x.values().data() + (static_cast<std::size_t>(b) * t + offset + i) * d, d,
                        out.data() + (static_cast<std::size_t>(b) * len + i) * d);
    return detail::make_result<S>(std::move(out_shape), std::move(out), {x}, [bsz, t, d, offset, len](TensorNode<S>& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        for (int b = 0; b < bsz; ++b)
            for (int i = 0; i < len; ++i) {
                const std::size_t src = (static_cast<std::size_t>(b) * len + i) * d;
                const std::size_t dst = (static_cast<std::size_t>(b) * t + offset + i) * d;
                for (int j = 0; j < d; ++j) p.grad[dst + j] += nd.grad[src + j];
            }
    });
}

/// Concatenate along the last dimension; all parts share leading dims.
template <typename S>
TensorT<S> concat_lastdim(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_lastdim: empty part list");
    Shape lead = parts[0].shape();
    lead.pop_back();
    int total = 0;
    std::vector<int> widths;
    for (const auto& p : parts) {
        Shape pl = p.shape();
        const int w = pl.back();
        pl.pop_back();
        if (pl != lead) throw ShapeError("concat_lastdim: leading dims differ");
        widths.push_back(w);
        total += w;
    }
    const int rows = shape_size(lead);
    Shape out_shape = lead;
    out_shape.push_back(total);
    std::vector<S> out(static_cast<std::size_t>(rows) * total);
    int col = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const int w = widths[pi];
        for (int r = 0; r < rows; ++r)
            std::copy_n(parts[pi].values().data() + static_cast<std::size_t>(r) * w, w,
                        out.data() + static_cast<std::size_t>(r) * total + col);
        col += w;
    }
    return detail::make_result<S>(std::move(out_shape), std::move(out), parts, [rows, total, widths](TensorNode<S>& nd) {
        int c = 0;
        for (std::size_t pi = 0; pi < nd.parents.size(); ++pi) {
            auto& p = *nd.parents[pi];
            const int w = widths[pi];
            if (p.requires_grad)
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < w; ++j) p.grad[static_cast<std::size_t>(r) * w + j] += nd.grad[static_cast<std::size_t>(r) * total + c + j];
            c += w;
        }
    });
}

/// Concatenate along the time axis (dim 0 for rank 2, dim 1 for rank 3);
/// all parts share the batch dimension and the feature width.
template <typename S>
TensorT<S> concat_time(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_time: empty part list");
    const int rank = parts[0].rank();
    if (rank < 2) throw ShapeError("concat_time: rank must be >= 2");
    const int bsz = rank == 3 ? parts[0].dim(0) : 1;
    const int d = detail::last_dim(parts[0].shape());
    int total = 0;
    std::vector<int> lengths;
    for (const auto& p : parts) {
        if (p.rank() != rank || (rank == 3 && p.dim(0) != bsz) || detail::last_dim(p.shape()) != d)
            throw ShapeError("concat_time: incompatible part " + shape_str(p.shape()));
        lengths.push_back(p.dim(rank - 2));
        total += lengths.back();
    }
    Shape out_shape = rank == 3 ? Shape{bsz, total, d} : Shape{total, d};
    std::vector<S> out(static_cast<std::size_t>(bsz) * total * d);
    int row = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const int len = lengths[pi];
        for (int b = 0; b < bsz; ++b)
            std::copy_n(parts[pi].values().data() + static_cast<std::size_t>(b) * len * d, static_cast<std::size_t>(len) * d,
                        out.data() + (static_cast<std::size_t>(b) * total + row) * d);
        row += len;
    }
    return detail::make_result<S>(std::move(out_shape), std::move(out), parts, [bsz, d, total, lengths](TensorNode<S>& nd) {
        int row = 0;
        for (std::size_t pi = 0; pi < nd.parents.size(); ++pi) {
            auto& p = *nd.parents[pi];
            const int len = lengths[pi];
            if (p.requires_grad)
                for (int b = 0; b < bsz; ++b)
                    for (int i = 0; i < len; ++i) {
                        const std::size_t src = (static_cast<std::size_t>(b) * total + row + i) * d;
                        const std::size_t dst = (static_cast<std::size_t>(b) * len + i) * d;
                        for (int j = 0; j < d; ++j) p.grad[dst + j] += nd.grad[src + j];
                    }
            row += len;
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> mean_all(const TensorT<S>& x) {
    const std::size_t n = x.values().size();
    double acc = 0.0;
    for (S v : x.values()) acc += static_cast<double>(v);
    const S mean = static_cast<S>(acc / static_cast<double>(n));
    return detail::make_result<S>({1}, {mean}, {x}, [n](TensorNode<S>& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        const S g = nd.grad[0] / static_cast<S>(n);
        for (std::size_t i = 0; i < n; ++i) p.grad[i] += g;
    });
}

template <typename S>
TensorT<S> sum_all(const TensorT<S>& x) {
    double acc = 0.0;
    for (S v : x.values()) acc += static_cast<double>(v);
    return detail::make_result<S>({1}, {static_cast<S>(acc)}, {x}, [](TensorNode<S>& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += nd.grad[0];
    });
}

/// Per-channel arithmetic mean over the time axis.
///   (L,C) -> (C)    or    (B,L,C) -> (B,C)
template <typename S>
TensorT<S> global_average_pool(const TensorT<S>& x) {
    if (x.rank() < 2) throw ShapeError("global_average_pool: rank must be 2 or 3, got " + shape_str(x.shape()));
    const int bsz = x.rank() == 3 ? x.dim(0) : 1;
    const int len = x.dim(x.rank() - 2);
    const int ch = x.dim(x.rank() - 1);
    Shape out_shape = x.rank() == 3 ? Shape{bsz, ch} : Shape{ch};
    std::vector<S> out(static_cast<std::size_t>(bsz) * ch);
    for (int b = 0; b < bsz; ++b)
        for (int c = 0; c < ch; ++c) {
            double acc = 0.0;
            for (int t = 0; t < len; ++t) acc += static_cast<double>(x.values()[(static_cast<std::size_t>(b) * len + t) * ch + c]);
            out[static_cast<std::size_t>(b) * ch + c] = static_cast<S>(acc / len);
        }
    return detail::make_result<S>(std::move(out_shape), std::move(out), {x}, [bsz, len, ch](TensorNode<S>& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        for (int b = 0; b < bsz; ++b)
            for (int c = 0; c < ch; ++c) {
                const S g = nd.grad[static_cast<std::size_t>(b) * ch + c] / static_cast<S>(len);
                for (int t = 0; t < len; ++t) p.grad[(static_cast<std::size_t>(b) * len + t) * ch + c] += g;
            }
    });
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Boolean attention mask over (query row, key column); true = may attend.
struct AttentionMask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> allowed;

    bool at(int i, int j) const { return allowed[static_cast<std::size_t>(i) * cols + j] != 0; }

    /// Strictly causal: row i attends columns j <= i.
    static AttentionMask causal(int n) {
        AttentionMask m;
        m.rows = m.cols = n;
        m.allowed.assign(static_cast<std::size_t>(n) * n, 0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) m.allowed[static_cast<std::size_t>(i) * n + j] = 1;
        return m;
    }

    /// Alignment-causal cross mask: row i attends columns j <= offset + i.
    /// Rows whose offset+i exceeds cols-1 see every column.
    static AttentionMask aligned_causal(int rows, int cols, int offset) {
        AttentionMask m;
        m.rows = rows;
        m.cols = cols;
        m.allowed.assign(static_cast<std::size_t>(rows) * cols, 0);
        for (int i = 0; i < rows; ++i) {
            const int limit = std::min(cols - 1, offset + i);
            for (int j = 0; j <= limit; ++j) m.allowed[static_cast<std::size_t>(i) * cols + j] = 1;
        }
        return m;
    }
};

namespace detail {
// Additive -inf surrogate applied to masked scores before the exp; at both
// working precisions exp underflows to exactly +0, and the entries are zeroed
// explicitly afterwards as the post hoc guarantee.
template <typename S>
constexpr S mask_bias() {
    return S(-1e30);
}
} // namespace detail

/// Row-wise softmax over the last dimension with optional attention mask.
/// Masked entries get weight exactly 0. The mask applies to the trailing
/// (rows x cols) matrix and is shared across a leading batch dimension.
template <typename S>
TensorT<S> masked_softmax_lastdim(const TensorT<S>& x, const AttentionMask* mask) {
    const int cols = detail::last_dim(x.shape());
    const int nrows = detail::row_count(x.shape());
    const int mat_rows = x.rank() >= 2 ? x.dim(x.rank() - 2) : 1;
    if (mask) {
        if (mask->rows != mat_rows || mask->cols != cols)
            throw ShapeError("masked_softmax: mask " + std::to_string(mask->rows) + "x" + std::to_string(mask->cols) +
                             " does not match scores " + shape_str(x.shape()));
        for (int i = 0; i < mask->rows; ++i) {
            bool any = false;
            for (int j = 0; j < cols && !any; ++j) any = mask->at(i, j);
            if (!any) throw MaskError("fully-masked attention row " + std::to_string(i));
        }
    }
    std::vector<S> out(x.values().size());
    for (int r = 0; r < nrows; ++r) {
        const S* in = x.values().data() + static_cast<std::size_t>(r) * cols;
        S* o = out.data() + static_cast<std::size_t>(r) * cols;
        const int mrow = r % mat_rows;
        S mx = detail::mask_bias<S>();
        for (int j = 0; j < cols; ++j) {
            const S v = (mask && !mask->at(mrow, j)) ? in[j] + detail::mask_bias<S>() : in[j];
            mx = std::max(mx, v);
        }
        double denom = 0.0;
        for (int j = 0; j < cols; ++j) {
            const S v = (mask && !mask->at(mrow, j)) ? in[j] + detail::mask_bias<S>() : in[j];
            o[j] = static_cast<S>(std::exp(static_cast<double>(v) - static_cast<double>(mx)));
            denom += static_cast<double>(o[j]);
        }
        for (int j = 0; j < cols; ++j) {
            o[j] = static_cast<S>(static_cast<double>(o[j]) / denom);
            if (mask && !mask->at(mrow, j)) o[j] = S(0);
        }
    }
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [nrows, cols](TensorNode<S>& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        for (int r = 0; r < nrows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * cols;
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += static_cast<double>(nd.grad[off + j]) * static_cast<double>(nd.values[off + j]);
            for (int j = 0; j < cols; ++j)
                p.grad[off + j] += nd.values[off + j] * (nd.grad[off + j] - static_cast<S>(dot));
        }
    });
}

template <typename S>
TensorT<S> softmax_lastdim(const TensorT<S>& x) {
    return masked_softmax_lastdim<S>(x, nullptr);
}

/// Softmax over a single vector, max-subtracted for overflow safety.
template <typename S>
TensorT<S> softmax(const TensorT<S>& x) {
    if (x.rank() != 1) throw ShapeError("softmax: expected rank-1 input, got " + shape_str(x.shape()));
    return masked_softmax_lastdim<S>(x, nullptr);
}

// ---------------------------------------------------------------------------
// Layer normalization
// ---------------------------------------------------------------------------

/// Normalizes each row (last dimension) to zero mean / unit variance, then
/// scales by gamma and shifts by beta. Population variance; eps guards the
/// degenerate constant row.
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta, double eps = 1e-9) {
    const int d = detail::last_dim(x.shape());
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
        throw ShapeError("layer_norm: gamma/beta must be length-" + std::to_string(d) + " vectors");
    const int rows = detail::row_count(x.shape());
    std::vector<S> out(x.values().size());
    std::vector<S> xhat(x.values().size());
    std::vector<S> inv_sigma(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        const S* in = x.values().data() + static_cast<std::size_t>(r) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += static_cast<double>(in[j]);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = static_cast<double>(in[j]) - mean;
            var += c * c;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<std::size_t>(r)] = static_cast<S>(inv);
        for (int j = 0; j < d; ++j) {
            const std::size_t idx = static_cast<std::size_t>(r) * d + j;
            xhat[idx] = static_cast<S>((static_cast<double>(in[j]) - mean) * inv);
            out[idx] = gamma.values()[static_cast<std::size_t>(j)] * xhat[idx] + beta.values()[static_cast<std::size_t>(j)];
        }
    }
    return detail::make_result<S>(
        x.shape(), std::move(out), {x, gamma, beta},
        [rows, d, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](TensorNode<S>& nd) {
            auto& px = *nd.parents[0];
            auto& pg = *nd.parents[1];
            auto& pb = *nd.parents[2];
            for (int r = 0; r < rows; ++r) {
                const std::size_t off = static_cast<std::size_t>(r) * d;
                if (pg.requires_grad || pb.requires_grad) {
                    for (int j = 0; j < d; ++j) {
                        if (pg.requires_grad) pg.grad[static_cast<std::size_t>(j)] += nd.grad[off + j] * xhat[off + j];
                        if (pb.requires_grad) pb.grad[static_cast<std::size_t>(j)] += nd.grad[off + j];
                    }
                }
                if (px.requires_grad) {
                    double mean_h = 0.0, mean_hx = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double h = static_cast<double>(pg.values[static_cast<std::size_t>(j)]) * static_cast<double>(nd.grad[off + j]);
                        mean_h += h;
                        mean_hx += h * static_cast<double>(xhat[off + j]);
                    }
                    mean_h /= d;
                    mean_hx /= d;
                    const double inv = static_cast<double>(inv_sigma[static_cast<std::size_t>(r)]);
                    for (int j = 0; j < d; ++j) {
                        const double h = static_cast<double>(pg.values[static_cast<std::size_t>(j)]) * static_cast<double>(nd.grad[off + j]);
                        px.grad[off + j] += static_cast<S>(inv * (h - mean_h - static_cast<double>(xhat[off + j]) * mean_hx));
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// 1D convolution and batch normalization
// ---------------------------------------------------------------------------

/// Same-padding 1D convolution along the time axis.
///   x (L,Cin) or (B,L,Cin), kernel (K,Cin,F), bias (F) -> (.,L,F)
/// Padding is zeros, (K-1)/2 on the left and K/2 on the right.
template <typename S>
TensorT<S> conv1d_same(const TensorT<S>& x, const TensorT<S>& kernel, const TensorT<S>& bias) {
    if (kernel.rank() != 3) throw ShapeError("conv1d_same: kernel must be (K,Cin,F)");
    const int K = kernel.dim(0), cin = kernel.dim(1), filters = kernel.dim(2);
    if (x.rank() < 2 || x.dim(x.rank() - 1) != cin)
        throw ShapeError("conv1d_same: input " + shape_str(x.shape()) + " does not provide " + std::to_string(cin) + " channels");
    if (bias.rank() != 1 || bias.dim(0) != filters) throw ShapeError("conv1d_same: bias must be length-" + std::to_string(filters));
    const int bsz = x.rank() == 3 ? x.dim(0) : 1;
    const int len = x.dim(x.rank() - 2);
    const int pad_left = (K - 1) / 2;
    if (K > len + K - 1) throw ConfigError("conv1d_same: kernel longer than padded input");

    // im2col: row (b*len + t) holds the K*cin receptive field of output t.
    const int rows = bsz * len;
    const int width = K * cin;
    std::vector<S> col(static_cast<std::size_t>(rows) * width, S(0));
    for (int b = 0; b < bsz; ++b)
        for (int t = 0; t < len; ++t) {
            S* dst = col.data() + (static_cast<std::size_t>(b) * len + t) * width;
            for (int k = 0; k < K; ++k) {
                const int src_t = t + k - pad_left;
                if (src_t < 0 || src_t >= len) continue;
                std::copy_n(x.values().data() + (static_cast<std::size_t>(b) * len + src_t) * cin, cin, dst + static_cast<std::size_t>(k) * cin);
            }
        }
    std::vector<S> out(static_cast<std::size_t>(rows) * filters);
    detail::gemm(col.data(), rows, width, false, kernel.values().data(), width, filters, false, out.data(), S(1), S(0));
    for (int r = 0; r < rows; ++r)
        for (int f = 0; f < filters; ++f) out[static_cast<std::size_t>(r) * filters + f] += bias.values()[static_cast<std::size_t>(f)];

    Shape out_shape = x.rank() == 3 ? Shape{bsz, len, filters} : Shape{len, filters};
    return detail::make_result<S>(
        std::move(out_shape), std::move(out), {x, kernel, bias},
        [bsz, len, cin, K, filters, pad_left, rows, width, col = std::move(col)](TensorNode<S>& nd) {
            auto& px = *nd.parents[0];
            auto& pk = *nd.parents[1];
            auto& pb = *nd.parents[2];
            if (pk.requires_grad) // dKernel += col^T * dOut
                detail::gemm(col.data(), rows, width, true, nd.grad.data(), rows, filters, false, pk.grad.data(), S(1), S(1));
            if (pb.requires_grad)
                for (int r = 0; r < rows; ++r)
                    for (int f = 0; f < filters; ++f) pb.grad[static_cast<std::size_t>(f)] += nd.grad[static_cast<std::size_t>(r) * filters + f];
            if (px.requires_grad) {
                // dCol = dOut * kernel^T, scattered back through the padding map.
                std::vector<S> dcol(static_cast<std::size_t>(rows) * width);
                detail::gemm(nd.grad.data(), rows, filters, false, pk.values.data(), width, filters, true, dcol.data(), S(1), S(0));
                for (int b = 0; b < bsz; ++b)
                    for (int t = 0; t < len; ++t) {
                        const S* src = dcol.data() + (static_cast<std::size_t>(b) * len + t) * width;
                        for (int k = 0; k < K; ++k) {
                            const int src_t = t + k - pad_left;
                            if (src_t < 0 || src_t >= len) continue;
                            S* dst = px.grad.data() + (static_cast<std::size_t>(b) * len + src_t) * cin;
                            for (int c = 0; c < cin; ++c) dst[c] += src[static_cast<std::size_t>(k) * cin + c];
                        }
                    }
            }
        });
}

/// Running statistics owned by a batch-norm layer.
template <typename S>
struct BatchNormState {
    std::vector<S> running_mean;
    std::vector<S> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNormState(int channels = 0)
        : running_mean(static_cast<std::size_t>(channels), S(0)), running_var(static_cast<std::size_t>(channels), S(1)) {}
};

/// Batch normalization over (batch, time) per channel.
/// Training mode normalizes with batch statistics and updates the running
/// estimates (unbiased variance); inference mode applies the running stats.
template <typename S>
TensorT<S> batch_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta, BatchNormState<S>& state,
                      bool training) {
    const int ch = detail::last_dim(x.shape());
    if (gamma.rank() != 1 || gamma.dim(0) != ch || beta.rank() != 1 || beta.dim(0) != ch)
        throw ShapeError("batch_norm: gamma/beta must be length-" + std::to_string(ch) + " vectors");
    if (static_cast<int>(state.running_mean.size()) != ch)
        throw ShapeError("batch_norm: state holds " + std::to_string(state.running_mean.size()) + " channels, input has " + std::to_string(ch));
    const int n = detail::row_count(x.shape()); // batch * time samples per channel

    std::vector<double> mean(static_cast<std::size_t>(ch), 0.0), var(static_cast<std::size_t>(ch), 0.0);
    if (training) {
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < ch; ++c) mean[static_cast<std::size_t>(c)] += static_cast<double>(x.values()[static_cast<std::size_t>(r) * ch + c]);
        for (int c = 0; c < ch; ++c) mean[static_cast<std::size_t>(c)] /= n;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < ch; ++c) {
                const double d = static_cast<double>(x.values()[static_cast<std::size_t>(r) * ch + c]) - mean[static_cast<std::size_t>(c)];
                var[static_cast<std::size_t>(c)] += d * d;
            }
        for (int c = 0; c < ch; ++c) var[static_cast<std::size_t>(c)] /= n;
        for (int c = 0; c < ch; ++c) {
            const double unbiased = n > 1 ? var[static_cast<std::size_t>(c)] * n / (n - 1) : var[static_cast<std::size_t>(c)];
            state.running_mean[static_cast<std::size_t>(c)] =
                static_cast<S>((1.0 - state.momentum) * static_cast<double>(state.running_mean[static_cast<std::size_t>(c)]) + state.momentum * mean[static_cast<std::size_t>(c)]);
            state.running_var[static_cast<std::size_t>(c)] =
                static_cast<S>((1.0 - state.momentum) * static_cast<double>(state.running_var[static_cast<std::size_t>(c)]) + state.momentum * unbiased);
        }
    } else {
        for (int c = 0; c < ch; ++c) {
            mean[static_cast<std::size_t>(c)] = static_cast<double>(state.running_mean[static_cast<std::size_t>(c)]);
            var[static_cast<std::size_t>(c)] = static_cast<double>(state.running_var[static_cast<std::size_t>(c)]);
        }
    }

    std::vector<S> out(x.values().size());
    std::vector<S> xhat(x.values().size());
    std::vector<S> inv_sigma(static_cast<std::size_t>(ch));
    for (int c = 0; c < ch; ++c) inv_sigma[static_cast<std::size_t>(c)] = static_cast<S>(1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + state.eps));
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < ch; ++c) {
            const std::size_t idx = static_cast<std::size_t>(r) * ch + c;
            xhat[idx] = static_cast<S>((static_cast<double>(x.values()[idx]) - mean[static_cast<std::size_t>(c)]) * static_cast<double>(inv_sigma[static_cast<std::size_t>(c)]));
            out[idx] = gamma.values()[static_cast<std::size_t>(c)] * xhat[idx] + beta.values()[static_cast<std::size_t>(c)];
        }

    return detail::make_result<S>(
        x.shape(), std::move(out), {x, gamma, beta},
        [n, ch, training, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](TensorNode<S>& nd) {
            auto& px = *nd.parents[0];
            auto& pg = *nd.parents[1];
            auto& pb = *nd.parents[2];
            for (int c = 0; c < ch; ++c) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (int r = 0; r < n; ++r) {
                    const std::size_t idx = static_cast<std::size_t>(r) * ch + c;
                    sum_g += static_cast<double>(nd.grad[idx]);
                    sum_gx += static_cast<double>(nd.grad[idx]) * static_cast<double>(xhat[idx]);
                }
                if (pg.requires_grad) pg.grad[static_cast<std::size_t>(c)] += static_cast<S>(sum_gx);
                if (pb.requires_grad) pb.grad[static_cast<std::size_t>(c)] += static_cast<S>(sum_g);
                if (px.requires_grad) {
                    const double gam = static_cast<double>(pg.values[static_cast<std::size_t>(c)]);
                    const double inv = static_cast<double>(inv_sigma[static_cast<std::size_t>(c)]);
                    if (training) {
                        // Batch stats participate in the graph.
                        for (int r = 0; r < n; ++r) {
                            const std::size_t idx = static_cast<std::size_t>(r) * ch + c;
                            const double g = static_cast<double>(nd.grad[idx]) * gam;
                            px.grad[idx] += static_cast<S>(inv * (g - gam * sum_g / n - static_cast<double>(xhat[idx]) * gam * sum_gx / n));
                        }
                    } else {
                        for (int r = 0; r < n; ++r) {
                            const std::size_t idx = static_cast<std::size_t>(r) * ch + c;
                            px.grad[idx] += static_cast<S>(static_cast<double>(nd.grad[idx]) * gam * inv);
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted dropout. Identity (same handle, no graph node) when rate is 0 or
/// the layer is in inference mode.
template <typename S>
TensorT<S> dropout(const TensorT<S>& x, double rate, std::mt19937_64* rng, bool training) {
    if (!training || rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
    if (!rng) throw ConfigError("dropout: training mode requires an RNG");
    std::bernoulli_distribution keep(1.0 - rate);
    const S inv_keep = static_cast<S>(1.0 / (1.0 - rate));
    std::vector<std::uint8_t> mask(x.values().size());
    std::vector<S> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = keep(*rng) ? 1 : 0;
        out[i] = mask[i] ? x.values()[i] * inv_keep : S(0);
    }
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [mask = std::move(mask), inv_keep](TensorNode<S>& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < nd.grad.size(); ++i)
            if (mask[i]) p.grad[i] += nd.grad[i] * inv_keep;
    });
}

} // namespace foreauth::nn
