#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "mcf/errors.hpp"
#include "mcf/tensor.hpp"

namespace mcf {

namespace detail {

// Trailing-aligned broadcast of two shapes (dims equal or 1).
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t nd = std::max(a.size(), b.size());
    Shape out(nd, 1);
    for (std::size_t i = 0; i < nd; ++i) {
        const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1)
            throw ShapeError("broadcast mismatch: " + shape_str(a) + " vs " + shape_str(b));
        out[nd - 1 - i] = std::max(da, db);
    }
    return out;
}

// Element strides of `from` aligned to the broadcast shape `to`; 0 where the
// source dimension is 1 (or missing).
inline std::vector<std::size_t> bcast_strides(const Shape& from, const Shape& to) {
    std::vector<std::size_t> strides(to.size(), 0);
    std::size_t acc = 1;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const std::size_t fi = from.size() - 1 - i;
        const std::size_t ti = to.size() - 1 - i;
        strides[ti] = (from[fi] == 1) ? 0 : acc;
        acc *= from[fi];
    }
    return strides;
}

// Calls fn(out_flat, a_flat, b_flat) for every element of the broadcast shape.
template <class Fn>
void for_each_bcast(const Shape& out_shape, const std::vector<std::size_t>& a_stride,
                    const std::vector<std::size_t>& b_stride, Fn&& fn) {
    const std::size_t nd = out_shape.size();
    const std::size_t total = shape_numel(out_shape);
    if (nd == 0) {
        return;
    }
    std::vector<std::size_t> idx(nd, 0);
    std::size_t ao = 0;
    std::size_t bo = 0;
    for (std::size_t of = 0; of < total; ++of) {
        fn(of, ao, bo);
        for (std::size_t d = nd; d-- > 0;) {
            ++idx[d];
            ao += a_stride[d];
            bo += b_stride[d];
            if (idx[d] < out_shape[d]) break;
            ao -= a_stride[d] * out_shape[d];
            bo -= b_stride[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

// C[n,r] += A[n,k] * B[k,r]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t r) {
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = c + i * r;
        const double* arow = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + kk * r;
            for (std::size_t j = 0; j < r; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[n,r] += A[n,k] * B[r,k]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t r) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * r;
        for (std::size_t j = 0; j < r; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

// C[k,r] += A[n,k]^T * B[n,r]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t r) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * r;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            double* crow = c + kk * r;
            for (std::size_t j = 0; j < r; ++j) crow[j] += av * brow[j];
        }
    }
}

inline Shape batch_of(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

}  // namespace detail

enum class BinaryKind { add, sub, mul, div };

// Elementwise binary op with trailing-aligned broadcasting. Gradients of
// broadcast inputs are sum-reduced over the stretched dimensions.
inline Tensor binary_op(const Tensor& a, const Tensor& b, BinaryKind kind) {
    const Shape out_shape = detail::broadcast_shape(a.shape(), b.shape());
    const auto as = detail::bcast_strides(a.shape(), out_shape);
    const auto bs = detail::bcast_strides(b.shape(), out_shape);
    Tensor out = Tensor::zeros(out_shape);

    const std::vector<double>& av = a.data();
    const std::vector<double>& bv = b.data();
    std::vector<double>& ov = out.data();
    detail::for_each_bcast(out_shape, as, bs, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        switch (kind) {
            case BinaryKind::add: ov[o] = av[ia] + bv[ib]; break;
            case BinaryKind::sub: ov[o] = av[ia] - bv[ib]; break;
            case BinaryKind::mul: ov[o] = av[ia] * bv[ib]; break;
            case BinaryKind::div: ov[o] = av[ia] / bv[ib]; break;
        }
    });

    record_op(out, {&a, &b}, [a = a, b = b, out, out_shape, as, bs, kind]() mutable {
        const std::vector<double>& g = out.grad();
        const std::vector<double>& avd = a.data();
        const std::vector<double>& bvd = b.data();
        std::vector<double>* ga = a.requires_grad() ? &a.grad() : nullptr;
        std::vector<double>* gb = b.requires_grad() ? &b.grad() : nullptr;
        detail::for_each_bcast(out_shape, as, bs,
                               [&](std::size_t o, std::size_t ia, std::size_t ib) {
            const double go = g[o];
            switch (kind) {
                case BinaryKind::add:
                    if (ga) (*ga)[ia] += go;
                    if (gb) (*gb)[ib] += go;
                    break;
                case BinaryKind::sub:
                    if (ga) (*ga)[ia] += go;
                    if (gb) (*gb)[ib] -= go;
                    break;
                case BinaryKind::mul:
                    if (ga) (*ga)[ia] += go * bvd[ib];
                    if (gb) (*gb)[ib] += go * avd[ia];
                    break;
                case BinaryKind::div:
                    if (ga) (*ga)[ia] += go / bvd[ib];
                    if (gb) (*gb)[ib] -= go * avd[ia] / (bvd[ib] * bvd[ib]);
                    break;
            }
        });
    });
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::mul); }
inline Tensor divide(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::div); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return divide(a, b); }

// y = c * x
inline Tensor scale(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = c * xv[i];
    record_op(out, {&x}, [x = x, out, c]() mutable {
        const auto& g = out.grad();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
    return out;
}

// y = x + c
inline Tensor shift(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] + c;
    record_op(out, {&x}, [x = x, out]() mutable {
        const auto& g = out.grad();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return out;
}

inline Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    record_op(out, {&x}, [x = x, out]() mutable {
        const auto& g = out.grad();
        const auto& xv2 = x.data();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv2[i] > 0.0) gx[i] += g[i];
    });
    return out;
}

namespace detail {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace detail

// tanh approximation: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
inline Tensor gelu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        const double u = detail::kGeluC * (v + detail::kGeluA * v * v * v);
        ov[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    record_op(out, {&x}, [x = x, out]() mutable {
        const auto& g = out.grad();
        const auto& xv2 = x.data();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = xv2[i];
            const double u = detail::kGeluC * (v + detail::kGeluA * v * v * v);
            const double t = std::tanh(u);
            const double sech2 = 1.0 - t * t;
            const double du = detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * v * v);
            gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * sech2 * du);
        }
    });
    return out;
}

inline Tensor abs_op(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = std::fabs(xv[i]);
    record_op(out, {&x}, [x = x, out]() mutable {
        const auto& g = out.grad();
        const auto& xv2 = x.data();
        auto& gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv2[i] > 0.0) gx[i] += g[i];
            else if (xv2[i] < 0.0) gx[i] -= g[i];
        }
    });
    return out;
}

namespace detail {

// Kahan compensated sum: one final rounding regardless of length.
inline void kahan_add(double& acc, double& comp, double v) {
    const double y = v - comp;
    const double t = acc + y;
    comp = (t - acc) - y;
    acc = t;
}

inline double kahan_sum(const double* v, std::size_t n) {
    double acc = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < n; ++i) kahan_add(acc, comp, v[i]);
    return acc;
}

}  // namespace detail

inline Tensor sum_all(const Tensor& x) {
    Tensor out = Tensor::zeros({1});
    out.data()[0] = detail::kahan_sum(x.data().data(), x.numel());
    record_op(out, {&x}, [x = x, out]() mutable {
        const double g = out.grad()[0];
        auto& gx = x.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
    return out;
}

inline Tensor mean_all(const Tensor& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// out[j] = in[(*table)[j]]; backward scatter-adds. The one data-movement
// primitive: channel mixing, patch slicing, permutes and head splits are all
// index tables over this.
inline Tensor take(const Tensor& in, std::shared_ptr<const std::vector<std::size_t>> table,
                   const Shape& out_shape) {
    if (shape_numel(out_shape) != table->size())
        throw ShapeError("take: table size " + std::to_string(table->size()) + " vs out shape " +
                         shape_str(out_shape));
    const std::size_t in_n = in.numel();
    for (std::size_t idx : *table)
        if (idx >= in_n) throw ShapeError("take: index " + std::to_string(idx) + " out of range");
    Tensor out = Tensor::zeros(out_shape);
    const auto& iv = in.data();
    auto& ov = out.data();
    const auto& tbl = *table;
    for (std::size_t j = 0; j < tbl.size(); ++j) ov[j] = iv[tbl[j]];
    record_op(out, {&in}, [in = in, out, table]() mutable {
        const auto& g = out.grad();
        auto& gi = in.grad();
        const auto& t = *table;
        for (std::size_t j = 0; j < t.size(); ++j) gi[t[j]] += g[j];
    });
    return out;
}

// Axis permutation (generalised transpose), implemented as a take.
inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& dims) {
    const std::size_t nd = x.ndim();
    if (dims.size() != nd) throw ShapeError("permute: rank mismatch");
    std::vector<bool> seen(nd, false);
    for (std::size_t d : dims) {
        if (d >= nd || seen[d]) throw ShapeError("permute: invalid axis list");
        seen[d] = true;
    }
    Shape out_shape(nd);
    for (std::size_t i = 0; i < nd; ++i) out_shape[i] = x.shape()[dims[i]];

    std::vector<std::size_t> in_strides(nd, 1);
    for (std::size_t i = nd - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];

    auto table = std::make_shared<std::vector<std::size_t>>(x.numel());
    std::vector<std::size_t> idx(nd, 0);
    for (std::size_t o = 0; o < x.numel(); ++o) {
        std::size_t src = 0;
        for (std::size_t d = 0; d < nd; ++d) src += idx[d] * in_strides[dims[d]];
        (*table)[o] = src;
        for (std::size_t d = nd; d-- > 0;) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
        }
    }
    return take(x, table, out_shape);
}

inline Tensor transpose_last2(const Tensor& x) {
    if (x.ndim() < 2) throw ShapeError("transpose_last2: need >= 2 dims");
    std::vector<std::size_t> dims(x.ndim());
    for (std::size_t i = 0; i < dims.size(); ++i) dims[i] = i;
    std::swap(dims[x.ndim() - 1], dims[x.ndim() - 2]);
    return permute(x, dims);
}

namespace detail {

inline void matmul_check(const Tensor& a, const Tensor& b, bool b_transposed) {
    if (a.ndim() < 2 || b.ndim() < 2)
        throw ShapeError("matmul: operands must have >= 2 dims, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    const std::size_t ak = a.shape()[a.ndim() - 1];
    const std::size_t bk = b_transposed ? b.shape()[b.ndim() - 1] : b.shape()[b.ndim() - 2];
    if (ak != bk)
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// Batched matrix product a[..,n,k] * b[..,k,r] (or b[..,r,k] transposed).
// Leading batch dimensions broadcast; gradients of broadcast operands are
// accumulated across the batch.
inline Tensor matmul_impl(const Tensor& a, const Tensor& b, bool b_transposed) {
    detail::matmul_check(a, b, b_transposed);
    const std::size_t n = a.shape()[a.ndim() - 2];
    const std::size_t k = a.shape()[a.ndim() - 1];
    const std::size_t r =
        b_transposed ? b.shape()[b.ndim() - 2] : b.shape()[b.ndim() - 1];

    const Shape batch_a = detail::batch_of(a.shape());
    const Shape batch_b = detail::batch_of(b.shape());
    const Shape batch_out = detail::broadcast_shape(batch_a, batch_b);
    const auto as = detail::bcast_strides(batch_a, batch_out);
    const auto bs = detail::bcast_strides(batch_b, batch_out);

    Shape out_shape = batch_out;
    out_shape.push_back(n);
    out_shape.push_back(r);
    Tensor out = Tensor::zeros(out_shape);

    const std::size_t a_mat = n * k;
    const std::size_t b_mat = k * r;
    const std::size_t o_mat = n * r;

    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    detail::for_each_bcast(batch_out, as, bs, [&](std::size_t g, std::size_t ia, std::size_t ib) {
        const double* am = ad + ia * a_mat;
        const double* bm = bd + ib * b_mat;
        double* om = od + g * o_mat;
        if (b_transposed) detail::gemm_nt(am, bm, om, n, k, r);
        else detail::gemm_nn(am, bm, om, n, k, r);
    });
    if (batch_out.empty()) {
        if (b_transposed) detail::gemm_nt(ad, bd, od, n, k, r);
        else detail::gemm_nn(ad, bd, od, n, k, r);
    }

    record_op(out, {&a, &b},
              [a = a, b = b, out, batch_out, as, bs, n, k, r, a_mat, b_mat, o_mat, b_transposed]() mutable {
        const double* gd = out.grad().data();
        const double* ad2 = a.data().data();
        const double* bd2 = b.data().data();
        double* ga = a.requires_grad() ? a.grad().data() : nullptr;
        double* gb = b.requires_grad() ? b.grad().data() : nullptr;
        auto run = [&](std::size_t g, std::size_t ia, std::size_t ib) {
            const double* gm = gd + g * o_mat;
            if (!b_transposed) {
                // dA += dC * B^T ; dB += A^T * dC
                if (ga) detail::gemm_nt(gm, bd2 + ib * b_mat, ga + ia * a_mat, n, r, k);
                if (gb) detail::gemm_tn(ad2 + ia * a_mat, gm, gb + ib * b_mat, n, k, r);
            } else {
                // C = A * B^T: dA += dC * B ; dB += dC^T * A
                if (ga) detail::gemm_nn(gm, bd2 + ib * b_mat, ga + ia * a_mat, n, r, k);
                if (gb) detail::gemm_tn(gm, ad2 + ia * a_mat, gb + ib * b_mat, n, r, k);
            }
        };
        detail::for_each_bcast(batch_out, as, bs, run);
        if (batch_out.empty()) run(0, 0, 0);
    });
    return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false); }

// a[..,n,k] * b[..,r,k]^T without materialising the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true); }

namespace detail {

inline std::size_t checked_axis(const Tensor& x, std::size_t axis, const char* what) {
    if (axis >= x.ndim())
        throw ShapeError(std::string(what) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(x.shape()));
    return axis;
}

inline std::vector<std::size_t> move_axis_last(std::size_t nd, std::size_t axis) {
    std::vector<std::size_t> dims;
    dims.reserve(nd);
    for (std::size_t i = 0; i < nd; ++i)
        if (i != axis) dims.push_back(i);
    dims.push_back(axis);
    return dims;
}

inline std::vector<std::size_t> inverse_perm(const std::vector<std::size_t>& dims) {
    std::vector<std::size_t> inv(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) inv[dims[i]] = i;
    return inv;
}

inline Tensor softmax_last(const Tensor& x) {
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t rix = 0; rix < rows; ++rix) {
        const double* row = xv.data() + rix * n;
        double* orow = ov.data() + rix * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        for (std::size_t j = 0; j < n; ++j) orow[j] = std::exp(row[j] - mx);
        const double s = kahan_sum(orow, n);
        for (std::size_t j = 0; j < n; ++j) orow[j] /= s;
    }
    record_op(out, {&x}, [x = x, out, n, rows]() mutable {
        const auto& g = out.grad();
        const auto& yv = out.data();
        auto& gx = x.grad();
        for (std::size_t rix = 0; rix < rows; ++rix) {
            const double* grow = g.data() + rix * n;
            const double* yrow = yv.data() + rix * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += grow[j] * yrow[j];
            double* gxr = gx.data() + rix * n;
            for (std::size_t j = 0; j < n; ++j) gxr[j] += yrow[j] * (grow[j] - dot);
        }
    });
    return out;
}

inline Tensor layer_norm_last(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              double eps) {
    const std::size_t n = x.shape().back();
    if (gamma.numel() != n || beta.numel() != n)
        throw ShapeError("layer_norm: gamma/beta length " + std::to_string(gamma.numel()) + "/" +
                         std::to_string(beta.numel()) + " for axis size " + std::to_string(n));
    const std::size_t rows = x.numel() / n;
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.data();
    const auto& gv = gamma.data();
    const auto& bv = beta.data();
    auto& ov = out.data();
    for (std::size_t rix = 0; rix < rows; ++rix) {
        const double* row = xv.data() + rix * n;
        double* orow = ov.data() + rix * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double inv_sigma = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) orow[j] = gv[j] * ((row[j] - mu) * inv_sigma) + bv[j];
    }
    record_op(out, {&x, &gamma, &beta}, [x = x, gamma = gamma, beta = beta, out, n, rows, eps]() mutable {
        const auto& g = out.grad();
        const auto& xv2 = x.data();
        const auto& gv2 = gamma.data();
        double* gx = x.requires_grad() ? x.grad().data() : nullptr;
        double* gg = gamma.requires_grad() ? gamma.grad().data() : nullptr;
        double* gb = beta.requires_grad() ? beta.grad().data() : nullptr;
        for (std::size_t rix = 0; rix < rows; ++rix) {
            const double* row = xv2.data() + rix * n;
            const double* grow = g.data() + rix * n;
            double mu = 0.0;
            for (std::size_t j = 0; j < n; ++j) mu += row[j];
            mu /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
            var /= static_cast<double>(n);
            const double inv_sigma = 1.0 / std::sqrt(var + eps);
            // dxhat_j = g_j * gamma_j ; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))/sigma
            double mean_dxh = 0.0;
            double mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double xh = (row[j] - mu) * inv_sigma;
                const double dxh = grow[j] * gv2[j];
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xh;
                if (gg) gg[j] += grow[j] * xh;
                if (gb) gb[j] += grow[j];
            }
            mean_dxh /= static_cast<double>(n);
            mean_dxh_xh /= static_cast<double>(n);
            if (gx) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double xh = (row[j] - mu) * inv_sigma;
                    const double dxh = grow[j] * gv2[j];
                    gx[rix * n + j] += (dxh - mean_dxh - xh * mean_dxh_xh) * inv_sigma;
                }
            }
        }
    });
    return out;
}

}  // namespace detail

// Softmax along `axis`, max-subtracted for overflow safety. Each slice along
// the axis sums to 1.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
    detail::checked_axis(x, axis, "softmax");
    if (axis == x.ndim() - 1) return detail::softmax_last(x);
    const auto dims = detail::move_axis_last(x.ndim(), axis);
    Tensor moved = permute(x, dims);
    Tensor y = detail::softmax_last(moved);
    return permute(y, detail::inverse_perm(dims));
}

inline Tensor softmax(const Tensor& x) { return softmax(x, x.ndim() - 1); }

// Normalises each slice along `axis` to zero mean / unit variance (population
// variance, eps inside the square root), then applies the elementwise affine
// gamma * xhat + beta.
inline Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma,
                         const Tensor& beta, double eps = 1e-5) {
    detail::checked_axis(x, axis, "layer_norm");
    if (axis == x.ndim() - 1) return detail::layer_norm_last(x, gamma, beta, eps);
    const auto dims = detail::move_axis_last(x.ndim(), axis);
    Tensor moved = permute(x, dims);
    Tensor y = detail::layer_norm_last(moved, gamma, beta, eps);
    return permute(y, detail::inverse_perm(dims));
}

// Throws NumericError naming `stage` if any element is NaN or infinite.
inline void check_finite(const Tensor& x, const char* stage) {
    for (double v : x.data()) {
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in ") + stage);
    }
}

}  // namespace mcf
