#pragma once

// Reverse-mode autodiff over a flat op tape. A Tape owns the nodes of one
// forward pass; backward() walks them in reverse creation order (creation
// order is a topological order by construction) and accumulates gradients.
// Tensors on the tape are immutable once created. One tape serves one
// forward/backward pass and is then thrown away; parameters live outside
// and enter as leaves that alias the parameter storage.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "fewfont/errors.hpp"
#include "fewfont/gemm.hpp"
#include "fewfont/tensor.hpp"

namespace fewfont {

template <typename T>
class Tape {
  public:
    using Id = int;

    // Checked mode: validate finiteness of every op output (and leaf input).
    bool check_finite = false;

    Id leaf(Tensor<T> v, bool requires_grad = false) {
        if (check_finite && !all_finite(v)) throw ValueError("non-finite values in tape leaf");
        return push_leaf(std::move(v), requires_grad);
    }

    // Value copy that blocks gradient flow (shares storage, no backward edge).
    Id detach(Id x) { return push_leaf(val(x), false); }

    const Tensor<T>& val(Id i) const { return nodes_[std::size_t(i)].value; }

    // Gradient of a node after backward(); empty tensor if the node was not
    // reached or does not require grad.
    const Tensor<T>& grad_of(Id i) const { return nodes_[std::size_t(i)].grad; }

    std::size_t node_count() const { return nodes_.size(); }

    // ---- elementwise ----

    Id add(Id a, Id b) {
        const auto &A = val(a), &B = val(b);
        require_same(A, B, "add");
        Tensor<T> out(A.shape);
        for (std::size_t i = 0; i < A.size(); i++) out[i] = A[i] + B[i];
        return push(std::move(out), needs(a, b), [this, a, b](Node& n) {
            accumulate(a, n.grad);
            accumulate(b, n.grad);
        });
    }

    Id sub(Id a, Id b) {
        const auto &A = val(a), &B = val(b);
        require_same(A, B, "sub");
        Tensor<T> out(A.shape);
        for (std::size_t i = 0; i < A.size(); i++) out[i] = A[i] - B[i];
        return push(std::move(out), needs(a, b), [this, a, b](Node& n) {
            accumulate(a, n.grad);
            if (wants(b)) {
                Tensor<T>& g = grad_buf(b);
                for (std::size_t i = 0; i < n.grad.size(); i++) g[i] -= n.grad[i];
            }
        });
    }

    Id mul(Id a, Id b) {
        const auto &A = val(a), &B = val(b);
        require_same(A, B, "mul");
        Tensor<T> out(A.shape);
        for (std::size_t i = 0; i < A.size(); i++) out[i] = A[i] * B[i];
        return push(std::move(out), needs(a, b), [this, a, b](Node& n) {
            const auto &A = val(a), &B = val(b);
            if (wants(a)) {
                Tensor<T>& g = grad_buf(a);
                for (std::size_t i = 0; i < n.grad.size(); i++) g[i] += n.grad[i] * B[i];
            }
            if (wants(b)) {
                Tensor<T>& g = grad_buf(b);
                for (std::size_t i = 0; i < n.grad.size(); i++) g[i] += n.grad[i] * A[i];
            }
        });
    }

    Id add_const(Id x, T c) {
        const auto& X = val(x);
        Tensor<T> out(X.shape);
        for (std::size_t i = 0; i < X.size(); i++) out[i] = X[i] + c;
        return push(std::move(out), needs(x), [this, x](Node& n) { accumulate(x, n.grad); });
    }

    Id scale(Id x, T c) {
        const auto& X = val(x);
        Tensor<T> out(X.shape);
        for (std::size_t i = 0; i < X.size(); i++) out[i] = X[i] * c;
        return push(std::move(out), needs(x), [this, x, c](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            for (std::size_t i = 0; i < n.grad.size(); i++) g[i] += c * n.grad[i];
        });
    }

    // y = x * s where s is a 1-element tensor on the tape (spectral norm path).
    Id scale_by(Id x, Id s) {
        const auto& X = val(x);
        if (val(s).size() != 1) throw ShapeError("scale_by expects a 1-element scale");
        T sv = val(s)[0];
        Tensor<T> out(X.shape);
        for (std::size_t i = 0; i < X.size(); i++) out[i] = X[i] * sv;
        return push(std::move(out), needs(x, s), [this, x, s](Node& n) {
            const auto& X = val(x);
            T sv = val(s)[0];
            if (wants(x)) {
                Tensor<T>& g = grad_buf(x);
                for (std::size_t i = 0; i < n.grad.size(); i++) g[i] += sv * n.grad[i];
            }
            if (wants(s)) {
                T acc = 0;
                for (std::size_t i = 0; i < n.grad.size(); i++) acc += n.grad[i] * X[i];
                grad_buf(s)[0] += acc;
            }
        });
    }

    Id relu(Id x) {
        const auto& X = val(x);
        Tensor<T> out(X.shape);
        for (std::size_t i = 0; i < X.size(); i++) out[i] = X[i] > T(0) ? X[i] : T(0);
        return push(std::move(out), needs(x), [this, x](Node& n) {
            if (!wants(x)) return;
            const auto& X = val(x);
            Tensor<T>& g = grad_buf(x);
            for (std::size_t i = 0; i < n.grad.size(); i++)
                if (X[i] > T(0)) g[i] += n.grad[i];
        });
    }

    Id sigmoid(Id x) {
        const auto& X = val(x);
        Tensor<T> out(X.shape);
        for (std::size_t i = 0; i < X.size(); i++) out[i] = T(1) / (T(1) + std::exp(-X[i]));
        return push(std::move(out), needs(x), [this, x](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            for (std::size_t i = 0; i < n.grad.size(); i++) {
                T y = n.value[i];
                g[i] += n.grad[i] * y * (T(1) - y);
            }
        });
    }

    Id abs(Id x) {
        const auto& X = val(x);
        Tensor<T> out(X.shape);
        for (std::size_t i = 0; i < X.size(); i++) out[i] = std::fabs(X[i]);
        return push(std::move(out), needs(x), [this, x](Node& n) {
            if (!wants(x)) return;
            const auto& X = val(x);
            Tensor<T>& g = grad_buf(x);
            for (std::size_t i = 0; i < n.grad.size(); i++)
                g[i] += n.grad[i] * (X[i] > T(0) ? T(1) : (X[i] < T(0) ? T(-1) : T(0)));
        });
    }

    Id recip(Id x) {
        const auto& X = val(x);
        Tensor<T> out(X.shape);
        for (std::size_t i = 0; i < X.size(); i++) out[i] = T(1) / X[i];
        return push(std::move(out), needs(x), [this, x](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            for (std::size_t i = 0; i < n.grad.size(); i++) {
                T y = n.value[i];
                g[i] -= n.grad[i] * y * y;
            }
        });
    }

    // ---- reductions / broadcasts ----

    Id sum_all(Id x) {
        const auto& X = val(x);
        T acc = 0;
        for (std::size_t i = 0; i < X.size(); i++) acc += X[i];
        return push(Tensor<T>::scalar(acc), needs(x), [this, x](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            T d = n.grad[0];
            for (std::size_t i = 0; i < g.size(); i++) g[i] += d;
        });
    }

    Id mean_all(Id x) {
        const auto& X = val(x);
        T acc = 0;
        for (std::size_t i = 0; i < X.size(); i++) acc += X[i];
        T inv = T(1) / T(X.size());
        return push(Tensor<T>::scalar(acc * inv), needs(x), [this, x, inv](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            T d = n.grad[0] * inv;
            for (std::size_t i = 0; i < g.size(); i++) g[i] += d;
        });
    }

    // [C,H,W] -> [C], mean over spatial positions (also the adaptive 1x1 pool).
    Id spatial_mean(Id x) {
        const auto& X = val(x);
        require_rank(X, 3, "spatial_mean");
        int C = X.dim(0), HW = X.dim(1) * X.dim(2);
        Tensor<T> out({C});
        T inv = T(1) / T(HW);
        for (int c = 0; c < C; c++) {
            T acc = 0;
            const T* p = X.ptr() + std::size_t(c) * HW;
            for (int i = 0; i < HW; i++) acc += p[i];
            out[std::size_t(c)] = acc * inv;
        }
        return push(std::move(out), needs(x), [this, x, C, HW, inv](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            for (int c = 0; c < C; c++) {
                T d = n.grad[std::size_t(c)] * inv;
                T* p = g.ptr() + std::size_t(c) * HW;
                for (int i = 0; i < HW; i++) p[i] += d;
            }
        });
    }

    // [C] -> [C,H,W]
    Id broadcast_chw(Id v, int H, int W) {
        const auto& V = val(v);
        require_rank(V, 1, "broadcast_chw");
        int C = V.dim(0), HW = H * W;
        Tensor<T> out({C, H, W});
        for (int c = 0; c < C; c++) {
            T* p = out.ptr() + std::size_t(c) * HW;
            for (int i = 0; i < HW; i++) p[i] = V[std::size_t(c)];
        }
        return push(std::move(out), needs(v), [this, v, C, HW](Node& n) {
            if (!wants(v)) return;
            Tensor<T>& g = grad_buf(v);
            for (int c = 0; c < C; c++) {
                const T* p = n.grad.ptr() + std::size_t(c) * HW;
                T acc = 0;
                for (int i = 0; i < HW; i++) acc += p[i];
                g[std::size_t(c)] += acc;
            }
        });
    }

    // ---- shape ----

    Id reshape(Id x, Shape s) {
        Tensor<T> out = val(x).viewed(std::move(s));  // shares storage
        return push(std::move(out), needs(x), [this, x](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            for (std::size_t i = 0; i < n.grad.size(); i++) g[i] += n.grad[i];
        });
    }

    Id permute(Id x, std::vector<int> axes) {
        const auto& X = val(x);
        int r = X.rank();
        if (int(axes.size()) != r) throw ShapeError("permute: axes rank mismatch");
        Shape out_shape(std::size_t(r), 0);
        for (int i = 0; i < r; i++) out_shape[std::size_t(i)] = X.dim(axes[std::size_t(i)]);
        Tensor<T> out(out_shape);
        permute_copy(X, out, axes, false);
        return push(std::move(out), needs(x), [this, x, axes](Node& n) {
            if (!wants(x)) return;
            permute_copy(n.grad, grad_buf(x), axes, true);
        });
    }

    Id concat(const std::vector<Id>& xs, int axis) {
        if (xs.empty()) throw ShapeError("concat of zero tensors");
        const auto& X0 = val(xs[0]);
        int r = X0.rank();
        if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range");
        Shape out_shape = X0.shape;
        int axis_total = 0;
        for (Id x : xs) {
            const auto& X = val(x);
            if (X.rank() != r) throw ShapeError("concat: rank mismatch");
            for (int i = 0; i < r; i++)
                if (i != axis && X.dim(i) != X0.dim(i))
                    throw ShapeError("concat: inconsistent shapes " + shape_str(X.shape) +
                                     " vs " + shape_str(X0.shape));
            axis_total += X.dim(axis);
        }
        out_shape[std::size_t(axis)] = axis_total;
        std::size_t outer = 1, inner = 1;
        for (int i = 0; i < axis; i++) outer *= std::size_t(X0.dim(i));
        for (int i = axis + 1; i < r; i++) inner *= std::size_t(X0.dim(i));

        Tensor<T> out(out_shape);
        std::size_t row = std::size_t(axis_total) * inner;
        std::size_t off = 0;
        for (Id x : xs) {
            const auto& X = val(x);
            std::size_t block = std::size_t(X.dim(axis)) * inner;
            for (std::size_t o = 0; o < outer; o++)
                std::memcpy(out.ptr() + o * row + off, X.ptr() + o * block, block * sizeof(T));
            off += block;
        }
        bool any = false;
        for (Id x : xs) any = any || needs(x);
        std::vector<Id> ins = xs;
        return push(std::move(out), any, [this, ins, inner, outer, row](Node& n) {
            std::size_t off = 0;
            for (Id x : ins) {
                const auto& X = val(x);
                std::size_t axis_dim = X.size() / (outer * inner);
                std::size_t b = axis_dim * inner;
                if (wants(x)) {
                    Tensor<T>& g = grad_buf(x);
                    for (std::size_t o = 0; o < outer; o++) {
                        const T* src = n.grad.ptr() + o * row + off;
                        T* dst = g.ptr() + o * b;
                        for (std::size_t i = 0; i < b; i++) dst[i] += src[i];
                    }
                }
                off += b;
            }
        });
    }

    // Row lookup into a [R,C] table (embedding). Backward scatters into the row.
    Id row(Id table, int r) {
        const auto& Tb = val(table);
        require_rank(Tb, 2, "row");
        if (r < 0 || r >= Tb.dim(0)) throw ValueError("row index out of range");
        int C = Tb.dim(1);
        Tensor<T> out({C});
        std::memcpy(out.ptr(), Tb.ptr() + std::size_t(r) * C, std::size_t(C) * sizeof(T));
        return push(std::move(out), needs(table), [this, table, r, C](Node& n) {
            if (!wants(table)) return;
            Tensor<T>& g = grad_buf(table);
            T* dst = g.ptr() + std::size_t(r) * C;
            for (int i = 0; i < C; i++) dst[std::size_t(i)] += n.grad[std::size_t(i)];
        });
    }

    // ---- linear algebra ----

    Id matmul(Id a, Id b) {
        const auto &A = val(a), &B = val(b);
        require_rank(A, 2, "matmul lhs");
        require_rank(B, 2, "matmul rhs");
        if (A.dim(1) != B.dim(0))
            throw ShapeError("matmul: inner dimensions disagree " + shape_str(A.shape) + " * " +
                             shape_str(B.shape));
        int m = A.dim(0), k = A.dim(1), n = B.dim(1);
        Tensor<T> out({m, n});
        gemm_nn(A.ptr(), B.ptr(), out.ptr(), m, k, n);
        return push(std::move(out), needs(a, b), [this, a, b, m, k, n](Node& nd) {
            const auto &A = val(a), &B = val(b);
            if (wants(a)) gemm_nt(nd.grad.ptr(), B.ptr(), grad_buf(a).ptr(), m, n, k, true);
            if (wants(b)) gemm_tn(A.ptr(), nd.grad.ptr(), grad_buf(b).ptr(), k, m, n, true);
        });
    }

    // Row-wise softmax with max-subtraction stabilization.
    Id softmax_rows(Id x) {
        const auto& X = val(x);
        require_rank(X, 2, "softmax_rows");
        int R = X.dim(0), C = X.dim(1);
        Tensor<T> out(X.shape);
        for (int r = 0; r < R; r++) {
            const T* in = X.ptr() + std::size_t(r) * C;
            T* o = out.ptr() + std::size_t(r) * C;
            T mx = in[0];
            for (int i = 1; i < C; i++) mx = std::max(mx, in[i]);
            T sum = 0;
            for (int i = 0; i < C; i++) {
                o[i] = std::exp(in[i] - mx);
                sum += o[i];
            }
            T inv = T(1) / sum;
            for (int i = 0; i < C; i++) o[i] *= inv;
        }
        return push(std::move(out), needs(x), [this, x, R, C](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            for (int r = 0; r < R; r++) {
                const T* y = n.value.ptr() + std::size_t(r) * C;
                const T* dy = n.grad.ptr() + std::size_t(r) * C;
                T* dx = g.ptr() + std::size_t(r) * C;
                T dot = 0;
                for (int i = 0; i < C; i++) dot += dy[i] * y[i];
                for (int i = 0; i < C; i++) dx[i] += y[i] * (dy[i] - dot);
            }
        });
    }

    // ---- image ops ----

    // Cross-correlation, zero padding. x [Ci,H,W], w [Co,Ci,K,K], optional
    // bias [Co] (pass -1 for none).
    Id conv2d(Id x, Id w, Id bias, int stride, int pad) {
        const auto &X = val(x), &W = val(w);
        require_rank(X, 3, "conv2d input");
        require_rank(W, 4, "conv2d weight");
        if (stride < 1 || pad < 0) throw ValueError("conv2d: bad stride/pad");
        int Ci = X.dim(0), H = X.dim(1), Wd = X.dim(2);
        int Co = W.dim(0), K = W.dim(2);
        if (W.dim(1) != Ci)
            throw ShapeError("conv2d: weight expects " + std::to_string(W.dim(1)) +
                             " input channels, got " + std::to_string(Ci));
        if (W.dim(3) != K) throw ShapeError("conv2d: non-square kernel");
        int Ho = (H + 2 * pad - K) / stride + 1;
        int Wo = (Wd + 2 * pad - K) / stride + 1;
        if (H + 2 * pad < K || Wd + 2 * pad < K || Ho < 1 || Wo < 1)
            throw ShapeError("conv2d: nonpositive output size");
        if (bias >= 0 && (val(bias).rank() != 1 || val(bias).dim(0) != Co))
            throw ShapeError("conv2d: bias shape mismatch");

        std::vector<T> cols(std::size_t(Ci) * K * K * Ho * Wo);
        im2col(X.ptr(), Ci, H, Wd, K, stride, pad, Ho, Wo, cols.data());
        Tensor<T> out({Co, Ho, Wo});
        gemm_nn(W.ptr(), cols.data(), out.ptr(), Co, Ci * K * K, Ho * Wo);
        if (bias >= 0) {
            const auto& Bv = val(bias);
            for (int c = 0; c < Co; c++) {
                T* p = out.ptr() + std::size_t(c) * Ho * Wo;
                for (int i = 0; i < Ho * Wo; i++) p[i] += Bv[std::size_t(c)];
            }
        }
        bool ng = needs(x, w) || (bias >= 0 && needs(bias));
        return push(std::move(out), ng,
                    [this, x, w, bias, stride, pad, Ci, H, Wd, Co, K, Ho, Wo](Node& n) {
            const auto &X = val(x), &W = val(w);
            int ck = Ci * K * K, hw = Ho * Wo;
            if (wants(w)) {
                // dW = dY2d * cols^T ; cols recomputed to keep the tape lean
                std::vector<T> cols(std::size_t(ck) * hw);
                im2col(X.ptr(), Ci, H, Wd, K, stride, pad, Ho, Wo, cols.data());
                gemm_nt(n.grad.ptr(), cols.data(), grad_buf(w).ptr(), Co, hw, ck, true);
            }
            if (wants(x)) {
                std::vector<T> dcols(std::size_t(ck) * hw);
                gemm_tn(W.ptr(), n.grad.ptr(), dcols.data(), ck, Co, hw);
                col2im(dcols.data(), Ci, H, Wd, K, stride, pad, Ho, Wo, grad_buf(x).ptr());
            }
            if (bias >= 0 && wants(bias)) {
                Tensor<T>& g = grad_buf(bias);
                for (int c = 0; c < Co; c++) {
                    const T* p = n.grad.ptr() + std::size_t(c) * hw;
                    T acc = 0;
                    for (int i = 0; i < hw; i++) acc += p[i];
                    g[std::size_t(c)] += acc;
                }
            }
        });
    }

    Id avgpool2x2(Id x) {
        const auto& X = val(x);
        require_rank(X, 3, "avgpool2x2");
        int C = X.dim(0), H = X.dim(1), W = X.dim(2);
        if (H % 2 || W % 2) throw ShapeError("avgpool2x2: odd spatial size");
        int Ho = H / 2, Wo = W / 2;
        Tensor<T> out({C, Ho, Wo});
        for (int c = 0; c < C; c++) {
            const T* in = X.ptr() + std::size_t(c) * H * W;
            T* o = out.ptr() + std::size_t(c) * Ho * Wo;
            for (int y = 0; y < Ho; y++)
                for (int xx = 0; xx < Wo; xx++)
                    o[y * Wo + xx] = (in[(2 * y) * W + 2 * xx] + in[(2 * y) * W + 2 * xx + 1] +
                                      in[(2 * y + 1) * W + 2 * xx] +
                                      in[(2 * y + 1) * W + 2 * xx + 1]) *
                                     T(0.25);
        }
        return push(std::move(out), needs(x), [this, x, C, H, W, Ho, Wo](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            for (int c = 0; c < C; c++) {
                const T* dy = n.grad.ptr() + std::size_t(c) * Ho * Wo;
                T* dx = g.ptr() + std::size_t(c) * H * W;
                for (int y = 0; y < Ho; y++)
                    for (int xx = 0; xx < Wo; xx++) {
                        T d = dy[y * Wo + xx] * T(0.25);
                        dx[(2 * y) * W + 2 * xx] += d;
                        dx[(2 * y) * W + 2 * xx + 1] += d;
                        dx[(2 * y + 1) * W + 2 * xx] += d;
                        dx[(2 * y + 1) * W + 2 * xx + 1] += d;
                    }
            }
        });
    }

    Id upsample_nearest2x(Id x) {
        const auto& X = val(x);
        require_rank(X, 3, "upsample_nearest2x");
        int C = X.dim(0), H = X.dim(1), W = X.dim(2);
        int Ho = H * 2, Wo = W * 2;
        Tensor<T> out({C, Ho, Wo});
        for (int c = 0; c < C; c++) {
            const T* in = X.ptr() + std::size_t(c) * H * W;
            T* o = out.ptr() + std::size_t(c) * Ho * Wo;
            for (int y = 0; y < Ho; y++)
                for (int xx = 0; xx < Wo; xx++) o[y * Wo + xx] = in[(y / 2) * W + xx / 2];
        }
        return push(std::move(out), needs(x), [this, x, C, H, W, Ho, Wo](Node& n) {
            if (!wants(x)) return;
            Tensor<T>& g = grad_buf(x);
            for (int c = 0; c < C; c++) {
                const T* dy = n.grad.ptr() + std::size_t(c) * Ho * Wo;
                T* dx = g.ptr() + std::size_t(c) * H * W;
                for (int y = 0; y < Ho; y++)
                    for (int xx = 0; xx < Wo; xx++) dx[(y / 2) * W + xx / 2] += dy[y * Wo + xx];
            }
        });
    }

    // Per-channel normalization to zero mean / unit variance over H*W, with
    // affine parameters gamma, beta [C]. Population variance, eps-regularized.
    Id instance_norm(Id x, Id gamma, Id beta, T eps) {
        const auto& X = val(x);
        require_rank(X, 3, "instance_norm");
        int C = X.dim(0), HW = X.dim(1) * X.dim(2);
        if (val(gamma).size() != std::size_t(C) || val(beta).size() != std::size_t(C))
            throw ShapeError("instance_norm: affine parameter shape mismatch");
        Tensor<T> out(X.shape);
        Tensor<T> xhat(X.shape);       // saved for backward
        Tensor<T> inv_std({C});
        const auto &G = val(gamma), &B = val(beta);
        T invn = T(1) / T(HW);
        for (int c = 0; c < C; c++) {
            const T* in = X.ptr() + std::size_t(c) * HW;
            T mu = 0;
            for (int i = 0; i < HW; i++) mu += in[i];
            mu *= invn;
            T var = 0;
            for (int i = 0; i < HW; i++) {
                T d = in[i] - mu;
                var += d * d;
            }
            var *= invn;
            T is = T(1) / std::sqrt(var + eps);
            inv_std[std::size_t(c)] = is;
            T* xh = xhat.ptr() + std::size_t(c) * HW;
            T* o = out.ptr() + std::size_t(c) * HW;
            for (int i = 0; i < HW; i++) {
                xh[i] = (in[i] - mu) * is;
                o[i] = G[std::size_t(c)] * xh[i] + B[std::size_t(c)];
            }
        }
        bool ng = needs(x, gamma) || needs(beta);
        auto xh_keep = std::make_shared<Tensor<T>>(std::move(xhat));
        auto is_keep = std::make_shared<Tensor<T>>(std::move(inv_std));
        return push(std::move(out), ng,
                    [this, x, gamma, beta, C, HW, invn, xh_keep, is_keep](Node& n) {
            const auto& G = val(gamma);
            for (int c = 0; c < C; c++) {
                const T* dy = n.grad.ptr() + std::size_t(c) * HW;
                const T* xh = xh_keep->ptr() + std::size_t(c) * HW;
                T sum_dy = 0, sum_dy_xh = 0;
                for (int i = 0; i < HW; i++) {
                    sum_dy += dy[i];
                    sum_dy_xh += dy[i] * xh[i];
                }
                if (wants(gamma)) grad_buf(gamma)[std::size_t(c)] += sum_dy_xh;
                if (wants(beta)) grad_buf(beta)[std::size_t(c)] += sum_dy;
                if (wants(x)) {
                    T* dx = grad_buf(x).ptr() + std::size_t(c) * HW;
                    T g = G[std::size_t(c)];
                    T is = (*is_keep)[std::size_t(c)];
                    T m_dy = sum_dy * invn, m_dy_xh = sum_dy_xh * invn;
                    for (int i = 0; i < HW; i++)
                        dx[i] += g * is * (dy[i] - m_dy - xh[i] * m_dy_xh);
                }
            }
        });
    }

    // ---- backward ----

    void backward(Id root) {
        Node& r = nodes_[std::size_t(root)];
        if (r.value.size() != 1) throw ValueError("backward: root must be a scalar");
        grad_buf(root)[0] = T(1);
        for (Id i = root; i >= 0; i--) {
            Node& n = nodes_[std::size_t(i)];
            if (!n.requires_grad || n.grad.empty() || !n.back) continue;
            n.back->run(n);
        }
    }

  private:
    struct Node;

    // Hand-rolled closure erasure (std::function of a local lambda inside a
    // class-template member miscompiles on gcc 11).
    struct BackFn {
        virtual void run(Node&) = 0;
        virtual ~BackFn() = default;
    };
    template <typename F>
    struct BackImpl final : BackFn {
        F fn;
        explicit BackImpl(F f) : fn(std::move(f)) {}
        void run(Node& n) override { fn(n); }
    };

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        std::unique_ptr<BackFn> back;  // null for leaves
    };

    // deque: references returned by val()/grad_of() stay valid as ops push
    std::deque<Node> nodes_;

    Id push_leaf(Tensor<T> v, bool requires_grad) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Id(nodes_.size()) - 1;
    }

    template <typename F>
    Id push(Tensor<T> v, bool requires_grad, F back) {
        if (check_finite && !all_finite(v)) throw ValueError("non-finite values in op output");
        Node n;
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        n.back = std::make_unique<BackImpl<F>>(std::move(back));
        nodes_.push_back(std::move(n));
        return Id(nodes_.size()) - 1;
    }

    bool needs(Id a) const { return nodes_[std::size_t(a)].requires_grad; }
    bool needs(Id a, Id b) const { return needs(a) || needs(b); }

    // An input participates in backward iff it requires grad.
    bool wants(Id a) const { return needs(a); }

    void accumulate(Id x, const Tensor<T>& g) {
        if (!wants(x)) return;
        Tensor<T>& dst = grad_buf(x);
        for (std::size_t i = 0; i < g.size(); i++) dst[i] += g[i];
    }

    Tensor<T>& grad_buf(Id i) {
        Node& n = nodes_[std::size_t(i)];
        if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
        return n.grad;
    }

    static void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
        if (!a.same_shape(b))
            throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                             " vs " + shape_str(b.shape));
    }
    static void require_rank(const Tensor<T>& t, int r, const char* what) {
        if (t.rank() != r)
            throw ShapeError(std::string(what) + ": expected rank " + std::to_string(r) +
                             ", got " + shape_str(t.shape));
    }

    // out = permute(in) when !inverse; grad accumulate in = permute^-1(out) when inverse.
    static void permute_copy(const Tensor<T>& src, Tensor<T>& dst, const std::vector<int>& axes,
                             bool inverse) {
        int r = int(axes.size());
        const Shape& in_shape = inverse ? dst.shape : src.shape;
        std::vector<std::size_t> in_strides(std::size_t(r), 1);
        for (int i = r - 2; i >= 0; i--)
            in_strides[std::size_t(i)] =
                in_strides[std::size_t(i) + 1] * std::size_t(in_shape[std::size_t(i) + 1]);
        Shape out_shape(std::size_t(r), 0);
        std::vector<std::size_t> out_to_in(std::size_t(r), 0);
        for (int i = 0; i < r; i++) {
            out_shape[std::size_t(i)] = in_shape[std::size_t(axes[std::size_t(i)])];
            out_to_in[std::size_t(i)] = in_strides[std::size_t(axes[std::size_t(i)])];
        }
        std::size_t total = shape_numel(out_shape);
        std::vector<int> idx(std::size_t(r), 0);
        const T* sp = src.ptr();
        T* dp = dst.ptr();
        for (std::size_t o = 0; o < total; o++) {
            std::size_t in_off = 0;
            for (int i = 0; i < r; i++) in_off += std::size_t(idx[std::size_t(i)]) * out_to_in[std::size_t(i)];
            if (inverse)
                dp[in_off] += sp[o];
            else
                dp[o] = sp[in_off];
            for (int i = r - 1; i >= 0; i--) {
                if (++idx[std::size_t(i)] < out_shape[std::size_t(i)]) break;
                idx[std::size_t(i)] = 0;
            }
        }
    }

    static void im2col(const T* x, int Ci, int H, int W, int K, int stride, int pad, int Ho,
                       int Wo, T* cols) {
        int hw = Ho * Wo;
        for (int c = 0; c < Ci; c++)
            for (int ky = 0; ky < K; ky++)
                for (int kx = 0; kx < K; kx++) {
                    T* dst = cols + std::size_t((c * K + ky) * K + kx) * hw;
                    for (int oy = 0; oy < Ho; oy++) {
                        int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) {
                            for (int ox = 0; ox < Wo; ox++) dst[oy * Wo + ox] = T(0);
                            continue;
                        }
                        const T* src_row = x + (std::size_t(c) * H + iy) * W;
                        for (int ox = 0; ox < Wo; ox++) {
                            int ix = ox * stride + kx - pad;
                            dst[oy * Wo + ox] = (ix >= 0 && ix < W) ? src_row[ix] : T(0);
                        }
                    }
                }
    }

    static void col2im(const T* cols, int Ci, int H, int W, int K, int stride, int pad, int Ho,
                       int Wo, T* dx) {
        int hw = Ho * Wo;
        for (int c = 0; c < Ci; c++)
            for (int ky = 0; ky < K; ky++)
                for (int kx = 0; kx < K; kx++) {
                    const T* src = cols + std::size_t((c * K + ky) * K + kx) * hw;
                    for (int oy = 0; oy < Ho; oy++) {
                        int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) continue;
                        T* dst_row = dx + (std::size_t(c) * H + iy) * W;
                        for (int ox = 0; ox < Wo; ox++) {
                            int ix = ox * stride + kx - pad;
                            if (ix >= 0 && ix < W) dst_row[ix] += src[oy * Wo + ox];
                        }
                    }
                }
    }
};

}  // namespace fewfont
