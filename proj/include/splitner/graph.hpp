#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "splitner/kernels.hpp"
#include "splitner/rng.hpp"
#include "splitner/tensor.hpp"

namespace splitner {

// Eager tape autograd. Ops compute their value immediately and push a backward
// closure; backward() runs the closures in reverse creation order and flushes
// leaf gradients into the external parameter tensors. One Graph per forward
// pass; cheap to construct and throw away.
template <typename T>
class Graph {
public:
    using Ref = int;

    Ref param(Tensor<T>& p) {
        Node n;
        n.val = p;  // copy of the current values; grads flow to the external tensor
        n.needs_grad = true;
        n.external = &p;
        return push(std::move(n), {});
    }

    Ref input(Tensor<T> v, bool needs_grad = false) {
        Node n;
        n.val = std::move(v);
        n.needs_grad = needs_grad;
        return push(std::move(n), {});
    }

    const Tensor<T>& val(Ref r) const { return nodes_[r].val; }
    const std::vector<T>& grad_of(Ref r) const { return nodes_[r].grad; }
    T scalar(Ref r) const { return nodes_[r].val.data.at(0); }

    // ---- arithmetic ----

    Ref matmul(Ref a, Ref b) {
        const Tensor<T>&A = v(a), &B = v(b);
        require(A.shape.size() == 2 && B.shape.size() == 2 && A.shape[1] == B.shape[0],
                "matmul", a, b);
        Tensor<T> out({A.shape[0], B.shape[1]});
        kernels::gemm(out.data.data(), A.data.data(), B.data.data(), A.shape[0], A.shape[1],
                      B.shape[1], false);
        return binary(std::move(out), a, b, [this](Node& n, Ref a, Ref b) {
            const Tensor<T>&A = v(a), &B = v(b);
            const int m = A.shape[0], k = A.shape[1], c = B.shape[1];
            if (needs(a))  // dA += dY * B^T
                kernels::gemm_nt(g(a).data(), n.grad.data(), B.data.data(), m, c, k, true);
            if (needs(b))  // dB += A^T * dY
                kernels::gemm_tn(g(b).data(), A.data.data(), n.grad.data(), k, m, c, true);
        });
    }

    // a * b^T; b is [n x k]
    Ref matmul_nt(Ref a, Ref b) {
        const Tensor<T>&A = v(a), &B = v(b);
        require(A.shape.size() == 2 && B.shape.size() == 2 && A.shape[1] == B.shape[1],
                "matmul_nt", a, b);
        Tensor<T> out({A.shape[0], B.shape[0]});
        kernels::gemm_nt(out.data.data(), A.data.data(), B.data.data(), A.shape[0], A.shape[1],
                         B.shape[0], false);
        return binary(std::move(out), a, b, [this](Node& n, Ref a, Ref b) {
            const Tensor<T>&A = v(a), &B = v(b);
            const int m = A.shape[0], k = A.shape[1], c = B.shape[0];
            if (needs(a))  // dA += dY * B
                kernels::gemm(g(a).data(), n.grad.data(), B.data.data(), m, c, k, true);
            if (needs(b))  // dB += dY^T * A
                kernels::gemm_tn(g(b).data(), n.grad.data(), A.data.data(), c, m, k, true);
        });
    }

    Ref add(Ref a, Ref b) {
        const Tensor<T>&A = v(a), &B = v(b);
        require(A.data.size() == B.data.size(), "add", a, b);
        Tensor<T> out = A;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
        return binary(std::move(out), a, b, [this](Node& n, Ref a, Ref b) {
            for (Ref r : {a, b})
                if (needs(r)) {
                    auto& gr = g(r);
                    for (size_t i = 0; i < gr.size(); ++i) gr[i] += n.grad[i];
                }
        });
    }

    // x: [m x n], bias: n values
    Ref add_bias(Ref x, Ref b) {
        const Tensor<T>&X = v(x), &B = v(b);
        const int m = X.rows(), n = X.cols();
        require(static_cast<int64_t>(n) == B.numel(), "add_bias", x, b);
        Tensor<T> out = X;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.data[static_cast<size_t>(i) * n + j] += B.data[j];
        return binary(std::move(out), x, b, [this, m, n](Node& nd, Ref x, Ref b) {
            if (needs(x)) {
                auto& gx = g(x);
                for (size_t i = 0; i < gx.size(); ++i) gx[i] += nd.grad[i];
            }
            if (needs(b)) {
                auto& gb = g(b);
                for (int j = 0; j < n; ++j) {
                    T acc = T(0);
                    for (int i = 0; i < m; ++i) acc += nd.grad[static_cast<size_t>(i) * n + j];
                    gb[j] += acc;
                }
            }
        });
    }

    Ref scale(Ref x, T c) {
        Tensor<T> out = v(x);
        for (auto& e : out.data) e *= c;
        return unary(std::move(out), x, [this, c](Node& n, Ref x) {
            auto& gx = g(x);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += c * n.grad[i];
        });
    }

    Ref mul(Ref a, Ref b) {
        const Tensor<T>&A = v(a), &B = v(b);
        require(A.data.size() == B.data.size(), "mul", a, b);
        Tensor<T> out = A;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
        return binary(std::move(out), a, b, [this](Node& n, Ref a, Ref b) {
            const Tensor<T>&A = v(a), &B = v(b);
            if (needs(a)) {
                auto& ga = g(a);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * B.data[i];
            }
            if (needs(b)) {
                auto& gb = g(b);
                for (size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[i] * A.data[i];
            }
        });
    }

    Ref relu(Ref x) {
        Tensor<T> out = v(x);
        for (auto& e : out.data) e = e > T(0) ? e : T(0);
        return unary(std::move(out), x, [this](Node& n, Ref x) {
            const Tensor<T>& X = v(x);
            auto& gx = g(x);
            for (size_t i = 0; i < gx.size(); ++i)
                if (X.data[i] > T(0)) gx[i] += n.grad[i];
        });
    }

    Ref gelu(Ref x) {
        Tensor<T> out = v(x);
        for (auto& e : out.data) e = T(0.5) * e * (T(1) + std::erf(e * T(M_SQRT1_2)));
        return unary(std::move(out), x, [this](Node& n, Ref x) {
            const Tensor<T>& X = v(x);
            auto& gx = g(x);
            const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
            for (size_t i = 0; i < gx.size(); ++i) {
                const T xv = X.data[i];
                const T cdf = T(0.5) * (T(1) + std::erf(xv * T(M_SQRT1_2)));
                const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * xv * xv);
                gx[i] += n.grad[i] * (cdf + xv * pdf);
            }
        });
    }

    Ref tanh_(Ref x) {
        Tensor<T> out = v(x);
        for (auto& e : out.data) e = std::tanh(e);
        return unary_cached(std::move(out), x, [this](Node& n, Ref x) {
            auto& gx = g(x);
            for (size_t i = 0; i < gx.size(); ++i)
                gx[i] += n.grad[i] * (T(1) - n.val.data[i] * n.val.data[i]);
        });
    }

    // Numerically stabilized; rows sum to 1 for inputs with magnitude up to ~1e4.
    Ref softmax_rows(Ref x) {
        const Tensor<T>& X = v(x);
        const int m = X.rows(), n = X.cols();
        Tensor<T> out = X;
        kernels::parallel_rows(m, 4 * n, [&](int i) {
            T* row = out.data.data() + static_cast<size_t>(i) * n;
            T mx = row[0];
            for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
            T sum = T(0);
            for (int j = 0; j < n; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            const T inv = T(1) / sum;
            for (int j = 0; j < n; ++j) row[j] *= inv;
        });
        return unary_cached(std::move(out), x, [this, m, n](Node& nd, Ref x) {
            auto& gx = g(x);
            for (int i = 0; i < m; ++i) {
                const T* y = nd.val.data.data() + static_cast<size_t>(i) * n;
                const T* dy = nd.grad.data() + static_cast<size_t>(i) * n;
                T dot = T(0);
                for (int j = 0; j < n; ++j) dot += dy[j] * y[j];
                T* gxr = gx.data() + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) gxr[j] += (dy[j] - dot) * y[j];
            }
        });
    }

    Ref embedding(Ref table, std::vector<int> ids) {
        const Tensor<T>& W = v(table);
        require(W.shape.size() == 2, "embedding", table, table);
        const int vsize = W.shape[0], d = W.shape[1];
        for (int id : ids)
            if (id < 0 || id >= vsize)
                throw std::runtime_error("embedding: id " + std::to_string(id) +
                                         " out of range [0," + std::to_string(vsize) + ")");
        const int m = static_cast<int>(ids.size());
        Tensor<T> out({m, d});
        for (int i = 0; i < m; ++i)
            std::copy_n(W.data.data() + static_cast<size_t>(ids[i]) * d, d,
                        out.data.data() + static_cast<size_t>(i) * d);
        auto ids_ptr = std::make_shared<std::vector<int>>(std::move(ids));
        return unary(std::move(out), table, [this, ids_ptr, d, m](Node& n, Ref table) {
            auto& gt = g(table);
            // Column-partitioned scatter so the accumulation order per slot is
            // the serial order regardless of thread count.
            kernels::parallel_rows(d, 2 * m, [&](int j) {
                for (int i = 0; i < m; ++i)
                    gt[static_cast<size_t>((*ids_ptr)[i]) * d + j] +=
                        n.grad[static_cast<size_t>(i) * d + j];
            });
        });
    }

    Ref conv1d_same(Ref x, Ref w, Ref b, int k) {
        const Tensor<T>&X = v(x), &W = v(w), &B = v(b);
        require(X.shape.size() == 2 && W.shape.size() == 3, "conv1d", x, w);
        const int len = X.shape[0], cin = X.shape[1];
        const int cout = W.shape[2];
        if (W.shape[0] != k || W.shape[1] != cin || B.numel() != cout)
            throw std::runtime_error("conv1d: weight " + shape_str(W) + " incompatible with x " +
                                     shape_str(X) + " k=" + std::to_string(k));
        Tensor<T> out({len, cout});
        kernels::conv1d(out.data.data(), X.data.data(), W.data.data(), B.data.data(), len, cin,
                        cout, k);
        Node n;
        n.val = std::move(out);
        Ref r = push(std::move(n), {x, w, b});
        nodes_[r].back = [this, x, w, b, k, len, cin, cout](Node& nd) {
            if (needs(x))
                kernels::conv1d_dx(g(x).data(), nd.grad.data(), v(w).data.data(), len, cin, cout,
                                   k);
            if (needs(w) || needs(b)) {
                // dw and db always come as a pair here; both tensors are params
                kernels::conv1d_dw(g(w).data(), g(b).data(), nd.grad.data(), v(x).data.data(),
                                   len, cin, cout, k);
            }
        };
        return r;
    }

    // [len x C] -> [1 x C]; ties resolved to the earliest position.
    Ref maxpool_time(Ref x) {
        const Tensor<T>& X = v(x);
        const int len = X.rows(), c = X.cols();
        if (len < 1) throw std::runtime_error("maxpool_time: empty input");
        Tensor<T> out({1, c});
        auto argmax = std::make_shared<std::vector<int>>(c, 0);
        for (int j = 0; j < c; ++j) {
            T best = X.data[j];
            int bi = 0;
            for (int i = 1; i < len; ++i) {
                const T cand = X.data[static_cast<size_t>(i) * c + j];
                if (cand > best) {
                    best = cand;
                    bi = i;
                }
            }
            out.data[j] = best;
            (*argmax)[j] = bi;
        }
        return unary(std::move(out), x, [this, argmax, c](Node& n, Ref x) {
            auto& gx = g(x);
            for (int j = 0; j < c; ++j)
                gx[static_cast<size_t>((*argmax)[j]) * v(x).cols() + j] += n.grad[j];
        });
    }

    Ref concat_cols(const std::vector<Ref>& xs) {
        if (xs.empty()) throw std::runtime_error("concat_cols: no inputs");
        const int m = v(xs[0]).rows();
        int total = 0;
        for (Ref r : xs) {
            if (v(r).rows() != m) require(false, "concat_cols", xs[0], r);
            total += v(r).cols();
        }
        Tensor<T> out({m, total});
        int off = 0;
        for (Ref r : xs) {
            const Tensor<T>& X = v(r);
            const int n = X.cols();
            for (int i = 0; i < m; ++i)
                std::copy_n(X.data.data() + static_cast<size_t>(i) * n, n,
                            out.data.data() + static_cast<size_t>(i) * total + off);
            off += n;
        }
        Node nd;
        nd.val = std::move(out);
        Ref r = push(std::move(nd), xs);
        auto parts = std::make_shared<std::vector<Ref>>(xs);
        nodes_[r].back = [this, parts, m, total](Node& n) {
            int off = 0;
            for (Ref p : *parts) {
                const int pn = v(p).cols();
                if (needs(p)) {
                    auto& gp = g(p);
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < pn; ++j)
                            gp[static_cast<size_t>(i) * pn + j] +=
                                n.grad[static_cast<size_t>(i) * total + off + j];
                }
                off += pn;
            }
        };
        return r;
    }

    Ref concat_rows(const std::vector<Ref>& xs) {
        if (xs.empty()) throw std::runtime_error("concat_rows: no inputs");
        const int n = v(xs[0]).cols();
        int total = 0;
        for (Ref r : xs) {
            if (v(r).cols() != n) require(false, "concat_rows", xs[0], r);
            total += v(r).rows();
        }
        Tensor<T> out({total, n});
        size_t off = 0;
        for (Ref r : xs) {
            const Tensor<T>& X = v(r);
            std::copy_n(X.data.data(), X.data.size(), out.data.data() + off);
            off += X.data.size();
        }
        Node nd;
        nd.val = std::move(out);
        Ref r = push(std::move(nd), xs);
        auto parts = std::make_shared<std::vector<Ref>>(xs);
        nodes_[r].back = [this, parts](Node& n) {
            size_t off = 0;
            for (Ref p : *parts) {
                const size_t sz = v(p).data.size();
                if (needs(p)) {
                    auto& gp = g(p);
                    for (size_t i = 0; i < sz; ++i) gp[i] += n.grad[off + i];
                }
                off += sz;
            }
        };
        return r;
    }

    Ref slice_cols(Ref x, int c0, int c1) {
        const Tensor<T>& X = v(x);
        const int m = X.rows(), n = X.cols();
        if (c0 < 0 || c1 > n || c0 >= c1)
            throw std::runtime_error("slice_cols: bad range [" + std::to_string(c0) + "," +
                                     std::to_string(c1) + ") for " + shape_str(X));
        const int w = c1 - c0;
        Tensor<T> out({m, w});
        for (int i = 0; i < m; ++i)
            std::copy_n(X.data.data() + static_cast<size_t>(i) * n + c0, w,
                        out.data.data() + static_cast<size_t>(i) * w);
        return unary(std::move(out), x, [this, c0, w, m, n](Node& nd, Ref x) {
            auto& gx = g(x);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                    gx[static_cast<size_t>(i) * n + c0 + j] += nd.grad[static_cast<size_t>(i) * w + j];
        });
    }

    Ref row(Ref x, int r0) {
        const Tensor<T>& X = v(x);
        const int n = X.cols();
        if (r0 < 0 || r0 >= X.rows())
            throw std::runtime_error("row: index " + std::to_string(r0) + " out of " +
                                     shape_str(X));
        Tensor<T> out({1, n});
        std::copy_n(X.data.data() + static_cast<size_t>(r0) * n, n, out.data.data());
        return unary(std::move(out), x, [this, r0, n](Node& nd, Ref x) {
            auto& gx = g(x);
            for (int j = 0; j < n; ++j) gx[static_cast<size_t>(r0) * n + j] += nd.grad[j];
        });
    }

    Ref layer_norm(Ref x, Ref gamma, Ref beta, T eps = T(1e-5)) {
        const Tensor<T>& X = v(x);
        const int m = X.rows(), n = X.cols();
        require(v(gamma).numel() == n && v(beta).numel() == n, "layer_norm", gamma, beta);
        Tensor<T> out({m, n});
        auto inv_std = std::make_shared<std::vector<T>>(m);
        auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(m) * n);
        const T* gm = v(gamma).data.data();
        const T* bt = v(beta).data.data();
        kernels::parallel_rows(m, 6 * n, [&](int i) {
            const T* xr = X.data.data() + static_cast<size_t>(i) * n;
            T mean = T(0);
            for (int j = 0; j < n; ++j) mean += xr[j];
            mean /= T(n);
            T var = T(0);
            for (int j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= T(n);
            const T istd = T(1) / std::sqrt(var + eps);
            (*inv_std)[i] = istd;
            T* xh = xhat->data() + static_cast<size_t>(i) * n;
            T* yr = out.data.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                xh[j] = (xr[j] - mean) * istd;
                yr[j] = xh[j] * gm[j] + bt[j];
            }
        });
        Node nd;
        nd.val = std::move(out);
        Ref r = push(std::move(nd), {x, gamma, beta});
        nodes_[r].back = [this, x, gamma, beta, inv_std, xhat, m, n](Node& node) {
            const T* gm = v(gamma).data.data();
            if (needs(x)) {
                auto& gx = g(x);
                kernels::parallel_rows(m, 8 * n, [&](int i) {
                    const T* dy = node.grad.data() + static_cast<size_t>(i) * n;
                    const T* xh = xhat->data() + static_cast<size_t>(i) * n;
                    T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                    for (int j = 0; j < n; ++j) {
                        const T dxh = dy[j] * gm[j];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh[j];
                    }
                    const T istd = (*inv_std)[i];
                    T* gxr = gx.data() + static_cast<size_t>(i) * n;
                    for (int j = 0; j < n; ++j) {
                        const T dxh = dy[j] * gm[j];
                        gxr[j] += istd * (dxh - sum_dxhat / T(n) - xh[j] * sum_dxhat_xhat / T(n));
                    }
                });
            }
            if (needs(gamma)) {
                auto& gg = g(gamma);
                for (int j = 0; j < n; ++j) {
                    T acc = T(0);
                    for (int i = 0; i < m; ++i)
                        acc += node.grad[static_cast<size_t>(i) * n + j] *
                               (*xhat)[static_cast<size_t>(i) * n + j];
                    gg[j] += acc;
                }
            }
            if (needs(beta)) {
                auto& gb = g(beta);
                for (int j = 0; j < n; ++j) {
                    T acc = T(0);
                    for (int i = 0; i < m; ++i) acc += node.grad[static_cast<size_t>(i) * n + j];
                    gb[j] += acc;
                }
            }
        };
        return r;
    }

    // Single-direction LSTM over x [len x in]; returns hidden states [len x h]
    // in input order. Gate order in the 4h dimension: input, forget, cell,
    // output. wx: [in x 4h], wh: [h x 4h], b: [4h].
    Ref lstm(Ref x, Ref wx, Ref wh, Ref b, int hidden, bool reverse) {
        const Tensor<T>& X = v(x);
        const int len = X.shape[0], in = X.shape[1], h = hidden;
        require(v(wx).shape == std::vector<int>({in, 4 * h}) &&
                    v(wh).shape == std::vector<int>({h, 4 * h}) && v(b).numel() == 4 * h,
                "lstm", wx, wh);
        struct Cache {
            std::vector<T> gates;  // [len x 4h], post-activation
            std::vector<T> cells;  // [len x h]
            std::vector<T> tanhc;  // [len x h]
        };
        auto cache = std::make_shared<Cache>();
        cache->gates.assign(static_cast<size_t>(len) * 4 * h, T(0));
        cache->cells.assign(static_cast<size_t>(len) * h, T(0));
        cache->tanhc.assign(static_cast<size_t>(len) * h, T(0));
        Tensor<T> out({len, h});
        std::vector<T> pre(static_cast<size_t>(4) * h);
        std::vector<T> hprev(h, T(0)), cprev(h, T(0));
        for (int step = 0; step < len; ++step) {
            const int t = reverse ? len - 1 - step : step;
            for (int j = 0; j < 4 * h; ++j) pre[j] = v(b).data[j];
            kernels::serial::gemm(pre.data(), X.data.data() + static_cast<size_t>(t) * in,
                                  v(wx).data.data(), 1, in, 4 * h, true);
            kernels::serial::gemm(pre.data(), hprev.data(), v(wh).data.data(), 1, h, 4 * h, true);
            T* gt = cache->gates.data() + static_cast<size_t>(t) * 4 * h;
            T* ct = cache->cells.data() + static_cast<size_t>(t) * h;
            T* tc = cache->tanhc.data() + static_cast<size_t>(t) * h;
            T* ht = out.data.data() + static_cast<size_t>(t) * h;
            for (int j = 0; j < h; ++j) {
                const T gi = sigmoid(pre[j]);
                const T gf = sigmoid(pre[h + j]);
                const T gg = std::tanh(pre[2 * h + j]);
                const T go = sigmoid(pre[3 * h + j]);
                gt[j] = gi;
                gt[h + j] = gf;
                gt[2 * h + j] = gg;
                gt[3 * h + j] = go;
                ct[j] = gf * cprev[j] + gi * gg;
                tc[j] = std::tanh(ct[j]);
                ht[j] = go * tc[j];
            }
            std::copy_n(ht, h, hprev.data());
            std::copy_n(ct, h, cprev.data());
        }
        Node nd;
        nd.val = std::move(out);
        Ref r = push(std::move(nd), {x, wx, wh, b});
        nodes_[r].back = [this, x, wx, wh, b, cache, len, in, h, reverse](Node& node) {
            std::vector<T> dh(h, T(0)), dc(h, T(0));
            std::vector<T> da(static_cast<size_t>(4) * h);
            const Tensor<T>& X = v(x);
            for (int step = len - 1; step >= 0; --step) {
                const int t = reverse ? len - 1 - step : step;
                const int tprev = reverse ? t + 1 : t - 1;
                const bool has_prev = step > 0;
                const T* gt = cache->gates.data() + static_cast<size_t>(t) * 4 * h;
                const T* tc = cache->tanhc.data() + static_cast<size_t>(t) * h;
                const T* cprev = has_prev
                                     ? cache->cells.data() + static_cast<size_t>(tprev) * h
                                     : nullptr;
                for (int j = 0; j < h; ++j) {
                    dh[j] += node.grad[static_cast<size_t>(t) * h + j];
                    const T gi = gt[j], gf = gt[h + j], gg = gt[2 * h + j], go = gt[3 * h + j];
                    const T dco = dh[j] * go * (T(1) - tc[j] * tc[j]) + dc[j];
                    const T cp = has_prev ? cprev[j] : T(0);
                    da[j] = dco * gg * gi * (T(1) - gi);
                    da[h + j] = dco * cp * gf * (T(1) - gf);
                    da[2 * h + j] = dco * gi * (T(1) - gg * gg);
                    da[3 * h + j] = dh[j] * tc[j] * go * (T(1) - go);
                    dc[j] = dco * gf;
                }
                if (needs(x))
                    kernels::serial::gemm_nt(g(x).data() + static_cast<size_t>(t) * in, da.data(),
                                             v(wx).data.data(), 1, 4 * h, in, true);
                if (needs(wx))  // dWx += x_t^T * da
                    kernels::serial::gemm_tn(g(wx).data(), X.data.data() + static_cast<size_t>(t) * in,
                                             da.data(), in, 1, 4 * h, true);
                if (needs(wh) && has_prev)  // dWh += h_prev^T * da
                    kernels::serial::gemm_tn(g(wh).data(),
                                             node.val.data.data() + static_cast<size_t>(tprev) * h,
                                             da.data(), h, 1, 4 * h, true);
                if (needs(b)) {
                    auto& gb = g(b);
                    for (int j = 0; j < 4 * h; ++j) gb[j] += da[j];
                }
                std::fill(dh.begin(), dh.end(), T(0));
                if (has_prev)
                    kernels::serial::gemm_nt(dh.data(), da.data(), v(wh).data.data(), 1, 4 * h, h,
                                             true);
            }
        };
        return r;
    }

    Ref dropout(Ref x, T p, Rng& rng, bool train) {
        if (!train || p <= T(0)) return x;
        const Tensor<T>& X = v(x);
        Tensor<T> mask = X;
        const T keep_scale = T(1) / (T(1) - p);
        for (auto& e : mask.data) e = rng.u01() >= static_cast<double>(p) ? keep_scale : T(0);
        Ref m = input(std::move(mask));
        return mul(x, m);
    }

    // Mean of -log softmax(logits)[target] over mask-true rows; 0 if none.
    Ref cross_entropy(Ref logits, std::vector<int> targets, std::vector<uint8_t> mask) {
        const Tensor<T>& L = v(logits);
        const int m = L.rows(), c = L.cols();
        if (static_cast<int>(targets.size()) != m || static_cast<int>(mask.size()) != m)
            throw std::runtime_error("cross_entropy: targets/mask length mismatch");
        int count = 0;
        for (int i = 0; i < m; ++i)
            if (mask[i]) {
                if (targets[i] < 0 || targets[i] >= c)
                    throw std::runtime_error("cross_entropy: target " +
                                             std::to_string(targets[i]) + " out of range [0," +
                                             std::to_string(c) + ")");
                ++count;
            }
        auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(m) * c);
        T loss = T(0);
        for (int i = 0; i < m; ++i) {
            const T* row = L.data.data() + static_cast<size_t>(i) * c;
            T mx = row[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            T sum = T(0);
            T* pr = probs->data() + static_cast<size_t>(i) * c;
            for (int j = 0; j < c; ++j) {
                pr[j] = std::exp(row[j] - mx);
                sum += pr[j];
            }
            const T inv = T(1) / sum;
            for (int j = 0; j < c; ++j) pr[j] *= inv;
            if (mask[i]) loss += std::log(sum) + mx - row[targets[i]];
        }
        loss = count > 0 ? loss / T(count) : T(0);
        Tensor<T> out({1});
        out.data[0] = loss;
        auto tg = std::make_shared<std::vector<int>>(std::move(targets));
        auto mk = std::make_shared<std::vector<uint8_t>>(std::move(mask));
        return unary(std::move(out), logits,
                     [this, probs, tg, mk, m, c, count](Node& n, Ref logits) {
                         if (count == 0) return;
                         auto& gl = g(logits);
                         const T go = n.grad[0] / T(count);
                         for (int i = 0; i < m; ++i) {
                             if (!(*mk)[i]) continue;
                             const T* pr = probs->data() + static_cast<size_t>(i) * c;
                             T* gr = gl.data() + static_cast<size_t>(i) * c;
                             for (int j = 0; j < c; ++j) gr[j] += go * pr[j];
                             gr[(*tg)[i]] -= go;
                         }
                     });
    }

    // Smoothed soft dice on a probability vector p against a one-hot target:
    // 1 - (2*sum(p*y) + gamma) / (sum(p^2) + sum(y^2) + gamma).
    Ref dice_loss(Ref p, std::vector<T> onehot, T gamma) {
        if (gamma <= T(0)) throw std::runtime_error("dice_loss: gamma must be positive");
        const Tensor<T>& P = v(p);
        const int c = static_cast<int>(P.numel());
        if (static_cast<int>(onehot.size()) != c)
            throw std::runtime_error("dice_loss: target length mismatch");
        T py = T(0), pp = T(0), yy = T(0);
        for (int j = 0; j < c; ++j) {
            py += P.data[j] * onehot[j];
            pp += P.data[j] * P.data[j];
            yy += onehot[j] * onehot[j];
        }
        const T num = T(2) * py + gamma;
        const T den = pp + yy + gamma;
        Tensor<T> out({1});
        out.data[0] = T(1) - num / den;
        auto y = std::make_shared<std::vector<T>>(std::move(onehot));
        return unary(std::move(out), p, [this, y, num, den, c](Node& n, Ref p) {
            const Tensor<T>& P = v(p);
            auto& gp = g(p);
            const T go = n.grad[0];
            for (int j = 0; j < c; ++j)
                gp[j] += go * (T(-2) * (*y)[j] * den + T(2) * P.data[j] * num) / (den * den);
        });
    }

    void backward(Ref loss) {
        if (nodes_[loss].val.numel() != 1)
            throw std::runtime_error("backward: loss must be scalar");
        g(loss)[0] = T(1);
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.grad.empty()) continue;
            if (n.back) n.back(n);
            if (n.external) {
                n.external->ensure_grad();
                for (size_t j = 0; j < n.grad.size(); ++j) n.external->grad[j] += n.grad[j];
            }
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> val;
        std::vector<T> grad;
        std::function<void(Node&)> back;
        bool needs_grad = false;
        Tensor<T>* external = nullptr;
    };

    static T sigmoid(T x) { return T(1) / (T(1) + std::exp(-x)); }

    const Tensor<T>& v(Ref r) const { return nodes_[r].val; }
    bool needs(Ref r) const { return nodes_[r].needs_grad; }
    std::vector<T>& g(Ref r) {
        Node& n = nodes_[r];
        if (n.grad.size() != n.val.data.size()) n.grad.assign(n.val.data.size(), T(0));
        return n.grad;
    }

    Ref push(Node n, const std::vector<Ref>& deps) {
        for (Ref d : deps) n.needs_grad = n.needs_grad || nodes_[d].needs_grad;
        nodes_.push_back(std::move(n));
        return static_cast<Ref>(nodes_.size() - 1);
    }

    template <typename Fn>
    Ref unary(Tensor<T> out, Ref x, Fn&& back) {
        Node n;
        n.val = std::move(out);
        Ref r = push(std::move(n), {x});
        if (nodes_[r].needs_grad)
            nodes_[r].back = [this, x, back](Node& nd) {
                if (needs(x)) back(nd, x);
            };
        return r;
    }

    // like unary but the backward may also read the cached output value
    template <typename Fn>
    Ref unary_cached(Tensor<T> out, Ref x, Fn&& back) {
        return unary(std::move(out), x, std::forward<Fn>(back));
    }

    template <typename Fn>
    Ref binary(Tensor<T> out, Ref a, Ref b, Fn&& back) {
        Node n;
        n.val = std::move(out);
        Ref r = push(std::move(n), {a, b});
        if (nodes_[r].needs_grad) nodes_[r].back = [this, a, b, back](Node& nd) { back(nd, a, b); };
        return r;
    }

    void require(bool ok, const char* op, Ref a, Ref b) const {
        if (!ok)
            throw std::runtime_error(std::string(op) + ": incompatible shapes " +
                                     shape_str(v(a)) + " and " + shape_str(v(b)));
    }

    std::vector<Node> nodes_;
};

}  // namespace splitner
