#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

// Hot inner loops. Every kernel exists twice: a serial reference under
// kernels::serial and an OpenMP version under kernels::omp. The dispatchers at
// kernels:: pick between them at runtime. Parallel variants partition work so
// that each output element is written by exactly one thread and the per-element
// accumulation order matches the serial loop, which makes serial and parallel
// results bitwise identical for any thread count.
namespace splitner::kernels {

inline std::atomic<int>& thread_setting() {
    static std::atomic<int> t{1};
    return t;
}
inline void set_threads(int n) { thread_setting() = n < 1 ? 1 : n; }
inline int threads() { return thread_setting().load(); }

// Work below this many multiply-adds is not worth a parallel region.
inline constexpr int64_t kParallelGrain = 16 * 1024;

inline bool use_parallel(int64_t work) {
#ifdef _OPENMP
    return threads() > 1 && work >= kParallelGrain;
#else
    (void)work;
    return false;
#endif
}

namespace serial {

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T>
void gemm(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        const T* arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] (+)= A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

// C[m x n] (+)= A[k x m]^T * B[k x n]
template <typename T>
void gemm_tn(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        for (int p = 0; p < k; ++p) {
            const T av = a[static_cast<size_t>(p) * m + i];
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Same-padded 1-D convolution. x: [len x cin], w: [k x cin x cout],
// b: [cout], y: [len x cout]. pad_left = (k-1)/2.
template <typename T>
void conv1d(T* y, const T* x, const T* w, const T* b, int len, int cin, int cout, int k) {
    const int pad = (k - 1) / 2;
    for (int t = 0; t < len; ++t) {
        T* yrow = y + static_cast<size_t>(t) * cout;
        for (int f = 0; f < cout; ++f) yrow[f] = b[f];
        for (int tap = 0; tap < k; ++tap) {
            const int src = t + tap - pad;
            if (src < 0 || src >= len) continue;
            const T* xrow = x + static_cast<size_t>(src) * cin;
            const T* wtap = w + static_cast<size_t>(tap) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
                const T xv = xrow[ci];
                const T* wrow = wtap + static_cast<size_t>(ci) * cout;
                for (int f = 0; f < cout; ++f) yrow[f] += xv * wrow[f];
            }
        }
    }
}

// One row of the conv input gradient: accumulates into dx row t.
template <typename T>
void conv1d_dx_row(T* dxrow, int t, const T* dy, const T* w, int len, int cin, int cout,
                   int k) {
    const int pad = (k - 1) / 2;
    for (int tap = 0; tap < k; ++tap) {
        const int dst = t - tap + pad;  // output position that read x[t] via this tap
        if (dst < 0 || dst >= len) continue;
        const T* dyrow = dy + static_cast<size_t>(dst) * cout;
        const T* wtap = w + static_cast<size_t>(tap) * cin * cout;
        for (int ci = 0; ci < cin; ++ci) {
            const T* wrow = wtap + static_cast<size_t>(ci) * cout;
            T acc = T(0);
            for (int f = 0; f < cout; ++f) acc += dyrow[f] * wrow[f];
            dxrow[ci] += acc;
        }
    }
}

// Gradient wrt conv input; dx must be zeroed by the caller or accumulated into.
template <typename T>
void conv1d_dx(T* dx, const T* dy, const T* w, int len, int cin, int cout, int k) {
    for (int t = 0; t < len; ++t)
        conv1d_dx_row(dx + static_cast<size_t>(t) * cin, t, dy, w, len, cin, cout, k);
}

// Gradient wrt conv weights and bias, accumulated.
template <typename T>
void conv1d_dw(T* dw, T* db, const T* dy, const T* x, int len, int cin, int cout, int k) {
    const int pad = (k - 1) / 2;
    for (int tap = 0; tap < k; ++tap) {
        T* dwtap = dw + static_cast<size_t>(tap) * cin * cout;
        for (int ci = 0; ci < cin; ++ci) {
            T* dwrow = dwtap + static_cast<size_t>(ci) * cout;
            for (int t = 0; t < len; ++t) {
                const int src = t + tap - pad;
                if (src < 0 || src >= len) continue;
                const T xv = x[static_cast<size_t>(src) * cin + ci];
                const T* dyrow = dy + static_cast<size_t>(t) * cout;
                for (int f = 0; f < cout; ++f) dwrow[f] += xv * dyrow[f];
            }
        }
    }
    for (int f = 0; f < cout; ++f) {
        T acc = T(0);
        for (int t = 0; t < len; ++t) acc += dy[static_cast<size_t>(t) * cout + f];
        db[f] += acc;
    }
}

}  // namespace serial

namespace omp {

template <typename T>
void gemm(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int i = 0; i < m; ++i)
        serial::gemm(c + static_cast<size_t>(i) * n, a + static_cast<size_t>(i) * k, b, 1, k, n,
                     accumulate);
}

template <typename T>
void gemm_nt(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int i = 0; i < m; ++i)
        serial::gemm_nt(c + static_cast<size_t>(i) * n, a + static_cast<size_t>(i) * k, b, 1, k,
                        n, accumulate);
}

template <typename T>
void gemm_tn(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate) {
    // Rows of C correspond to columns of A; split over output rows.
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        for (int p = 0; p < k; ++p) {
            const T av = a[static_cast<size_t>(p) * m + i];
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void conv1d(T* y, const T* x, const T* w, const T* b, int len, int cin, int cout, int k) {
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int t = 0; t < len; ++t) {
        const int pad = (k - 1) / 2;
        T* yrow = y + static_cast<size_t>(t) * cout;
        for (int f = 0; f < cout; ++f) yrow[f] = b[f];
        for (int tap = 0; tap < k; ++tap) {
            const int src = t + tap - pad;
            if (src < 0 || src >= len) continue;
            const T* xrow = x + static_cast<size_t>(src) * cin;
            const T* wtap = w + static_cast<size_t>(tap) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
                const T xv = xrow[ci];
                const T* wrow = wtap + static_cast<size_t>(ci) * cout;
                for (int f = 0; f < cout; ++f) yrow[f] += xv * wrow[f];
            }
        }
    }
}

template <typename T>
void conv1d_dx(T* dx, const T* dy, const T* w, int len, int cin, int cout, int k) {
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int t = 0; t < len; ++t)
        serial::conv1d_dx_row(dx + static_cast<size_t>(t) * cin, t, dy, w, len, cin, cout, k);
}

template <typename T>
void conv1d_dw(T* dw, T* db, const T* dy, const T* x, int len, int cin, int cout, int k) {
    const int pad = (k - 1) / 2;
#pragma omp parallel for schedule(static) num_threads(threads()) collapse(2)
    for (int tap = 0; tap < k; ++tap) {
        for (int ci = 0; ci < cin; ++ci) {
            T* dwrow = dw + (static_cast<size_t>(tap) * cin + ci) * cout;
            for (int t = 0; t < len; ++t) {
                const int src = t + tap - pad;
                if (src < 0 || src >= len) continue;
                const T xv = x[static_cast<size_t>(src) * cin + ci];
                const T* dyrow = dy + static_cast<size_t>(t) * cout;
                for (int f = 0; f < cout; ++f) dwrow[f] += xv * dyrow[f];
            }
        }
    }
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int f = 0; f < cout; ++f) {
        T acc = T(0);
        for (int t = 0; t < len; ++t) acc += dy[static_cast<size_t>(t) * cout + f];
        db[f] += acc;
    }
}

}  // namespace omp

// Dispatchers.

template <typename T>
void gemm(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate = false) {
    if (use_parallel(static_cast<int64_t>(m) * k * n))
        omp::gemm(c, a, b, m, k, n, accumulate);
    else
        serial::gemm(c, a, b, m, k, n, accumulate);
}

template <typename T>
void gemm_nt(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate = false) {
    if (use_parallel(static_cast<int64_t>(m) * k * n))
        omp::gemm_nt(c, a, b, m, k, n, accumulate);
    else
        serial::gemm_nt(c, a, b, m, k, n, accumulate);
}

template <typename T>
void gemm_tn(T* c, const T* a, const T* b, int m, int k, int n, bool accumulate = false) {
    if (use_parallel(static_cast<int64_t>(m) * k * n))
        omp::gemm_tn(c, a, b, m, k, n, accumulate);
    else
        serial::gemm_tn(c, a, b, m, k, n, accumulate);
}

template <typename T>
void conv1d(T* y, const T* x, const T* w, const T* b, int len, int cin, int cout, int k) {
    if (use_parallel(static_cast<int64_t>(len) * cin * cout * k))
        omp::conv1d(y, x, w, b, len, cin, cout, k);
    else
        serial::conv1d(y, x, w, b, len, cin, cout, k);
}

template <typename T>
void conv1d_dx(T* dx, const T* dy, const T* w, int len, int cin, int cout, int k) {
    if (use_parallel(static_cast<int64_t>(len) * cin * cout * k))
        omp::conv1d_dx(dx, dy, w, len, cin, cout, k);
    else
        serial::conv1d_dx(dx, dy, w, len, cin, cout, k);
}

template <typename T>
void conv1d_dw(T* dw, T* db, const T* dy, const T* x, int len, int cin, int cout, int k) {
    if (use_parallel(static_cast<int64_t>(len) * cin * cout * k))
        omp::conv1d_dw(dw, db, dy, x, len, cin, cout, k);
    else
        serial::conv1d_dw(dw, db, dy, x, len, cin, cout, k);
}

// Row-block helper for cheap elementwise/row-wise ops; body(i) must touch only
// row i of its outputs.
template <typename Fn>
void parallel_rows(int rows, int64_t work_per_row, Fn&& body) {
    if (use_parallel(work_per_row * rows)) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads())
        for (int i = 0; i < rows; ++i) body(i);
        return;
#endif
    }
    for (int i = 0; i < rows; ++i) body(i);
}

}  // namespace splitner::kernels
