// Compares the serial reference kernels against the OpenMP implementations:
// verifies bitwise-identical results, then reports wall-clock timings.

#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splitner/kernels.hpp"
#include "splitner/rng.hpp"

using namespace splitner;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<float> random_vec(size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

double time_of(const std::function<void()>& fn, int reps) {
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

struct Case {
    std::string name;
    double serial_s = 0.0;
    double parallel_s = 0.0;
    bool identical = false;
};

void print_row(const Case& c) {
    std::cout << std::left << std::setw(26) << c.name << std::right << std::fixed
              << std::setprecision(3) << std::setw(12) << c.serial_s * 1e3 << std::setw(12)
              << c.parallel_s * 1e3 << std::setw(10)
              << (c.parallel_s > 0 ? c.serial_s / c.parallel_s : 0.0) << std::setw(12)
              << (c.identical ? "bitwise" : "MISMATCH") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP kernel comparison"};
    int size = 256;
    int reps = 20;
    int threads = 0;
    bool quick = false;
    app.add_option("--size", size, "matrix dimension (default 256)");
    app.add_option("--reps", reps, "repetitions per timing (default 20)");
    app.add_option("--threads", threads, "OpenMP thread count (0 = library default)");
    app.add_flag("--quick", quick, "small sizes, one repetition");
    CLI11_PARSE(app, argc, argv);

    if (quick) {
        size = 64;
        reps = 1;
    }
    if (threads > 0) kernels::set_threads(threads);
    std::cout << "threads: " << kernels::threads() << ", size: " << size << ", reps: " << reps
              << "\n\n";
    std::cout << std::left << std::setw(26) << "kernel" << std::right << std::setw(12)
              << "serial ms" << std::setw(12) << "omp ms" << std::setw(10) << "speedup"
              << std::setw(12) << "results" << '\n';

    Rng rng(7);
    const int m = size, k = size, n = size;
    std::vector<Case> cases;
    bool all_ok = true;

    {
        const std::vector<float> a = random_vec(size_t(m) * k, rng);
        const std::vector<float> b = random_vec(size_t(k) * n, rng);
        std::vector<float> cs(size_t(m) * n, 0.f), cp(size_t(m) * n, 0.f);
        Case c{"gemm " + std::to_string(m) + "^3"};
        c.serial_s = time_of([&] { kernels::serial::gemm(cs.data(), a.data(), b.data(), m, k, n, false); }, reps);
        c.parallel_s = time_of([&] { kernels::omp::gemm(cp.data(), a.data(), b.data(), m, k, n, false); }, reps);
        c.identical = bitwise_equal(cs, cp);
        cases.push_back(c);
    }
    {
        const std::vector<float> a = random_vec(size_t(m) * k, rng);
        const std::vector<float> b = random_vec(size_t(n) * k, rng);
        std::vector<float> cs(size_t(m) * n, 0.f), cp(size_t(m) * n, 0.f);
        Case c{"gemm_nt " + std::to_string(m) + "^3"};
        c.serial_s = time_of([&] { kernels::serial::gemm_nt(cs.data(), a.data(), b.data(), m, k, n, false); }, reps);
        c.parallel_s = time_of([&] { kernels::omp::gemm_nt(cp.data(), a.data(), b.data(), m, k, n, false); }, reps);
        c.identical = bitwise_equal(cs, cp);
        cases.push_back(c);
    }
    {
        const std::vector<float> a = random_vec(size_t(k) * m, rng);
        const std::vector<float> b = random_vec(size_t(k) * n, rng);
        std::vector<float> cs(size_t(m) * n, 0.f), cp(size_t(m) * n, 0.f);
        Case c{"gemm_tn " + std::to_string(m) + "^3"};
        c.serial_s = time_of([&] { kernels::serial::gemm_tn(cs.data(), a.data(), b.data(), m, k, n, false); }, reps);
        c.parallel_s = time_of([&] { kernels::omp::gemm_tn(cp.data(), a.data(), b.data(), m, k, n, false); }, reps);
        c.identical = bitwise_equal(cs, cp);
        cases.push_back(c);
    }
    {
        const int len = size * 4, cin = 50, cout_ = 16, kk = 5;
        const std::vector<float> x = random_vec(size_t(len) * cin, rng);
        const std::vector<float> w = random_vec(size_t(kk) * cin * cout_, rng);
        const std::vector<float> b = random_vec(cout_, rng);
        std::vector<float> ys(size_t(len) * cout_, 0.f), yp(size_t(len) * cout_, 0.f);
        Case c{"conv1d len=" + std::to_string(len)};
        c.serial_s = time_of([&] { kernels::serial::conv1d(ys.data(), x.data(), w.data(), b.data(), len, cin, cout_, kk); }, reps);
        c.parallel_s = time_of([&] { kernels::omp::conv1d(yp.data(), x.data(), w.data(), b.data(), len, cin, cout_, kk); }, reps);
        c.identical = bitwise_equal(ys, yp);
        cases.push_back(c);
    }

    for (const Case& c : cases) {
        print_row(c);
        all_ok = all_ok && c.identical;
    }
    std::cout << (all_ok ? "\nall kernels bitwise identical\n"
                         : "\nBITWISE MISMATCH DETECTED\n");
    return all_ok ? 0 : 2;
}
