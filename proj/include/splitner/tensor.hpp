#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace splitner {

// Dense row-major tensor. grad is empty until gradients are requested and
// always matches data's length once allocated.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel(), T(0));
    }
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<size_t>(numel()) != data.size())
            throw std::runtime_error("tensor data length does not match shape");
    }

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const {
        int64_t n = numel();
        return shape.empty() ? 1 : static_cast<int>(n / shape[0]);
    }

    void fill(T v) { data.assign(data.size(), v); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) grad.assign(grad.size(), T(0));
    }

    T& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
    const T& at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }
};

template <typename T>
std::string shape_str(const Tensor<T>& t) {
    std::string s = "[";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

}  // namespace splitner
