#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace awr {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Bad configuration or arguments (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};
// Missing/malformed files, manifests, checkpoints (CLI exit code 3).
struct DataError : Error {
    using Error::Error;
};
// Incompatible tensor shapes.
struct ShapeError : Error {
    using Error::Error;
};
// Non-finite values where finite ones are required (CLI exit code 4).
struct NumericError : Error {
    using Error::Error;
};

// Dense row-major tensor of doubles. Rank is dynamic; images are
// (h, w, c), feature maps (h, w, c), vectors (n), matrices (rows, cols).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
        data_.assign(static_cast<size_t>(count(dims_)), 0.0);
    }
    Tensor(std::vector<int> dims, std::vector<double> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != count(dims_))
            throw ShapeError("tensor data size does not match dims");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }
    static Tensor full(std::vector<int> dims, double v) {
        Tensor t(std::move(dims));
        for (auto& x : t.data_) x = v;
        return t;
    }

    const std::vector<int>& dims() const { return dims_; }
    int dim(int i) const { return dims_.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(dims_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // (h, w, c) indexing for rank-3 tensors, (r, c) for rank-2.
    double& at(int y, int x, int c) {
        return data_[static_cast<size_t>((static_cast<int64_t>(y) * dims_[1] + x) * dims_[2] + c)];
    }
    double at(int y, int x, int c) const {
        return data_[static_cast<size_t>((static_cast<int64_t>(y) * dims_[1] + x) * dims_[2] + c)];
    }
    double& at(int r, int c) {
        return data_[static_cast<size_t>(static_cast<int64_t>(r) * dims_[1] + c)];
    }
    double at(int r, int c) const {
        return data_[static_cast<size_t>(static_cast<int64_t>(r) * dims_[1] + c)];
    }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < dims_.size(); ++i)
            s += (i ? "," : "") + std::to_string(dims_[i]);
        return s + ")";
    }

    static int64_t count(const std::vector<int>& dims) {
        int64_t n = 1;
        for (int d : dims) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= d;
        }
        return dims.empty() ? 0 : n;
    }

private:
    std::vector<int> dims_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// Round a double through float32. Persistent state (weights, optimizer
// moments) lives on the float32 grid so checkpoints round-trip bit-exactly.
inline double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline void snap_f32(Tensor& t) {
    for (int64_t i = 0; i < t.size(); ++i) t[i] = snap_f32(t[i]);
}

}  // namespace awr
