#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "sumix/errors.hpp"

namespace sumix {

// Dense row-major double tensor, rank 0..4. Batches are laid out NCHW,
// matrices (rows, cols). Value semantics; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape);
    Tensor(std::vector<long> shape, std::vector<double> data);

    static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<long> shape, double v);
    static Tensor scalar(double v) { return Tensor({}, {v}); }

    const std::vector<long>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    long dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    long size() const { return static_cast<long>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

    // Indexed access for the common ranks.
    double& at(long i) { return data_[static_cast<std::size_t>(i)]; }
    double& at(long i, long j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double at(long i, long j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double& at(long c, long y, long x) {
        return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }
    double at(long c, long y, long x) const {
        return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }
    double& at(long n, long c, long y, long x) {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    double at(long n, long c, long y, long x) const {
        return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }

    Tensor reshaped(std::vector<long> shape) const;

    void fill(double v);
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double min() const;
    double max() const;
    double sum() const;
    double mean() const { return size() ? sum() / static_cast<double>(size()) : 0.0; }

    std::string shape_str() const;

private:
    std::vector<long> shape_;
    std::vector<double> data_;
};

long shape_numel(const std::vector<long>& shape);
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

// c = a @ b for row-major (m,k) x (k,n). transpose flags refer to the
// logical operand, storage stays row-major.
void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool trans_a = false,
            bool trans_b = false);
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// out += a @ b
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out, bool trans_a = false,
                bool trans_b = false);

// Slice one image (C,H,W) out of a batch (N,C,H,W), and write it back.
Tensor image_at(const Tensor& batch, long n);
void set_image(Tensor& batch, long n, const Tensor& image);

// Corner-aligned bilinear resize of a (C,H,W) image to (C,out_h,out_w).
// out == in when sizes match.
Tensor bilinear_resize(const Tensor& image, long out_h, long out_w);

// Grid version used by heat maps: (H,W) -> (out_h,out_w).
Tensor bilinear_resize_grid(const Tensor& grid, long out_h, long out_w);

}  // namespace sumix
