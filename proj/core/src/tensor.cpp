#include "sumix/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sumix {

namespace {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
}  // namespace

long shape_numel(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
        if (d < 0) throw InvalidParameter("tensor dimension must be non-negative, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<long> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<long> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<long>(data_.size()) != shape_numel(shape_))
        throw ShapeError("tensor data size does not match shape " + shape_str());
}

Tensor Tensor::full(std::vector<long> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::reshaped(std::vector<long> shape) const {
    if (shape_numel(shape) != size())
        throw ShapeError("reshape element count mismatch: " + shape_str());
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Tensor::max() const { return *std::max_element(data_.begin(), data_.end()); }
double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ')';
    return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

namespace {

void matmul_impl(const Tensor& a, const Tensor& b, Tensor& out, bool trans_a, bool trans_b, bool accumulate) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 operands");
    const long m = trans_a ? a.dim(1) : a.dim(0);
    const long k = trans_a ? a.dim(0) : a.dim(1);
    const long kb = trans_b ? b.dim(1) : b.dim(0);
    const long n = trans_b ? b.dim(0) : b.dim(1);
    if (k != kb)
        throw ShapeError("matmul inner dimension mismatch " + a.shape_str() + " x " + b.shape_str());
    if (out.rank() != 2 || out.dim(0) != m || out.dim(1) != n) {
        if (accumulate) throw ShapeError("matmul_acc output has wrong shape");
        out = Tensor({m, n});
    }
    ECMap ma(a.data(), a.dim(0), a.dim(1));
    ECMap mb(b.data(), b.dim(0), b.dim(1));
    EMap mo(out.data(), m, n);
    if (!trans_a && !trans_b) {
        if (accumulate) mo.noalias() += ma * mb; else mo.noalias() = ma * mb;
    } else if (trans_a && !trans_b) {
        if (accumulate) mo.noalias() += ma.transpose() * mb; else mo.noalias() = ma.transpose() * mb;
    } else if (!trans_a && trans_b) {
        if (accumulate) mo.noalias() += ma * mb.transpose(); else mo.noalias() = ma * mb.transpose();
    } else {
        if (accumulate) mo.noalias() += ma.transpose() * mb.transpose(); else mo.noalias() = ma.transpose() * mb.transpose();
    }
}

}  // namespace

void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool trans_a, bool trans_b) {
    matmul_impl(a, b, out, trans_a, trans_b, /*accumulate=*/false);
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    Tensor out;
    matmul_impl(a, b, out, trans_a, trans_b, false);
    return out;
}

void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out, bool trans_a, bool trans_b) {
    matmul_impl(a, b, out, trans_a, trans_b, /*accumulate=*/true);
}

Tensor image_at(const Tensor& batch, long n) {
    if (batch.rank() != 4) throw ShapeError("image_at expects (N,C,H,W)");
    const long c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    const long stride = c * h * w;
    Tensor img({c, h, w});
    std::copy(batch.data() + n * stride, batch.data() + (n + 1) * stride, img.data());
    return img;
}

void set_image(Tensor& batch, long n, const Tensor& image) {
    const long stride = batch.dim(1) * batch.dim(2) * batch.dim(3);
    if (image.size() != stride) throw ShapeError("set_image size mismatch");
    std::copy(image.data(), image.data() + stride, batch.data() + n * stride);
}

namespace {

// src_coord(i) = i * (in-1)/(out-1); exact identity when in == out.
inline void sample_axis(long out_n, long in_n, long i, long& lo, long& hi, double& frac) {
    if (out_n <= 1 || in_n <= 1) {
        lo = hi = 0;
        frac = 0.0;
        if (in_n > 1 && out_n == 1) { lo = hi = 0; }
        return;
    }
    double pos = static_cast<double>(i) * static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1);
    lo = static_cast<long>(std::floor(pos));
    hi = std::min(lo + 1, in_n - 1);
    frac = pos - static_cast<double>(lo);
}

}  // namespace

Tensor bilinear_resize_grid(const Tensor& grid, long out_h, long out_w) {
    if (grid.rank() != 2) throw ShapeError("bilinear_resize_grid expects (H,W)");
    const long in_h = grid.dim(0), in_w = grid.dim(1);
    if (in_h == out_h && in_w == out_w) return grid;
    Tensor out({out_h, out_w});
    for (long y = 0; y < out_h; ++y) {
        long y0, y1; double fy;
        sample_axis(out_h, in_h, y, y0, y1, fy);
        for (long x = 0; x < out_w; ++x) {
            long x0, x1; double fx;
            sample_axis(out_w, in_w, x, x0, x1, fx);
            double v00 = grid.at(y0, x0), v01 = grid.at(y0, x1);
            double v10 = grid.at(y1, x0), v11 = grid.at(y1, x1);
            double top = v00 + fx * (v01 - v00);
            double bot = v10 + fx * (v11 - v10);
            out.at(y, x) = top + fy * (bot - top);
        }
    }
    return out;
}

Tensor bilinear_resize(const Tensor& image, long out_h, long out_w) {
    if (image.rank() != 3) throw ShapeError("bilinear_resize expects (C,H,W)");
    const long c = image.dim(0), in_h = image.dim(1), in_w = image.dim(2);
    if (in_h == out_h && in_w == out_w) return image;
    Tensor out({c, out_h, out_w});
    for (long ch = 0; ch < c; ++ch) {
        Tensor plane({in_h, in_w});
        std::copy(image.data() + ch * in_h * in_w, image.data() + (ch + 1) * in_h * in_w, plane.data());
        Tensor rp = bilinear_resize_grid(plane, out_h, out_w);
        std::copy(rp.data(), rp.data() + out_h * out_w, out.data() + ch * out_h * out_w);
    }
    return out;
}

}  // namespace sumix
