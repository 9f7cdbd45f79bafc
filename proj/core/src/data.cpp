#include "sumix/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "sumix/errors.hpp"

namespace sumix {

namespace {
constexpr long kCifarSide = 32;
constexpr long kCifarPixels = 3 * kCifarSide * kCifarSide;  // 3072

long record_length(CifarVariant v) { return (v == CifarVariant::cifar10 ? 1 : 2) + kCifarPixels; }
long label_count(CifarVariant v) { return v == CifarVariant::cifar10 ? 10 : 100; }
}  // namespace

Dataset load_cifar(const std::string& path, CifarVariant variant) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open dataset file " + path);
    in.seekg(0, std::ios::end);
    const long file_size = static_cast<long>(in.tellg());
    in.seekg(0, std::ios::beg);

    const long rec = record_length(variant);
    if (file_size == 0 || file_size % rec != 0)
        throw DataFormatError(path + ": size " + std::to_string(file_size) +
                              " is not a multiple of the record length " + std::to_string(rec) +
                              " (trailing bytes at offset " + std::to_string(file_size - file_size % rec) + ")");
    const long count = file_size / rec;

    Dataset ds;
    ds.num_classes = label_count(variant);
    ds.images = Tensor({count, 3, kCifarSide, kCifarSide});
    ds.labels.resize(static_cast<std::size_t>(count));

    std::vector<unsigned char> record(static_cast<std::size_t>(rec));
    for (long i = 0; i < count; ++i) {
        if (!in.read(reinterpret_cast<char*>(record.data()), rec))
            throw DataFormatError(path + ": truncated record at offset " + std::to_string(i * rec));
        const unsigned char label = variant == CifarVariant::cifar10 ? record[0] : record[1];
        if (label >= ds.num_classes)
            throw DataFormatError(path + ": label " + std::to_string(int(label)) +
                                  " out of range at offset " + std::to_string(i * rec));
        ds.labels[static_cast<std::size_t>(i)] = label;
        const unsigned char* px = record.data() + (rec - kCifarPixels);
        double* dst = ds.images.data() + i * kCifarPixels;
        for (long p = 0; p < kCifarPixels; ++p) dst[p] = static_cast<double>(px[p]) / 255.0;
    }
    compute_normalization(ds);
    return ds;
}

void save_cifar(const std::string& path, const Dataset& ds, CifarVariant variant) {
    if (ds.images.rank() != 4 || ds.images.dim(1) != 3 || ds.images.dim(2) != kCifarSide ||
        ds.images.dim(3) != kCifarSide)
        throw ShapeError("save_cifar expects (M,3,32,32) images");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("cannot write dataset file " + path);
    const long rec = record_length(variant);
    std::vector<unsigned char> record(static_cast<std::size_t>(rec), 0);
    for (long i = 0; i < ds.size(); ++i) {
        const auto label = static_cast<unsigned char>(ds.labels[static_cast<std::size_t>(i)]);
        if (variant == CifarVariant::cifar10) {
            record[0] = label;
        } else {
            record[0] = 0;  // coarse label, not tracked
            record[1] = label;
        }
        const double* src = ds.images.data() + i * kCifarPixels;
        unsigned char* px = record.data() + (rec - kCifarPixels);
        for (long p = 0; p < kCifarPixels; ++p)
            px[p] = static_cast<unsigned char>(std::lround(std::clamp(src[p], 0.0, 1.0) * 255.0));
        out.write(reinterpret_cast<const char*>(record.data()), rec);
    }
    if (!out) throw DataFormatError("write failed for " + path);
}

Dataset synthetic_dataset(long K, long per_class, long H, long W, Rng& rng, double noise) {
    if (K < 2) throw InvalidParameter("synthetic_dataset: K must be >= 2");
    if (per_class < 1 || H < 4 || W < 4) throw InvalidParameter("synthetic_dataset: bad sizes");

    Dataset ds;
    ds.num_classes = K;
    const long M = K * per_class;
    ds.images = Tensor({M, 3, H, W});
    ds.labels.resize(static_cast<std::size_t>(M));

    std::normal_distribution<double> gauss(0.0, noise);
    const double sigma2 = 2.0 * std::pow(0.15 * static_cast<double>(std::min(H, W)), 2.0);
    for (long k = 0; k < K; ++k) {
        const double theta = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(K);
        const double cy = 0.5 * H + 0.25 * H * std::sin(theta);
        const double cx = 0.5 * W + 0.25 * W * std::cos(theta);
        double amp[3];
        for (int c = 0; c < 3; ++c)
            amp[c] =  0.35 + 0.3 * std::sin(theta + 2.0 * M_PI * c / 3.0);
        for (long s = 0; s < per_class; ++s) {
            const long i = k * per_class + s;
            ds.labels[static_cast<std::size_t>(i)] = static_cast<int>(k);
            double* img = ds.images.data() + i * 3 * H * W;
            for (int c = 0; c < 3; ++c)
                for (long y = 0; y < H; ++y)
                    for (long x = 0; x < W; ++x) {
                        const double r2 = std::pow(y - cy, 2.0) + std::pow(x - cx, 2.0);
                        double v = 0.2 + amp[c] * std::exp(-r2 / sigma2) + gauss(rng);
                        img[(c * H + y) * W + x] = std::clamp(v, 0.0, 1.0);
                    }
        }
    }
    compute_normalization(ds);
    return ds;
}

Dataset restrict_classes(const Dataset& ds, long num_classes, long per_class) {
    if (num_classes < 2 || num_classes > ds.num_classes)
        throw InvalidParameter("restrict_classes: bad class count");
    std::vector<long> keep;
    std::vector<long> used(static_cast<std::size_t>(num_classes), 0);
    for (long i = 0; i < ds.size(); ++i) {
        const int y = ds.labels[static_cast<std::size_t>(i)];
        if (y < num_classes && used[static_cast<std::size_t>(y)] < per_class) {
            keep.push_back(i);
            ++used[static_cast<std::size_t>(y)];
        }
    }
    Dataset out;
    out.num_classes = num_classes;
    const long C = ds.images.dim(1), H = ds.images.dim(2), W = ds.images.dim(3);
    out.images = Tensor({static_cast<long>(keep.size()), C, H, W});
    out.labels.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        set_image(out.images, static_cast<long>(i), image_at(ds.images, keep[i]));
        out.labels[i] = ds.labels[static_cast<std::size_t>(keep[i])];
    }
    compute_normalization(out);
    return out;
}

void compute_normalization(Dataset& ds) {
    const long C = ds.images.dim(1), plane = ds.images.dim(2) * ds.images.dim(3);
    const long M = ds.size();
    ds.mean.assign(static_cast<std::size_t>(C), 0.0);
    ds.stdev.assign(static_cast<std::size_t>(C), 1.0);
    if (M == 0) return;
    const double n = static_cast<double>(M * plane);
    for (long c = 0; c < C; ++c) {
        double acc = 0.0;
        for (long i = 0; i < M; ++i) {
            const double* p = ds.images.data() + (i * C + c) * plane;
            for (long t = 0; t < plane; ++t) acc += p[t];
        }
        const double mu = acc / n;
        double var = 0.0;
        for (long i = 0; i < M; ++i) {
            const double* p = ds.images.data() + (i * C + c) * plane;
            for (long t = 0; t < plane; ++t) var += (p[t] - mu) * (p[t] - mu);
        }
        ds.mean[static_cast<std::size_t>(c)] = mu;
        ds.stdev[static_cast<std::size_t>(c)] = std::max(std::sqrt(var / n), 1e-6);
    }
}

namespace {

void check_stats(const Tensor& images, const std::vector<double>& mean,
                 const std::vector<double>& stdev) {
    if (images.rank() != 4) throw ShapeError("normalize expects (N,C,H,W)");
    if (static_cast<long>(mean.size()) != images.dim(1) || mean.size() != stdev.size())
        throw ShapeError("normalization stats do not match channel count");
}

}  // namespace

Tensor normalize(const Tensor& images, const std::vector<double>& mean,
                 const std::vector<double>& stdev) {
    check_stats(images, mean, stdev);
    Tensor out(images.shape());
    const long N = images.dim(0), C = images.dim(1), plane = images.dim(2) * images.dim(3);
    for (long i = 0; i < N; ++i)
        for (long c = 0; c < C; ++c) {
            const double mu = mean[static_cast<std::size_t>(c)], sd = stdev[static_cast<std::size_t>(c)];
            const double* src = images.data() + (i * C + c) * plane;
            double* dst = out.data() + (i * C + c) * plane;
            for (long t = 0; t < plane; ++t) dst[t] = (src[t] - mu) / sd;
        }
    return out;
}

Tensor denormalize(const Tensor& images, const std::vector<double>& mean,
                   const std::vector<double>& stdev) {
    check_stats(images, mean, stdev);
    Tensor out(images.shape());
    const long N = images.dim(0), C = images.dim(1), plane = images.dim(2) * images.dim(3);
    for (long i = 0; i < N; ++i)
        for (long c = 0; c < C; ++c) {
            const double mu = mean[static_cast<std::size_t>(c)], sd = stdev[static_cast<std::size_t>(c)];
            const double* src = images.data() + (i * C + c) * plane;
            double* dst = out.data() + (i * C + c) * plane;
            for (long t = 0; t < plane; ++t) dst[t] = src[t] * sd + mu;
        }
    return out;
}

Tensor augment_with(const Tensor& image, bool flip, long oy, long ox) {
    if (image.rank() != 3) throw ShapeError("augment_with expects (C,H,W)");
    const long C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (oy < 0 || oy > 8 || ox < 0 || ox > 8) throw InvalidParameter("crop offset out of range");
    Tensor out({C, H, W});
    for (long c = 0; c < C; ++c)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                // position in the padded image, then back into the source
                const long sy = y + oy - 4;
                long sx = x + ox - 4;
                if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;  // zero border
                if (flip) sx = W - 1 - sx;
                out[(c * H + y) * W + x] = image[(c * H + sy) * W + sx];
            }
    return out;
}

Tensor basic_augment(const Tensor& image, Rng& rng) {
    std::bernoulli_distribution coin(0.5);
    const bool flip = coin(rng);
    std::uniform_int_distribution<long> off(0, 8);
    const long oy = off(rng), ox = off(rng);
    return augment_with(image, flip, oy, ox);
}

Tensor occlude(const Tensor& batch, double ratio, long patch, Rng& rng) {
    if (batch.rank() != 4) throw ShapeError("occlude expects (N,C,H,W)");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidParameter("occlude: ratio must be in [0,1]");
    if (patch < 1) throw InvalidParameter("occlude: patch must be >= 1");
    const long N = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
    const long py = (H + patch - 1) / patch, px = (W + patch - 1) / patch;
    const long total = py * px;
    const long k = static_cast<long>(std::ceil(ratio * static_cast<double>(total)));

    Tensor out = batch;
    std::vector<long> idx(static_cast<std::size_t>(total));
    for (long n = 0; n < N; ++n) {
        std::iota(idx.begin(), idx.end(), 0L);
        for (long i = 0; i < k; ++i) {
            std::uniform_int_distribution<long> pick(i, total - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
        }
        for (long i = 0; i < k; ++i) {
            const long t = idx[static_cast<std::size_t>(i)];
            const long y0 = (t / px) * patch, x0 = (t % px) * patch;
            const long y1 = std::min(H, y0 + patch), x1 = std::min(W, x0 + patch);
            for (long c = 0; c < C; ++c)
                for (long y = y0; y < y1; ++y)
                    for (long x = x0; x < x1; ++x) out.at(n, c, y, x) = 0.0;
        }
    }
    return out;
}

BatchIterator::BatchIterator(const Dataset& ds, long batch_size, std::uint64_t shuffle_seed,
                             bool augment)
    : ds_(&ds), batch_size_(batch_size), seed_(shuffle_seed), augment_(augment) {
    if (ds.size() == 0) throw InvalidParameter("batch iterator: empty dataset");
    if (batch_size < 1) throw InvalidParameter("batch iterator: batch_size must be >= 1");
    if (ds.mean.empty()) throw InvalidParameter("batch iterator: dataset has no normalization stats");
    start_epoch(0);
}

void BatchIterator::start_epoch(long epoch) {
    epoch_ = epoch;
    cursor_ = 0;
    order_.resize(static_cast<std::size_t>(ds_->size()));
    std::iota(order_.begin(), order_.end(), 0L);
    Rng shuffle_rng = derive_rng(seed_, static_cast<std::uint64_t>(epoch), 0xBA7C4);
    std::shuffle(order_.begin(), order_.end(), shuffle_rng);
    aug_rng_ = derive_rng(seed_, static_cast<std::uint64_t>(epoch), 0xA06);
}

long BatchIterator::batches_per_epoch() const {
    return (ds_->size() + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(Batch& out) {
    const long M = ds_->size();
    if (cursor_ >= M) return false;
    const long n = std::min(batch_size_, M - cursor_);
    const long C = ds_->images.dim(1), H = ds_->images.dim(2), W = ds_->images.dim(3);

    Tensor raw({n, C, H, W});
    out.labels.resize(static_cast<std::size_t>(n));
    out.indices.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const long src = order_[static_cast<std::size_t>(cursor_ + i)];
        Tensor img = image_at(ds_->images, src);
        if (augment_) img = basic_augment(img, aug_rng_);
        set_image(raw, i, img);
        out.labels[static_cast<std::size_t>(i)] = ds_->labels[static_cast<std::size_t>(src)];
        out.indices[static_cast<std::size_t>(i)] = src;
    }
    out.images = normalize(raw, ds_->mean, ds_->stdev);
    out.one_hot = Tensor({n, ds_->num_classes});
    for (long i = 0; i < n; ++i) out.one_hot.at(i, out.labels[static_cast<std::size_t>(i)]) = 1.0;
    cursor_ += n;
    return true;
}

}  // namespace sumix
