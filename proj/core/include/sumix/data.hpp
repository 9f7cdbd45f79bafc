#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sumix/rng.hpp"
#include "sumix/tensor.hpp"

namespace sumix {

enum class CifarVariant { cifar10, cifar100 };

struct Dataset {
    Tensor images;            // (M,C,H,W), values in [0,1]
    std::vector<int> labels;  // in [0,K)
    long num_classes = 0;
    std::vector<double> mean, stdev;  // per-channel normalization stats

    long size() const { return images.empty() ? 0 : images.dim(0); }
};

// CIFAR binary records: 1 label byte (cifar10) or coarse+fine label bytes
// (cifar100, fine used), then 3072 bytes as three row-major 32x32 color
// planes. Pixels scaled to [0,1]. Normalization stats are computed on
// load. Malformed sizes raise DataFormatError with the byte offset.
Dataset load_cifar(const std::string& path, CifarVariant variant);
void save_cifar(const std::string& path, const Dataset& ds, CifarVariant variant);

// K Gaussian color blobs at distinct positions/colors plus pixel noise;
// linearly separable at low noise. Labels are class-major.
Dataset synthetic_dataset(long K, long per_class, long H, long W, Rng& rng,
                          double noise = 0.05);

// Keep the first per_class samples of each label below num_classes.
Dataset restrict_classes(const Dataset& ds, long num_classes, long per_class);

void compute_normalization(Dataset& ds);
Tensor normalize(const Tensor& images, const std::vector<double>& mean,
                 const std::vector<double>& stdev);
Tensor denormalize(const Tensor& images, const std::vector<double>& mean,
                   const std::vector<double>& stdev);

// Deterministic augmentation core: optional horizontal flip, then a crop
// of the 4-pixel zero-padded image at offset (oy,ox) in [0,8]^2.
// (4,4) is the identity crop.
Tensor augment_with(const Tensor& image, bool flip, long oy, long ox);
// flip with probability 1/2, uniform crop offsets
Tensor basic_augment(const Tensor& image, Rng& rng);

// Mask ceil(ratio * patch_count) patches per image to 0 (the mean in
// normalized space), chosen without replacement. Ragged edge tiles count
// as patches when the sides do not divide evenly.
Tensor occlude(const Tensor& batch, double ratio, long patch, Rng& rng);

struct Batch {
    Tensor images;            // normalized (n,C,H,W)
    std::vector<int> labels;
    Tensor one_hot;           // (n,K)
    std::vector<long> indices;
};

// Epoch-wise shuffled batches; the order is a pure function of
// (shuffle_seed, epoch). The last partial batch is emitted.
class BatchIterator {
public:
    BatchIterator(const Dataset& ds, long batch_size, std::uint64_t shuffle_seed,
                  bool augment = false);

    void start_epoch(long epoch);
    bool next(Batch& out);
    long batches_per_epoch() const;

private:
    const Dataset* ds_;
    long batch_size_;
    std::uint64_t seed_;
    bool augment_;
    long epoch_ = 0;
    long cursor_ = 0;
    std::vector<long> order_;
    Rng aug_rng_;
};

}  // namespace sumix
