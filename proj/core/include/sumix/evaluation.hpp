#pragma once

#include <string>
#include <vector>

#include "sumix/data.hpp"
#include "sumix/encoder.hpp"

namespace sumix {

// Fraction of samples whose argmax logit (lowest class index on ties)
// equals the label. Images are normalized with the given training stats.
double top1(Encoder& model, const Dataset& ds, const std::vector<double>& mean,
            const std::vector<double>& stdev, long batch_size = 256);

struct RobustnessCurve {
    std::vector<double> ratios;
    std::vector<double> accuracies;
};

// top1 under occlusion per ratio. Patch choices are keyed by
// (seed, ratio index, batch index) only, so different models see the
// same occlusions.
RobustnessCurve occlusion_sweep(Encoder& model, const Dataset& ds, const std::vector<double>& mean,
                                const std::vector<double>& stdev, const std::vector<double>& ratios,
                                long patch = 16, std::uint64_t seed = 0, long batch_size = 256);

// Single-step sign-gradient attack in raw pixel space:
// x_adv = clip_[0,1](x + eps * sign(grad_x CE)), sign(0) = 0.
// Normalization is a fixed positive per-channel scaling, so the raw-space
// gradient sign equals the normalized-space one; the graph input is the
// normalized batch.
Tensor fgsm_attack(Encoder& model, const Tensor& raw_images, const std::vector<int>& labels,
                   double epsilon, const std::vector<double>& mean,
                   const std::vector<double>& stdev);

// 100 * (1 - top1 on the attacked set).
double fgsm_error_percent(Encoder& model, const Dataset& ds, const std::vector<double>& mean,
                          const std::vector<double>& stdev, double epsilon, long batch_size = 256);

struct CorruptionResult {
    std::vector<std::pair<std::string, double>> per_corruption;  // (name, top1)
    double mean_accuracy = 0.0;
};

// Manifest: one "name path" pair per line, files in the load_cifar
// record format. Errors name the offending manifest line.
CorruptionResult corruption_eval(Encoder& model, const std::string& manifest_path,
                                 CifarVariant variant, const std::vector<double>& mean,
                                 const std::vector<double>& stdev, long batch_size = 256);

// Classic class activation map: relu of the class-weighted last feature
// maps, bilinearly upsampled to the input size, max-normalized. Image is
// raw [0,1] pixels. mlp models raise UnsupportedArchitecture.
Tensor cam(Encoder& model, const Tensor& image, int class_index, const std::vector<double>& mean,
           const std::vector<double>& stdev);

}  // namespace sumix
