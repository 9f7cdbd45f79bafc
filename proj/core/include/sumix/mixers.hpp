#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sumix/rng.hpp"
#include "sumix/tensor.hpp"

namespace sumix {

enum class MixMethod { mixup, cutmix, fmix, saliencymix, resizemix };

const char* to_string(MixMethod m);
MixMethod parse_mix_method(const std::string& s);

struct MixConfig {
    MixMethod method = MixMethod::cutmix;
    double alpha = 0.2;       // Beta(alpha, alpha) concentration
    double fmix_decay = 3.0;  // spectral attenuation exponent
    double fixed_lam = std::numeric_limits<double>::quiet_NaN();  // NaN = sample per batch
    std::uint64_t seed = 0;
};

// Output of every mixer. mask holds the x_a fraction per pixel: exactly
// {0,1} for the cutting methods, the constant lambda for plain mixup.
// lam_nominal is recomputed from the realized mask, so mean(mask) over a
// sample equals lam_nominal bitwise for cutting methods. perm maps each
// sample to its partner (identity when the pair was passed explicitly).
struct MixResult {
    Tensor mixed;                     // (N,C,H,W)
    Tensor mask;                      // (N,H,W)
    std::vector<double> lam_nominal;  // per sample
    std::vector<long> perm;           // partner index per sample
};

// Beta(alpha, alpha) draw via two gamma variates.
double sample_lambda(double alpha, Rng& rng);

// mixed = lam*x_a + (1-lam)*x_b elementwise.
MixResult mixup_interpolate(const Tensor& x_a, const Tensor& x_b, double lam);

// Rectangle of ones (kept from x_a) with sides round(W*sqrt(lam)),
// round(H*sqrt(lam)), uniform center, clipped to bounds.
MixResult cutmix(const Tensor& x_a, const Tensor& x_b, double lam, Rng& rng);

// x_a resized to the cutmix rectangle size and pasted into x_b at a
// uniform position where the patch fits entirely.
MixResult resizemix(const Tensor& x_a, const Tensor& x_b, double lam, Rng& rng);

// Low-frequency random field thresholded so the ones-count is exactly
// ceil(lam*W*H); ties broken by raster order. Returns (H,W).
Tensor fmix_mask(long W, long H, double lam, double decay, Rng& rng);

MixResult fmix(const Tensor& x_a, const Tensor& x_b, double lam, double decay, Rng& rng);

// Spectral-residual saliency of a (C,H,W) image: nonnegative (H,W) grid,
// min-max normalized, all zeros for a constant input.
Tensor saliency_map(const Tensor& image);

// cutmix geometry centered on the argmax of saliency_map(x_a).
MixResult saliencymix(const Tensor& x_a, const Tensor& x_b, double lam, Rng& rng);

// One lambda for the whole batch, partners drawn as a uniform random
// permutation (fixed points allowed), then the configured method per pair.
MixResult mix_batch(const MixConfig& config, const Tensor& x, Rng& rng);

}  // namespace sumix
