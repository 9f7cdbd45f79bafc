#include "sumix/mixers.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>

#include "sumix/errors.hpp"
#include "sumix/fft.hpp"

namespace sumix {

const char* to_string(MixMethod m) {
    switch (m) {
        case MixMethod::mixup: return "mixup";
        case MixMethod::cutmix: return "cutmix";
        case MixMethod::fmix: return "fmix";
        case MixMethod::saliencymix: return "saliencymix";
        case MixMethod::resizemix: return "resizemix";
    }
    return "?";
}

MixMethod parse_mix_method(const std::string& s) {
    if (s == "mixup") return MixMethod::mixup;
    if (s == "cutmix") return MixMethod::cutmix;
    if (s == "fmix") return MixMethod::fmix;
    if (s == "saliencymix") return MixMethod::saliencymix;
    if (s == "resizemix") return MixMethod::resizemix;
    throw InvalidParameter("unknown mix method '" + s + "'");
}

namespace {

void check_pair(const Tensor& a, const Tensor& b) {
    if (a.rank() != 4) throw ShapeError("mixer expects (N,C,H,W) batches");
    check_same_shape(a, b, "mixer pair");
}

void check_lambda(double lam) {
    if (!(lam >= 0.0 && lam <= 1.0)) throw InvalidParameter("lambda must be in [0,1]");
}

struct Rect {
    long x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    long area() const { return (x1 - x0) * (y1 - y0); }
};

long side(long extent, double lam) { return std::lround(static_cast<double>(extent) * std::sqrt(lam)); }

Rect centered_rect(long cx, long cy, long r_w, long r_h, long W, long H) {
    Rect r;
    r.x0 = std::max<long>(0, cx - r_w / 2);
    r.x1 = std::min<long>(W, cx - r_w / 2 + r_w);
    r.y0 = std::max<long>(0, cy - r_h / 2);
    r.y1 = std::min<long>(H, cy - r_h / 2 + r_h);
    return r;
}

// mixed sample = x_a inside the rectangle, x_b outside; mask kept exactly
// binary so realized fractions are whole pixel counts.
void blend_rect(MixResult& out, const Tensor& x_a, const Tensor& x_b, long n, const Rect& r) {
    const long C = x_a.dim(1), H = x_a.dim(2), W = x_a.dim(3);
    const double* pa = x_a.data() + n * C * H * W;
    double* pm = out.mixed.data() + n * C * H * W;
    for (long c = 0; c < C; ++c)
        for (long y = r.y0; y < r.y1; ++y) {
            const long base = (c * H + y) * W;
            for (long x = r.x0; x < r.x1; ++x) pm[base + x] = pa[base + x];
        }
    double* mk = out.mask.data() + n * H * W;
    for (long y = r.y0; y < r.y1; ++y)
        for (long x = r.x0; x < r.x1; ++x) mk[y * W + x] = 1.0;
    out.lam_nominal[static_cast<std::size_t>(n)] =
        static_cast<double>(r.area()) / static_cast<double>(W * H);
}

MixResult start_from_b(const Tensor& x_a, const Tensor& x_b) {
    check_pair(x_a, x_b);
    MixResult out;
    out.mixed = x_b;
    out.mask = Tensor({x_a.dim(0), x_a.dim(2), x_a.dim(3)});
    out.lam_nominal.assign(static_cast<std::size_t>(x_a.dim(0)), 0.0);
    out.perm.resize(static_cast<std::size_t>(x_a.dim(0)));
    std::iota(out.perm.begin(), out.perm.end(), 0L);
    return out;
}

}  // namespace

double sample_lambda(double alpha, Rng& rng) {
    if (!(alpha > 0.0)) throw InvalidParameter("alpha must be positive");
    std::gamma_distribution<double> gamma(alpha, 1.0);
    double ga = gamma(rng);
    double gb = gamma(rng);
    if (ga + gb <= 0.0) return 0.5;  // double underflow of both draws
    return ga / (ga + gb);
}

MixResult mixup_interpolate(const Tensor& x_a, const Tensor& x_b, double lam) {
    check_pair(x_a, x_b);
    check_lambda(lam);
    MixResult out;
    out.mixed = Tensor(x_a.shape());
    const double* pa = x_a.data();
    const double* pb = x_b.data();
    double* pm = out.mixed.data();
    const double lb = 1.0 - lam;
    for (long i = 0; i < x_a.size(); ++i) pm[i] = lam * pa[i] + lb * pb[i];
    out.mask = Tensor::full({x_a.dim(0), x_a.dim(2), x_a.dim(3)}, lam);
    out.lam_nominal.assign(static_cast<std::size_t>(x_a.dim(0)), lam);
    out.perm.resize(static_cast<std::size_t>(x_a.dim(0)));
    std::iota(out.perm.begin(), out.perm.end(), 0L);
    return out;
}

MixResult cutmix(const Tensor& x_a, const Tensor& x_b, double lam, Rng& rng) {
    check_lambda(lam);
    MixResult out = start_from_b(x_a, x_b);
    const long N = x_a.dim(0), H = x_a.dim(2), W = x_a.dim(3);
    const long r_w = side(W, lam), r_h = side(H, lam);
    std::uniform_int_distribution<long> dx(0, W - 1), dy(0, H - 1);
    for (long n = 0; n < N; ++n) {
        if (r_w <= 0 || r_h <= 0) continue;
        const long cy = dy(rng), cx = dx(rng);
        blend_rect(out, x_a, x_b, n, centered_rect(cx, cy, r_w, r_h, W, H));
    }
    return out;
}

MixResult resizemix(const Tensor& x_a, const Tensor& x_b, double lam, Rng& rng) {
    check_lambda(lam);
    MixResult out = start_from_b(x_a, x_b);
    const long N = x_a.dim(0), C = x_a.dim(1), H = x_a.dim(2), W = x_a.dim(3);
    const long r_w = side(W, lam), r_h = side(H, lam);
    std::uniform_int_distribution<long> dx(0, W - r_w), dy(0, H - r_h);
    for (long n = 0; n < N; ++n) {
        if (r_w <= 0 || r_h <= 0) continue;
        const long oy = dy(rng), ox = dx(rng);
        Tensor patch = bilinear_resize(image_at(x_a, n), r_h, r_w);
        double* pm = out.mixed.data() + n * C * H * W;
        for (long c = 0; c < C; ++c)
            for (long y = 0; y < r_h; ++y)
                for (long x = 0; x < r_w; ++x)
                    pm[(c * H + oy + y) * W + ox + x] = patch[(c * r_h + y) * r_w + x];
        double* mk = out.mask.data() + n * H * W;
        for (long y = 0; y < r_h; ++y)
            for (long x = 0; x < r_w; ++x) mk[(oy + y) * W + ox + x] = 1.0;
        out.lam_nominal[static_cast<std::size_t>(n)] =
            static_cast<double>(r_w * r_h) / static_cast<double>(W * H);
    }
    return out;
}

Tensor fmix_mask(long W, long H, double lam, double decay, Rng& rng) {
    check_lambda(lam);
    if (W < 1 || H < 1) throw InvalidParameter("fmix_mask: empty grid");
    if (!(decay > 0.0)) throw InvalidParameter("fmix_mask: decay must be positive");

    // Complex Gaussian spectrum attenuated over radial frequency; the DC
    // bin shares the lowest nonzero frequency's weight so it stays finite.
    const double f_floor = 1.0 / static_cast<double>(std::max(W, H));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(W * H));
    for (long y = 0; y < H; ++y) {
        const double fy = (y <= H / 2 ? y : y - H) / static_cast<double>(H);
        for (long x = 0; x < W; ++x) {
            const double fx = (x <= W / 2 ? x : x - W) / static_cast<double>(W);
            const double f = std::max(std::sqrt(fy * fy + fx * fx), f_floor);
            const double w = std::pow(f, -decay);
            const double re = normal(rng), im = normal(rng);
            spectrum[static_cast<std::size_t>(y * W + x)] = {re * w, im * w};
        }
    }
    fft2(spectrum, H, W, /*inverse=*/true);

    const long total = W * H;
    const long k = static_cast<long>(std::ceil(lam * static_cast<double>(total)));
    std::vector<long> idx(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), 0L);
    std::stable_sort(idx.begin(), idx.end(), [&](long a, long b) {
        return spectrum[static_cast<std::size_t>(a)].real() > spectrum[static_cast<std::size_t>(b)].real();
    });
    Tensor mask({H, W});
    for (long i = 0; i < std::min(k, total); ++i) mask[idx[static_cast<std::size_t>(i)]] = 1.0;
    return mask;
}

MixResult fmix(const Tensor& x_a, const Tensor& x_b, double lam, double decay, Rng& rng) {
    MixResult out = start_from_b(x_a, x_b);
    const long N = x_a.dim(0), C = x_a.dim(1), H = x_a.dim(2), W = x_a.dim(3);
    for (long n = 0; n < N; ++n) {
        Tensor mask = fmix_mask(W, H, lam, decay, rng);
        const double* pa = x_a.data() + n * C * H * W;
        double* pm = out.mixed.data() + n * C * H * W;
        long count = 0;
        for (long i = 0; i < H * W; ++i) {
            if (mask[i] != 1.0) continue;
            ++count;
            for (long c = 0; c < C; ++c) pm[c * H * W + i] = pa[c * H * W + i];
        }
        std::copy(mask.data(), mask.data() + H * W, out.mask.data() + n * H * W);
        out.lam_nominal[static_cast<std::size_t>(n)] =
            static_cast<double>(count) / static_cast<double>(W * H);
    }
    return out;
}

namespace {

// 3x3 box filter with wraparound edges, matching the periodic spectrum.
Tensor box3_wrap(const Tensor& g) {
    const long H = g.dim(0), W = g.dim(1);
    Tensor out({H, W});
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    long yy = (y + dy + H) % H, xx = (x + dx + W) % W;
                    acc += g.at(yy, xx);
                }
            out.at(y, x) = acc / 9.0;
        }
    return out;
}

// Separable Gaussian, replicated edges.
Tensor gaussian_smooth(const Tensor& g, double sigma) {
    const long H = g.dim(0), W = g.dim(1);
    const long radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        norm += v;
    }
    for (double& v : kernel) v /= norm;

    Tensor tmp({H, W}), out({H, W});
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            double acc = 0.0;
            for (long i = -radius; i <= radius; ++i) {
                long xx = std::clamp(x + i, 0L, W - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * g.at(y, xx);
            }
            tmp.at(y, x) = acc;
        }
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            double acc = 0.0;
            for (long i = -radius; i <= radius; ++i) {
                long yy = std::clamp(y + i, 0L, H - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(yy, x);
            }
            out.at(y, x) = acc;
        }
    return out;
}

}  // namespace

Tensor saliency_map(const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("saliency_map expects (C,H,W)");
    const long C = image.dim(0), H = image.dim(1), W = image.dim(2);

    Tensor gray({H, W});
    for (long i = 0; i < H * W; ++i) {
        double acc = 0.0;
        for (long c = 0; c < C; ++c) acc += image[c * H * W + i];
        gray[i] = acc / static_cast<double>(C);
    }
    // A constant image has no spectral residual; the contract is a zero map.
    if (gray.max() == gray.min()) return Tensor({H, W});

    std::vector<std::complex<double>> spec(static_cast<std::size_t>(H * W));
    for (long i = 0; i < H * W; ++i) spec[static_cast<std::size_t>(i)] = {gray[i], 0.0};
    fft2(spec, H, W);

    Tensor log_amp({H, W}), phase({H, W});
    for (long i = 0; i < H * W; ++i) {
        const auto z = spec[static_cast<std::size_t>(i)];
        log_amp[i] = std::log(std::abs(z) + 1e-12);
        phase[i] = std::arg(z);
    }
    Tensor residual = box3_wrap(log_amp);
    for (long i = 0; i < H * W; ++i) residual[i] = log_amp[i] - residual[i];

    for (long i = 0; i < H * W; ++i)
        spec[static_cast<std::size_t>(i)] = std::polar(std::exp(residual[i]), phase[i]);
    fft2(spec, H, W, /*inverse=*/true);

    Tensor sal({H, W});
    for (long i = 0; i < H * W; ++i) sal[i] = std::norm(spec[static_cast<std::size_t>(i)]);
    sal = gaussian_smooth(sal, 2.0);

    const double lo = sal.min(), hi = sal.max();
    if (hi <= lo) return Tensor({H, W});
    for (long i = 0; i < H * W; ++i) sal[i] = (sal[i] - lo) / (hi - lo);
    return sal;
}

MixResult saliencymix(const Tensor& x_a, const Tensor& x_b, double lam, Rng& rng) {
    (void)rng;  // geometry is fixed by the saliency argmax
    check_lambda(lam);
    MixResult out = start_from_b(x_a, x_b);
    const long N = x_a.dim(0), H = x_a.dim(2), W = x_a.dim(3);
    const long r_w = side(W, lam), r_h = side(H, lam);
    for (long n = 0; n < N; ++n) {
        if (r_w <= 0 || r_h <= 0) continue;
        Tensor sal = saliency_map(image_at(x_a, n));
        long best = 0;
        for (long i = 1; i < H * W; ++i)
            if (sal[i] > sal[best]) best = i;
        const long sy = best / W, sx = best % W;
        blend_rect(out, x_a, x_b, n, centered_rect(sx, sy, r_w, r_h, W, H));
    }
    return out;
}

MixResult mix_batch(const MixConfig& config, const Tensor& x, Rng& rng) {
    if (x.rank() != 4) throw ShapeError("mix_batch expects (N,C,H,W)");
    if (!(config.fmix_decay > 0.0)) throw InvalidParameter("fmix_decay must be positive");
    const long N = x.dim(0);
    double lam;
    if (std::isnan(config.fixed_lam)) {
        lam = sample_lambda(config.alpha, rng);
    } else {
        lam = config.fixed_lam;
        if (!(lam >= 0.0 && lam <= 1.0)) throw InvalidParameter("fixed_lam must be in [0,1]");
    }

    std::vector<long> perm(static_cast<std::size_t>(N));
    std::iota(perm.begin(), perm.end(), 0L);
    std::shuffle(perm.begin(), perm.end(), rng);

    Tensor x_b(x.shape());
    for (long n = 0; n < N; ++n) set_image(x_b, n, image_at(x, perm[static_cast<std::size_t>(n)]));

    MixResult out;
    switch (config.method) {
        case MixMethod::mixup: out = mixup_interpolate(x, x_b, lam); break;
        case MixMethod::cutmix: out = cutmix(x, x_b, lam, rng); break;
        case MixMethod::fmix: out = fmix(x, x_b, lam, config.fmix_decay, rng); break;
        case MixMethod::saliencymix: out = saliencymix(x, x_b, lam, rng); break;
        case MixMethod::resizemix: out = resizemix(x, x_b, lam, rng); break;
    }
    out.perm = std::move(perm);
    return out;
}

}  // namespace sumix
