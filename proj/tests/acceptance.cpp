#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sumix/data.hpp"
#include "sumix/encoder.hpp"
#include "sumix/evaluation.hpp"
#include "sumix/mixers.hpp"
#include "sumix/rng.hpp"
#include "sumix/sumix.hpp"
#include "sumix/tensor.hpp"
#include "sumix/training.hpp"

#include "helpers.hpp"

using namespace sumix;
namespace fs = std::filesystem;

namespace {

// Each criterion prints exactly one machine-checkable line; the ctest
// registration matches on "[criterion N] PASS" / "FAIL".
struct Criterion {
    int n;
    std::vector<std::string> problems;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    explicit Criterion(int num) : n(num) {}

    void expect(bool ok, const std::string& msg) {
        if (!ok) problems.push_back(msg);
    }

    void finish(const std::string& detail) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string joined;
        for (const auto& p : problems) joined += (joined.empty() ? "" : "; ") + p;
        if (problems.empty())
            std::printf("[criterion %d] PASS: %s (%.1fs)\n", n, detail.c_str(), secs);
        else
            std::printf("[criterion %d] FAIL: %s (%.1fs)\n", n, joined.c_str(), secs);
        std::fflush(stdout);
        CHECK_MESSAGE(problems.empty(), joined);
    }
};

std::string fnum(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// The scalar equations written out longhand, independent of the library
// implementations they are checked against.
double hand_softmax_norm(const std::vector<double>& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : v) z += std::exp(x - mx);
    double s = 0.0;
    for (double x : v) {
        const double p = std::exp(x - mx) / z;
        s += p * p;
    }
    return std::sqrt(s);
}

double hand_ce(const std::vector<double>& logits, int label) {
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : logits) z += std::exp(x - mx);
    return std::log(z) - (logits[static_cast<std::size_t>(label)] - mx);
}

std::vector<double> tensor_row(const Tensor& m, long i) {
    std::vector<double> out(static_cast<std::size_t>(m.dim(1)));
    for (long j = 0; j < m.dim(1); ++j) out[static_cast<std::size_t>(j)] = m.at(i, j);
    return out;
}

std::vector<double> hand_head(const Tensor& w, const Tensor& b, const std::vector<double>& z) {
    std::vector<double> out(static_cast<std::size_t>(w.dim(0)));
    for (long j = 0; j < w.dim(0); ++j) {
        double acc = b[j];
        for (long k = 0; k < w.dim(1); ++k) acc += w.at(j, k) * z[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(j)] = acc;
    }
    return out;
}

// One-sided Wilcoxon signed-rank test (greater), normal approximation
// with tie correction and continuity correction.
double wilcoxon_greater_p(const std::vector<double>& deltas) {
    std::vector<double> nz;
    for (double d : deltas)
        if (d != 0.0) nz.push_back(d);
    const std::size_t n = nz.size();
    if (n == 0) return 1.0;

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(nz[a]) < std::abs(nz[b]);
    });

    std::vector<double> rank(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && std::abs(nz[idx[j]]) == std::abs(nz[idx[i]])) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k) rank[idx[k]] = avg;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }

    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (nz[i] > 0.0) w_plus += rank[i];

    const double dn = static_cast<double>(n);
    const double mu = dn * (dn + 1.0) / 4.0;
    const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) return w_plus > mu ? 0.0 : 1.0;
    const double z = (w_plus - mu - 0.5) / std::sqrt(var);
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

Tensor gather_batch(const Dataset& ds, long from, long count) {
    const long C = ds.images.dim(1), H = ds.images.dim(2), W = ds.images.dim(3);
    Tensor out({count, C, H, W});
    for (long i = 0; i < count; ++i) set_image(out, i, image_at(ds.images, from + i));
    return out;
}

std::vector<Tensor> snapshot_buffers(Encoder& model) {
    std::vector<Tensor> out;
    for (auto& [name, buf] : model.buffers()) out.push_back(*buf);
    return out;
}

void restore_buffers(Encoder& model, const std::vector<Tensor>& snap) {
    std::size_t i = 0;
    for (auto& [name, buf] : model.buffers()) *buf = snap[i++];
}

}  // namespace

TEST_CASE("criterion 1: recomputed weight and gate invariants hold on randomized inputs") {
    Criterion c(1);
    constexpr long kDraws = 10000;
    constexpr long kFeatDim = 8;
    constexpr long kHeadDim = 16;
    const double d_lo = 1.0 / std::sqrt(static_cast<double>(kFeatDim));
    const double u_lo = 1.0 / std::sqrt(static_cast<double>(kHeadDim));
    const double z_lo = std::exp(-3.0);

    try {
        Rng hrng = make_rng(7);
        UncertaintyHead head(kFeatDim, kHeadDim, hrng);
        Rng rng = make_rng(0xACC1);

        long bad_sum = 0, bad_range = 0, bad_boundary = 0, bad_d = 0, bad_u = 0, bad_beta = 0,
             bad_zsu = 0;
        for (long i = 0; i < kDraws; ++i) {
            const double scale = test::uniform(rng, 0.05, 4.0);
            const Tensor z_t = test::random_tensor({kFeatDim}, rng, scale);
            const Tensor z_a = test::random_tensor({kFeatDim}, rng, scale);
            const Tensor z_b = test::random_tensor({kFeatDim}, rng, scale);
            const double lam = test::uniform(rng, 0.0, 1.0);

            auto [la, lb] = recompute_lambda(z_t, z_a, z_b, lam);
            if (la + lb != 1.0) ++bad_sum;  // bitwise, not approximate
            if (!(la >= 0.0 && la <= 1.0)) ++bad_range;

            auto [l0a, l0b] = recompute_lambda(z_t, z_a, z_b, 0.0);
            auto [l1a, l1b] = recompute_lambda(z_t, z_a, z_b, 1.0);
            if (l0a != 0.0 || l0b != 1.0 || l1a != 1.0 || l1b != 0.0) ++bad_boundary;

            const double d_a = feature_distance(z_t, z_a);
            if (!(d_a >= d_lo && d_a < 1.0)) ++bad_d;

            const double u_t = uncertainty(z_t, head);
            const double u_a = uncertainty(z_a, head);
            const double u_b = uncertainty(z_b, head);
            if (!(u_t >= u_lo && u_t < 1.0)) ++bad_u;
            const double beta_a = u_t + u_a, beta_b = u_t + u_b;
            if (!(beta_a >= 2.0 * u_lo && beta_a < 2.0 && beta_b >= 2.0 * u_lo && beta_b < 2.0))
                ++bad_beta;

            const double z_su = z_su_gate(z_t, z_a, z_b, la, lb, head);
            if (!(z_su > z_lo && z_su < 1.0)) ++bad_zsu;
        }

        c.expect(bad_sum == 0, fnum(bad_sum) + " draws broke lam_a + lam_b == 1 bitwise");
        c.expect(bad_range == 0, fnum(bad_range) + " draws left [0,1]");
        c.expect(bad_boundary == 0, fnum(bad_boundary) + " draws broke the lam in {0,1} boundary");
        c.expect(bad_d == 0, fnum(bad_d) + " distances left [1/sqrt(d), 1)");
        c.expect(bad_u == 0, fnum(bad_u) + " uncertainties left [1/sqrt(m), 1)");
        c.expect(bad_beta == 0, fnum(bad_beta) + " betas left [2/sqrt(m), 2)");
        c.expect(bad_zsu == 0, fnum(bad_zsu) + " gates left (e^-3, 1)");
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    c.finish(fnum(kDraws) +
             " draws: weight pair sums bitwise to 1, {0,1} boundaries exact, d/u/beta/Z_su in bounds");
}

TEST_CASE("criterion 2: analytic gradients match finite differences in every loss mode") {
    Criterion c(2);
    constexpr double kTol = 1e-4;     // max relative error, floor 1e-6
    constexpr double kStep = 1e-6;    // central difference, scaled by |theta|
    constexpr double kZeta = 0.7;
    constexpr int kCoords = 20;       // sampled parameter coordinates per mode

    try {
        EncoderConfig ec;
        ec.arch = Arch::mlp;
        ec.widths = {6, 5};
        ec.feature_dim = 4;
        ec.num_classes = 3;
        ec.in_channels = 3;
        ec.in_h = 8;
        ec.in_w = 8;
        Rng mrng = make_rng(11);
        Encoder model(ec, mrng);
        Rng hrng = make_rng(12);
        UncertaintyHead head(4, 5, hrng);

        Rng drng = make_rng(13);
        const Tensor batch = test::random_uniform({4, 3, 8, 8}, drng);
        const std::vector<int> labels = {0, 1, 2, 0};
        MixConfig mc;
        mc.method = MixMethod::cutmix;
        mc.fixed_lam = 0.37;
        Rng mixrng = make_rng(14);
        const MixResult mix = mix_batch(mc, batch, mixrng);

        std::vector<NamedParam*> params;
        for (auto& p : model.parameters()) params.push_back(&p);
        for (auto& p : head.parameters()) params.push_back(&p);

        Rng pick = make_rng(0xC2);
        std::ostringstream detail;
        const LossMode modes[] = {LossMode::baseline_mce, LossMode::lambda_only,
                                  LossMode::semantic_only, LossMode::uncertainty_only,
                                  LossMode::full_su};
        for (LossMode mode : modes) {
            const SumixAux aux = compute_sumix_aux(model, mix, batch, labels, mode);
            auto loss_value = [&]() {
                ad::NoGradGuard ng;
                return loss_given_aux(model, head, mix, aux, kZeta, mode).loss.val()[0];
            };

            for (auto* p : params) p->value.zero_grad();
            LossOutput out = loss_given_aux(model, head, mix, aux, kZeta, mode);
            ad::backward(out.loss);

            double worst = 0.0;
            for (int t = 0; t < kCoords; ++t) {
                const auto pi = static_cast<std::size_t>(
                    test::uniform(pick, 0.0, static_cast<double>(params.size()) - 1e-9));
                Tensor& theta = params[pi]->value.node()->value;
                const long ci = static_cast<long>(
                    test::uniform(pick, 0.0, static_cast<double>(theta.size()) - 1e-9));

                const double analytic =
                    params[pi]->value.has_grad() ? params[pi]->value.grad()[ci] : 0.0;
                const double keep = theta[ci];
                const double h = kStep * std::max(1.0, std::abs(keep));
                theta[ci] = keep + h;
                const double fp = loss_value();
                theta[ci] = keep - h;
                const double fm = loss_value();
                theta[ci] = keep;
                const double fd = (fp - fm) / (2.0 * h);
                worst = std::max(worst, std::abs(analytic - fd) /
                                            std::max({std::abs(analytic), std::abs(fd), 1e-6}));
            }
            c.expect(worst <= kTol,
                     std::string(to_string(mode)) + " worst rel err " + fnum(worst));
            detail << (detail.tellp() > 0 ? " " : "") << to_string(mode) << "=" << fnum(worst);
        }
        c.finish("worst relative error per mode: " + detail.str());
        return;
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    c.finish("");
}

TEST_CASE("criterion 3: mask geometry matches brute-force pixel accounting") {
    Criterion c(3);
    constexpr long kTrials = 100;
    constexpr long kSide = 32;  // H*W = 1024, a power of two, so ones/HW is exact
    const long hw = kSide * kSide;

    try {
        Rng drng = make_rng(21);
        const Tensor x_a = test::random_uniform({2, 3, kSide, kSide}, drng);
        const Tensor x_b = test::random_uniform({2, 3, kSide, kSide}, drng);
        Rng rng = make_rng(22);

        long bad_binary = 0, bad_cutmix = 0, bad_fmix = 0, bad_resize = 0, bad_saliency = 0;
        auto ones_of = [&](const MixResult& mix, long n, bool& binary_ok) {
            long ones = 0;
            binary_ok = true;
            for (long i = 0; i < hw; ++i) {
                const double v = mix.mask[n * hw + i];
                if (v != 0.0 && v != 1.0) binary_ok = false;
                ones += v == 1.0;
            }
            return ones;
        };

        for (long t = 0; t < kTrials; ++t) {
            const double lam = test::uniform(rng, 0.0, 1.0);

            MixResult cm = cutmix(x_a, x_b, lam, rng);
            MixResult rm = resizemix(x_a, x_b, lam, rng);
            MixResult sm = saliencymix(x_a, x_b, lam, rng);
            const Tensor fm = fmix_mask(kSide, kSide, lam, 3.0, rng);

            for (long n = 0; n < 2; ++n) {
                bool ok = true;
                long ones = ones_of(cm, n, ok);
                if (!ok) ++bad_binary;
                // realized area == mean(mask) == lam_nominal, exact
                if (static_cast<double>(ones) / static_cast<double>(hw) != cm.lam_nominal[n])
                    ++bad_cutmix;

                ones = ones_of(rm, n, ok);
                if (!ok) ++bad_binary;
                const long r_w = std::lround(static_cast<double>(kSide) * std::sqrt(lam));
                const long r_h = r_w;  // square canvas
                if (ones != r_w * r_h) ++bad_resize;
                if (static_cast<double>(ones) / static_cast<double>(hw) != rm.lam_nominal[n])
                    ++bad_resize;

                ones = ones_of(sm, n, ok);
                if (!ok) ++bad_binary;
                if (static_cast<double>(ones) / static_cast<double>(hw) != sm.lam_nominal[n])
                    ++bad_saliency;
            }

            long fones = 0;
            for (long i = 0; i < hw; ++i) fones += fm[i] == 1.0;
            if (fones != static_cast<long>(std::ceil(lam * static_cast<double>(hw)))) ++bad_fmix;
        }

        c.expect(bad_binary == 0, fnum(bad_binary) + " non-binary masks");
        c.expect(bad_cutmix == 0, fnum(bad_cutmix) + " cutmix area mismatches");
        c.expect(bad_fmix == 0, fnum(bad_fmix) + " fmix ones-count mismatches");
        c.expect(bad_resize == 0, fnum(bad_resize) + " resizemix area mismatches");
        c.expect(bad_saliency == 0, fnum(bad_saliency) + " saliencymix area mismatches");
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    c.finish(fnum(kTrials) + " lambdas per method on 32x32: ones/HW equals lam_nominal exactly, "
             "fmix count equals ceil(lam*HW), resizemix equals its paste rectangle");
}

TEST_CASE("criterion 4: the reported loss equals a step-by-step recomputation") {
    Criterion c(4);
    constexpr double kTol = 1e-10;
    constexpr double kZeta = 0.6;

    try {
        const LossMode modes[] = {LossMode::baseline_mce, LossMode::lambda_only,
                                  LossMode::semantic_only, LossMode::uncertainty_only,
                                  LossMode::full_su};
        for (Arch arch : {Arch::mlp, Arch::small_cnn}) {
            EncoderConfig ec;
            ec.arch = arch;
            ec.num_classes = 4;
            ec.in_channels = 3;
            if (arch == Arch::mlp) {
                ec.widths = {6, 5};
                ec.feature_dim = 4;
                ec.in_h = 8;
                ec.in_w = 8;
            } else {
                ec.widths = {4, 6, 8};
                ec.in_h = 16;
                ec.in_w = 16;
            }
            Rng mrng = make_rng(31);
            Encoder model(ec, mrng);
            const long fd = model.feature_dim();
            Rng hrng = make_rng(32);
            UncertaintyHead head(fd, 6, hrng);

            Rng drng = make_rng(33);
            const Tensor batch = test::random_uniform({5, 3, ec.in_h, ec.in_w}, drng);
            const std::vector<int> labels = {0, 1, 2, 3, 1};
            MixConfig mc;
            mc.method = MixMethod::cutmix;
            mc.alpha = 1.0;
            Rng mixrng = make_rng(34);
            const MixResult mix = mix_batch(mc, batch, mixrng);
            const long n = batch.dim(0);

            // Ingredients, computed on the pre-call normalization state.
            const std::vector<Tensor> pre = snapshot_buffers(model);
            Tensor z_frozen, z_raw, feat_t, logits_t;
            {
                ad::NoGradGuard ng;
                z_frozen = model.forward(mix.mixed, ad::BnMode::frozen_stats).features.val();
                z_raw = model.forward(batch, ad::BnMode::frozen_stats).features.val();
                Encoder::Forward tf = model.forward(ad::Value::leaf(mix.mixed), ad::BnMode::train);
                feat_t = tf.features.val();
                logits_t = tf.logits.val();
            }
            const Tensor& wh = head.parameters()[0].value.val();
            const Tensor& bh = head.parameters()[1].value.val();

            // Recomputed label weights from the frozen mixed/raw features.
            std::vector<double> lt_a(static_cast<std::size_t>(n)), lt_b(static_cast<std::size_t>(n));
            for (long i = 0; i < n; ++i) {
                const double lam = mix.lam_nominal[static_cast<std::size_t>(i)];
                const std::vector<double> zt = tensor_row(z_frozen, i);
                const std::vector<double> za = tensor_row(z_raw, i);
                const std::vector<double> zb = tensor_row(z_raw, mix.perm[static_cast<std::size_t>(i)]);
                double la;
                if (lam == 0.0) {
                    la = 0.0;
                } else if (lam == 1.0) {
                    la = 1.0;
                } else {
                    std::vector<double> da(zt.size()), db(zt.size());
                    for (std::size_t k = 0; k < zt.size(); ++k) {
                        da[k] = zt[k] - za[k];
                        db[k] = zt[k] - zb[k];
                    }
                    const double wa = lam * std::exp(-hand_softmax_norm(da));
                    const double wb = (1.0 - lam) * std::exp(-hand_softmax_norm(db));
                    la = wa / (wa + wb);
                }
                lt_a[static_cast<std::size_t>(i)] = la;
                lt_b[static_cast<std::size_t>(i)] = 1.0 - la;
            }

            for (LossMode mode : modes) {
                const bool gated = mode == LossMode::semantic_only ||
                                   mode == LossMode::uncertainty_only || mode == LossMode::full_su;

                double t1 = 0.0, t2 = 0.0, zsum = 0.0, wsum = 0.0;
                for (long i = 0; i < n; ++i) {
                    const std::size_t si = static_cast<std::size_t>(i);
                    const int y_a = labels[si];
                    const int y_b = labels[static_cast<std::size_t>(mix.perm[si])];
                    const double lam = mix.lam_nominal[si];
                    const double w_a = mode == LossMode::baseline_mce ? lam : lt_a[si];
                    const double w_b = mode == LossMode::baseline_mce ? 1.0 - lam : lt_b[si];
                    wsum += w_a;

                    const std::vector<double> row = tensor_row(logits_t, i);
                    t1 += w_a * hand_ce(row, y_a) + w_b * hand_ce(row, y_b);

                    if (!gated) continue;
                    const std::vector<double> ft = tensor_row(feat_t, i);
                    double z_su = 0.0;
                    for (int parent = 0; parent < 2; ++parent) {
                        const std::vector<double> zp = tensor_row(
                            z_raw, parent == 0 ? i : mix.perm[si]);
                        double exponent = 0.0;
                        if (mode != LossMode::uncertainty_only) {
                            std::vector<double> diff(ft.size());
                            for (std::size_t k = 0; k < ft.size(); ++k) diff[k] = ft[k] - zp[k];
                            exponent += hand_softmax_norm(diff);
                        }
                        if (mode != LossMode::semantic_only) {
                            const double u_t = hand_softmax_norm(hand_head(wh, bh, ft));
                            const double u_p = hand_softmax_norm(hand_head(wh, bh, zp));
                            exponent += u_t + u_p;
                        }
                        z_su += (parent == 0 ? lt_a[si] : lt_b[si]) * std::exp(-exponent);
                    }
                    zsum += z_su;
                    std::vector<double> gated_row(row.size());
                    for (std::size_t k = 0; k < row.size(); ++k) gated_row[k] = z_su * row[k];
                    t2 += lam * hand_ce(gated_row, y_a) + (1.0 - lam) * hand_ce(gated_row, y_b);
                }
                t1 /= static_cast<double>(n);
                t2 /= static_cast<double>(n);
                const double total = gated ? t1 + kZeta * t2 : t1;
                const double mean_z = gated ? zsum / static_cast<double>(n) : 0.0;
                const double mean_w = wsum / static_cast<double>(n);

                restore_buffers(model, pre);
                LossOutput out = sumix_loss(model, head, mix, batch, labels, kZeta, mode);

                auto close = [&](double got, double want) {
                    return std::abs(got - want) <= kTol * std::max(1.0, std::abs(want));
                };
                const std::string tag = std::string(to_string(arch)) + "/" + to_string(mode);
                c.expect(close(out.report.term1, t1), tag + ": term1 " + fnum(out.report.term1) +
                                                          " != " + fnum(t1));
                c.expect(close(out.report.term2, gated ? t2 : 0.0), tag + ": term2 mismatch");
                c.expect(close(out.report.total, total), tag + ": total " + fnum(out.report.total) +
                                                             " != " + fnum(total));
                c.expect(close(out.report.mean_z_su, mean_z), tag + ": mean_z_su mismatch");
                c.expect(close(out.report.mean_lam_tilde_a, mean_w), tag + ": mean weight mismatch");
                c.expect(close(out.loss.val()[0], total), tag + ": loss node != report total");
            }
            restore_buffers(model, pre);
        }
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    c.finish("term1/term2/total/mean_z_su recomputed longhand for 5 modes x 2 archs, "
             "agreement within 1e-10");
}

TEST_CASE("criterion 5: scaled-down trend keeps sumix at or above the cutmix baseline") {
    Criterion c(5);
    // Tolerances and scale are pinned: 10 classes x 50 images from a
    // 100-class corpus in the cifar100 record format, 3 seeds per arm,
    // mean top-1 gap >= -0.5 points, recomputed-weight shift > 0.
    constexpr double kGapFloor = -0.005;
    constexpr long kSeeds = 3;

    try {
        const fs::path train_bin = fs::temp_directory_path() / "sumix_c5_train.bin";
        const fs::path eval_bin = fs::temp_directory_path() / "sumix_c5_eval.bin";
        {
            Rng g_train = make_rng(0xC5AA);
            Dataset full = synthetic_dataset(100, 50, 32, 32, g_train, 0.2);
            save_cifar(train_bin.string(), full, CifarVariant::cifar100);
            Rng g_eval = make_rng(0xC5BB);
            Dataset full_eval = synthetic_dataset(100, 20, 32, 32, g_eval, 0.2);
            save_cifar(eval_bin.string(), full_eval, CifarVariant::cifar100);
        }
        Dataset train_set = restrict_classes(load_cifar(train_bin.string(), CifarVariant::cifar100),
                                             10, 50);
        Dataset eval_set = restrict_classes(load_cifar(eval_bin.string(), CifarVariant::cifar100),
                                            10, 20);
        fs::remove(train_bin);
        fs::remove(eval_bin);

        TrainConfig base;
        base.encoder.arch = Arch::small_cnn;
        base.encoder.widths = {4, 8, 16};
        base.mix.method = MixMethod::cutmix;
        base.mix.alpha = 0.2;
        base.zeta = 0.5;
        base.epochs = 50;
        base.batch_size = 100;
        base.base_lr = 0.1;
        base.momentum = 0.9;
        base.weight_decay = 1e-4;
        base.eval_interval = 50;
        base.augment = false;

        double su_sum = 0.0, mce_sum = 0.0, shift_min = 1.0;
        std::ostringstream per_seed;
        for (long seed = 1; seed <= kSeeds; ++seed) {
            TrainConfig su = base;
            su.mode = LossMode::full_su;
            su.seed = static_cast<std::uint64_t>(seed);
            TrainResult r_su = train(su, train_set, eval_set);

            TrainConfig mce_cfg = base;
            mce_cfg.mode = LossMode::baseline_mce;
            mce_cfg.seed = static_cast<std::uint64_t>(seed);
            TrainResult r_mce = train(mce_cfg, train_set, eval_set);

            su_sum += r_su.final_eval_accuracy;
            mce_sum += r_mce.final_eval_accuracy;
            shift_min = std::min(shift_min, r_su.mean_abs_lam_shift);
            per_seed << " s" << seed << ":su=" << fnum(r_su.final_eval_accuracy)
                     << ",base=" << fnum(r_mce.final_eval_accuracy);
        }
        const double su_mean = su_sum / kSeeds;
        const double mce_mean = mce_sum / kSeeds;
        const double gap = su_mean - mce_mean;

        c.expect(gap >= kGapFloor, "mean top-1 gap " + fnum(gap * 100.0) +
                                       " points is below -0.5");
        c.expect(shift_min > 0.0, "recomputed weights never moved off the nominal lambda");
        c.finish("cutmix+sumix mean top1 " + fnum(su_mean) + " vs baseline " + fnum(mce_mean) +
                 " (gap " + fnum(gap * 100.0) + " pts), min mean|shift| " + fnum(shift_min) + ";" +
                 per_seed.str());
        return;
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    c.finish("");
}

TEST_CASE("criterion 6: the dominant parent receives the dominant recomputed weight") {
    Criterion c(6);
    constexpr double kAlpha = 0.01;  // one-sided Wilcoxon signed-rank level
    constexpr double kLam = 0.9;
    constexpr long kPairs = 500;
    constexpr long kBatch = 50;

    try {
        Rng g_train = make_rng(0xC6AA);
        Dataset train_set = synthetic_dataset(10, 30, 16, 16, g_train, 0.1);
        TrainConfig cfg;
        cfg.encoder.widths = {4, 6, 8};
        cfg.mix.method = MixMethod::cutmix;
        cfg.mix.alpha = 0.2;
        cfg.mode = LossMode::full_su;
        cfg.zeta = 0.5;
        cfg.epochs = 15;
        cfg.batch_size = 50;
        cfg.base_lr = 0.05;
        cfg.eval_interval = 0;
        cfg.augment = false;
        cfg.seed = 3;
        TrainResult res = train(cfg, train_set, Dataset{});

        Rng g_pairs = make_rng(0xC6BB);
        Dataset pairs = synthetic_dataset(10, kPairs / 10, 16, 16, g_pairs, 0.1);
        const Tensor normalized = normalize(pairs.images, train_set.mean, train_set.stdev);

        // Production cutmix draws the box center uniformly and clips at the
        // border (adjusting lam to the realized area), so a 0.9 request often
        // realizes near 0.5 where neither parent dominates. Keep redrawing
        // each pair until the box survives clipping; accepted pairs are
        // genuine cutmix outputs whose realized lam stays near the request.
        constexpr double kMinRealized = 0.8;
        std::vector<double> lam_a, lam_b;
        for (long from = 0; from + kBatch <= kPairs; from += kBatch) {
            Tensor raw({kBatch, normalized.dim(1), normalized.dim(2), normalized.dim(3)});
            std::vector<int> labels(static_cast<std::size_t>(kBatch));
            for (long i = 0; i < kBatch; ++i) {
                set_image(raw, i, image_at(normalized, from + i));
                labels[static_cast<std::size_t>(i)] = pairs.labels[static_cast<std::size_t>(from + i)];
            }
            MixResult mix;
            mix.mixed = Tensor(raw.shape());
            mix.mask = Tensor({kBatch, raw.dim(2), raw.dim(3)});
            mix.lam_nominal.resize(static_cast<std::size_t>(kBatch));
            mix.perm.resize(static_cast<std::size_t>(kBatch));
            for (long i = 0; i < kBatch; ++i) {
                const long j = (i + 1) % kBatch;
                mix.perm[static_cast<std::size_t>(i)] = j;
                Tensor x_a({1, raw.dim(1), raw.dim(2), raw.dim(3)});
                Tensor x_b(x_a.shape());
                set_image(x_a, 0, image_at(raw, i));
                set_image(x_b, 0, image_at(raw, j));
                for (std::uint64_t attempt = 0;; ++attempt) {
                    Rng pair_rng = derive_rng(0xC6CC, static_cast<std::uint64_t>(from + i), attempt);
                    MixResult one = cutmix(x_a, x_b, kLam, pair_rng);
                    if (one.lam_nominal[0] < kMinRealized) continue;
                    set_image(mix.mixed, i, image_at(one.mixed, 0));
                    for (long p = 0; p < raw.dim(2) * raw.dim(3); ++p)
                        mix.mask[i * raw.dim(2) * raw.dim(3) + p] = one.mask[p];
                    mix.lam_nominal[static_cast<std::size_t>(i)] = one.lam_nominal[0];
                    break;
                }
            }
            SumixAux aux = compute_sumix_aux(*res.model, mix, raw, labels, LossMode::lambda_only);
            lam_a.insert(lam_a.end(), aux.lam_tilde_a.begin(), aux.lam_tilde_a.end());
            lam_b.insert(lam_b.end(), aux.lam_tilde_b.begin(), aux.lam_tilde_b.end());
        }
        c.expect(static_cast<long>(lam_a.size()) == kPairs,
                 "expected " + fnum(kPairs) + " pairs, got " + fnum(lam_a.size()));

        double sum_a = 0.0, sum_b = 0.0;
        std::vector<double> deltas(lam_a.size());
        for (std::size_t i = 0; i < lam_a.size(); ++i) {
            sum_a += lam_a[i];
            sum_b += lam_b[i];
            deltas[i] = lam_a[i] - lam_b[i];
        }
        const double mean_a = sum_a / static_cast<double>(lam_a.size());
        const double mean_b = sum_b / static_cast<double>(lam_b.size());
        const double p = wilcoxon_greater_p(deltas);

        c.expect(mean_a > mean_b, "mean lam_tilde_a " + fnum(mean_a) + " <= mean lam_tilde_b " +
                                      fnum(mean_b));
        c.expect(p < kAlpha, "Wilcoxon one-sided p " + fnum(p) + " >= 0.01");
        c.finish("lam=0.9 (realized >= 0.8) over " + fnum(kPairs) + " cutmix pairs: mean lam_tilde_a " +
                 fnum(mean_a) + " vs " + fnum(mean_b) + ", Wilcoxon p " + fnum(p));
        return;
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    c.finish("");
}

TEST_CASE("criterion 7: robustness harness reproduces its own clean and degenerate limits") {
    Criterion c(7);
    constexpr double kEps = 0.03;
    constexpr long kClasses = 4;
    constexpr long kEvalPer = 100;

    try {
        Rng g_train = make_rng(0xC7AA);
        Dataset train_set = synthetic_dataset(kClasses, 100, 16, 16, g_train, 0.1);
        Rng g_eval = make_rng(0xC7BB);
        Dataset eval_set = synthetic_dataset(kClasses, kEvalPer, 16, 16, g_eval, 0.1);

        TrainConfig cfg;
        cfg.encoder.widths = {4, 6, 8};
        cfg.mix.method = MixMethod::cutmix;
        cfg.mix.alpha = 0.2;
        cfg.mode = LossMode::full_su;
        cfg.zeta = 0.5;
        cfg.epochs = 8;
        cfg.batch_size = 50;
        cfg.base_lr = 0.05;
        cfg.eval_interval = 0;
        cfg.augment = false;
        cfg.seed = 5;
        TrainResult res = train(cfg, train_set, Dataset{});
        Encoder& model = *res.model;
        const std::vector<double>& mean = train_set.mean;
        const std::vector<double>& stdev = train_set.stdev;

        const double clean = top1(model, eval_set, mean, stdev);
        RobustnessCurve occ = occlusion_sweep(model, eval_set, mean, stdev, {0.0, 1.0}, 8, 1);
        c.expect(occ.accuracies[0] == clean, "occlusion ratio 0 gave " + fnum(occ.accuracies[0]) +
                                                 " instead of the clean " + fnum(clean));
        const double n_eval = static_cast<double>(kClasses * kEvalPer);
        const double chance = 1.0 / static_cast<double>(kClasses);
        const double sigma3 = 3.0 * std::sqrt(chance * (1.0 - chance) / n_eval);
        c.expect(std::abs(occ.accuracies[1] - chance) <= sigma3,
                 "fully occluded accuracy " + fnum(occ.accuracies[1]) + " is not within 3 sigma (" +
                     fnum(sigma3) + ") of " + fnum(chance));

        // eps = 0 must be the identity, bitwise.
        const Tensor adv0 = fgsm_attack(model, eval_set.images, eval_set.labels, 0.0, mean, stdev);
        double max0 = 0.0;
        for (long i = 0; i < adv0.size(); ++i)
            max0 = std::max(max0, std::abs(adv0[i] - eval_set.images[i]));
        c.expect(max0 == 0.0, "eps=0 attack moved pixels by up to " + fnum(max0));

        const Tensor adv = fgsm_attack(model, eval_set.images, eval_set.labels, kEps, mean, stdev);
        double max_step = 0.0, box_lo = 1.0, box_hi = 0.0;
        for (long i = 0; i < adv.size(); ++i) {
            max_step = std::max(max_step, std::abs(adv[i] - eval_set.images[i]));
            box_lo = std::min(box_lo, adv[i]);
            box_hi = std::max(box_hi, adv[i]);
        }
        c.expect(max_step <= kEps + 1e-12, "attack exceeded the l-inf budget: " + fnum(max_step));
        c.expect(box_lo >= 0.0 && box_hi <= 1.0, "attacked pixels left [0,1]");

        const double err0 = fgsm_error_percent(model, eval_set, mean, stdev, 0.0);
        c.expect(err0 == 100.0 * (1.0 - clean), "eps=0 error " + fnum(err0) + " != 100*(1-top1) " +
                                                    fnum(100.0 * (1.0 - clean)));
        Dataset advds;
        advds.images = adv;
        advds.labels = eval_set.labels;
        advds.num_classes = eval_set.num_classes;
        advds.mean = eval_set.mean;
        advds.stdev = eval_set.stdev;
        const double err_eps = fgsm_error_percent(model, eval_set, mean, stdev, kEps);
        const double err_recomputed = 100.0 * (1.0 - top1(model, advds, mean, stdev));
        c.expect(std::abs(err_eps - err_recomputed) <= 1e-9,
                 "error convention mismatch: " + fnum(err_eps) + " vs " + fnum(err_recomputed));

        c.finish("clean " + fnum(clean) + ", occluded " + fnum(occ.accuracies[1]) + " vs chance " +
                 fnum(chance) + ", fgsm eps=" + fnum(kEps) + " error " + fnum(err_eps) +
                 "% within budget " + fnum(max_step));
        return;
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    c.finish("");
}

TEST_CASE("criterion 8: identical seeds produce bit-identical metrics streams") {
    Criterion c(8);
    constexpr long kSteps = 200;

    try {
        Rng g_train = make_rng(0xC8AA);
        Dataset train_set = synthetic_dataset(10, 100, 16, 16, g_train, 0.1);
        Rng g_eval = make_rng(0xC8BB);
        Dataset eval_set = synthetic_dataset(10, 10, 16, 16, g_eval, 0.1);

        TrainConfig cfg;
        cfg.encoder.widths = {4, 6, 8};
        cfg.mix.method = MixMethod::cutmix;
        cfg.mix.alpha = 0.2;
        cfg.mode = LossMode::full_su;
        cfg.zeta = 0.5;
        cfg.epochs = 10;
        cfg.batch_size = 50;  // 20 steps per epoch over 1000 samples
        cfg.base_lr = 0.05;
        cfg.eval_interval = 5;
        cfg.augment = true;
        cfg.seed = 77;

        TrainResult a = train(cfg, train_set, eval_set);
        TrainResult b = train(cfg, train_set, eval_set);

        c.expect(a.steps == kSteps, "expected " + fnum(kSteps) + " steps, ran " + fnum(a.steps));
        long step_lines = 0;
        for (const auto& l : a.metrics) step_lines += l.rfind("step=", 0) == 0;
        c.expect(step_lines == kSteps, "metrics stream has " + fnum(step_lines) + " step lines");
        c.expect(a.metrics.size() == b.metrics.size(),
                 "stream lengths differ: " + fnum(a.metrics.size()) + " vs " +
                     fnum(b.metrics.size()));
        long diverged = -1;
        for (std::size_t i = 0; i < std::min(a.metrics.size(), b.metrics.size()); ++i) {
            if (a.metrics[i] != b.metrics[i]) {
                diverged = static_cast<long>(i);
                break;
            }
        }
        c.expect(diverged < 0, "streams diverge at line " + fnum(diverged));
        c.finish(fnum(a.steps) + " steps, " + fnum(a.metrics.size()) +
                 " metric lines, streams identical (single-threaded)");
        return;
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    c.finish("");
}
