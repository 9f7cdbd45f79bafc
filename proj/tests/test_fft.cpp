#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "helpers.hpp"
#include "sumix/fft.hpp"

using namespace sumix;
using cd = std::complex<double>;

namespace {

// Direct O(n^2) DFT used as the oracle; evaluates the defining sum.
std::vector<cd> naive_dft2(const std::vector<cd>& in, long h, long w, bool inverse) {
    std::vector<cd> out(in.size());
    const double sign = inverse ? 1.0 : -1.0;
    for (long ky = 0; ky < h; ++ky)
        for (long kx = 0; kx < w; ++kx) {
            cd acc = 0;
            for (long y = 0; y < h; ++y)
                for (long x = 0; x < w; ++x) {
                    double ang = 2.0 * std::numbers::pi *
                                 (double(ky * y) / h + double(kx * x) / w);
                    acc += in[y * w + x] * std::polar(1.0, sign * ang);
                }
            out[ky * w + kx] = inverse ? acc / double(h * w) : acc;
        }
    return out;
}

std::vector<cd> random_grid(long h, long w, Rng& rng) {
    std::vector<cd> g(h * w);
    for (auto& z : g) z = cd(test::uniform(rng, -1.0, 1.0), test::uniform(rng, -1.0, 1.0));
    return g;
}

}  // namespace

TEST_CASE("delta input transforms to a flat spectrum") {
    std::vector<cd> g(4 * 8, cd(0, 0));
    g[0] = 1.0;
    fft2(g, 4, 8);
    for (const cd& z : g) {
        CHECK(z.real() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(z.imag()) < 1e-12);
    }
}

TEST_CASE("constant input concentrates at DC") {
    std::vector<cd> g(6 * 6, cd(2.0, 0));
    fft2(g, 6, 6);
    CHECK(g[0].real() == doctest::Approx(72.0).epsilon(1e-12));
    for (size_t i = 1; i < g.size(); ++i) CHECK(std::abs(g[i]) < 1e-10);
}

TEST_CASE("forward matches the naive DFT on a 4x6 grid") {
    Rng rng = make_rng(0xFF7);
    std::vector<cd> g = random_grid(4, 6, rng);
    std::vector<cd> want = naive_dft2(g, 4, 6, false);
    fft2(g, 4, 6);
    for (size_t i = 0; i < g.size(); ++i) {
        CHECK(g[i].real() == doctest::Approx(want[i].real()).epsilon(1e-9));
        CHECK(g[i].imag() == doctest::Approx(want[i].imag()).epsilon(1e-9));
    }
}

TEST_CASE("inverse matches the naive inverse DFT") {
    Rng rng = make_rng(0xFF8);
    std::vector<cd> g = random_grid(3, 5, rng);
    std::vector<cd> want = naive_dft2(g, 3, 5, true);
    fft2(g, 3, 5, true);
    for (size_t i = 0; i < g.size(); ++i) {
        CHECK(g[i].real() == doctest::Approx(want[i].real()).epsilon(1e-9));
        CHECK(g[i].imag() == doctest::Approx(want[i].imag()).epsilon(1e-9));
    }
}

TEST_CASE("forward then inverse is the identity") {
    Rng rng = make_rng(0xFF9);
    for (auto [h, w] : {std::pair<long, long>{1, 1}, {2, 3}, {8, 8}, {7, 13}, {32, 32}}) {
        std::vector<cd> g = random_grid(h, w, rng);
        std::vector<cd> orig = g;
        fft2(g, h, w);
        fft2(g, h, w, true);
        for (size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i] - orig[i]) < 1e-12);
    }
}

TEST_CASE("Parseval: energy scales by h*w under the forward transform") {
    Rng rng = make_rng(0xFFA);
    const long h = 8, w = 12;
    std::vector<cd> g = random_grid(h, w, rng);
    double time_energy = 0;
    for (const cd& z : g) time_energy += std::norm(z);
    fft2(g, h, w);
    double freq_energy = 0;
    for (const cd& z : g) freq_energy += std::norm(z);
    CHECK(freq_energy == doctest::Approx(time_energy * h * w).epsilon(1e-10));
}

TEST_CASE("size mismatch is rejected") {
    std::vector<cd> g(10);
    CHECK_THROWS(fft2(g, 3, 4));
    CHECK_THROWS(fft2(g, 0, 10));
}
