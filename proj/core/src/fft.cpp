#include "sumix/fft.hpp"

#include <fftw3.h>

#include <mutex>

#include "sumix/errors.hpp"

namespace sumix {

namespace {
// FFTW's planner is not thread safe; execution of a ready plan is.
std::mutex g_planner_mutex;
}  // namespace

void fft2(std::vector<std::complex<double>>& grid, long h, long w, bool inverse) {
    if (h <= 0 || w <= 0 || static_cast<long>(grid.size()) != h * w)
        throw InvalidParameter("fft2: grid size does not match h*w");
    auto* buf = reinterpret_cast<fftw_complex*>(grid.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(g_planner_mutex);
        plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf,
                                inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(g_planner_mutex);
        fftw_destroy_plan(plan);
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(h * w);
        for (auto& z : grid) z *= scale;
    }
}

}  // namespace sumix
