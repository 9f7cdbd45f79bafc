#pragma once

#include <complex>
#include <vector>

namespace sumix {

// 2D DFT of a row-major (h,w) complex grid, in place. The inverse
// transform is normalized by 1/(h*w), so a forward/inverse round trip is
// the identity up to rounding. Plan creation is serialized internally.
void fft2(std::vector<std::complex<double>>& grid, long h, long w, bool inverse = false);

}  // namespace sumix
