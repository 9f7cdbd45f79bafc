#pragma once

#include <string>
#include <vector>

#include "sumix/tensor.hpp"

namespace sumix {

// Writes (H,W) as 8-bit grayscale or (C,H,W) with C in {1,3} as
// grayscale/RGB. Values are clamped from [0,1] to [0,255].
void write_png(const std::string& path, const Tensor& image);

// Tiles (N,C,H,W) into one (C,gh,gw) image, row-major with `cols`
// tiles per row and a 2 px mid-gray separator.
Tensor make_grid(const Tensor& batch, long cols);

// Maps an (H,W) grid in [0,1] to a blue-to-red (3,H,W) image.
Tensor colorize_heat(const Tensor& heat);

// Blends the colorized heat map over the image: (1-alpha)*img + alpha*heat.
Tensor overlay_heat(const Tensor& image, const Tensor& heat, double alpha = 0.5);

struct Curve {
    std::vector<double> x, y;
};

// Minimal polyline plot of the curves in a shared box, one palette color
// per curve, for quick visual checks. Returns (3,h,w).
Tensor render_curves(const std::vector<Curve>& curves, long h = 240, long w = 320);

}  // namespace sumix
