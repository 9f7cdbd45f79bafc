#include "sumix/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sumix/errors.hpp"

namespace sumix {

namespace {

unsigned char to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace

void write_png(const std::string& path, const Tensor& image) {
    long channels, h, w;
    if (image.rank() == 2) {
        channels = 1;
        h = image.dim(0);
        w = image.dim(1);
    } else if (image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3)) {
        channels = image.dim(0);
        h = image.dim(1);
        w = image.dim(2);
    } else {
        throw ShapeError("write_png expects (H,W) or (C,H,W) with 1 or 3 channels, got " +
                         image.shape_str());
    }
    if (h < 1 || w < 1) throw ShapeError("write_png: empty image");

    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw DataFormatError("cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    std::vector<unsigned char> row(static_cast<std::size_t>(w * channels));
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw DataFormatError("libpng failure writing " + path);
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x)
            for (long c = 0; c < channels; ++c) {
                const double v = image.rank() == 2 ? image.at(y, x) : image[(c * h + y) * w + x];
                row[static_cast<std::size_t>(x * channels + c)] = to_byte(v);
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Tensor make_grid(const Tensor& batch, long cols) {
    if (batch.rank() != 4) throw ShapeError("make_grid expects (N,C,H,W)");
    if (cols < 1) throw InvalidParameter("make_grid: cols must be >= 1");
    const long N = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
    if (N < 1) throw ShapeError("make_grid: empty batch");
    const long rows = (N + cols - 1) / cols;
    const long pad = 2;
    const long gh = rows * H + (rows + 1) * pad;
    const long gw = cols * W + (cols + 1) * pad;
    Tensor out({C, gh, gw});
    out.fill(0.5);
    for (long n = 0; n < N; ++n) {
        const long r = n / cols, cc = n % cols;
        const long oy = pad + r * (H + pad), ox = pad + cc * (W + pad);
        for (long c = 0; c < C; ++c)
            for (long y = 0; y < H; ++y)
                for (long x = 0; x < W; ++x)
                    out[(c * gh + oy + y) * gw + ox + x] = batch.at(n, c, y, x);
    }
    return out;
}

Tensor colorize_heat(const Tensor& heat) {
    if (heat.rank() != 2) throw ShapeError("colorize_heat expects (H,W)");
    const long H = heat.dim(0), W = heat.dim(1);
    Tensor out({3, H, W});
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            const double v = std::clamp(heat.at(y, x), 0.0, 1.0);
            // blue (0) -> green (0.5) -> red (1)
            out[(0 * H + y) * W + x] = std::clamp(2.0 * v - 1.0, 0.0, 1.0);
            out[(1 * H + y) * W + x] = 1.0 - std::abs(2.0 * v - 1.0);
            out[(2 * H + y) * W + x] = std::clamp(1.0 - 2.0 * v, 0.0, 1.0);
        }
    return out;
}

Tensor overlay_heat(const Tensor& image, const Tensor& heat, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidParameter("overlay_heat: alpha must be in [0,1]");
    if (image.rank() != 3) throw ShapeError("overlay_heat expects (C,H,W) image");
    const long C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (heat.rank() != 2 || heat.dim(0) != H || heat.dim(1) != W)
        throw ShapeError("overlay_heat: heat map dims must match the image");
    Tensor color = colorize_heat(heat);
    Tensor out({3, H, W});
    for (long c = 0; c < 3; ++c)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                const double base = C == 3 ? image[(c * H + y) * W + x] : image[(0 * H + y) * W + x];
                out[(c * H + y) * W + x] = (1.0 - alpha) * base + alpha * color[(c * H + y) * W + x];
            }
    return out;
}

namespace {

void draw_line(Tensor& img, long h, long w, double x0, double y0, double x1, double y1,
               const double rgb[3]) {
    const double steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1.0});
    const long n = static_cast<long>(std::ceil(steps)) * 2;
    for (long i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n);
        const long px = std::lround(x0 + t * (x1 - x0));
        const long py = std::lround(y0 + t * (y1 - y0));
        if (px < 0 || px >= w || py < 0 || py >= h) continue;
        for (long c = 0; c < 3; ++c) img[(c * h + py) * w + px] = rgb[c];
    }
}

}  // namespace

Tensor render_curves(const std::vector<Curve>& curves, long h, long w) {
    if (h < 16 || w < 16) throw InvalidParameter("render_curves: canvas too small");
    if (curves.empty()) throw InvalidParameter("render_curves: no curves given");
    Tensor out({3, h, w});
    out.fill(1.0);

    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    bool any = false;
    for (const auto& c : curves) {
        if (c.x.size() != c.y.size()) throw InvalidParameter("render_curves: x/y length mismatch");
        for (std::size_t i = 0; i < c.x.size(); ++i) {
            if (!any) {
                xmin = xmax = c.x[i];
                ymin = ymax = c.y[i];
                any = true;
            }
            xmin = std::min(xmin, c.x[i]);
            xmax = std::max(xmax, c.x[i]);
            ymin = std::min(ymin, c.y[i]);
            ymax = std::max(ymax, c.y[i]);
        }
    }
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;

    const long m = 8;  // margin
    const double black[3] = {0, 0, 0};
    draw_line(out, h, w, m, m, m, h - 1 - m, black);
    draw_line(out, h, w, m, h - 1 - m, w - 1 - m, h - 1 - m, black);

    static const double palette[6][3] = {{0.85, 0.1, 0.1}, {0.1, 0.3, 0.85}, {0.1, 0.6, 0.2},
                                         {0.8, 0.5, 0.0},  {0.5, 0.1, 0.7}, {0.0, 0.6, 0.6}};
    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const auto& c = curves[ci];
        const double* rgb = palette[ci % 6];
        auto sx = [&](double x) { return m + (x - xmin) / (xmax - xmin) * (w - 1.0 - 2 * m); };
        auto sy = [&](double y) { return (h - 1.0 - m) - (y - ymin) / (ymax - ymin) * (h - 1.0 - 2 * m); };
        for (std::size_t i = 0; i + 1 < c.x.size(); ++i)
            draw_line(out, h, w, sx(c.x[i]), sy(c.y[i]), sx(c.x[i + 1]), sy(c.y[i + 1]), rgb);
        if (c.x.size() == 1) draw_line(out, h, w, sx(c.x[0]), sy(c.y[0]), sx(c.x[0]), sy(c.y[0]), rgb);
    }
    return out;
}

}  // namespace sumix
