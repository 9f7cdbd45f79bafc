#include "sumix/encoder.hpp"

#include <cmath>
#include <random>

#include "sumix/errors.hpp"

namespace sumix {

const char* to_string(Arch a) { return a == Arch::small_cnn ? "small_cnn" : "mlp"; }

Arch parse_arch(const std::string& s) {
    if (s == "small_cnn") return Arch::small_cnn;
    if (s == "mlp") return Arch::mlp;
    throw UnsupportedArchitecture("unknown arch '" + s + "'");
}

void EncoderConfig::validate() const {
    if (num_classes < 2) throw InvalidParameter("num_classes must be >= 2");
    if (in_channels < 1 || in_h < 1 || in_w < 1) throw InvalidParameter("bad input shape");
    for (long w : widths)
        if (w < 1) throw InvalidParameter("widths must be positive");
    if (arch == Arch::small_cnn) {
        if (widths.size() != 3) throw InvalidParameter("small_cnn takes exactly 3 stage widths");
        if (widths.back() < 2) throw InvalidParameter("small_cnn feature width must be >= 2");
    } else {
        if (widths.size() != 2) throw InvalidParameter("mlp takes exactly 2 hidden widths");
        if (feature_dim < 2) throw InvalidParameter("feature_dim must be >= 2");
    }
}

Tensor Encoder::gaussian(std::vector<long> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> normal(0.0, stddev);
    for (long i = 0; i < t.size(); ++i) t[i] = normal(rng);
    return t;
}

ad::Value Encoder::param(const std::string& name, Tensor init) {
    params_.push_back({name, ad::Value::leaf(std::move(init), /*requires_grad=*/true)});
    return params_.back().value;
}

Encoder::Encoder(EncoderConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.arch == Arch::small_cnn) {
        long in_ch = cfg_.in_channels;
        for (int s = 0; s < 3; ++s) {
            const long out_ch = cfg_.widths[static_cast<std::size_t>(s)];
            for (int j = 0; j < 2; ++j) {
                const std::string base = "stage" + std::to_string(s) + ".";
                const std::string cj = std::to_string(j);
                const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * 9));
                param(base + "conv" + cj + ".w", gaussian({out_ch, in_ch, 3, 3}, stddev, rng));
                param(base + "conv" + cj + ".b", Tensor({out_ch}));
                param(base + "bn" + cj + ".gamma", Tensor::full({out_ch}, 1.0));
                param(base + "bn" + cj + ".beta", Tensor({out_ch}));
                BnState st{Tensor({out_ch}), Tensor::full({out_ch}, 1.0)};
                bn_.emplace_back(base + "bn" + cj, std::move(st));
                in_ch = out_ch;
            }
        }
        feature_dim_ = cfg_.widths.back();
    } else {
        const long F = cfg_.in_channels * cfg_.in_h * cfg_.in_w;
        const long h1 = cfg_.widths[0], h2 = cfg_.widths[1];
        param("fc0.w", gaussian({h1, F}, std::sqrt(2.0 / static_cast<double>(F)), rng));
        param("fc0.b", Tensor({h1}));
        param("fc1.w", gaussian({h2, h1}, std::sqrt(2.0 / static_cast<double>(h1)), rng));
        param("fc1.b", Tensor({h2}));
        param("feat.w", gaussian({cfg_.feature_dim, h2}, std::sqrt(2.0 / static_cast<double>(h2)), rng));
        param("feat.b", Tensor({cfg_.feature_dim}));
        feature_dim_ = cfg_.feature_dim;
    }
    const double head_std = std::sqrt(2.0 / static_cast<double>(feature_dim_));
    head_w_index_ = params_.size();
    param("head.w", gaussian({cfg_.num_classes, feature_dim_}, head_std, rng));
    param("head.b", Tensor({cfg_.num_classes}));
}

std::vector<std::pair<std::string, Tensor*>> Encoder::buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& [name, st] : bn_) {
        out.emplace_back(name + ".running_mean", &st.running_mean);
        out.emplace_back(name + ".running_var", &st.running_var);
    }
    return out;
}

namespace {

const ad::Value& find_param(const std::vector<NamedParam>& params, const std::string& name) {
    for (const auto& p : params)
        if (p.name == name) return p.value;
    throw InvalidParameter("no parameter named " + name);
}

}  // namespace

Encoder::Forward Encoder::forward(const ad::Value& x, ad::BnMode mode, bool want_maps) {
    const Tensor& xv = x.val();
    if (xv.rank() != 4 || xv.dim(1) != cfg_.in_channels || xv.dim(2) != cfg_.in_h ||
        xv.dim(3) != cfg_.in_w)
        throw ShapeError("encoder input " + xv.shape_str() + " does not match config");

    Forward f;
    if (cfg_.arch == Arch::small_cnn) {
        ad::Value h = x;
        std::size_t bn_idx = 0;
        for (int s = 0; s < 3; ++s) {
            for (int j = 0; j < 2; ++j) {
                const std::string base = "stage" + std::to_string(s) + ".";
                const std::string cj = std::to_string(j);
                const int stride = (s > 0 && j == 0) ? 2 : 1;
                h = ad::conv2d(h, find_param(params_, base + "conv" + cj + ".w"),
                               find_param(params_, base + "conv" + cj + ".b"), stride);
                BnState& st = bn_[bn_idx++].second;
                h = ad::batchnorm(h, find_param(params_, base + "bn" + cj + ".gamma"),
                                  find_param(params_, base + "bn" + cj + ".beta"), st.running_mean,
                                  st.running_var, mode);
                h = ad::relu(h);
            }
        }
        if (want_maps) f.feature_maps = h;
        f.features = ad::global_avg_pool(h);
    } else {
        const long F = cfg_.in_channels * cfg_.in_h * cfg_.in_w;
        ad::Value h = ad::reshape(x, {xv.dim(0), F});
        h = ad::relu(ad::affine(h, find_param(params_, "fc0.w"), find_param(params_, "fc0.b")));
        h = ad::relu(ad::affine(h, find_param(params_, "fc1.w"), find_param(params_, "fc1.b")));
        f.features = ad::affine(h, find_param(params_, "feat.w"), find_param(params_, "feat.b"));
    }
    f.logits = ad::affine(f.features, find_param(params_, "head.w"), find_param(params_, "head.b"));
    return f;
}

Encoder::Forward Encoder::forward(const Tensor& x, ad::BnMode mode) {
    return forward(ad::Value::leaf(x, false), mode);
}

}  // namespace sumix
