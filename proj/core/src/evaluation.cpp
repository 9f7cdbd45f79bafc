#include "sumix/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sumix/errors.hpp"

namespace sumix {

namespace {

long argmax_row(const Tensor& logits, long i) {
    long best = 0;
    for (long j = 1; j < logits.dim(1); ++j)
        if (logits.at(i, j) > logits.at(i, best)) best = j;
    return best;
}

// Correct predictions over one already-normalized batch.
long count_correct(Encoder& model, const Tensor& batch, const std::vector<int>& labels) {
    ad::NoGradGuard ng;
    Tensor logits = model.forward(batch, ad::BnMode::eval).logits.val();
    long correct = 0;
    for (long i = 0; i < logits.dim(0); ++i)
        if (argmax_row(logits, i) == labels[static_cast<std::size_t>(i)]) ++correct;
    return correct;
}

Tensor slice_batch(const Tensor& images, long begin, long n) {
    const long C = images.dim(1), H = images.dim(2), W = images.dim(3);
    Tensor out({n, C, H, W});
    std::copy(images.data() + begin * C * H * W, images.data() + (begin + n) * C * H * W,
              out.data());
    return out;
}

}  // namespace

double top1(Encoder& model, const Dataset& ds, const std::vector<double>& mean,
            const std::vector<double>& stdev, long batch_size) {
    if (ds.size() == 0) throw InvalidParameter("top1: empty dataset");
    if (ds.num_classes != model.config().num_classes)
        throw InvalidParameter("top1: model and dataset class counts differ");
    long correct = 0;
    for (long begin = 0; begin < ds.size(); begin += batch_size) {
        const long n = std::min(batch_size, ds.size() - begin);
        Tensor batch = normalize(slice_batch(ds.images, begin, n), mean, stdev);
        std::vector<int> labels(ds.labels.begin() + begin, ds.labels.begin() + begin + n);
        correct += count_correct(model, batch, labels);
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

RobustnessCurve occlusion_sweep(Encoder& model, const Dataset& ds, const std::vector<double>& mean,
                                const std::vector<double>& stdev, const std::vector<double>& ratios,
                                long patch, std::uint64_t seed, long batch_size) {
    if (ratios.empty()) throw InvalidParameter("occlusion: no ratios given");
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        if (ratios[i] < 0.0 || ratios[i] > 1.0) throw InvalidParameter("occlusion ratio out of [0,1]");
        if (i > 0 && ratios[i] <= ratios[i - 1])
            throw InvalidParameter("occlusion ratios must be strictly increasing");
    }
    RobustnessCurve curve;
    curve.ratios = ratios;
    for (std::size_t ri = 0; ri < ratios.size(); ++ri) {
        long correct = 0;
        long batch_index = 0;
        for (long begin = 0; begin < ds.size(); begin += batch_size, ++batch_index) {
            const long n = std::min(batch_size, ds.size() - begin);
            Tensor batch = normalize(slice_batch(ds.images, begin, n), mean, stdev);
            Rng rng = derive_rng(seed, static_cast<std::uint64_t>(ri),
                                 static_cast<std::uint64_t>(batch_index), 0x0CC);
            batch = occlude(batch, ratios[ri], patch, rng);
            std::vector<int> labels(ds.labels.begin() + begin, ds.labels.begin() + begin + n);
            correct += count_correct(model, batch, labels);
        }
        curve.accuracies.push_back(static_cast<double>(correct) / static_cast<double>(ds.size()));
    }
    return curve;
}

Tensor fgsm_attack(Encoder& model, const Tensor& raw_images, const std::vector<int>& labels,
                   double epsilon, const std::vector<double>& mean,
                   const std::vector<double>& stdev) {
    if (!(epsilon >= 0.0)) throw InvalidParameter("fgsm: epsilon must be >= 0");
    ad::Value x = ad::Value::leaf(normalize(raw_images, mean, stdev), /*requires_grad=*/true);
    ad::Value loss = ad::mean_all(ad::ce_rows(model.forward(x, ad::BnMode::eval).logits, labels));
    ad::backward(loss);
    const Tensor& g = x.grad();

    Tensor adv = raw_images;
    for (long i = 0; i < adv.size(); ++i) {
        const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        adv[i] = std::clamp(adv[i] + epsilon * s, 0.0, 1.0);
    }
    return adv;
}

double fgsm_error_percent(Encoder& model, const Dataset& ds, const std::vector<double>& mean,
                          const std::vector<double>& stdev, double epsilon, long batch_size) {
    if (ds.size() == 0) throw InvalidParameter("fgsm: empty dataset");
    long correct = 0;
    for (long begin = 0; begin < ds.size(); begin += batch_size) {
        const long n = std::min(batch_size, ds.size() - begin);
        std::vector<int> labels(ds.labels.begin() + begin, ds.labels.begin() + begin + n);
        Tensor adv = fgsm_attack(model, slice_batch(ds.images, begin, n), labels, epsilon, mean, stdev);
        correct += count_correct(model, normalize(adv, mean, stdev), labels);
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(ds.size());
    return 100.0 * (1.0 - acc);
}

CorruptionResult corruption_eval(Encoder& model, const std::string& manifest_path,
                                 CifarVariant variant, const std::vector<double>& mean,
                                 const std::vector<double>& stdev, long batch_size) {
    std::ifstream in(manifest_path);
    if (!in) throw DataFormatError("cannot open manifest " + manifest_path);
    CorruptionResult result;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string name, path;
        if (!(ls >> name)) continue;  // blank line
        if (name[0] == '#') continue;
        if (!(ls >> path))
            throw DataFormatError(manifest_path + ":" + std::to_string(line_no) +
                                  ": expected 'name path'");
        Dataset ds;
        try {
            ds = load_cifar(path, variant);
        } catch (const DataFormatError& e) {
            throw DataFormatError(manifest_path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        result.per_corruption.emplace_back(name, top1(model, ds, mean, stdev, batch_size));
    }
    if (result.per_corruption.empty())
        throw DataFormatError(manifest_path + ": manifest lists no corruptions");
    double acc = 0.0;
    for (const auto& [name, a] : result.per_corruption) acc += a;
    result.mean_accuracy = acc / static_cast<double>(result.per_corruption.size());
    return result;
}

Tensor cam(Encoder& model, const Tensor& image, int class_index, const std::vector<double>& mean,
           const std::vector<double>& stdev) {
    if (model.config().arch != Arch::small_cnn)
        throw UnsupportedArchitecture("cam needs spatial feature maps (small_cnn)");
    if (class_index < 0 || class_index >= model.config().num_classes)
        throw InvalidParameter("cam: class index out of range");
    if (image.rank() != 3) throw ShapeError("cam expects a (C,H,W) image");
    const long H = image.dim(1), W = image.dim(2);

    ad::NoGradGuard ng;
    Tensor batch = normalize(image.reshaped({1, image.dim(0), H, W}), mean, stdev);
    auto fwd = model.forward(ad::Value::leaf(batch), ad::BnMode::eval, /*want_maps=*/true);
    const Tensor& maps = fwd.feature_maps.val();  // (1,Cf,h,w)
    const Tensor& w = model.head_weight().val();  // (K,Cf)
    const long Cf = maps.dim(1), h = maps.dim(2), ww = maps.dim(3);

    Tensor heat({h, ww});
    for (long c = 0; c < Cf; ++c) {
        const double wc = w.at(class_index, c);
        for (long i = 0; i < h * ww; ++i) heat[i] += wc * maps[c * h * ww + i];
    }
    for (long i = 0; i < heat.size(); ++i) heat[i] = std::max(heat[i], 0.0);
    heat = bilinear_resize_grid(heat, H, W);
    const double m = heat.max();
    if (m <= 0.0) return Tensor({H, W});
    for (long i = 0; i < heat.size(); ++i) heat[i] /= m;
    return heat;
}

}  // namespace sumix
