#include "sumix/presets.hpp"

namespace sumix {

namespace {

const MixMethod kMethods[4] = {MixMethod::cutmix, MixMethod::fmix, MixMethod::saliencymix,
                               MixMethod::resizemix};

double method_alpha(MixMethod m, bool vit_scale) {
    switch (m) {
        case MixMethod::cutmix: return vit_scale ? 2.0 : 0.2;
        case MixMethod::fmix: return vit_scale ? 1.0 : 0.2;
        case MixMethod::saliencymix: return 0.2;
        case MixMethod::resizemix: return 1.0;
        case MixMethod::mixup: return 1.0;
    }
    return 0.2;
}

struct Scale {
    const char* suffix;  // appended to "<dataset>-<method>-sumix"
    const char* model;   // human-readable scale the zeta column refers to
    bool vit;
    double base_lr;
    double weight_decay;
    long epochs;
    double zeta[4];  // cutmix, fmix, saliencymix, resizemix
};

struct DatasetProto {
    const char* name;
    long num_classes;
    long image_size;
    long batch_size;
};

void add_family(std::vector<Preset>& out, const DatasetProto& ds, const Scale& sc) {
    for (int mi = 0; mi < 4; ++mi) {
        Preset p;
        const MixMethod m = kMethods[mi];
        p.name = std::string(ds.name) + "-" + to_string(m) + "-sumix" + sc.suffix;
        p.note = std::string(ds.name) + " at " + sc.model + " scale: zeta " +
                 std::to_string(sc.zeta[mi]).substr(0, 3) + ", alpha " +
                 std::to_string(method_alpha(m, sc.vit)).substr(0, 3);
        TrainConfig& c = p.config;
        c.encoder.num_classes = ds.num_classes;
        c.encoder.in_h = ds.image_size;
        c.encoder.in_w = ds.image_size;
        c.mix.method = m;
        c.mix.alpha = method_alpha(m, sc.vit);
        c.mode = LossMode::full_su;
        c.zeta = sc.zeta[mi];
        c.epochs = sc.epochs;
        c.batch_size = ds.batch_size;
        c.base_lr = sc.base_lr;
        c.weight_decay = sc.weight_decay;
        c.validate();
        out.push_back(std::move(p));
    }
}

std::vector<Preset> build_registry() {
    std::vector<Preset> out;

    const DatasetProto cifar100{"cifar100", 100, 32, 100};
    const Scale cifar_scales[5] = {
        {"", "ResNet-18", false, 0.1, 1e-4, 800, {0.5, 1.0, 0.5, 0.2}},
        {"-rx50", "ResNeXt-50", false, 0.1, 1e-4, 800, {0.5, 1.0, 1.0, 0.5}},
        {"-wrn28", "Wide-ResNet-28-8", false, 0.03, 1e-3, 400, {0.5, 0.5, 0.5, 0.5}},
        {"-deit", "DeiT-Small", true, 1e-3, 0.05, 200, {0.5, 0.5, 0.5, 0.5}},
        {"-swin", "Swin-Tiny", true, 5e-4, 0.05, 200, {0.5, 0.5, 0.5, 0.5}},
    };
    for (const auto& sc : cifar_scales) add_family(out, cifar100, sc);

    const DatasetProto tiny{"tiny", 200, 64, 100};
    const Scale tiny_scales[2] = {
        {"", "ResNet-18", false, 0.2, 1e-4, 400, {1.0, 1.0, 1.0, 1.0}},
        {"-rx50", "ResNeXt-50", false, 0.2, 1e-4, 400, {1.0, 1.0, 1.0, 1.0}},
    };
    for (const auto& sc : tiny_scales) add_family(out, tiny, sc);

    const DatasetProto in1k{"in1k", 1000, 224, 256};
    const Scale in1k_scale{"", "ResNet-18", false, 0.1, 1e-4, 100, {0.5, 0.5, 0.5, 0.5}};
    add_family(out, in1k, in1k_scale);

    const DatasetProto cub200{"cub200", 200, 224, 16};
    const Scale cub_scales[2] = {
        {"", "ResNet-18", false, 1e-3, 5e-4, 200, {1.0, 0.5, 0.5, 0.5}},
        {"-rx50", "ResNeXt-50", false, 1e-3, 5e-4, 200, {0.5, 0.1, 0.2, 0.5}},
    };
    for (const auto& sc : cub_scales) add_family(out, cub200, sc);

    const DatasetProto fgvc{"fgvc", 100, 224, 16};
    const Scale fgvc_scales[2] = {
        {"", "ResNet-18", false, 1e-3, 5e-4, 200, {1.0, 0.5, 1.0, 0.5}},
        {"-rx50", "ResNeXt-50", false, 1e-3, 5e-4, 200, {0.5, 0.5, 0.5, 0.5}},
    };
    for (const auto& sc : fgvc_scales) add_family(out, fgvc, sc);

    // quick local run on synthetic data
    {
        Preset p;
        p.name = "smoke";
        p.note = "tiny synthetic run for sanity checks";
        TrainConfig& c = p.config;
        c.encoder.num_classes = 10;
        c.encoder.widths = {4, 8, 16};
        c.mix.method = MixMethod::cutmix;
        c.mix.alpha = 0.2;
        c.zeta = 0.5;
        c.epochs = 2;
        c.batch_size = 32;
        c.base_lr = 0.05;
        c.eval_interval = 1;
        c.validate();
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

const std::vector<Preset>& preset_registry() {
    static const std::vector<Preset> reg = build_registry();
    return reg;
}

const Preset* find_preset(const std::string& name) {
    for (const auto& p : preset_registry())
        if (p.name == name) return &p;
    return nullptr;
}

}  // namespace sumix
