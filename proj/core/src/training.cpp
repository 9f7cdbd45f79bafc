#include "sumix/training.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sumix/checkpoint.hpp"
#include "sumix/errors.hpp"
#include "sumix/evaluation.hpp"

namespace sumix {

namespace {

using nlohmann::json;

// stream tags for derive_rng
constexpr std::uint64_t kInitTag = 0x1217;
constexpr std::uint64_t kHeadTag = 0x12E6;
constexpr std::uint64_t kMixTag = 0x317B;

// Cross-entropy this large means logits in the billions. Batchnorm keeps
// activations finite for many steps after an lr explosion, so waiting for
// inf/nan would let garbage weights churn; treat it as divergence now.
constexpr double kDivergedLoss = 1e9;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json config_to_json(const TrainConfig& c) {
    json j;
    j["arch"] = to_string(c.encoder.arch);
    j["feature_dim"] = c.encoder.feature_dim;
    j["num_classes"] = c.encoder.num_classes;
    j["widths"] = c.encoder.widths;
    j["in_channels"] = c.encoder.in_channels;
    j["in_h"] = c.encoder.in_h;
    j["in_w"] = c.encoder.in_w;
    j["unc_dim"] = c.unc_dim;
    j["method"] = to_string(c.mix.method);
    j["alpha"] = c.mix.alpha;
    j["fmix_decay"] = c.mix.fmix_decay;
    j["mode"] = to_string(c.mode);
    j["zeta"] = c.zeta;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["base_lr"] = c.base_lr;
    j["momentum"] = c.momentum;
    j["weight_decay"] = c.weight_decay;
    j["seed"] = c.seed;
    j["eval_interval"] = c.eval_interval;
    j["augment"] = c.augment;
    return j;
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.encoder.arch = parse_arch(j.at("arch").get<std::string>());
    c.encoder.feature_dim = j.at("feature_dim").get<long>();
    c.encoder.num_classes = j.at("num_classes").get<long>();
    c.encoder.widths = j.at("widths").get<std::vector<long>>();
    c.encoder.in_channels = j.at("in_channels").get<long>();
    c.encoder.in_h = j.at("in_h").get<long>();
    c.encoder.in_w = j.at("in_w").get<long>();
    c.unc_dim = j.at("unc_dim").get<long>();
    c.mix.method = parse_mix_method(j.at("method").get<std::string>());
    c.mix.alpha = j.at("alpha").get<double>();
    c.mix.fmix_decay = j.at("fmix_decay").get<double>();
    c.mode = parse_loss_mode(j.at("mode").get<std::string>());
    c.zeta = j.at("zeta").get<double>();
    c.epochs = j.at("epochs").get<long>();
    c.batch_size = j.at("batch_size").get<long>();
    c.base_lr = j.at("base_lr").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_interval = j.at("eval_interval").get<long>();
    c.augment = j.at("augment").get<bool>();
    return c;
}

std::vector<NamedParam*> collect_params(Encoder& model, UncertaintyHead& head) {
    std::vector<NamedParam*> out;
    for (auto& p : model.parameters()) out.push_back(&p);
    for (auto& p : head.parameters()) out.push_back(&p);
    return out;
}

void restore_params(const Checkpoint& ck, std::vector<NamedParam*> params,
                    std::vector<std::pair<std::string, Tensor*>> buffers) {
    for (NamedParam* p : params) {
        const Tensor* t = ck.find(p->name);
        if (!t) throw DataFormatError("checkpoint is missing tensor " + p->name);
        if (!t->same_shape(p->value.val()))
            throw DataFormatError("checkpoint tensor " + p->name + " has shape " + t->shape_str());
        p->value.node()->value = *t;
    }
    for (auto& [name, buf] : buffers) {
        const Tensor* t = ck.find(name);
        if (!t) throw DataFormatError("checkpoint is missing buffer " + name);
        if (!t->same_shape(*buf))
            throw DataFormatError("checkpoint buffer " + name + " has shape " + t->shape_str());
        *buf = *t;
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (!(base_lr > 0.0)) throw InvalidParameter("base_lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidParameter("momentum must be in [0,1)");
    if (weight_decay < 0.0) throw InvalidParameter("weight_decay must be >= 0");
    if (epochs < 1) throw InvalidParameter("epochs must be >= 1");
    if (batch_size < 1) throw InvalidParameter("batch_size must be >= 1");
    if (!(zeta > 0.0)) throw InvalidParameter("zeta must be positive");
    if (unc_dim < 2) throw InvalidParameter("unc_dim must be >= 2");
    if (!(mix.alpha > 0.0)) throw InvalidParameter("alpha must be positive");
    if (!(mix.fmix_decay > 0.0)) throw InvalidParameter("fmix_decay must be positive");
    if (eval_interval < 0) throw InvalidParameter("eval_interval must be >= 0");
    if (halt_after < 0) throw InvalidParameter("halt_after must be >= 0");
}

SGD::SGD(std::vector<NamedParam*> params, double momentum, double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {
    for (NamedParam* p : params) slots_.push_back({p, Tensor(p->value.val().shape())});
}

void SGD::zero_grad() {
    for (auto& s : slots_) s.param->value.zero_grad();
}

void SGD::step(double lr) {
    // validate before mutating anything, so a failed step leaves the
    // parameters at their last good values
    for (auto& s : slots_) {
        if (!s.param->value.has_grad()) continue;
        if (!s.param->value.grad().all_finite())
            throw NumericalError("non-finite gradient in " + s.param->name);
    }
    for (auto& s : slots_) {
        if (!s.param->value.has_grad()) continue;  // parameter not in this step's graph
        Tensor& p = s.param->value.node()->value;
        const Tensor& g = s.param->value.grad();
        Tensor& v = s.velocity;
        for (long i = 0; i < p.size(); ++i) {
            v[i] = momentum_ * v[i] + g[i] + weight_decay_ * p[i];
            p[i] -= lr * v[i];
        }
    }
}

std::vector<std::pair<std::string, Tensor*>> SGD::velocities() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& s : slots_) out.emplace_back(s.param->name, &s.velocity);
    return out;
}

double cosine_lr(long step, long total_steps, double base_lr) {
    if (total_steps < 1) throw InvalidParameter("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) throw InvalidParameter("cosine_lr: step out of range");
    return 0.5 * base_lr * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));
}

void save_train_checkpoint(const std::string& path, const TrainConfig& config, Encoder& model,
                           UncertaintyHead& head, SGD& sgd, long epochs_done, long steps_done,
                           const std::vector<double>& norm_mean,
                           const std::vector<double>& norm_stdev) {
    json meta;
    meta["config"] = config_to_json(config);
    meta["epochs_done"] = epochs_done;
    meta["steps_done"] = steps_done;
    meta["norm_mean"] = norm_mean;
    meta["norm_stdev"] = norm_stdev;

    Checkpoint ck;
    ck.metadata_json = meta.dump();
    for (auto& p : model.parameters()) ck.add(p.name, p.value.val());
    for (auto& [name, buf] : model.buffers()) ck.add(name, *buf);
    for (auto& p : head.parameters()) ck.add(p.name, p.value.val());
    for (auto& [name, v] : sgd.velocities()) ck.add("vel." + name, *v);
    save_checkpoint(path, ck);
}

LoadedCheckpoint load_train_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    json meta;
    try {
        meta = json::parse(ck.metadata_json);
    } catch (const json::exception& e) {
        throw DataFormatError(path + ": bad checkpoint metadata: " + e.what());
    }

    LoadedCheckpoint out;
    try {
        out.config = config_from_json(meta.at("config"));
        out.epochs_done = meta.at("epochs_done").get<long>();
        out.steps_done = meta.at("steps_done").get<long>();
        out.norm_mean = meta.at("norm_mean").get<std::vector<double>>();
        out.norm_stdev = meta.at("norm_stdev").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataFormatError(path + ": incomplete checkpoint metadata: " + e.what());
    }

    Rng init_rng = derive_rng(out.config.seed, 0, kInitTag);
    out.model = std::make_unique<Encoder>(out.config.encoder, init_rng);
    Rng head_rng = derive_rng(out.config.seed, 0, kHeadTag);
    out.head = std::make_unique<UncertaintyHead>(out.model->feature_dim(), out.config.unc_dim, head_rng);

    std::vector<NamedParam*> params;
    for (auto& p : out.model->parameters()) params.push_back(&p);
    for (auto& p : out.head->parameters()) params.push_back(&p);
    restore_params(ck, params, out.model->buffers());
    return out;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& eval_set,
                  const std::string& resume_from) {
    if (train_set.size() == 0) throw InvalidParameter("train: empty dataset");

    TrainConfig cfg = config;
    long start_epoch = 0;
    TrainResult result;

    if (resume_from.empty()) {
        cfg.encoder.num_classes = train_set.num_classes;
        cfg.encoder.in_channels = train_set.images.dim(1);
        cfg.encoder.in_h = train_set.images.dim(2);
        cfg.encoder.in_w = train_set.images.dim(3);
        cfg.validate();
        Rng init_rng = derive_rng(cfg.seed, 0, kInitTag);
        result.model = std::make_unique<Encoder>(cfg.encoder, init_rng);
        Rng head_rng = derive_rng(cfg.seed, 0, kHeadTag);
        result.head = std::make_unique<UncertaintyHead>(result.model->feature_dim(), cfg.unc_dim, head_rng);
    } else {
        LoadedCheckpoint loaded = load_train_checkpoint(resume_from);
        // the checkpoint's run definition wins; only output paths come
        // from the caller
        cfg = loaded.config;
        cfg.checkpoint_path = config.checkpoint_path;
        cfg.metrics_path = config.metrics_path;
        cfg.halt_after = config.halt_after;
        if (cfg.encoder.num_classes != train_set.num_classes)
            throw InvalidParameter("resume: dataset class count differs from checkpoint");
        result.model = std::move(loaded.model);
        result.head = std::move(loaded.head);
        start_epoch = loaded.epochs_done;
    }

    if (cfg.halt_after > 0 && cfg.checkpoint_path.empty())
        throw InvalidParameter("halt_after needs a checkpoint_path to resume from");

    Encoder& model = *result.model;
    UncertaintyHead& head = *result.head;
    SGD sgd(collect_params(model, head), cfg.momentum, cfg.weight_decay);
    if (!resume_from.empty()) {
        Checkpoint ck = load_checkpoint(resume_from);
        for (auto& [name, v] : sgd.velocities()) {
            const Tensor* t = ck.find("vel." + name);
            if (!t) throw DataFormatError("checkpoint is missing velocity vel." + name);
            *v = *t;
        }
    }

    std::ofstream metrics_file;
    if (!cfg.metrics_path.empty()) {
        metrics_file.open(cfg.metrics_path, resume_from.empty() ? std::ios::trunc : std::ios::app);
        if (!metrics_file) throw DataFormatError("cannot write metrics stream " + cfg.metrics_path);
    }
    auto emit = [&](const std::string& line) {
        result.metrics.push_back(line);
        if (metrics_file.is_open()) metrics_file << line << '\n';
    };

    BatchIterator it(train_set, cfg.batch_size, cfg.seed, cfg.augment);
    const long bpe = it.batches_per_epoch();
    const long total_steps = cfg.epochs * bpe;
    long global_step = start_epoch * bpe;

    double lam_shift_sum = 0.0;
    long lam_shift_count = 0;

    auto save_state = [&](long epochs_done) {
        if (cfg.checkpoint_path.empty()) return;
        save_train_checkpoint(cfg.checkpoint_path, cfg, model, head, sgd, epochs_done, global_step,
                              train_set.mean, train_set.stdev);
    };

    for (long epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        it.start_epoch(epoch);
        Batch batch;
        long bi = 0;
        while (it.next(batch)) {
            const double lr = cosine_lr(global_step, total_steps, cfg.base_lr);
            Rng mix_rng = derive_rng(cfg.seed, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(bi), kMixTag);
            MixResult mix = mix_batch(cfg.mix, batch.images, mix_rng);
            LossOutput out = sumix_loss(model, head, mix, batch.images, batch.labels, cfg.zeta, cfg.mode);
            if (!std::isfinite(out.report.total) || std::abs(out.report.total) > kDivergedLoss) {
                save_state(epoch);
                throw NumericalError("diverged: loss " + fmt(out.report.total) + " at step " +
                                     std::to_string(global_step));
            }
            sgd.zero_grad();
            ad::backward(out.loss);
            try {
                sgd.step(lr);
            } catch (const NumericalError&) {
                save_state(epoch);
                throw;
            }

            if (cfg.mode != LossMode::baseline_mce) {
                for (std::size_t i = 0; i < out.aux.lam_tilde_a.size(); ++i) {
                    lam_shift_sum += std::abs(out.aux.lam_tilde_a[i] - out.aux.lam_a[i]);
                    ++lam_shift_count;
                }
            }

            ++global_step;
            emit("step=" + std::to_string(global_step) + " epoch=" + std::to_string(epoch) +
                 " lr=" + fmt(lr) + " mode=" + to_string(cfg.mode) + " term1=" + fmt(out.report.term1) +
                 " term2=" + fmt(out.report.term2) + " total=" + fmt(out.report.total) +
                 " lam_tilde_a=" + fmt(out.report.mean_lam_tilde_a) + " z_su=" + fmt(out.report.mean_z_su));
            ++bi;
        }

        const bool last_epoch = epoch + 1 == cfg.epochs;
        const bool interval_hit = cfg.eval_interval > 0 && (epoch + 1) % cfg.eval_interval == 0;
        if ((interval_hit || last_epoch) && eval_set.size() > 0) {
            const double acc = top1(model, eval_set, train_set.mean, train_set.stdev);
            result.eval_accuracy.push_back(acc);
            result.final_eval_accuracy = acc;
            emit("eval epoch=" + std::to_string(epoch + 1) + " top1=" + fmt(acc));
        }
        const bool halt = cfg.halt_after > 0 && epoch + 1 - start_epoch >= cfg.halt_after &&
                          !last_epoch;
        if (interval_hit || last_epoch || halt) save_state(epoch + 1);
        if (halt) break;
    }

    result.steps = global_step;
    result.mean_abs_lam_shift = lam_shift_count ? lam_shift_sum / static_cast<double>(lam_shift_count) : 0.0;
    result.final_train_accuracy = top1(model, train_set, train_set.mean, train_set.stdev);
    return result;
}

}  // namespace sumix
