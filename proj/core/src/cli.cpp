#include "sumix/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "sumix/data.hpp"
#include "sumix/errors.hpp"
#include "sumix/evaluation.hpp"
#include "sumix/image_io.hpp"
#include "sumix/mixers.hpp"
#include "sumix/presets.hpp"
#include "sumix/training.hpp"

namespace fs = std::filesystem;

namespace sumix {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// The run definition: flat key = value map. Typed access records reads
// so leftover keys can be reported as unknown fields.
class Resolved {
public:
    explicit Resolved(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string get_str(const std::string& key, const std::string& def) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        seen_.insert(key);
        return it->second;
    }

    double get_double(const std::string& key, double def) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        seen_.insert(key);
        return parse_double(key, it->second);
    }

    long get_long(const std::string& key, long def) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        seen_.insert(key);
        std::size_t pos = 0;
        long v = 0;
        try {
            v = std::stol(it->second, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != it->second.size() || it->second.empty())
            throw InvalidParameter("config field '" + key + "': expected integer, got '" + it->second + "'");
        return v;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        seen_.insert(key);
        std::size_t pos = 0;
        std::uint64_t v = 0;
        try {
            v = std::stoull(it->second, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != it->second.size() || it->second.empty())
            throw InvalidParameter("config field '" + key + "': expected unsigned integer, got '" +
                                   it->second + "'");
        return v;
    }

    bool get_bool(const std::string& key, bool def) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        seen_.insert(key);
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw InvalidParameter("config field '" + key + "': expected boolean, got '" + v + "'");
    }

    std::vector<double> get_doubles(const std::string& key, const std::string& def) {
        const std::string raw = get_str(key, def);
        std::vector<double> out;
        for (const auto& tok : split_commas(raw)) out.push_back(parse_double(key, tok));
        return out;
    }

    std::vector<long> get_longs(const std::string& key, const std::string& def) {
        std::vector<long> out;
        for (double v : get_doubles(key, def)) out.push_back(static_cast<long>(v));
        return out;
    }

    void check_all_consumed() const {
        for (const auto& [k, v] : kv_)
            if (!seen_.count(k)) throw InvalidParameter("unknown config field '" + k + "'");
    }

private:
    static double parse_double(const std::string& key, const std::string& s) {
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size() || s.empty())
            throw InvalidParameter("config field '" + key + "': expected number, got '" + s + "'");
        return v;
    }

    std::map<std::string, std::string> kv_;
    std::set<std::string> seen_;
};

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("cannot read config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataFormatError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw DataFormatError(path + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = val;
    }
    return kv;
}

std::string join_widths(const std::vector<long>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

TrainConfig config_from_resolved(Resolved& r) {
    TrainConfig c;
    const std::string preset_name = r.get_str("preset", "");
    if (!preset_name.empty()) {
        const Preset* p = find_preset(preset_name);
        if (!p) throw InvalidParameter("config field 'preset': unknown preset '" + preset_name + "'");
        c = p->config;
    }
    c.encoder.arch = parse_arch(r.get_str("arch", to_string(c.encoder.arch)));
    if (r.has("widths")) c.encoder.widths = r.get_longs("widths", "");
    c.encoder.feature_dim = r.get_long("feature_dim", c.encoder.feature_dim);
    c.unc_dim = r.get_long("unc_dim", c.unc_dim);
    c.mix.method = parse_mix_method(r.get_str("method", to_string(c.mix.method)));
    c.mix.alpha = r.get_double("alpha", c.mix.alpha);
    c.mix.fmix_decay = r.get_double("fmix_decay", c.mix.fmix_decay);
    c.mode = parse_loss_mode(r.get_str("mode", to_string(c.mode)));
    c.zeta = r.get_double("zeta", c.zeta);
    c.epochs = r.get_long("epochs", c.epochs);
    c.batch_size = r.get_long("batch_size", c.batch_size);
    c.base_lr = r.get_double("base_lr", c.base_lr);
    c.momentum = r.get_double("momentum", c.momentum);
    c.weight_decay = r.get_double("weight_decay", c.weight_decay);
    c.seed = r.get_u64("seed", c.seed);
    c.eval_interval = r.get_long("eval_interval", c.eval_interval);
    c.augment = r.get_bool("augment", c.augment);
    c.halt_after = r.get_long("halt_after", c.halt_after);
    c.validate();
    return c;
}

void echo_config(std::map<std::string, std::string>& echo, const TrainConfig& c) {
    echo["arch"] = to_string(c.encoder.arch);
    echo["widths"] = join_widths(c.encoder.widths);
    echo["feature_dim"] = std::to_string(c.encoder.feature_dim);
    echo["unc_dim"] = std::to_string(c.unc_dim);
    echo["method"] = to_string(c.mix.method);
    echo["alpha"] = fmt(c.mix.alpha);
    echo["fmix_decay"] = fmt(c.mix.fmix_decay);
    echo["mode"] = to_string(c.mode);
    echo["zeta"] = fmt(c.zeta);
    echo["epochs"] = std::to_string(c.epochs);
    echo["batch_size"] = std::to_string(c.batch_size);
    echo["base_lr"] = fmt(c.base_lr);
    echo["momentum"] = fmt(c.momentum);
    echo["weight_decay"] = fmt(c.weight_decay);
    echo["seed"] = std::to_string(c.seed);
    echo["eval_interval"] = std::to_string(c.eval_interval);
    echo["augment"] = c.augment ? "true" : "false";
    if (c.halt_after > 0) echo["halt_after"] = std::to_string(c.halt_after);
}

// Dataset specification resolved from data.* keys. Either files in the
// CIFAR record format or the synthetic generator.
struct DataSpec {
    bool synthetic = false;
    CifarVariant variant = CifarVariant::cifar10;
    std::vector<std::string> train_paths, eval_paths;
    long classes = 10, per_class = 500, eval_per_class = 100, image_size = 32;
    double noise = 0.05;
    std::uint64_t data_seed = 0;
    long restrict_num = 0, restrict_per = 0;  // 0 = keep everything
};

DataSpec parse_data_spec(Resolved& r, bool need_train) {
    DataSpec d;
    d.synthetic = r.get_bool("data.synthetic", false);
    if (d.synthetic) {
        d.classes = r.get_long("data.classes", d.classes);
        d.per_class = r.get_long("data.per_class", d.per_class);
        d.eval_per_class = r.get_long("data.eval_per_class", d.eval_per_class);
        d.image_size = r.get_long("data.image_size", d.image_size);
        d.noise = r.get_double("data.noise", d.noise);
        d.data_seed = r.get_u64("data.seed", d.data_seed);
    } else {
        const std::string tr = r.get_str("data.train", "");
        const std::string ev = r.get_str("data.eval", "");
        d.train_paths = split_commas(tr);
        d.eval_paths = split_commas(ev);
        const std::string variant = r.get_str("data.variant", "cifar10");
        if (variant == "cifar10")
            d.variant = CifarVariant::cifar10;
        else if (variant == "cifar100")
            d.variant = CifarVariant::cifar100;
        else
            throw InvalidParameter("config field 'data.variant': expected cifar10 or cifar100");
        if (need_train && d.train_paths.empty())
            throw InvalidParameter("config field 'data.train': required unless data.synthetic = true");
    }
    d.restrict_num = r.get_long("data.restrict_classes", 0);
    d.restrict_per = r.get_long("data.restrict_per_class", 0);
    return d;
}

void echo_data(std::map<std::string, std::string>& echo, const DataSpec& d) {
    echo["data.synthetic"] = d.synthetic ? "true" : "false";
    if (d.synthetic) {
        echo["data.classes"] = std::to_string(d.classes);
        echo["data.per_class"] = std::to_string(d.per_class);
        echo["data.eval_per_class"] = std::to_string(d.eval_per_class);
        echo["data.image_size"] = std::to_string(d.image_size);
        echo["data.noise"] = fmt(d.noise);
        echo["data.seed"] = std::to_string(d.data_seed);
    } else {
        std::string tr, ev;
        for (std::size_t i = 0; i < d.train_paths.size(); ++i)
            tr += (i ? "," : "") + d.train_paths[i];
        for (std::size_t i = 0; i < d.eval_paths.size(); ++i)
            ev += (i ? "," : "") + d.eval_paths[i];
        if (!tr.empty()) echo["data.train"] = tr;
        if (!ev.empty()) echo["data.eval"] = ev;
        echo["data.variant"] = d.variant == CifarVariant::cifar10 ? "cifar10" : "cifar100";
    }
    if (d.restrict_num > 0) echo["data.restrict_classes"] = std::to_string(d.restrict_num);
    if (d.restrict_per > 0) echo["data.restrict_per_class"] = std::to_string(d.restrict_per);
}

Dataset concat_datasets(const std::vector<Dataset>& parts) {
    long total = 0;
    for (const auto& p : parts) total += p.size();
    Dataset out;
    out.num_classes = parts.front().num_classes;
    const long C = parts.front().images.dim(1);
    const long H = parts.front().images.dim(2);
    const long W = parts.front().images.dim(3);
    out.images = Tensor({total, C, H, W});
    out.labels.reserve(static_cast<std::size_t>(total));
    long at = 0;
    for (const auto& p : parts) {
        if (p.images.dim(1) != C || p.images.dim(2) != H || p.images.dim(3) != W)
            throw DataFormatError("dataset parts have mismatched image dims");
        for (long i = 0; i < p.size(); ++i) {
            set_image(out.images, at++, image_at(p.images, i));
            out.labels.push_back(p.labels[static_cast<std::size_t>(i)]);
        }
        out.num_classes = std::max(out.num_classes, p.num_classes);
    }
    compute_normalization(out);
    return out;
}

Dataset load_files(const std::vector<std::string>& paths, CifarVariant variant) {
    if (paths.empty()) throw InvalidParameter("no dataset files given");
    std::vector<Dataset> parts;
    for (const auto& p : paths) parts.push_back(load_cifar(p, variant));
    if (parts.size() == 1) return std::move(parts.front());
    return concat_datasets(parts);
}

void apply_restriction(Dataset& ds, const DataSpec& d) {
    if (d.restrict_num <= 0) return;
    const long per = d.restrict_per > 0 ? d.restrict_per : ds.size();
    ds = restrict_classes(ds, d.restrict_num, per);
}

Dataset load_train_set(const DataSpec& d) {
    Dataset ds;
    if (d.synthetic) {
        Rng rng = derive_rng(d.data_seed, 0, 0xDA7A);
        ds = synthetic_dataset(d.classes, d.per_class, d.image_size, d.image_size, rng, d.noise);
    } else {
        ds = load_files(d.train_paths, d.variant);
    }
    apply_restriction(ds, d);
    return ds;
}

// May be empty (no eval source); the harness then skips periodic evals.
Dataset load_eval_set(const DataSpec& d) {
    Dataset ds;
    if (d.synthetic) {
        if (d.eval_per_class > 0) {
            Rng rng = derive_rng(d.data_seed, 1, 0xDA7A);
            ds = synthetic_dataset(d.classes, d.eval_per_class, d.image_size, d.image_size, rng, d.noise);
        }
    } else if (!d.eval_paths.empty()) {
        ds = load_files(d.eval_paths, d.variant);
    }
    if (ds.size() > 0) apply_restriction(ds, d);
    return ds;
}

fs::path make_run_dir(const std::string& run_name, const std::string& fallback) {
    const char* root_env = std::getenv("SUMIX_RUN_ROOT");
    fs::path root = root_env && *root_env ? fs::path(root_env) : fs::path("runs");
    fs::path dir = root / (run_name.empty() ? fallback : run_name);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataFormatError("cannot create run directory " + dir.string() + ": " + ec.message());
    return dir;
}

void write_echo(const fs::path& dir, const std::map<std::string, std::string>& echo) {
    const fs::path p = dir / "config.txt";
    std::ofstream out(p);
    if (!out) throw DataFormatError("cannot write " + p.string());
    out << "# resolved configuration\n";
    for (const auto& [k, v] : echo) out << k << " = " << v << "\n";
}

void write_csv(const fs::path& p, const std::string& header,
               const std::vector<std::pair<std::string, double>>& rows) {
    std::ofstream out(p);
    if (!out) throw DataFormatError("cannot write " + p.string());
    out << header << "\n";
    for (const auto& [k, v] : rows) out << k << "," << fmt(v) << "\n";
}

// Shared flag surface: every subcommand takes a config file plus
// generic key overrides; named flags map onto the same keys.
struct KvCollector {
    std::string config_file;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string*>> bound;  // key -> flag storage

    std::string* slot(const std::string& key) {
        storage.push_back(std::make_unique<std::string>());
        bound.emplace_back(key, storage.back().get());
        return storage.back().get();
    }

    std::map<std::string, std::string> resolve() const {
        std::map<std::string, std::string> kv;
        if (!config_file.empty()) kv = parse_config_file(config_file);
        for (const auto& s : sets) {
            const std::size_t eq = s.find('=');
            if (eq == std::string::npos || eq == 0)
                throw InvalidParameter("--set expects key=value, got '" + s + "'");
            kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
        }
        for (const auto& [key, val] : bound)
            if (!val->empty()) kv[key] = *val;
        return kv;
    }

    std::vector<std::unique_ptr<std::string>> storage;
};

void add_common(CLI::App* sub, KvCollector& kc) {
    sub->add_option("--config", kc.config_file, "config file, one 'key = value' per line");
    sub->add_option("--set", kc.sets, "override any config field as key=value")->take_all();
}

void add_data_flags(CLI::App* sub, KvCollector& kc) {
    sub->add_option("--data-train", *kc.slot("data.train"), "training file(s), comma separated");
    sub->add_option("--data-eval", *kc.slot("data.eval"), "evaluation file(s), comma separated");
    sub->add_option("--variant", *kc.slot("data.variant"), "cifar10 or cifar100");
    sub->add_option("--synthetic", *kc.slot("data.synthetic"), "true: generate synthetic data");
    sub->add_option("--classes", *kc.slot("data.classes"), "synthetic class count");
    sub->add_option("--per-class", *kc.slot("data.per_class"), "synthetic samples per class");
    sub->add_option("--eval-per-class", *kc.slot("data.eval_per_class"), "synthetic eval samples per class");
    sub->add_option("--image-size", *kc.slot("data.image_size"), "synthetic image side");
    sub->add_option("--data-seed", *kc.slot("data.seed"), "synthetic generator seed");
    sub->add_option("--restrict-classes", *kc.slot("data.restrict_classes"), "keep only the first K classes");
    sub->add_option("--restrict-per-class", *kc.slot("data.restrict_per_class"), "cap samples per kept class");
}

void add_train_flags(CLI::App* sub, KvCollector& kc) {
    sub->add_option("--preset", *kc.slot("preset"), "named preset from the registry");
    sub->add_option("--seed", *kc.slot("seed"), "run seed");
    sub->add_option("--epochs", *kc.slot("epochs"), "training epochs");
    sub->add_option("--batch-size", *kc.slot("batch_size"), "batch size");
    sub->add_option("--lr", *kc.slot("base_lr"), "base learning rate");
    sub->add_option("--momentum", *kc.slot("momentum"), "SGD momentum");
    sub->add_option("--weight-decay", *kc.slot("weight_decay"), "weight decay");
    sub->add_option("--method", *kc.slot("method"), "mixup|cutmix|fmix|saliencymix|resizemix");
    sub->add_option("--alpha", *kc.slot("alpha"), "Beta concentration");
    sub->add_option("--fmix-decay", *kc.slot("fmix_decay"), "fmix spectral decay");
    sub->add_option("--mode", *kc.slot("mode"), "baseline_mce|lambda_only|semantic_only|uncertainty_only|full_su");
    sub->add_option("--zeta", *kc.slot("zeta"), "regularizer weight");
    sub->add_option("--arch", *kc.slot("arch"), "small_cnn or mlp");
    sub->add_option("--widths", *kc.slot("widths"), "encoder widths, comma separated");
    sub->add_option("--feature-dim", *kc.slot("feature_dim"), "mlp feature dimension");
    sub->add_option("--unc-dim", *kc.slot("unc_dim"), "uncertainty head dimension");
    sub->add_option("--eval-interval", *kc.slot("eval_interval"), "epochs between evals");
    sub->add_option("--augment", *kc.slot("augment"), "true/false flip+crop augmentation");
}

int cmd_train(KvCollector& kc, const std::string& run_name, const std::string& resume) {
    Resolved r(kc.resolve());
    TrainConfig cfg = config_from_resolved(r);
    DataSpec dspec = parse_data_spec(r, true);
    r.check_all_consumed();

    Dataset train_set = load_train_set(dspec);
    Dataset eval_set = load_eval_set(dspec);

    fs::path dir = make_run_dir(run_name, "train-seed" + std::to_string(cfg.seed));
    std::map<std::string, std::string> echo;
    echo_config(echo, cfg);
    echo_data(echo, dspec);
    const std::string preset_name = r.get_str("preset", "");
    if (!preset_name.empty()) echo["preset"] = preset_name;
    write_echo(dir, echo);

    cfg.metrics_path = (dir / "metrics.txt").string();
    cfg.checkpoint_path = (dir / "checkpoint.smx").string();

    TrainResult res = train(cfg, train_set, eval_set, resume);
    std::cout << "run_dir=" << dir.string() << "\n";
    std::cout << "steps=" << res.steps << "\n";
    std::cout << "final_train_top1=" << fmt(res.final_train_accuracy) << "\n";
    if (!res.eval_accuracy.empty()) std::cout << "final_eval_top1=" << fmt(res.final_eval_accuracy) << "\n";
    std::cout << "mean_abs_lam_shift=" << fmt(res.mean_abs_lam_shift) << "\n";
    return 0;
}

LoadedCheckpoint require_checkpoint(const std::string& path) {
    if (path.empty()) throw InvalidParameter("config field 'checkpoint': required");
    return load_train_checkpoint(path);
}

int cmd_evaluate(KvCollector& kc, const std::string& run_name, const std::string& checkpoint) {
    Resolved r(kc.resolve());
    DataSpec dspec = parse_data_spec(r, false);
    r.check_all_consumed();
    LoadedCheckpoint ck = require_checkpoint(checkpoint);
    Dataset eval_set = load_eval_set(dspec);
    if (eval_set.size() == 0) throw InvalidParameter("config field 'data.eval': no evaluation data");

    const double acc = top1(*ck.model, eval_set, ck.norm_mean, ck.norm_stdev);
    fs::path dir = make_run_dir(run_name, "evaluate");
    write_csv(dir / "results.csv", "split,top1", {{"eval", acc}});
    std::cout << "top1=" << fmt(acc) << "\n";
    return 0;
}

int cmd_occlusion(KvCollector& kc, const std::string& run_name, const std::string& checkpoint) {
    Resolved r(kc.resolve());
    DataSpec dspec = parse_data_spec(r, false);
    const std::vector<double> ratios = r.get_doubles("ratios", "0,0.125,0.25,0.375,0.5,0.625,0.75,0.875,1");
    const long patch = r.get_long("patch", 16);
    const std::uint64_t seed = r.get_u64("seed", 0);
    r.check_all_consumed();
    LoadedCheckpoint ck = require_checkpoint(checkpoint);
    Dataset eval_set = load_eval_set(dspec);
    if (eval_set.size() == 0) throw InvalidParameter("config field 'data.eval': no evaluation data");

    RobustnessCurve curve = occlusion_sweep(*ck.model, eval_set, ck.norm_mean, ck.norm_stdev, ratios,
                                            patch, seed);
    fs::path dir = make_run_dir(run_name, "occlusion");
    std::vector<std::pair<std::string, double>> rows;
    for (std::size_t i = 0; i < curve.ratios.size(); ++i) {
        rows.emplace_back(fmt(curve.ratios[i]), curve.accuracies[i]);
        std::cout << "ratio=" << fmt(curve.ratios[i]) << " top1=" << fmt(curve.accuracies[i]) << "\n";
    }
    write_csv(dir / "occlusion.csv", "ratio,top1", rows);
    write_png((dir / "occlusion.png").string(), render_curves({{curve.ratios, curve.accuracies}}));
    return 0;
}

int cmd_fgsm(KvCollector& kc, const std::string& run_name, const std::string& checkpoint) {
    Resolved r(kc.resolve());
    DataSpec dspec = parse_data_spec(r, false);
    const std::vector<double> epsilons = r.get_doubles("epsilons", "0,0.004,0.008,0.016,0.032");
    r.check_all_consumed();
    LoadedCheckpoint ck = require_checkpoint(checkpoint);
    Dataset eval_set = load_eval_set(dspec);
    if (eval_set.size() == 0) throw InvalidParameter("config field 'data.eval': no evaluation data");

    fs::path dir = make_run_dir(run_name, "fgsm");
    std::vector<std::pair<std::string, double>> rows;
    Curve curve;
    for (double eps : epsilons) {
        const double err = fgsm_error_percent(*ck.model, eval_set, ck.norm_mean, ck.norm_stdev, eps);
        rows.emplace_back(fmt(eps), err);
        curve.x.push_back(eps);
        curve.y.push_back(err);
        std::cout << "epsilon=" << fmt(eps) << " error_percent=" << fmt(err) << "\n";
    }
    write_csv(dir / "fgsm.csv", "epsilon,error_percent", rows);
    write_png((dir / "fgsm.png").string(), render_curves({curve}));
    return 0;
}

int cmd_corrupt(KvCollector& kc, const std::string& run_name, const std::string& checkpoint,
                const std::string& manifest) {
    Resolved r(kc.resolve());
    const std::string variant = r.get_str("data.variant", "cifar10");
    r.check_all_consumed();
    if (manifest.empty()) throw InvalidParameter("config field 'manifest': required");
    CifarVariant v;
    if (variant == "cifar10")
        v = CifarVariant::cifar10;
    else if (variant == "cifar100")
        v = CifarVariant::cifar100;
    else
        throw InvalidParameter("config field 'data.variant': expected cifar10 or cifar100");
    LoadedCheckpoint ck = require_checkpoint(checkpoint);

    CorruptionResult res = corruption_eval(*ck.model, manifest, v, ck.norm_mean, ck.norm_stdev);
    fs::path dir = make_run_dir(run_name, "corrupt-eval");
    std::vector<std::pair<std::string, double>> rows = res.per_corruption;
    rows.emplace_back("mean", res.mean_accuracy);
    for (const auto& [name, acc] : rows) std::cout << name << " top1=" << fmt(acc) << "\n";
    write_csv(dir / "corruptions.csv", "corruption,top1", rows);
    return 0;
}

int cmd_preview(KvCollector& kc, const std::string& run_name) {
    Resolved r(kc.resolve());
    MixConfig mc;
    mc.method = parse_mix_method(r.get_str("method", to_string(mc.method)));
    mc.alpha = r.get_double("alpha", mc.alpha);
    mc.fmix_decay = r.get_double("fmix_decay", mc.fmix_decay);
    if (r.has("lam")) mc.fixed_lam = r.get_double("lam", 0.5);
    const std::uint64_t seed = r.get_u64("seed", 0);
    const long count = r.get_long("count", 8);
    if (count < 2) throw InvalidParameter("config field 'count': need at least 2 samples");

    Dataset src;
    DataSpec dspec = parse_data_spec(r, false);
    dspec.image_size = r.get_long("data.image_size", dspec.image_size);
    dspec.noise = r.get_double("data.noise", dspec.noise);
    r.check_all_consumed();
    if (dspec.synthetic || !dspec.train_paths.empty()) {
        src = load_train_set(dspec);
    } else {
        const long classes = std::clamp(count, 2L, 10L);
        const long per = (count + classes - 1) / classes;
        Rng gen = derive_rng(seed, 2, 0xDA7A);
        src = synthetic_dataset(classes, per, dspec.image_size, dspec.image_size, gen, dspec.noise);
    }
    if (src.size() < count) throw InvalidParameter("config field 'count': only " +
                                                   std::to_string(src.size()) + " samples available");

    const long C = src.images.dim(1), H = src.images.dim(2), W = src.images.dim(3);
    Tensor batch({count, C, H, W});
    for (long i = 0; i < count; ++i) set_image(batch, i, image_at(src.images, i));

    Rng rng = make_rng(seed);
    MixResult mix = mix_batch(mc, batch, rng);

    fs::path dir = make_run_dir(run_name, std::string("preview-") + to_string(mc.method));
    write_png((dir / "mixed.png").string(), make_grid(mix.mixed, 4));
    Tensor mask_imgs({count, 1, H, W});
    for (long n = 0; n < count; ++n)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) mask_imgs.at(n, 0, y, x) = mix.mask[(n * H + y) * W + x];
    write_png((dir / "masks.png").string(), make_grid(mask_imgs, 4));

    std::ofstream stats(dir / "mask_stats.txt");
    if (!stats) throw DataFormatError("cannot write mask_stats.txt");
    for (long n = 0; n < count; ++n) {
        double ones = 0.0;
        for (long i = 0; i < H * W; ++i) ones += mix.mask[n * H * W + i];
        const double frac = ones / static_cast<double>(H * W);
        const std::string line = "sample=" + std::to_string(n) + " partner=" +
                                 std::to_string(mix.perm[static_cast<std::size_t>(n)]) +
                                 " lam_nominal=" + fmt(mix.lam_nominal[static_cast<std::size_t>(n)]) +
                                 " ones_fraction=" + fmt(frac);
        stats << line << "\n";
        std::cout << line << "\n";
    }
    return 0;
}

int cmd_cam(KvCollector& kc, const std::string& run_name, const std::string& checkpoint) {
    Resolved r(kc.resolve());
    DataSpec dspec = parse_data_spec(r, false);
    const long index = r.get_long("index", 0);
    const long cls = r.get_long("class", -1);
    r.check_all_consumed();
    LoadedCheckpoint ck = require_checkpoint(checkpoint);
    Dataset eval_set = load_eval_set(dspec);
    if (eval_set.size() == 0) throw InvalidParameter("config field 'data.eval': no evaluation data");
    if (index < 0 || index >= eval_set.size())
        throw InvalidParameter("config field 'index': out of range");

    const Tensor image = image_at(eval_set.images, index);
    const int target = cls >= 0 ? static_cast<int>(cls)
                                : eval_set.labels[static_cast<std::size_t>(index)];
    Tensor heat = cam(*ck.model, image, target, ck.norm_mean, ck.norm_stdev);

    fs::path dir = make_run_dir(run_name, "cam");
    write_png((dir / "cam.png").string(), overlay_heat(image, heat));
    write_png((dir / "heat.png").string(), colorize_heat(heat));
    std::cout << "class=" << target << " heat_max=" << fmt(heat.max()) << "\n";
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"SUMix mixup training and evaluation harness"};
    app.require_subcommand(1);

    KvCollector kc_train, kc_eval, kc_occ, kc_fgsm, kc_corrupt, kc_preview, kc_cam;
    std::string run_name, resume, checkpoint, manifest;

    CLI::App* s_train = app.add_subcommand("train", "train a model");
    add_common(s_train, kc_train);
    add_train_flags(s_train, kc_train);
    add_data_flags(s_train, kc_train);
    s_train->add_option("--run-name", run_name, "run directory name");
    s_train->add_option("--resume", resume, "checkpoint to resume from");

    CLI::App* s_eval = app.add_subcommand("evaluate", "top-1 accuracy of a checkpoint");
    add_common(s_eval, kc_eval);
    add_data_flags(s_eval, kc_eval);
    s_eval->add_option("--run-name", run_name, "run directory name");
    s_eval->add_option("--checkpoint", checkpoint, "trained checkpoint");

    CLI::App* s_occ = app.add_subcommand("occlusion", "accuracy under patch occlusion");
    add_common(s_occ, kc_occ);
    add_data_flags(s_occ, kc_occ);
    s_occ->add_option("--run-name", run_name, "run directory name");
    s_occ->add_option("--checkpoint", checkpoint, "trained checkpoint");
    s_occ->add_option("--ratios", *kc_occ.slot("ratios"), "occlusion ratios, comma separated");
    s_occ->add_option("--patch", *kc_occ.slot("patch"), "patch side in pixels");
    s_occ->add_option("--seed", *kc_occ.slot("seed"), "occlusion seed");

    CLI::App* s_fgsm = app.add_subcommand("fgsm", "error under the sign-gradient attack");
    add_common(s_fgsm, kc_fgsm);
    add_data_flags(s_fgsm, kc_fgsm);
    s_fgsm->add_option("--run-name", run_name, "run directory name");
    s_fgsm->add_option("--checkpoint", checkpoint, "trained checkpoint");
    s_fgsm->add_option("--epsilons", *kc_fgsm.slot("epsilons"), "attack strengths, comma separated");

    CLI::App* s_corrupt = app.add_subcommand("corrupt-eval", "accuracy over a corruption manifest");
    add_common(s_corrupt, kc_corrupt);
    s_corrupt->add_option("--run-name", run_name, "run directory name");
    s_corrupt->add_option("--checkpoint", checkpoint, "trained checkpoint");
    s_corrupt->add_option("--manifest", manifest, "lines of: name path");
    s_corrupt->add_option("--variant", *kc_corrupt.slot("data.variant"), "cifar10 or cifar100");

    CLI::App* s_preview = app.add_subcommand("preview-mix", "render mixed samples and masks");
    add_common(s_preview, kc_preview);
    add_data_flags(s_preview, kc_preview);
    s_preview->add_option("--run-name", run_name, "run directory name");
    s_preview->add_option("--method", *kc_preview.slot("method"), "mix method");
    s_preview->add_option("--lam", *kc_preview.slot("lam"), "fix lambda instead of sampling");
    s_preview->add_option("--alpha", *kc_preview.slot("alpha"), "Beta concentration");
    s_preview->add_option("--fmix-decay", *kc_preview.slot("fmix_decay"), "fmix spectral decay");
    s_preview->add_option("--seed", *kc_preview.slot("seed"), "mix seed");
    s_preview->add_option("--count", *kc_preview.slot("count"), "samples to mix");

    CLI::App* s_cam = app.add_subcommand("cam", "class activation map overlay");
    add_common(s_cam, kc_cam);
    add_data_flags(s_cam, kc_cam);
    s_cam->add_option("--run-name", run_name, "run directory name");
    s_cam->add_option("--checkpoint", checkpoint, "trained checkpoint");
    s_cam->add_option("--index", *kc_cam.slot("index"), "sample index");
    s_cam->add_option("--class", *kc_cam.slot("class"), "target class (default: true label)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(s_train)) return cmd_train(kc_train, run_name, resume);
        if (app.got_subcommand(s_eval)) return cmd_evaluate(kc_eval, run_name, checkpoint);
        if (app.got_subcommand(s_occ)) return cmd_occlusion(kc_occ, run_name, checkpoint);
        if (app.got_subcommand(s_fgsm)) return cmd_fgsm(kc_fgsm, run_name, checkpoint);
        if (app.got_subcommand(s_corrupt)) return cmd_corrupt(kc_corrupt, run_name, checkpoint, manifest);
        if (app.got_subcommand(s_preview)) return cmd_preview(kc_preview, run_name);
        if (app.got_subcommand(s_cam)) return cmd_cam(kc_cam, run_name, checkpoint);
        return 2;
    } catch (const DataFormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 4;
    } catch (const UnsupportedArchitecture& e) {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace sumix
