#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sumix/autodiff.hpp"
#include "sumix/rng.hpp"

namespace sumix {

enum class Arch { small_cnn, mlp };

const char* to_string(Arch a);
Arch parse_arch(const std::string& s);

struct EncoderConfig {
    Arch arch = Arch::small_cnn;
    long feature_dim = 128;  // penultimate width; small_cnn derives it from widths.back()
    long num_classes = 10;
    std::vector<long> widths = {16, 32, 64};  // stage channels (small_cnn) / hidden sizes (mlp)
    long in_channels = 3;
    long in_h = 32;
    long in_w = 32;

    void validate() const;
};

struct NamedParam {
    std::string name;
    ad::Value value;  // persistent leaf, requires_grad
};

// Classifier with an exposed penultimate feature vector. small_cnn:
// 3 stages of (conv3x3 -> batchnorm -> relu) x2, stride-2 entering stages
// 2 and 3, global average pool, linear head; features are the pooled
// vector (d = widths.back()). mlp: flatten, two rectified hidden layers,
// linear feature layer of width d, linear head.
class Encoder {
public:
    Encoder(EncoderConfig cfg, Rng& rng);

    Encoder(const Encoder&) = delete;
    Encoder& operator=(const Encoder&) = delete;
    Encoder(Encoder&&) = default;
    Encoder& operator=(Encoder&&) = default;

    struct Forward {
        ad::Value features;      // (N,d)
        ad::Value logits;        // (N,K)
        ad::Value feature_maps;  // last conv stage activations, kept on request
    };

    // mode selects the normalization statistics (ad::BnMode semantics).
    Forward forward(const ad::Value& x, ad::BnMode mode, bool want_maps = false);
    Forward forward(const Tensor& x, ad::BnMode mode);  // input without gradient

    const EncoderConfig& config() const { return cfg_; }
    long feature_dim() const { return feature_dim_; }

    std::vector<NamedParam>& parameters() { return params_; }
    const std::vector<NamedParam>& parameters() const { return params_; }
    // persistent normalization statistics, by name, for checkpoints
    std::vector<std::pair<std::string, Tensor*>> buffers();

    // head weight (K,d), used by CAM
    const ad::Value& head_weight() const { return params_[head_w_index_].value; }

private:
    struct BnState {
        Tensor running_mean;
        Tensor running_var;
    };

    ad::Value param(const std::string& name, Tensor init);
    Tensor gaussian(std::vector<long> shape, double stddev, Rng& rng);

    EncoderConfig cfg_;
    long feature_dim_ = 0;
    std::vector<NamedParam> params_;
    std::vector<std::pair<std::string, BnState>> bn_;  // small_cnn only
    std::size_t head_w_index_ = 0;
};

}  // namespace sumix
