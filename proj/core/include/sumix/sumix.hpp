#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sumix/encoder.hpp"
#include "sumix/mixers.hpp"

namespace sumix {

enum class LossMode { baseline_mce, lambda_only, semantic_only, uncertainty_only, full_su };

const char* to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

// Trainable affine map from feature dim d to head dim m; the L2 norm of
// its softmax output is the uncertainty estimate.
class UncertaintyHead {
public:
    UncertaintyHead(long feature_dim, long head_dim, Rng& rng);

    long feature_dim() const { return d_; }
    long head_dim() const { return m_; }

    ad::Value apply(const ad::Value& z) const;  // (N,d) -> (N,m)

    std::vector<NamedParam>& parameters() { return params_; }
    const std::vector<NamedParam>& parameters() const { return params_; }

private:
    long d_, m_;
    std::vector<NamedParam> params_;
};

// Scalar building blocks, also used directly by the invariant tests.
// feature_distance = ||softmax(z1 - z2)||_2, always in [1/sqrt(d), 1).
double feature_distance(const Tensor& z1, const Tensor& z2);

// lam_tilde_a = lam*e^{-d_a} / (lam*e^{-d_a} + (1-lam)*e^{-d_b}) with
// d_x = feature_distance(z_tilde, z_x); lam in {0,1} short-circuits to
// the exact boundary. Returns (lam_tilde_a, 1 - lam_tilde_a).
std::pair<double, double> recompute_lambda(const Tensor& z_tilde, const Tensor& z_a,
                                           const Tensor& z_b, double lam);

// u = ||softmax(head(z))||_2
double uncertainty(const Tensor& z, const UncertaintyHead& head);

// Per-parent confidence Z_p = e^{-(beta_p + d_p)}, combined convexly:
// Z_su = lam_tilde_a*Z_a + lam_tilde_b*Z_b.
double z_su_gate(const Tensor& z_tilde, const Tensor& z_a, const Tensor& z_b, double lam_tilde_a,
                 double lam_tilde_b, const UncertaintyHead& head);

// Mean over the batch of w_a*CE(logits, y_a) + w_b*CE(logits, y_b).
// Weights must sum to 1 per sample.
ad::Value mce(const ad::Value& logits, const std::vector<int>& y_a, const std::vector<int>& y_b,
              const std::vector<double>& w_a, const std::vector<double>& w_b);
double mce_loss(const Tensor& logits, const std::vector<int>& y_a, const std::vector<int>& y_b,
                const std::vector<double>& w_a, const std::vector<double>& w_b);

// Quantities fixed before the differentiable pass: raw parent features,
// recomputed label weights, parent labels. Treated as constants by the
// loss, which is what makes analytic and finite-difference gradients of
// loss_given_aux agree.
struct SumixAux {
    Tensor z_a, z_b;                             // (N,d), detached
    std::vector<double> lam_tilde_a, lam_tilde_b;
    std::vector<double> lam_a, lam_b;            // nominal per-sample weights
    std::vector<int> y_a, y_b;
};

struct LossReport {
    LossMode mode = LossMode::baseline_mce;
    double term1 = 0.0;            // MCE over mixed logits
    double term2 = 0.0;            // regularizer MCE (unscaled)
    double total = 0.0;            // term1 + zeta*term2
    double mean_lam_tilde_a = 0.0; // mean of the weights used for term1
    double mean_z_su = 0.0;        // 0 when the mode has no gate
};

struct LossOutput {
    ad::Value loss;  // scalar, call ad::backward on it
    LossReport report;
    SumixAux aux;
};

// No-gradient stage: encodes the mixed and raw batches (batch statistics,
// running averages untouched) and recomputes the per-sample weights.
SumixAux compute_sumix_aux(Encoder& model, const MixResult& mix, const Tensor& raw_batch,
                           const std::vector<int>& labels, LossMode mode);

// Differentiable stage given frozen aux. The mixed pass runs with
// training-mode normalization statistics.
LossOutput loss_given_aux(Encoder& model, UncertaintyHead& head, const MixResult& mix,
                          const SumixAux& aux, double zeta, LossMode mode);

// aux + loss in one call; the nominal per-sample weights come from
// mix.lam_nominal.
LossOutput sumix_loss(Encoder& model, UncertaintyHead& head, const MixResult& mix,
                      const Tensor& raw_batch, const std::vector<int>& labels, double zeta,
                      LossMode mode);

}  // namespace sumix
