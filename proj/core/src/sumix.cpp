#include "sumix/sumix.hpp"

#include <cmath>
#include <random>

#include "sumix/errors.hpp"

namespace sumix {

const char* to_string(LossMode m) {
    switch (m) {
        case LossMode::baseline_mce: return "baseline_mce";
        case LossMode::lambda_only: return "lambda_only";
        case LossMode::semantic_only: return "semantic_only";
        case LossMode::uncertainty_only: return "uncertainty_only";
        case LossMode::full_su: return "full_su";
    }
    return "?";
}

LossMode parse_loss_mode(const std::string& s) {
    if (s == "baseline_mce") return LossMode::baseline_mce;
    if (s == "lambda_only") return LossMode::lambda_only;
    if (s == "semantic_only") return LossMode::semantic_only;
    if (s == "uncertainty_only") return LossMode::uncertainty_only;
    if (s == "full_su") return LossMode::full_su;
    throw InvalidParameter("unknown loss mode '" + s + "'");
}

UncertaintyHead::UncertaintyHead(long feature_dim, long head_dim, Rng& rng)
    : d_(feature_dim), m_(head_dim) {
    if (d_ < 2) throw InvalidParameter("uncertainty head: feature_dim must be >= 2");
    if (m_ < 2) throw InvalidParameter("uncertainty head: head_dim must be >= 2");
    Tensor w({m_, d_});
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(d_)));
    for (long i = 0; i < w.size(); ++i) w[i] = normal(rng);
    params_.push_back({"unc.w", ad::Value::leaf(std::move(w), true)});
    params_.push_back({"unc.b", ad::Value::leaf(Tensor({m_}), true)});
}

ad::Value UncertaintyHead::apply(const ad::Value& z) const {
    return ad::affine(z, params_[0].value, params_[1].value);
}

namespace {

void check_vector(const Tensor& z, const char* what) {
    if (z.rank() != 1 || z.size() < 1) throw ShapeError(std::string(what) + " expects a vector");
}

// softmax then L2 norm of a plain vector.
double softmax_norm(const std::vector<double>& v) {
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    double z = 0.0;
    for (double x : v) z += std::exp(x - m);
    double s2 = 0.0;
    for (double x : v) {
        double p = std::exp(x - m) / z;
        s2 += p * p;
    }
    return std::sqrt(s2);
}

}  // namespace

double feature_distance(const Tensor& z1, const Tensor& z2) {
    check_vector(z1, "feature_distance");
    if (!z1.same_shape(z2)) throw ShapeError("feature_distance: dimension mismatch");
    std::vector<double> diff(static_cast<std::size_t>(z1.size()));
    for (long i = 0; i < z1.size(); ++i) diff[static_cast<std::size_t>(i)] = z1[i] - z2[i];
    return softmax_norm(diff);
}

std::pair<double, double> recompute_lambda(const Tensor& z_tilde, const Tensor& z_a,
                                           const Tensor& z_b, double lam) {
    if (!(lam >= 0.0 && lam <= 1.0)) throw InvalidParameter("lambda must be in [0,1]");
    if (lam == 0.0) return {0.0, 1.0};
    if (lam == 1.0) return {1.0, 0.0};
    const double d_a = feature_distance(z_tilde, z_a);
    const double d_b = feature_distance(z_tilde, z_b);
    const double wa = lam * std::exp(-d_a);
    const double wb = (1.0 - lam) * std::exp(-d_b);
    const double la = wa / (wa + wb);
    return {la, 1.0 - la};
}

double uncertainty(const Tensor& z, const UncertaintyHead& head) {
    check_vector(z, "uncertainty");
    if (z.size() != head.feature_dim()) throw ShapeError("uncertainty: feature dim mismatch");
    ad::NoGradGuard ng;
    ad::Value out = head.apply(ad::Value::leaf(z.reshaped({1, z.size()})));
    std::vector<double> row(out.val().data(), out.val().data() + out.val().size());
    return softmax_norm(row);
}

double z_su_gate(const Tensor& z_tilde, const Tensor& z_a, const Tensor& z_b, double lam_tilde_a,
                 double lam_tilde_b, const UncertaintyHead& head) {
    if (std::abs(lam_tilde_a + lam_tilde_b - 1.0) > 1e-9)
        throw InvalidParameter("z_su_gate: weights must sum to 1");
    const double u_tilde = uncertainty(z_tilde, head);
    const double z_pa = std::exp(-((u_tilde + uncertainty(z_a, head)) + feature_distance(z_tilde, z_a)));
    const double z_pb = std::exp(-((u_tilde + uncertainty(z_b, head)) + feature_distance(z_tilde, z_b)));
    return lam_tilde_a * z_pa + lam_tilde_b * z_pb;
}

namespace {

void check_weights(const std::vector<double>& w_a, const std::vector<double>& w_b, long n) {
    if (static_cast<long>(w_a.size()) != n || static_cast<long>(w_b.size()) != n)
        throw ShapeError("mce: weight count mismatch");
    for (long i = 0; i < n; ++i) {
        const double a = w_a[static_cast<std::size_t>(i)], b = w_b[static_cast<std::size_t>(i)];
        if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0))
            throw InvalidParameter("mce: weights must be in [0,1]");
        if (std::abs(a + b - 1.0) > 1e-9) throw InvalidParameter("mce: weights must sum to 1");
    }
}

ad::Value weight_leaf(const std::vector<double>& w) {
    return ad::Value::leaf(Tensor({static_cast<long>(w.size())}, w));
}

}  // namespace

ad::Value mce(const ad::Value& logits, const std::vector<int>& y_a, const std::vector<int>& y_b,
              const std::vector<double>& w_a, const std::vector<double>& w_b) {
    const long n = logits.val().dim(0);
    check_weights(w_a, w_b, n);
    ad::Value ce_a = ad::ce_rows(logits, y_a);
    ad::Value ce_b = ad::ce_rows(logits, y_b);
    ad::Value weighted = ad::add(ad::mul(ce_a, weight_leaf(w_a)), ad::mul(ce_b, weight_leaf(w_b)));
    return ad::mean_all(weighted);
}

double mce_loss(const Tensor& logits, const std::vector<int>& y_a, const std::vector<int>& y_b,
                const std::vector<double>& w_a, const std::vector<double>& w_b) {
    ad::NoGradGuard ng;
    return mce(ad::Value::leaf(logits), y_a, y_b, w_a, w_b).val()[0];
}

namespace {

Tensor gather_rows(const Tensor& m, const std::vector<long>& idx) {
    const long d = m.dim(1);
    Tensor out({static_cast<long>(idx.size()), d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (long j = 0; j < d; ++j) out.at(static_cast<long>(i), j) = m.at(idx[i], j);
    return out;
}

Tensor row(const Tensor& m, long i) {
    Tensor out({m.dim(1)});
    for (long j = 0; j < m.dim(1); ++j) out[j] = m.at(i, j);
    return out;
}

}  // namespace

SumixAux compute_sumix_aux(Encoder& model, const MixResult& mix, const Tensor& raw_batch,
                           const std::vector<int>& labels, LossMode mode) {
    const long n = mix.mixed.dim(0);
    if (static_cast<long>(labels.size()) != n) throw ShapeError("sumix: label count mismatch");
    if (static_cast<long>(mix.perm.size()) != n) throw ShapeError("sumix: perm size mismatch");

    SumixAux aux;
    aux.y_a = labels;
    aux.y_b.resize(labels.size());
    aux.lam_a = mix.lam_nominal;
    aux.lam_b.resize(mix.lam_nominal.size());
    for (long i = 0; i < n; ++i) {
        aux.y_b[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(mix.perm[static_cast<std::size_t>(i)])];
        aux.lam_b[static_cast<std::size_t>(i)] = 1.0 - aux.lam_a[static_cast<std::size_t>(i)];
    }
    if (mode == LossMode::baseline_mce) return aux;  // no feature passes needed

    check_same_shape(mix.mixed, raw_batch, "sumix raw batch");
    ad::NoGradGuard ng;
    Tensor z_tilde = model.forward(mix.mixed, ad::BnMode::frozen_stats).features.val();
    Tensor z_raw = model.forward(raw_batch, ad::BnMode::frozen_stats).features.val();
    aux.z_a = z_raw;
    aux.z_b = gather_rows(z_raw, mix.perm);

    aux.lam_tilde_a.resize(static_cast<std::size_t>(n));
    aux.lam_tilde_b.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        auto [la, lb] = recompute_lambda(row(z_tilde, i), row(aux.z_a, i), row(aux.z_b, i),
                                         aux.lam_a[static_cast<std::size_t>(i)]);
        aux.lam_tilde_a[static_cast<std::size_t>(i)] = la;
        aux.lam_tilde_b[static_cast<std::size_t>(i)] = lb;
    }
    return aux;
}

LossOutput loss_given_aux(Encoder& model, UncertaintyHead& head, const MixResult& mix,
                          const SumixAux& aux, double zeta, LossMode mode) {
    if (!(zeta > 0.0)) throw InvalidParameter("zeta must be positive");

    LossOutput out;
    out.aux = aux;
    out.report.mode = mode;

    Encoder::Forward fwd = model.forward(ad::Value::leaf(mix.mixed), ad::BnMode::train);

    const std::vector<double>& w_a =
        mode == LossMode::baseline_mce ? aux.lam_a : aux.lam_tilde_a;
    const std::vector<double>& w_b =
        mode == LossMode::baseline_mce ? aux.lam_b : aux.lam_tilde_b;
    ad::Value term1 = mce(fwd.logits, aux.y_a, aux.y_b, w_a, w_b);
    out.report.term1 = term1.val()[0];
    double acc = 0.0;
    for (double v : w_a) acc += v;
    out.report.mean_lam_tilde_a = w_a.empty() ? 0.0 : acc / static_cast<double>(w_a.size());

    const bool gated = mode == LossMode::semantic_only || mode == LossMode::uncertainty_only ||
                       mode == LossMode::full_su;
    if (!gated) {
        out.loss = term1;
        out.report.total = out.report.term1;
        return out;
    }

    // Per-parent gate. Gradient reaches the encoder through z_tilde and
    // the uncertainty head through its parameters; raw features and the
    // lam_tilde weights enter as constants.
    ad::Value gate_sum;
    ad::Value u_tilde;
    if (mode != LossMode::semantic_only)
        u_tilde = ad::l2_norm_rows(ad::softmax_rows(head.apply(fwd.features)));
    for (int parent = 0; parent < 2; ++parent) {
        const Tensor& z_p = parent == 0 ? aux.z_a : aux.z_b;
        const std::vector<double>& lam_p = parent == 0 ? aux.lam_tilde_a : aux.lam_tilde_b;
        ad::Value exponent;
        if (mode != LossMode::uncertainty_only) {
            ad::Value diff = ad::sub(fwd.features, ad::Value::leaf(z_p));
            exponent = ad::l2_norm_rows(ad::softmax_rows(diff));
        }
        if (mode != LossMode::semantic_only) {
            ad::Value u_p = ad::l2_norm_rows(ad::softmax_rows(head.apply(ad::Value::leaf(z_p))));
            ad::Value beta = ad::add(u_tilde, u_p);
            exponent = exponent.defined() ? ad::add(beta, exponent) : beta;
        }
        ad::Value z_gate = ad::exp(ad::neg(exponent));
        ad::Value weighted = ad::mul(z_gate, weight_leaf(lam_p));
        gate_sum = gate_sum.defined() ? ad::add(gate_sum, weighted) : weighted;
    }

    ad::Value gated_logits = ad::mul_rows(fwd.logits, gate_sum);
    ad::Value term2 = mce(gated_logits, aux.y_a, aux.y_b, aux.lam_a, aux.lam_b);
    out.loss = ad::add(term1, ad::scale(term2, zeta));

    out.report.term2 = term2.val()[0];
    out.report.total = out.loss.val()[0];
    out.report.mean_z_su = gate_sum.val().mean();
    return out;
}

LossOutput sumix_loss(Encoder& model, UncertaintyHead& head, const MixResult& mix,
                      const Tensor& raw_batch, const std::vector<int>& labels, double zeta,
                      LossMode mode) {
    SumixAux aux = compute_sumix_aux(model, mix, raw_batch, labels, mode);
    return loss_given_aux(model, head, mix, aux, zeta, mode);
}

}  // namespace sumix
