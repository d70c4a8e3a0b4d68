#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "ntc/net.hpp"

// Training: MSE / compressibility / total losses with the alpha and gamma
// balancing rules, bias-corrected Adam, offline pre-training, and the
// two-phase fine-tune that produces the accumulated weight-update
// delta = w_final - w_initial.

namespace ntc {

template <typename S>
S mse_loss(const Tensor<S>& a, const Tensor<S>& b) {
    if (!a.same_shape(b)) throw UsageError("mse_loss: operand shapes differ");
    return (a.raw() - b.raw()).square().sum() / static_cast<S>(a.size());
}

template <typename S>
S sgn(S x) {
    return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0));
}

/// Compressibility objective on a weight-update: L1/L2 + alpha * L2^2/L1.
/// The first term is scale-invariant and drives mass into few coordinates;
/// the second penalizes overall magnitude. An all-zero update scores 0.
template <typename S>
S comp_loss(const VecX<S>& dw, S alpha) {
    const S l1 = dw.template lpNorm<1>();
    if (l1 == S(0)) return S(0);
    const S l2 = dw.norm();
    return l1 / l2 + alpha * l2 * l2 / l1;
}

/// Analytic gradient of comp_loss; sign(0) taken as 0. Zero at an all-zero
/// update, matching the guard in comp_loss.
template <typename S>
VecX<S> comp_loss_grad(const VecX<S>& dw, S alpha) {
    VecX<S> g = VecX<S>::Zero(dw.size());
    const S l1 = dw.template lpNorm<1>();
    if (l1 == S(0)) return g;
    const S l2 = dw.norm();
    const S l2_3 = l2 * l2 * l2;
    for (Eigen::Index i = 0; i < dw.size(); ++i) {
        const S s = sgn(dw[i]);
        g[i] = s / l2 - l1 * dw[i] / l2_3 +
               alpha * (S(2) * dw[i] / l1 - l2 * l2 * s / (l1 * l1));
    }
    return g;
}

/// alpha = ratio * L1^2 / L2^3, which balances the two comp_loss terms so the
/// second equals `ratio` times the first. Gradient-blocked by construction
/// (recomputed per step, treated as a constant). All-zero update -> 0.
template <typename S>
S alpha_rule(const VecX<S>& dw, S ratio = S(1) / S(3)) {
    const S l1 = dw.template lpNorm<1>();
    if (l1 == S(0)) return S(0);
    const S l2 = dw.norm();
    return ratio * l1 * l1 / (l2 * l2 * l2);
}

/// gamma = m * L_mse / L_comp, a constant in the backward pass; 0 when the
/// compressibility loss is 0 (no update yet).
template <typename S>
S gamma_rule(S lmse, S lcomp, S m) {
    if (lcomp == S(0)) return S(0);
    return m * lmse / lcomp;
}

template <typename S>
S total_loss(S lmse, S lcomp, S gamma) {
    return lmse + gamma * lcomp;
}

template <typename S>
struct AdamState {
    VecX<S> m, v;
    std::int64_t t = 0;
    S beta1 = S(0.9), beta2 = S(0.999), eps = S(1e-8);
    S lr = S(0.001);

    explicit AdamState(Eigen::Index n, S lr_ = S(0.001))
        : m(VecX<S>::Zero(n)), v(VecX<S>::Zero(n)), lr(lr_) {}
};

/// Standard bias-corrected Adam update, in place on w.
template <typename S>
void adam_step(AdamState<S>& st, VecX<S>& w, const VecX<S>& g) {
    if (w.size() != g.size() || w.size() != st.m.size())
        throw UsageError("adam_step: vector length mismatch");
    st.t += 1;
    st.m = st.beta1 * st.m + (S(1) - st.beta1) * g;
    st.v.array() = st.beta2 * st.v.array() + (S(1) - st.beta2) * g.array().square();
    const S bc1 = S(1) - std::pow(st.beta1, static_cast<S>(st.t));
    const S bc2 = S(1) - std::pow(st.beta2, static_cast<S>(st.t));
    w.array() -= st.lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + st.eps);
}

namespace detail {

/// One full-batch MSE forward/backward; returns the loss and writes the
/// flattened weight gradient.
template <typename S>
S mse_step(Network<S>& net, const Tensor<S>& decoded, const Tensor<S>& original,
           bool bn_training, VecX<S>& grad_out,
           std::vector<ops::BatchNormStats<S>>* stats_out = nullptr) {
    Tape<S> tape;
    const int input = tape.leaf(decoded, false);
    std::vector<int> params;
    const int out = forward_traced(net, tape, input, params, bn_training, stats_out);
    const int target = tape.leaf(original, false);
    const int loss = tape_ops::mse(tape, out, target);
    tape.backward(loss);
    grad_out = gather_gradient(tape, params, param_count(net));
    return tape.value(loss)[0];
}

template <typename S>
void check_batch(const Tensor<S>& decoded, const Tensor<S>& original) {
    if (decoded.rank() != 4 || original.rank() != 4 || !decoded.same_shape(original))
        throw UsageError("training batch: decoded/original must be equal-shape [N,C,H,W]");
    if (decoded.extent(0) < 1) throw UsageError("training batch: empty dataset");
}

}  // namespace detail

/// Offline pre-training: full-batch Adam on MSE with batch-statistics
/// normalization; per-channel running statistics are tracked with the given
/// momentum and left frozen in the network afterwards. The seed parameter is
/// reserved for stochastic batching and unused in full-batch mode. Returns
/// the trained WeightVector w_0.
template <typename S>
VecX<S> pretrain(Network<S>& net, const Tensor<S>& decoded, const Tensor<S>& original,
                 int steps, S lr, std::uint64_t seed, S bn_momentum = S(0.1),
                 std::vector<S>* mse_log = nullptr) {
    (void)seed;
    detail::check_batch(decoded, original);
    if (steps < 0) throw UsageError("pretrain: steps must be >= 0");
    if (bn_momentum < S(0) || bn_momentum > S(1)) throw UsageError("pretrain: momentum in [0,1]");

    VecX<S> w = flatten_weights(net);
    AdamState<S> adam(w.size(), lr);
    VecX<S> g;
    std::vector<ops::BatchNormStats<S>> stats;
    for (int t = 0; t < steps; ++t) {
        const S lmse = detail::mse_step(net, decoded, original, /*bn_training=*/true, g, &stats);
        if (mse_log) mse_log->push_back(lmse);
        adam_step(adam, w, g);
        unflatten_weights(net, w);
        for (size_t bi = 0; bi < net.blocks.size(); ++bi) {
            auto& blk = net.blocks[bi];
            blk.bn_mean.raw() =
                (S(1) - bn_momentum) * blk.bn_mean.raw() + bn_momentum * stats[bi].mean.raw();
            blk.bn_var.raw() =
                (S(1) - bn_momentum) * blk.bn_var.raw() + bn_momentum * stats[bi].var.raw();
        }
    }
    return w;
}

template <typename S>
struct FinetuneConfig {
    S m = S(1);                    // gamma multiplier; 0 disables the comp term
    int phase1_steps = 50;         // hard cap on phase 1
    S mse_drop_ratio = S(0.9);     // switch once L_mse <= ratio * L_mse(step 0)
    int total_steps = 200;
    S lr = S(0.001);
    S alpha_ratio = S(1) / S(3);
    S report_tau = S(1e-5);        // |delta| < tau counts as sparse in telemetry

    void validate() const {
        if (m < S(0)) throw ConfigError("finetune: m must be >= 0");
        if (phase1_steps < 0 || total_steps < phase1_steps)
            throw ConfigError("finetune: need 0 <= phase1_steps <= total_steps");
        if (mse_drop_ratio <= S(0) || mse_drop_ratio > S(1))
            throw ConfigError("finetune: mse_drop_ratio must be in (0,1]");
        if (lr <= S(0)) throw ConfigError("finetune: learning rate must be > 0");
        if (alpha_ratio < S(0)) throw ConfigError("finetune: alpha_ratio must be >= 0");
        if (report_tau < S(0)) throw ConfigError("finetune: report_tau must be >= 0");
    }
};

struct LossRow {
    int step = 0;
    double lmse = 0, lcomp = 0, gamma = 0, alpha = 0, l1 = 0, l2 = 0, sparsity = 0;
};

struct LossReport {
    std::vector<LossRow> rows;
    int phase2_entry_step = -1;      // -1 when phase 2 never started
    bool switched_by_ratio = false;  // false at entry means the step cap fired
    double l1_over_l2_entry = 0;
    double l1_over_l2_final = 0;

    void write_csv(std::ostream& os) const {
        char buf[512];
        os << "# phase2_entry_step=" << phase2_entry_step << "\n";
        os << "# switched_by_ratio=" << (switched_by_ratio ? 1 : 0) << "\n";
        std::snprintf(buf, sizeof buf, "# l1_over_l2_entry=%.17g\n# l1_over_l2_final=%.17g\n",
                      l1_over_l2_entry, l1_over_l2_final);
        os << buf;
        os << "step,L_mse,L_comp,gamma,alpha,l1,l2,sparsity_fraction\n";
        for (const LossRow& r : rows) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          r.step, r.lmse, r.lcomp, r.gamma, r.alpha, r.l1, r.l2, r.sparsity);
            os << buf;
        }
    }
};

template <typename S>
struct FinetuneResult {
    VecX<S> delta;  // w_final - w_0, bit-exact difference
    LossReport report;
};

/// Two-phase fine-tune. The network is first loaded with w_0. Phase 1
/// minimizes MSE alone; once the switch rule fires (MSE down to
/// mse_drop_ratio of its step-0 value, or the phase1_steps cap), phase 2
/// minimizes L_mse + gamma * L_comp(w - w_0) with alpha and gamma recomputed
/// every step as gradient-blocked constants. Normalization runs in inference
/// mode throughout, so the update only touches gradient-trained parameters.
/// The seed parameter is reserved for stochastic batching and unused in
/// full-batch mode.
template <typename S>
FinetuneResult<S> finetune(Network<S>& net, const VecX<S>& w0, const Tensor<S>& decoded,
                           const Tensor<S>& original, const FinetuneConfig<S>& cfg,
                           std::uint64_t seed) {
    (void)seed;
    cfg.validate();
    detail::check_batch(decoded, original);
    if (w0.size() != param_count(net))
        throw UsageError("finetune: w_0 length does not match the network");

    unflatten_weights(net, w0);
    VecX<S> w = w0;
    AdamState<S> adam(w.size(), cfg.lr);

    FinetuneResult<S> result;
    LossReport& rep = result.report;
    bool in_phase2 = false;
    S lmse0 = S(0);
    VecX<S> g;
    for (int t = 0; t < cfg.total_steps; ++t) {
        const S lmse = detail::mse_step(net, decoded, original, /*bn_training=*/false, g);
        if (t == 0) lmse0 = lmse;

        const VecX<S> dw = w - w0;
        const S l1 = dw.template lpNorm<1>();
        const S l2 = dw.norm();

        if (!in_phase2) {
            const bool by_ratio = lmse <= cfg.mse_drop_ratio * lmse0;
            if (by_ratio || t >= cfg.phase1_steps) {
                in_phase2 = true;
                rep.phase2_entry_step = t;
                rep.switched_by_ratio = by_ratio;
                rep.l1_over_l2_entry = l2 > S(0) ? static_cast<double>(l1 / l2) : 0.0;
            }
        }

        const S alpha = alpha_rule(dw, cfg.alpha_ratio);
        const S lcomp = comp_loss(dw, alpha);
        const S gamma = in_phase2 ? gamma_rule(lmse, lcomp, cfg.m) : S(0);
        // gamma == 0 skips the term entirely so an m=0 run is bit-identical
        // to pure-MSE fine-tuning.
        if (gamma != S(0)) g += gamma * comp_loss_grad(dw, alpha);

        LossRow row;
        row.step = t;
        row.lmse = static_cast<double>(lmse);
        row.lcomp = static_cast<double>(lcomp);
        row.gamma = static_cast<double>(gamma);
        row.alpha = static_cast<double>(alpha);
        row.l1 = static_cast<double>(l1);
        row.l2 = static_cast<double>(l2);
        row.sparsity = dw.size() == 0
                           ? 0.0
                           : static_cast<double>((dw.array().abs() < cfg.report_tau).count()) /
                                 static_cast<double>(dw.size());
        rep.rows.push_back(row);

        adam_step(adam, w, g);
        unflatten_weights(net, w);
    }

    result.delta = w - w0;
    const S l1f = result.delta.template lpNorm<1>();
    const S l2f = result.delta.norm();
    rep.l1_over_l2_final = l2f > S(0) ? static_cast<double>(l1f / l2f) : 0.0;
    return result;
}

}  // namespace ntc
