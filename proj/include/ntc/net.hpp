#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ntc/ops.hpp"
#include "ntc/tape.hpp"
#include "ntc/tensor.hpp"

// Contracting/expansive fully-convolutional artifact-removal filter with
// lateral skip connections, plus the canonical flattening of its trainable
// parameters.
//
// Wiring for L levels (1-based block indices):
//   contracting block i: conv(stride 2) -> batchnorm -> leaky ReLU
//   expansive block j:   transpose conv(stride 2) -> batchnorm -> leaky ReLU
//   the INPUT of contracting block (L-j+1) is concatenated onto the OUTPUT of
//   expansive block j, for j = 1..L-1. There is no skip from the network
//   input to the final output, whose channels stay equal to the image's.
// The final output is clamped to [0,1].
//
// WeightVector layout: blocks in forward order; within a block conv weights
// (row-major), conv bias, bn scale, bn shift. Per block that is
// kh*kw*Cin*Cout + Cout + Cout + Cout scalars; frozen bn running statistics
// are not part of the vector.

namespace ntc {

struct NetConfig {
    std::vector<int> contracting{8, 16, 32};
    std::vector<int> expansive{16, 8, 3};
    int kernel = 3;
    int stride = 2;
    double leaky_slope = 0.2;
    double bn_eps = 1e-5;
    int image_channels = 3;

    int levels() const { return static_cast<int>(contracting.size()); }

    void validate() const {
        if (contracting.empty() || contracting.size() != expansive.size())
            throw ConfigError("net: contracting/expansive channel lists must be nonempty and equal length");
        if (expansive.back() != image_channels)
            throw ConfigError("net: last expansive channel count must equal image channels");
        for (int c : contracting)
            if (c < 1) throw ConfigError("net: channel counts must be >= 1");
        for (int c : expansive)
            if (c < 1) throw ConfigError("net: channel counts must be >= 1");
        if (kernel < 1 || kernel % 2 == 0) throw ConfigError("net: kernel must be odd");
        if (stride != 2) throw ConfigError("net: stride must be 2");
        if (leaky_slope < 0.0 || leaky_slope >= 1.0) throw ConfigError("net: leaky slope must be in [0,1)");
        if (bn_eps <= 0.0) throw ConfigError("net: bn_eps must be > 0");
    }

    /// Input channel count of each of the 2L blocks in forward order; skip
    /// concatenation widens the inputs of expansive blocks 2..L.
    std::vector<int> block_in_channels() const {
        const int L = levels();
        std::vector<int> in;
        in.push_back(image_channels);
        for (int i = 1; i < L; ++i) in.push_back(contracting[i - 1]);
        in.push_back(contracting[L - 1]);
        for (int j = 2; j <= L; ++j) in.push_back(expansive[j - 2] + contracting[L - j + 1 - 1]);
        return in;
    }

    std::vector<int> block_out_channels() const {
        std::vector<int> out = contracting;
        out.insert(out.end(), expansive.begin(), expansive.end());
        return out;
    }
};

/// Trainable parameter count: sum over blocks of kernel^2*Cin*Cout + 3*Cout.
inline std::int64_t param_count(const NetConfig& cfg) {
    cfg.validate();
    const auto in = cfg.block_in_channels();
    const auto out = cfg.block_out_channels();
    std::int64_t total = 0;
    for (size_t i = 0; i < in.size(); ++i)
        total += static_cast<std::int64_t>(cfg.kernel) * cfg.kernel * in[i] * out[i] + 3LL * out[i];
    return total;
}

template <typename S>
struct ConvBlock {
    bool transpose = false;
    Tensor<S> w;         // conv: [Cout,Cin,k,k]; transpose: [Cin,Cout,k,k]
    Tensor<S> b;         // [Cout]
    Tensor<S> bn_scale;  // [Cout]
    Tensor<S> bn_shift;  // [Cout]
    Tensor<S> bn_mean;   // [Cout], frozen running mean
    Tensor<S> bn_var;    // [Cout], frozen running variance
};

template <typename S>
struct Network {
    NetConfig config;
    std::vector<ConvBlock<S>> blocks;  // contracting blocks then expansive blocks
};

/// Deterministic initialization: conv weights uniform in +-sqrt(6/fan_in)
/// with fan_in = Cin*k*k, zero biases, bn scale 1 / shift 0, running mean 0 /
/// var 1. Identical (config, seed) builds produce bit-identical weights.
template <typename S>
Network<S> build(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Network<S> net;
    net.config = cfg;
    std::mt19937_64 rng(seed);
    const int L = cfg.levels();
    const auto in = cfg.block_in_channels();
    const auto out = cfg.block_out_channels();
    for (int bi = 0; bi < 2 * L; ++bi) {
        ConvBlock<S> blk;
        blk.transpose = bi >= L;
        const int ci = in[bi], co = out[bi], k = cfg.kernel;
        blk.w = blk.transpose ? Tensor<S>({ci, co, k, k}) : Tensor<S>({co, ci, k, k});
        const double bound = std::sqrt(6.0 / (static_cast<double>(ci) * k * k));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::int64_t i = 0; i < blk.w.size(); ++i) blk.w[i] = static_cast<S>(dist(rng));
        blk.b = Tensor<S>({co});
        blk.bn_scale = Tensor<S>::full({co}, S(1));
        blk.bn_shift = Tensor<S>({co});
        blk.bn_mean = Tensor<S>({co});
        blk.bn_var = Tensor<S>::full({co}, S(1));
        net.blocks.push_back(std::move(blk));
    }
    return net;
}

template <typename S>
std::int64_t param_count(const Network<S>& net) {
    std::int64_t total = 0;
    for (const auto& blk : net.blocks)
        total += blk.w.size() + blk.b.size() + blk.bn_scale.size() + blk.bn_shift.size();
    return total;
}

template <typename S>
VecX<S> flatten_weights(const Network<S>& net) {
    VecX<S> v(param_count(net));
    std::int64_t off = 0;
    auto put = [&](const Tensor<S>& t) {
        for (std::int64_t i = 0; i < t.size(); ++i) v[off++] = t[i];
    };
    for (const auto& blk : net.blocks) {
        put(blk.w);
        put(blk.b);
        put(blk.bn_scale);
        put(blk.bn_shift);
    }
    return v;
}

template <typename S>
void unflatten_weights(Network<S>& net, const VecX<S>& v) {
    if (v.size() != param_count(net))
        throw UsageError("unflatten_weights: vector length " + std::to_string(v.size()) +
                         " does not match parameter count " + std::to_string(param_count(net)));
    std::int64_t off = 0;
    auto take = [&](Tensor<S>& t) {
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = v[off++];
    };
    for (auto& blk : net.blocks) {
        take(blk.w);
        take(blk.b);
        take(blk.bn_scale);
        take(blk.bn_shift);
    }
}

namespace detail {

template <typename S>
void check_forward_input(const Network<S>& net, const Tensor<S>& x) {
    if (x.rank() != 4 || x.extent(1) != net.config.image_channels)
        throw UsageError("forward: input must be [N," + std::to_string(net.config.image_channels) + ",H,W]");
    const int div = 1 << net.config.levels();
    if (x.extent(2) % div != 0 || x.extent(3) % div != 0)
        throw UsageError("forward: spatial extents must be divisible by " + std::to_string(div) +
                         "; pad the input first");
}

template <typename S>
int bn_block(const Network<S>& net, Tape<S>& tape, int x, int block_index,
             const std::vector<std::array<int, 4>>& p, bool training, S eps,
             std::vector<ops::BatchNormStats<S>>* stats_out) {
    const auto& blk = net.blocks[block_index];
    const auto& ids = p[block_index];
    if (training) {
        ops::BatchNormStats<S> stats;
        int node = tape_ops::batchnorm_train(tape, x, ids[2], ids[3], eps, &stats);
        if (stats_out) (*stats_out)[block_index] = std::move(stats);
        return node;
    }
    return tape_ops::batchnorm_infer(tape, x, ids[2], ids[3], blk.bn_mean, blk.bn_var, eps);
}

}  // namespace detail

/// Inference forward pass; same spatial shape out as in, output clamped to [0,1].
template <typename S>
Tensor<S> forward(const Network<S>& net, const Tensor<S>& x) {
    detail::check_forward_input(net, x);
    const NetConfig& cfg = net.config;
    const int L = cfg.levels();
    const int pad = ops::same_odd_pad(cfg.kernel);
    const S slope = static_cast<S>(cfg.leaky_slope);
    const S eps = static_cast<S>(cfg.bn_eps);

    std::vector<Tensor<S>> contracting_inputs;  // input of contracting block i
    Tensor<S> cur = x;
    for (int i = 0; i < L; ++i) {
        contracting_inputs.push_back(cur);
        const auto& blk = net.blocks[i];
        cur = ops::conv2d(cur, blk.w, blk.b, cfg.stride, pad);
        cur = ops::batchnorm_infer(cur, blk.bn_scale, blk.bn_shift, blk.bn_mean, blk.bn_var, eps);
        cur = ops::leaky_relu(cur, slope);
    }
    for (int j = 1; j <= L; ++j) {
        const auto& blk = net.blocks[L + j - 1];
        cur = ops::conv2d_transpose(cur, blk.w, blk.b, cfg.stride);
        cur = ops::batchnorm_infer(cur, blk.bn_scale, blk.bn_shift, blk.bn_mean, blk.bn_var, eps);
        cur = ops::leaky_relu(cur, slope);
        if (j < L) cur = ops::concat_channels(cur, contracting_inputs[L - j]);
    }
    return ops::clamp01(cur);
}

/// Tape-recorded forward pass for training. Returns the output node; fills
/// `param_nodes` with the leaf ids of every trainable tensor in WeightVector
/// order (4 per block).
template <typename S>
typename Tape<S>::NodeId forward_traced(const Network<S>& net, Tape<S>& tape, int input_node,
                                        std::vector<int>& param_nodes, bool bn_training,
                                        std::vector<ops::BatchNormStats<S>>* stats_out = nullptr) {
    detail::check_forward_input(net, tape.value(input_node));
    const NetConfig& cfg = net.config;
    const int L = cfg.levels();
    const int pad = ops::same_odd_pad(cfg.kernel);
    const S slope = static_cast<S>(cfg.leaky_slope);
    const S eps = static_cast<S>(cfg.bn_eps);

    param_nodes.clear();
    std::vector<std::array<int, 4>> p;
    for (const auto& blk : net.blocks) {
        std::array<int, 4> ids{tape.leaf(blk.w, true), tape.leaf(blk.b, true),
                               tape.leaf(blk.bn_scale, true), tape.leaf(blk.bn_shift, true)};
        p.push_back(ids);
        for (int id : ids) param_nodes.push_back(id);
    }
    if (stats_out) stats_out->assign(2 * L, {});

    std::vector<int> contracting_inputs;
    int cur = input_node;
    for (int i = 0; i < L; ++i) {
        contracting_inputs.push_back(cur);
        cur = tape_ops::conv2d(tape, cur, p[i][0], p[i][1], cfg.stride, pad);
        cur = detail::bn_block(net, tape, cur, i, p, bn_training, eps, stats_out);
        cur = tape_ops::leaky_relu(tape, cur, slope);
    }
    for (int j = 1; j <= L; ++j) {
        const int bi = L + j - 1;
        cur = tape_ops::conv2d_transpose(tape, cur, p[bi][0], p[bi][1], cfg.stride);
        cur = detail::bn_block(net, tape, cur, bi, p, bn_training, eps, stats_out);
        cur = tape_ops::leaky_relu(tape, cur, slope);
        if (j < L) cur = tape_ops::concat_channels(tape, cur, contracting_inputs[L - j]);
    }
    return tape_ops::clamp01(tape, cur);
}

/// Gathers the tape gradients of all parameter nodes into WeightVector order.
template <typename S>
VecX<S> gather_gradient(Tape<S>& tape, const std::vector<int>& param_nodes, std::int64_t n_params) {
    VecX<S> g(n_params);
    std::int64_t off = 0;
    for (int id : param_nodes) {
        const Tensor<S>& gt = tape.grad(id);
        for (std::int64_t i = 0; i < gt.size(); ++i) g[off++] = gt[i];
    }
    if (off != n_params) throw UsageError("gather_gradient: parameter count mismatch");
    return g;
}

}  // namespace ntc
