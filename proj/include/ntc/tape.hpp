#pragma once

#include <functional>
#include <vector>

#include "ntc/ops.hpp"
#include "ntc/tensor.hpp"

// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
// so creation order is a topological order and one reverse sweep propagates
// vector-Jacobian products. A tape belongs to a single training step and a
// single thread.

namespace ntc {

template <typename S>
class Tape {
public:
    using NodeId = int;

    enum class Op {
        Leaf, Conv2d, ConvTranspose2d, BnInfer, BnTrain, LeakyRelu,
        Concat, Clamp01, Mse, Sum
    };

    struct Node {
        Op op = Op::Leaf;
        Tensor<S> value;
        Tensor<S> grad;
        bool needs_grad = false;
        bool grad_seen = false;
        std::function<void(Tape&, NodeId)> vjp;
    };

    NodeId leaf(Tensor<S> v, bool trainable) {
        Node n;
        n.op = Op::Leaf;
        n.value = std::move(v);
        n.needs_grad = trainable;
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    NodeId push(Op op, Tensor<S> v, bool needs_grad, std::function<void(Tape&, NodeId)> vjp) {
        Node n;
        n.op = op;
        n.value = std::move(v);
        n.needs_grad = needs_grad;
        n.vjp = std::move(vjp);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    const Tensor<S>& value(NodeId id) const { return nodes_[id].value; }
    Op op(NodeId id) const { return nodes_[id].op; }
    bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }
    int node_count() const { return static_cast<int>(nodes_.size()); }

    /// Gradient of the last backward() target w.r.t. node `id`. Nodes the
    /// sweep never reached (or that preceded it) report zeros.
    const Tensor<S>& grad(NodeId id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) n.grad = Tensor<S>(n.value.shape());
        return n.grad;
    }

    void accumulate(NodeId id, const Tensor<S>& g) {
        Node& n = nodes_[id];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0) n.grad = Tensor<S>(n.value.shape());
        n.grad.raw() += g.raw();
        n.grad_seen = true;
    }

    /// Reverse accumulation from a scalar loss node.
    void backward(NodeId loss) {
        if (nodes_[loss].value.size() != 1)
            throw UsageError("backward: loss node must be scalar");
        for (Node& n : nodes_) {
            n.grad = Tensor<S>();
            n.grad_seen = false;
        }
        Node& l = nodes_[loss];
        l.grad = Tensor<S>(l.value.shape());
        l.grad.raw()[0] = S(1);
        l.grad_seen = true;
        for (NodeId id = loss; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.grad_seen && n.vjp) n.vjp(*this, id);
        }
    }

private:
    std::vector<Node> nodes_;
};

namespace tape_ops {

template <typename S>
typename Tape<S>::NodeId conv2d(Tape<S>& t, int x, int w, int b, int stride, int pad) {
    auto value = ops::conv2d(t.value(x), t.value(w), t.value(b), stride, pad);
    bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
    return t.push(Tape<S>::Op::Conv2d, std::move(value), ng,
                  [x, w, b, stride, pad](Tape<S>& tp, int self) {
                      const Tensor<S>& gy = tp.grad(self);
                      const Tensor<S>& xv = tp.value(x);
                      const Tensor<S>& wv = tp.value(w);
                      if (tp.needs_grad(x))
                          tp.accumulate(x, ops::conv2d_input_grad(gy, wv, stride, pad,
                                                                  xv.extent(2), xv.extent(3)));
                      if (tp.needs_grad(w))
                          tp.accumulate(w, ops::conv2d_weight_grad(xv, gy, wv.extent(2),
                                                                   wv.extent(3), stride, pad));
                      if (tp.needs_grad(b)) tp.accumulate(b, ops::channel_sum(gy));
                  });
}

template <typename S>
typename Tape<S>::NodeId conv2d_transpose(Tape<S>& t, int x, int w, int b, int stride) {
    auto value = ops::conv2d_transpose(t.value(x), t.value(w), t.value(b), stride);
    bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
    return t.push(Tape<S>::Op::ConvTranspose2d, std::move(value), ng,
                  [x, w, b, stride](Tape<S>& tp, int self) {
                      const Tensor<S>& gy = tp.grad(self);
                      const Tensor<S>& xv = tp.value(x);
                      const Tensor<S>& wv = tp.value(w);
                      if (tp.needs_grad(x))
                          tp.accumulate(x, ops::conv2d_transpose_input_grad(gy, wv, stride));
                      if (tp.needs_grad(w))
                          tp.accumulate(w, ops::conv2d_transpose_weight_grad(
                                               xv, gy, wv.extent(2), wv.extent(3), stride));
                      if (tp.needs_grad(b)) tp.accumulate(b, ops::channel_sum(gy));
                  });
}

/// Frozen-statistics batch norm; mean/var are constants, not tape nodes.
template <typename S>
typename Tape<S>::NodeId batchnorm_infer(Tape<S>& t, int x, int scale, int shift,
                                         Tensor<S> mean, Tensor<S> var, S eps) {
    auto value = ops::batchnorm_infer(t.value(x), t.value(scale), t.value(shift), mean, var, eps);
    bool ng = t.needs_grad(x) || t.needs_grad(scale) || t.needs_grad(shift);
    return t.push(Tape<S>::Op::BnInfer, std::move(value), ng,
                  [x, scale, shift, mean = std::move(mean), var = std::move(var), eps](
                      Tape<S>& tp, int self) {
                      const Tensor<S>& gy = tp.grad(self);
                      const Tensor<S>& xv = tp.value(x);
                      const Tensor<S>& sc = tp.value(scale);
                      const int N = xv.extent(0), C = xv.extent(1);
                      const std::int64_t plane =
                          static_cast<std::int64_t>(xv.extent(2)) * xv.extent(3);
                      Tensor<S> gx(xv.shape()), gscale({C}), gshift({C});
                      for (int c = 0; c < C; ++c) {
                          const S inv = S(1) / std::sqrt(var[c] + eps);
                          for (int n = 0; n < N; ++n) {
                              const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * plane;
                              Eigen::Map<const ArrX<S>> gys(gy.data() + off, plane);
                              Eigen::Map<const ArrX<S>> xs(xv.data() + off, plane);
                              Eigen::Map<ArrX<S>> gxs(gx.data() + off, plane);
                              gxs = gys * sc[c] * inv;
                              gscale[c] += (gys * (xs - mean[c]) * inv).sum();
                              gshift[c] += gys.sum();
                          }
                      }
                      if (tp.needs_grad(x)) tp.accumulate(x, gx);
                      if (tp.needs_grad(scale)) tp.accumulate(scale, gscale);
                      if (tp.needs_grad(shift)) tp.accumulate(shift, gshift);
                  });
}

/// Batch-statistics normalization for offline pre-training; the computed
/// statistics are exposed through `stats` for running-average updates.
template <typename S>
typename Tape<S>::NodeId batchnorm_train(Tape<S>& t, int x, int scale, int shift, S eps,
                                         ops::BatchNormStats<S>* stats_out = nullptr) {
    ops::BatchNormStats<S> stats;
    auto value = ops::batchnorm_train(t.value(x), t.value(scale), t.value(shift), eps, stats);
    if (stats_out) *stats_out = stats;
    bool ng = t.needs_grad(x) || t.needs_grad(scale) || t.needs_grad(shift);
    return t.push(Tape<S>::Op::BnTrain, std::move(value), ng,
                  [x, scale, shift, stats = std::move(stats), eps](Tape<S>& tp, int self) {
                      const Tensor<S>& gy = tp.grad(self);
                      const Tensor<S>& xv = tp.value(x);
                      const Tensor<S>& sc = tp.value(scale);
                      const int N = xv.extent(0), C = xv.extent(1);
                      const std::int64_t plane =
                          static_cast<std::int64_t>(xv.extent(2)) * xv.extent(3);
                      const S m = static_cast<S>(static_cast<std::int64_t>(N) * plane);
                      Tensor<S> gx(xv.shape()), gscale({C}), gshift({C});
                      ArrX<S> xhat(N * plane), gys_all(N * plane);
                      for (int c = 0; c < C; ++c) {
                          const S inv = S(1) / std::sqrt(stats.var[c] + eps);
                          for (int n = 0; n < N; ++n) {
                              const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * plane;
                              Eigen::Map<const ArrX<S>> xs(xv.data() + off, plane);
                              Eigen::Map<const ArrX<S>> gys(gy.data() + off, plane);
                              xhat.segment(n * plane, plane) = (xs - stats.mean[c]) * inv;
                              gys_all.segment(n * plane, plane) = gys;
                          }
                          const S sum_gy = gys_all.sum();
                          const S sum_gy_xhat = (gys_all * xhat).sum();
                          gscale[c] += sum_gy_xhat;
                          gshift[c] += sum_gy;
                          for (int n = 0; n < N; ++n) {
                              const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * plane;
                              Eigen::Map<ArrX<S>> gxs(gx.data() + off, plane);
                              gxs = (sc[c] * inv / m) *
                                    (m * gys_all.segment(n * plane, plane) - sum_gy -
                                     xhat.segment(n * plane, plane) * sum_gy_xhat);
                          }
                      }
                      if (tp.needs_grad(x)) tp.accumulate(x, gx);
                      if (tp.needs_grad(scale)) tp.accumulate(scale, gscale);
                      if (tp.needs_grad(shift)) tp.accumulate(shift, gshift);
                  });
}

template <typename S>
typename Tape<S>::NodeId leaky_relu(Tape<S>& t, int x, S slope) {
    auto value = ops::leaky_relu(t.value(x), slope);
    return t.push(Tape<S>::Op::LeakyRelu, std::move(value), t.needs_grad(x),
                  [x, slope](Tape<S>& tp, int self) {
                      if (tp.needs_grad(x))
                          tp.accumulate(x, ops::leaky_relu_grad(tp.value(x), tp.grad(self), slope));
                  });
}

template <typename S>
typename Tape<S>::NodeId concat_channels(Tape<S>& t, int a, int b) {
    auto value = ops::concat_channels(t.value(a), t.value(b));
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.push(Tape<S>::Op::Concat, std::move(value), ng,
                  [a, b](Tape<S>& tp, int self) {
                      const Tensor<S>& gy = tp.grad(self);
                      const int Ca = tp.value(a).extent(1);
                      const int Cb = tp.value(b).extent(1);
                      if (tp.needs_grad(a)) tp.accumulate(a, ops::slice_channels(gy, 0, Ca));
                      if (tp.needs_grad(b)) tp.accumulate(b, ops::slice_channels(gy, Ca, Cb));
                  });
}

template <typename S>
typename Tape<S>::NodeId clamp01(Tape<S>& t, int x) {
    auto value = ops::clamp01(t.value(x));
    return t.push(Tape<S>::Op::Clamp01, std::move(value), t.needs_grad(x),
                  [x](Tape<S>& tp, int self) {
                      if (tp.needs_grad(x))
                          tp.accumulate(x, ops::clamp01_grad(tp.value(x), tp.grad(self)));
                  });
}

/// Mean squared error between two equally shaped nodes; scalar output.
template <typename S>
typename Tape<S>::NodeId mse(Tape<S>& t, int a, int b) {
    const Tensor<S>& av = t.value(a);
    const Tensor<S>& bv = t.value(b);
    if (!av.same_shape(bv)) throw UsageError("mse: operand shapes differ");
    Tensor<S> value({1});
    const S n = static_cast<S>(av.size());
    value[0] = (av.raw() - bv.raw()).square().sum() / n;
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.push(Tape<S>::Op::Mse, std::move(value), ng, [a, b, n](Tape<S>& tp, int self) {
        const S g = tp.grad(self)[0];
        const Tensor<S>& av = tp.value(a);
        const Tensor<S>& bv = tp.value(b);
        Tensor<S> d(av.shape());
        d.raw() = (av.raw() - bv.raw()) * (S(2) * g / n);
        if (tp.needs_grad(a)) tp.accumulate(a, d);
        if (tp.needs_grad(b)) {
            d.raw() = -d.raw();
            tp.accumulate(b, d);
        }
    });
}

template <typename S>
typename Tape<S>::NodeId sum(Tape<S>& t, int x) {
    Tensor<S> value({1});
    value[0] = t.value(x).raw().sum();
    return t.push(Tape<S>::Op::Sum, std::move(value), t.needs_grad(x),
                  [x](Tape<S>& tp, int self) {
                      if (!tp.needs_grad(x)) return;
                      const S g = tp.grad(self)[0];
                      Tensor<S> d(tp.value(x).shape());
                      d.raw().setConstant(g);
                      tp.accumulate(x, d);
                  });
}

}  // namespace tape_ops
}  // namespace ntc
