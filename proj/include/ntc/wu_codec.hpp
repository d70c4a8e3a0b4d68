#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ntc/tensor.hpp"

// Post-training compression of a weight-update: threshold pruning, exact 1-D
// k-means quantization, the ".wud" container (mask + bit-packed labels +
// codebook, DEFLATE-compressed), decoder-side reconstruction, and the
// (tau, k) sweep under a bitrate budget.

namespace ntc {

struct PrunedUpdate {
    std::int64_t n = 0;               // total weight count
    std::vector<std::uint8_t> mask;   // n entries, 1 = retained
    std::vector<float> values;        // retained entries, ascending index order
    float tau = 0;
};

/// Zeroes entries with |v| < tau (values exactly at tau are retained).
PrunedUpdate prune(const VecX<float>& dw, float tau);

struct KMeans1DResult {
    std::vector<std::uint32_t> labels;  // one per input value
    std::vector<double> centroids;      // strictly increasing
    double sse = 0;                     // within-cluster squared error, globally minimal
};

/// Exact (globally optimal) 1-D k-means: optimal clusters are contiguous in
/// sorted order, so dynamic programming over the sorted distinct values finds
/// the global SSE minimum. If the distinct-value count is <= k, the result is
/// lossless and k shrinks to the distinct count.
KMeans1DResult kmeans1d(const std::vector<double>& values, int k);

struct Codebook {
    std::vector<float> centroids;  // strictly increasing
    int k() const { return static_cast<int>(centroids.size()); }
};

struct QuantizedUpdate {
    std::vector<std::uint32_t> labels;  // one per retained value
    Codebook codebook;
};

/// kmeans1d over the retained values only; zeros are never quantized. An
/// empty retained set yields k=0 (the empty-update container). Centroids that
/// collide after 32-bit rounding are merged so the stored codebook stays
/// strictly increasing.
QuantizedUpdate quantize(const PrunedUpdate& p, int k);

/// Container layout (".wud"): magic "WUD1" stored raw, then a raw-DEFLATE
/// stream of: version u8=1, n u32 LE, nz u32 LE, k u16 LE, mask ceil(n/8)
/// bytes (LSB-first, WeightVector index order), labels at ceil(log2 k) bits
/// each (LSB-first packing, width 0 when k <= 1), codebook k * f32 LE.
std::vector<std::uint8_t> serialize_update(const PrunedUpdate& p, const QuantizedUpdate& q);

struct DecodedUpdate {
    std::int64_t n = 0;
    std::int64_t nz = 0;
    std::vector<std::uint8_t> mask;     // n entries, 0/1
    std::vector<std::uint32_t> labels;  // nz entries
    Codebook codebook;
};

DecodedUpdate deserialize_update(const std::vector<std::uint8_t>& bytes);

/// Size in bytes of the pre-DEFLATE container body (without the 4-byte
/// magic); the basis of the size-formula check.
std::int64_t container_body_size(std::int64_t n, std::int64_t nz, int k);

/// w_rec[i] = w_0[i] + (mask[i] ? centroid_of_label : 0); w_0 is unmodified,
/// so decoder reset is simply retaining w_0.
VecX<float> apply_update(const VecX<float>& w0, const DecodedUpdate& u);

/// Convenience: prune + quantize + serialize in one call.
std::vector<std::uint8_t> encode_update(const VecX<float>& dw, float tau, int k);

struct SweepCandidate {
    double tau = 0;
    int k = 0;          // requested grid k (the codebook may be smaller)
    double bpp = 0;     // 8 * container bytes / pixel_count
    double psnr = 0;    // mean PSNR of the filtered eval set
    bool feasible = false;
    std::vector<std::uint8_t> container;
};

struct SweepResult {
    bool has_update = false;  // false = fallback to the pre-trained network
    double tau = 0;
    int k = 0;
    double bpp = 0;
    double psnr = 0;                       // fallback: baseline (w_0) PSNR
    std::vector<std::uint8_t> container;   // empty on fallback
    std::vector<SweepCandidate> grid;      // every evaluated candidate, grid order
};

/// Evaluates every (tau, k) grid point: compress, reconstruct w_0 + update,
/// score with eval_psnr (mean PSNR of the filtered evaluation set under the
/// reconstructed weights). Picks the highest-PSNR candidate whose container
/// bpp fits the budget; ties broken by smaller bpp, then smaller k, then
/// larger tau. With no feasible candidate, returns the flagged empty-update
/// fallback scored at w_0.
SweepResult sweep(const VecX<float>& dw, const VecX<float>& w0,
                  const std::vector<double>& tau_grid, const std::vector<int>& k_grid,
                  double budget_bpp, std::int64_t pixel_count,
                  const std::function<double(const VecX<float>&)>& eval_psnr);

}  // namespace ntc
