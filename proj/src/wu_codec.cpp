#include "ntc/wu_codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "ntc/bitio.hpp"
#include "ntc/deflate.hpp"

namespace ntc {

PrunedUpdate prune(const VecX<float>& dw, float tau) {
    if (tau < 0) throw UsageError("prune: tau must be >= 0");
    PrunedUpdate p;
    p.n = dw.size();
    p.tau = tau;
    p.mask.assign(static_cast<size_t>(p.n), 0);
    for (Eigen::Index i = 0; i < dw.size(); ++i) {
        if (std::abs(dw[i]) >= tau) {
            p.mask[static_cast<size_t>(i)] = 1;
            p.values.push_back(dw[i]);
        }
    }
    return p;
}

namespace {

// Weighted within-cluster squared error of distinct values [i, j] from
// prefix sums; clamped against tiny negative rounding.
struct Prefix {
    std::vector<double> w, s, ss;  // weight, sum, square sum
    double cost(int i, int j) const {
        const double cw = w[j + 1] - w[i];
        const double cs = s[j + 1] - s[i];
        const double css = ss[j + 1] - ss[i];
        const double c = css - cs * cs / cw;
        return c > 0 ? c : 0;
    }
    double mean(int i, int j) const { return (s[j + 1] - s[i]) / (w[j + 1] - w[i]); }
};

// Fills row[j] = min over i in [c-1, j] of prev[i-1] + cost(i, j) for
// j in [lo, hi], exploiting that the optimal split index is monotone in j.
void dp_layer(const Prefix& pf, const std::vector<double>& prev, int c, int lo, int hi,
              int opt_lo, int opt_hi, std::vector<double>& row, std::vector<int>& opt) {
    if (lo > hi) return;
    const int mid = lo + (hi - lo) / 2;
    double best = std::numeric_limits<double>::infinity();
    int besti = -1;
    const int i_lo = std::max(c - 1, opt_lo);
    const int i_hi = std::min(mid, opt_hi);
    for (int i = i_lo; i <= i_hi; ++i) {
        const double v = prev[i - 1] + pf.cost(i, mid);
        if (v < best) {
            best = v;
            besti = i;
        }
    }
    row[mid] = best;
    opt[mid] = besti;
    dp_layer(pf, prev, c, lo, mid - 1, opt_lo, besti, row, opt);
    dp_layer(pf, prev, c, mid + 1, hi, besti, opt_hi, row, opt);
}

}  // namespace

KMeans1DResult kmeans1d(const std::vector<double>& values, int k) {
    if (values.empty()) throw UsageError("kmeans1d: values must be nonempty");
    if (k < 1) throw UsageError("kmeans1d: k must be >= 1");

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> xs;
    std::vector<std::int64_t> cnt;
    for (size_t i = 0; i < sorted.size();) {
        size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        xs.push_back(sorted[i]);
        cnt.push_back(static_cast<std::int64_t>(j - i));
        i = j;
    }
    const int d = static_cast<int>(xs.size());
    const int kk = std::min(k, d);

    // Cluster boundaries: start[c] = first distinct index of cluster c.
    std::vector<int> start(static_cast<size_t>(kk));
    KMeans1DResult out;
    if (kk == d) {
        for (int i = 0; i < d; ++i) start[static_cast<size_t>(i)] = i;
        out.centroids = xs;
        out.sse = 0;
    } else {
        Prefix pf;
        pf.w.resize(static_cast<size_t>(d) + 1, 0);
        pf.s.resize(static_cast<size_t>(d) + 1, 0);
        pf.ss.resize(static_cast<size_t>(d) + 1, 0);
        for (int i = 0; i < d; ++i) {
            const double w = static_cast<double>(cnt[static_cast<size_t>(i)]);
            pf.w[i + 1] = pf.w[i] + w;
            pf.s[i + 1] = pf.s[i] + w * xs[static_cast<size_t>(i)];
            pf.ss[i + 1] = pf.ss[i] + w * xs[static_cast<size_t>(i)] * xs[static_cast<size_t>(i)];
        }

        std::vector<double> prev(static_cast<size_t>(d)), row(static_cast<size_t>(d));
        std::vector<std::vector<int>> opt(static_cast<size_t>(kk) + 1,
                                          std::vector<int>(static_cast<size_t>(d), 0));
        for (int j = 0; j < d; ++j) prev[static_cast<size_t>(j)] = pf.cost(0, j);
        for (int c = 2; c <= kk; ++c) {
            dp_layer(pf, prev, c, c - 1, d - 1, c - 1, d - 1, row, opt[static_cast<size_t>(c)]);
            std::swap(prev, row);
        }

        int j = d - 1;
        for (int c = kk; c >= 2; --c) {
            start[static_cast<size_t>(c - 1)] = opt[static_cast<size_t>(c)][static_cast<size_t>(j)];
            j = start[static_cast<size_t>(c - 1)] - 1;
        }
        start[0] = 0;
        out.centroids.resize(static_cast<size_t>(kk));
        out.sse = 0;
        for (int c = 0; c < kk; ++c) {
            const int lo = start[static_cast<size_t>(c)];
            const int hi = c + 1 < kk ? start[static_cast<size_t>(c + 1)] - 1 : d - 1;
            out.centroids[static_cast<size_t>(c)] = pf.mean(lo, hi);
            out.sse += pf.cost(lo, hi);
        }
    }

    // Label per input: distinct index -> cluster via the start boundaries.
    std::vector<std::uint32_t> dist_label(static_cast<size_t>(d));
    for (int c = 0, i = 0; i < d; ++i) {
        while (c + 1 < kk && start[static_cast<size_t>(c + 1)] <= i) ++c;
        dist_label[static_cast<size_t>(i)] = static_cast<std::uint32_t>(c);
    }
    out.labels.resize(values.size());
    for (size_t v = 0; v < values.size(); ++v) {
        const auto it = std::lower_bound(xs.begin(), xs.end(), values[v]);
        out.labels[v] = dist_label[static_cast<size_t>(it - xs.begin())];
    }
    return out;
}

QuantizedUpdate quantize(const PrunedUpdate& p, int k) {
    if (k < 1) throw UsageError("quantize: k must be >= 1");
    QuantizedUpdate out;
    if (p.values.empty()) return out;  // empty-update container: nz=0, k=0

    const KMeans1DResult km =
        kmeans1d(std::vector<double>(p.values.begin(), p.values.end()), k);
    // Cast to the stored 32-bit precision; adjacent centroids that collide
    // after rounding are merged so the codebook stays strictly increasing.
    std::vector<std::uint32_t> remap(km.centroids.size());
    for (size_t i = 0; i < km.centroids.size(); ++i) {
        const float f = static_cast<float>(km.centroids[i]);
        if (out.codebook.centroids.empty() || f != out.codebook.centroids.back())
            out.codebook.centroids.push_back(f);
        remap[i] = static_cast<std::uint32_t>(out.codebook.centroids.size() - 1);
    }
    out.labels.resize(km.labels.size());
    for (size_t i = 0; i < km.labels.size(); ++i) out.labels[i] = remap[km.labels[i]];
    return out;
}

namespace {

int label_width(int k) { return k <= 1 ? 0 : static_cast<int>(std::bit_width(static_cast<unsigned>(k - 1))); }

}  // namespace

std::int64_t container_body_size(std::int64_t n, std::int64_t nz, int k) {
    const std::int64_t header = 1 + 4 + 4 + 2;  // version, n, nz, k
    const std::int64_t mask_bytes = (n + 7) / 8;
    const std::int64_t label_bytes = (nz * label_width(k) + 7) / 8;
    return header + mask_bytes + label_bytes + 4LL * k;
}

std::vector<std::uint8_t> serialize_update(const PrunedUpdate& p, const QuantizedUpdate& q) {
    const std::int64_t nz = static_cast<std::int64_t>(p.values.size());
    const int k = q.codebook.k();
    if (static_cast<std::int64_t>(q.labels.size()) != nz)
        throw UsageError("serialize_update: label count does not match retained count");
    if ((nz == 0) != (k == 0))
        throw UsageError("serialize_update: empty update must have k=0, nonempty k>=1");
    if (k > 65535) throw UsageError("serialize_update: k exceeds 65535");
    if (p.n > static_cast<std::int64_t>(std::numeric_limits<std::uint32_t>::max()) || nz > p.n)
        throw UsageError("serialize_update: weight count out of range");
    if (static_cast<std::int64_t>(p.mask.size()) != p.n)
        throw UsageError("serialize_update: mask length does not match n");

    ByteWriter body;
    body.u8(1);
    body.u32(static_cast<std::uint32_t>(p.n));
    body.u32(static_cast<std::uint32_t>(nz));
    body.u16(static_cast<std::uint16_t>(k));

    BitWriter mask_bits;
    std::int64_t popcount = 0;
    for (std::int64_t i = 0; i < p.n; ++i) {
        mask_bits.put_bit(p.mask[static_cast<size_t>(i)] != 0);
        popcount += p.mask[static_cast<size_t>(i)] != 0;
    }
    if (popcount != nz) throw UsageError("serialize_update: mask popcount does not match retained count");
    body.bytes(mask_bits.bytes());

    const int width = label_width(k);
    BitWriter label_bits;
    for (std::uint32_t label : q.labels) {
        if (label >= static_cast<std::uint32_t>(k))
            throw UsageError("serialize_update: label " + std::to_string(label) + " out of range");
        label_bits.put_bits(label, width);
    }
    body.bytes(label_bits.bytes());

    for (size_t i = 0; i < q.codebook.centroids.size(); ++i) {
        if (i > 0 && !(q.codebook.centroids[i] > q.codebook.centroids[i - 1]))
            throw UsageError("serialize_update: codebook not strictly increasing");
        body.f32(q.codebook.centroids[i]);
    }

    ByteWriter out;
    out.magic("WUD1");
    out.bytes(deflate_bytes(body.data()));
    return out.take();
}

DecodedUpdate deserialize_update(const std::vector<std::uint8_t>& bytes) {
    ByteReader outer(bytes.data(), bytes.size(), "weight-update container");
    outer.expect_magic("WUD1");
    const std::vector<std::uint8_t> body = inflate_bytes(outer.cursor(), outer.remaining());

    ByteReader r(body.data(), body.size(), "weight-update body");
    const std::uint8_t version = r.u8();
    if (version != 1)
        throw DataError("weight-update body: unsupported version " + std::to_string(version) +
                        " at offset 0");
    DecodedUpdate u;
    u.n = r.u32();
    u.nz = r.u32();
    const int k = r.u16();
    if (u.nz > u.n) r.fail("retained count " + std::to_string(u.nz) + " exceeds weight count " +
                           std::to_string(u.n));
    if ((u.nz == 0) != (k == 0))
        r.fail("inconsistent nz=" + std::to_string(u.nz) + " with k=" + std::to_string(k));

    const auto mask_bytes = r.bytes(static_cast<size_t>((u.n + 7) / 8));
    u.mask.assign(static_cast<size_t>(u.n), 0);
    std::int64_t popcount = 0;
    {
        BitReader mb(mask_bytes.data(), mask_bytes.size());
        for (std::int64_t i = 0; i < u.n; ++i) {
            u.mask[static_cast<size_t>(i)] = mb.get_bit() ? 1 : 0;
            popcount += u.mask[static_cast<size_t>(i)];
        }
    }
    if (popcount != u.nz)
        r.fail("mask popcount " + std::to_string(popcount) + " does not match retained count " +
               std::to_string(u.nz));

    const int width = label_width(k);
    const auto label_bytes = r.bytes(static_cast<size_t>((u.nz * width + 7) / 8));
    {
        BitReader lb(label_bytes.data(), label_bytes.size());
        u.labels.resize(static_cast<size_t>(u.nz));
        for (std::int64_t i = 0; i < u.nz; ++i) {
            const std::uint64_t label = lb.get_bits(width);
            if (label >= static_cast<std::uint64_t>(k))
                r.fail("label " + std::to_string(label) + " out of range for k=" + std::to_string(k));
            u.labels[static_cast<size_t>(i)] = static_cast<std::uint32_t>(label);
        }
    }

    u.codebook.centroids.resize(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        const float c = r.f32();
        if (!std::isfinite(c)) r.fail("non-finite codebook entry " + std::to_string(i));
        if (i > 0 && !(c > u.codebook.centroids[static_cast<size_t>(i - 1)]))
            r.fail("codebook not strictly increasing at entry " + std::to_string(i));
        u.codebook.centroids[static_cast<size_t>(i)] = c;
    }
    r.expect_end();
    return u;
}

VecX<float> apply_update(const VecX<float>& w0, const DecodedUpdate& u) {
    if (u.n != w0.size())
        throw DataError("apply_update: container weight count " + std::to_string(u.n) +
                        " does not match network parameter count " + std::to_string(w0.size()));
    VecX<float> w = w0;
    std::int64_t cursor = 0;
    for (std::int64_t i = 0; i < u.n; ++i) {
        if (!u.mask[static_cast<size_t>(i)]) continue;
        w[i] += u.codebook.centroids[u.labels[static_cast<size_t>(cursor)]];
        ++cursor;
    }
    return w;
}

std::vector<std::uint8_t> encode_update(const VecX<float>& dw, float tau, int k) {
    const PrunedUpdate p = prune(dw, tau);
    const QuantizedUpdate q = quantize(p, k);
    return serialize_update(p, q);
}

namespace {

DecodedUpdate as_decoded(const PrunedUpdate& p, const QuantizedUpdate& q) {
    DecodedUpdate u;
    u.n = p.n;
    u.nz = static_cast<std::int64_t>(p.values.size());
    u.mask = p.mask;
    u.labels = q.labels;
    u.codebook = q.codebook;
    return u;
}

bool candidate_better(const SweepCandidate& a, const SweepCandidate& b) {
    if (a.psnr != b.psnr) return a.psnr > b.psnr;
    if (a.bpp != b.bpp) return a.bpp < b.bpp;
    if (a.k != b.k) return a.k < b.k;
    return a.tau > b.tau;
}

}  // namespace

SweepResult sweep(const VecX<float>& dw, const VecX<float>& w0,
                  const std::vector<double>& tau_grid, const std::vector<int>& k_grid,
                  double budget_bpp, std::int64_t pixel_count,
                  const std::function<double(const VecX<float>&)>& eval_psnr) {
    if (tau_grid.empty() || k_grid.empty()) throw UsageError("sweep: grids must be nonempty");
    if (pixel_count <= 0) throw UsageError("sweep: pixel count must be > 0");
    if (dw.size() != w0.size()) throw UsageError("sweep: weight vector lengths differ");

    SweepResult result;
    const SweepCandidate* best = nullptr;
    for (double tau : tau_grid) {
        const PrunedUpdate p = prune(dw, static_cast<float>(tau));
        for (int k : k_grid) {
            const QuantizedUpdate q = quantize(p, k);
            SweepCandidate cand;
            cand.tau = tau;
            cand.k = k;
            cand.container = serialize_update(p, q);
            cand.bpp = 8.0 * static_cast<double>(cand.container.size()) /
                       static_cast<double>(pixel_count);
            cand.psnr = eval_psnr(apply_update(w0, as_decoded(p, q)));
            cand.feasible = cand.bpp <= budget_bpp;
            result.grid.push_back(std::move(cand));
        }
    }
    for (const SweepCandidate& c : result.grid)
        if (c.feasible && (!best || candidate_better(c, *best))) best = &c;

    if (best) {
        result.has_update = true;
        result.tau = best->tau;
        result.k = best->k;
        result.bpp = best->bpp;
        result.psnr = best->psnr;
        result.container = best->container;
    } else {
        result.has_update = false;
        result.psnr = eval_psnr(w0);
    }
    return result;
}

}  // namespace ntc
