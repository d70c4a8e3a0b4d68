#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "ntc/bundle.hpp"
#include "ntc/config.hpp"
#include "ntc/image.hpp"
#include "ntc/net.hpp"
#include "ntc/wu_codec.hpp"

// Orchestration: the pre-train / encode / decode / evaluate / sweep commands,
// the ".ntw" weights file, and rate/quality reporting.
//
// Rate accounting: bits-per-pixel always uses the ORIGINAL pixel count and
// PSNR is always computed at original (cropped) dimensions; the codec and the
// filter operate on the reflect-padded canvas (multiples of 16).

namespace ntc {

/// ".ntw" weights file: magic "NTW1", version u8=1, param count u32 LE,
/// running-stat count u32 LE, parameters f32 LE (WeightVector order), then
/// per block (forward order) running mean[Cout] and running var[Cout] f32 LE.
void write_weights_file(const std::string& path, const Network<float>& net);
Network<float> read_weights_file(const std::string& path, const NetConfig& cfg);

struct RateRow {
    std::string name;
    int width = 0, height = 0;  // original dimensions
    float q = 0;
    double image_bpp = 0;       // 8 * payload bytes / original pixels
    double psnr_codec = 0;
    double psnr_pretrained = 0;
    double psnr_finetuned = 0;
    bool budget_flagged = false;  // even q=512 exceeded the per-image budget
};

struct RateReport {
    std::vector<RateRow> rows;
    double total_bpp = 0;   // 8 * bundle bytes / sum of original pixels
    double update_bpp = 0;  // 8 * container bytes / sum of original pixels
    double mean_psnr_codec = 0;
    double mean_psnr_pretrained = 0;
    double mean_psnr_finetuned = 0;
    double delta_pretrained_minus_codec = 0;
    double delta_finetuned_minus_pretrained = 0;
    bool update_included = false;
    bool sweep_fallback = false;  // no sweep candidate fit the margin
    double sweep_tau = 0;
    int sweep_k = 0;

    void write_csv(std::ostream& os) const;
};

/// Run the filter over a padded decoded image under the given weights.
Image filter_image(const Network<float>& net, const Image& padded);

/// Deterministic (sorted) list of the .ppm files directly inside a directory.
std::vector<std::string> list_ppm_dir(const std::string& dir);

/// Degrade every training image through the block codec at config's
/// pretrain.q, pre-train on the (decoded, original) pairs, and write the
/// weights file. All training images must share one size.
void cmd_pretrain(const PipelineConfig& cfg, const std::string& train_dir,
                  const std::string& out_weights);

struct EncodeOutcome {
    Bundle bundle;
    RateReport report;
    SweepResult sweep;
    VecX<float> dw;  // raw fine-tune update, before compression
};

/// Per image: pick q by bisection against the per-image share of
/// (budget - margin - header overhead); fine-tune on the decoded/original
/// pairs; sweep the update under the margin; include the update only when it
/// fits and does not lose PSNR against the pre-trained baseline. The emitted
/// bundle never exceeds budget_bpp. Writes "<out_bundle>.report.csv" beside
/// the bundle.
EncodeOutcome cmd_encode(const PipelineConfig& cfg, const std::vector<std::string>& image_paths,
                         const std::string& weights_path, const std::string& out_bundle);

/// Decodes and filters every bundle image into out_dir (decoded_NNN.ppm and
/// filtered_NNN.ppm, padded dimensions). The weight-update, when present, is
/// applied to a copy; the pre-trained weights remain untouched for the next
/// bundle.
void cmd_decode(const PipelineConfig& cfg, const std::string& bundle_path,
                const std::string& weights_path, const std::string& out_dir);

/// Three-stage PSNR/bpp table (codec-only / pre-trained filter / fine-tuned
/// filter) against the original images, at original dimensions.
RateReport cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& original_paths,
                        const std::string& bundle_path, const std::string& weights_path);

/// Diagnostic sweep over the full (tau, k) grid; returns every candidate and
/// writes a CSV (tau, k, bpp, psnr, feasible) when out_csv is nonempty.
SweepResult cmd_sweep(const PipelineConfig& cfg, const std::vector<std::string>& image_paths,
                      const std::string& weights_path, const std::string& out_csv);

}  // namespace ntc
