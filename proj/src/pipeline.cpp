#include "ntc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ntc/bitio.hpp"
#include "ntc/block_codec.hpp"
#include "ntc/trainer.hpp"

namespace ntc {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open for reading");
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError(path + ": cannot open for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError(path + ": write failed");
}

std::int64_t stat_count(const Network<float>& net) {
    std::int64_t n = 0;
    for (const auto& blk : net.blocks) n += blk.bn_mean.size() + blk.bn_var.size();
    return n;
}

}  // namespace

void write_weights_file(const std::string& path, const Network<float>& net) {
    ByteWriter w;
    w.magic("NTW1");
    w.u8(1);
    const VecX<float> params = flatten_weights(net);
    w.u32(static_cast<std::uint32_t>(params.size()));
    w.u32(static_cast<std::uint32_t>(stat_count(net)));
    for (Eigen::Index i = 0; i < params.size(); ++i) w.f32(params[i]);
    for (const auto& blk : net.blocks) {
        for (std::int64_t i = 0; i < blk.bn_mean.size(); ++i) w.f32(blk.bn_mean[i]);
        for (std::int64_t i = 0; i < blk.bn_var.size(); ++i) w.f32(blk.bn_var[i]);
    }
    write_file(path, w.data());
}

Network<float> read_weights_file(const std::string& path, const NetConfig& cfg) {
    const auto bytes = read_file(path);
    ByteReader r(bytes.data(), bytes.size(), path);
    r.expect_magic("NTW1");
    const std::uint8_t version = r.u8();
    if (version != 1)
        throw DataError(path + ": unsupported weights version " + std::to_string(version));

    Network<float> net = build<float>(cfg, 0);  // seed irrelevant, all values overwritten
    const std::uint32_t n_params = r.u32();
    const std::uint32_t n_stats = r.u32();
    if (n_params != static_cast<std::uint32_t>(param_count(net)))
        r.fail("parameter count " + std::to_string(n_params) + " does not match the configured network (" +
               std::to_string(param_count(net)) + ")");
    if (n_stats != static_cast<std::uint32_t>(stat_count(net)))
        r.fail("running-stat count " + std::to_string(n_stats) + " does not match the configured network");

    VecX<float> params(n_params);
    for (std::uint32_t i = 0; i < n_params; ++i) params[i] = r.f32();
    unflatten_weights(net, params);
    for (auto& blk : net.blocks) {
        for (std::int64_t i = 0; i < blk.bn_mean.size(); ++i) blk.bn_mean[i] = r.f32();
        for (std::int64_t i = 0; i < blk.bn_var.size(); ++i) {
            blk.bn_var[i] = r.f32();
            if (blk.bn_var[i] < 0) r.fail("negative running variance");
        }
    }
    r.expect_end();
    return net;
}

void RateReport::write_csv(std::ostream& os) const {
    char buf[512];
    auto line = [&](const char* key, double v) {
        std::snprintf(buf, sizeof buf, "# %s=%.17g\n", key, v);
        os << buf;
    };
    line("total_bpp", total_bpp);
    line("update_bpp", update_bpp);
    line("mean_psnr_codec", mean_psnr_codec);
    line("mean_psnr_pretrained", mean_psnr_pretrained);
    line("mean_psnr_finetuned", mean_psnr_finetuned);
    line("delta_pretrained_minus_codec", delta_pretrained_minus_codec);
    line("delta_finetuned_minus_pretrained", delta_finetuned_minus_pretrained);
    os << "# update_included=" << (update_included ? 1 : 0) << "\n";
    os << "# sweep_fallback=" << (sweep_fallback ? 1 : 0) << "\n";
    line("sweep_tau", sweep_tau);
    os << "# sweep_k=" << sweep_k << "\n";
    os << "name,width,height,q,image_bpp,psnr_codec,psnr_pretrained,psnr_finetuned,budget_flagged\n";
    for (const RateRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%.9g,%.17g,%.17g,%.17g,%.17g,%d\n",
                      r.name.c_str(), r.width, r.height, static_cast<double>(r.q), r.image_bpp,
                      r.psnr_codec, r.psnr_pretrained, r.psnr_finetuned, r.budget_flagged ? 1 : 0);
        os << buf;
    }
}

Image filter_image(const Network<float>& net, const Image& padded) {
    return from_tensor(forward(net, to_tensor(padded)));
}

std::vector<std::string> list_ppm_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw UsageError(dir + ": not a directory");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".ppm")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    return paths;
}

namespace {

struct LoadedImage {
    std::string name;
    Image original;
    Image padded;  // reflect-padded to multiples of 16
};

std::vector<LoadedImage> load_images(const std::vector<std::string>& paths) {
    if (paths.empty()) throw UsageError("no input images given");
    std::vector<LoadedImage> out;
    for (const auto& p : paths) {
        LoadedImage li;
        li.name = std::filesystem::path(p).filename().string();
        li.original = read_ppm(p);
        li.padded = pad_to_multiple(li.original, 16);
        out.push_back(std::move(li));
    }
    return out;
}

/// Stacks same-size [0,1] tensors of (decoded, original) pairs for full-batch
/// training; mixed sizes are rejected.
void build_batch(const std::vector<LoadedImage>& images, const std::vector<Image>& decoded,
                 Tensor<float>& dec_batch, Tensor<float>& orig_batch) {
    const int W = decoded[0].width, H = decoded[0].height;
    for (size_t i = 0; i < images.size(); ++i)
        if (decoded[i].width != W || decoded[i].height != H)
            throw ConfigError("training requires images of one common size; got " +
                              std::to_string(decoded[i].width) + "x" +
                              std::to_string(decoded[i].height) + " alongside " +
                              std::to_string(W) + "x" + std::to_string(H));
    const int N = static_cast<int>(images.size());
    dec_batch = Tensor<float>({N, 3, H, W});
    orig_batch = Tensor<float>({N, 3, H, W});
    for (int n = 0; n < N; ++n) {
        const Tensor<float> d = to_tensor(decoded[static_cast<size_t>(n)]);
        const Tensor<float> o = to_tensor(images[static_cast<size_t>(n)].padded);
        std::copy(d.data(), d.data() + d.size(), dec_batch.data() + static_cast<std::int64_t>(n) * d.size());
        std::copy(o.data(), o.data() + o.size(), orig_batch.data() + static_cast<std::int64_t>(n) * o.size());
    }
}

double mean_psnr(const std::vector<double>& values) {
    double s = 0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

}  // namespace

void cmd_pretrain(const PipelineConfig& cfg, const std::string& train_dir,
                  const std::string& out_weights) {
    cfg.validate();
    const auto paths = list_ppm_dir(train_dir);
    if (paths.empty()) throw UsageError(train_dir + ": no .ppm training images found");
    const auto images = load_images(paths);

    std::vector<Image> decoded;
    for (const auto& li : images)
        decoded.push_back(decode_image(encode_image(li.padded, cfg.pretrain_q)));

    Tensor<float> dec_batch, orig_batch;
    build_batch(images, decoded, dec_batch, orig_batch);

    Network<float> net = build<float>(cfg.net, cfg.seed);
    pretrain(net, dec_batch, orig_batch, cfg.pretrain_steps, cfg.pretrain_lr, cfg.seed,
             cfg.bn_momentum);
    write_weights_file(out_weights, net);
}

namespace {

EncodeOutcome encode_core(const PipelineConfig& cfg, const std::vector<std::string>& image_paths,
                          const std::string& weights_path) {
    cfg.validate();
    const auto images = load_images(image_paths);
    Network<float> net = read_weights_file(weights_path, cfg.net);
    const VecX<float> w0 = flatten_weights(net);

    std::int64_t total_pixels = 0;
    for (const auto& li : images) total_pixels += li.original.pixels();
    const int n_img = static_cast<int>(images.size());
    // Bundle framing: header (8 bytes) plus a u32 length per payload,
    // including the optional update payload. Reserving it up front keeps the
    // budget a hard guarantee whether or not the update ships.
    const double overhead_bpp =
        8.0 * static_cast<double>(8 + 4 * n_img + 4) / static_cast<double>(total_pixels);
    const double image_share_bpp = cfg.budget_bpp - cfg.margin_bpp - overhead_bpp;
    if (image_share_bpp <= 0)
        throw ConfigError("encode: budget minus margin leaves no room for image payloads");

    EncodeOutcome out;
    RateReport& rep = out.report;
    std::vector<Image> decoded;
    for (const auto& li : images) {
        // Per-image bit budget scales with the image's own pixel share; the
        // codec sees a padded canvas, so re-express the target in its terms.
        const double bit_budget = image_share_bpp * static_cast<double>(li.original.pixels());
        const double padded_pixels = static_cast<double>(li.padded.pixels());
        QChoice choice =
            choose_q_for_bpp(li.padded, bit_budget / padded_pixels,
                             cfg.rate_tol * static_cast<double>(li.original.pixels()) / padded_pixels);
        decoded.push_back(decode_image(choice.encoded));

        RateRow row;
        row.name = li.name;
        row.width = li.original.width;
        row.height = li.original.height;
        row.q = choice.q;
        row.image_bpp = 8.0 * static_cast<double>(choice.encoded.size()) /
                        static_cast<double>(li.original.pixels());
        row.psnr_codec = psnr(crop(decoded.back(), li.original.width, li.original.height), li.original);
        row.budget_flagged = choice.flagged;
        rep.rows.push_back(row);
        out.bundle.images.push_back(std::move(choice.encoded));
    }

    Tensor<float> dec_batch, orig_batch;
    build_batch(images, decoded, dec_batch, orig_batch);
    FinetuneResult<float> ft = finetune(net, w0, dec_batch, orig_batch, cfg.finetune, cfg.seed);
    out.dw = ft.delta;

    // Mean filtered PSNR (at original dimensions) under a candidate weight
    // vector; shared by the sweep and the report columns.
    Network<float> eval_net = read_weights_file(weights_path, cfg.net);
    auto eval_psnr = [&](const VecX<float>& w) {
        unflatten_weights(eval_net, w);
        std::vector<double> vals;
        for (size_t i = 0; i < images.size(); ++i) {
            const Image filtered = filter_image(eval_net, decoded[i]);
            vals.push_back(psnr(crop(filtered, images[i].original.width, images[i].original.height),
                                images[i].original));
        }
        return mean_psnr(vals);
    };

    out.sweep = sweep(out.dw, w0, cfg.tau_grid, cfg.k_grid, cfg.margin_bpp, total_pixels, eval_psnr);
    const double baseline_psnr = eval_psnr(w0);

    // Ship the update only when it fits the margin and does not lose PSNR
    // against the pre-trained baseline.
    const bool include = out.sweep.has_update && out.sweep.psnr >= baseline_psnr;
    rep.sweep_fallback = !out.sweep.has_update;
    rep.update_included = include;
    if (include) {
        out.bundle.has_update = true;
        out.bundle.update = out.sweep.container;
        rep.sweep_tau = out.sweep.tau;
        rep.sweep_k = out.sweep.k;
        rep.update_bpp = 8.0 * static_cast<double>(out.bundle.update.size()) /
                         static_cast<double>(total_pixels);
    }

    // Per-image three-stage PSNR columns.
    unflatten_weights(eval_net, w0);
    VecX<float> w_rec = w0;
    if (include) w_rec = apply_update(w0, deserialize_update(out.bundle.update));
    for (size_t i = 0; i < images.size(); ++i) {
        const Image pre = filter_image(eval_net, decoded[i]);
        rep.rows[i].psnr_pretrained =
            psnr(crop(pre, images[i].original.width, images[i].original.height), images[i].original);
    }
    if (include) {
        unflatten_weights(eval_net, w_rec);
        for (size_t i = 0; i < images.size(); ++i) {
            const Image fin = filter_image(eval_net, decoded[i]);
            rep.rows[i].psnr_finetuned =
                psnr(crop(fin, images[i].original.width, images[i].original.height), images[i].original);
        }
    } else {
        for (auto& row : rep.rows) row.psnr_finetuned = row.psnr_pretrained;
    }

    std::vector<double> c, p, f;
    for (const auto& row : rep.rows) {
        c.push_back(row.psnr_codec);
        p.push_back(row.psnr_pretrained);
        f.push_back(row.psnr_finetuned);
    }
    rep.mean_psnr_codec = mean_psnr(c);
    rep.mean_psnr_pretrained = mean_psnr(p);
    rep.mean_psnr_finetuned = mean_psnr(f);
    rep.delta_pretrained_minus_codec = rep.mean_psnr_pretrained - rep.mean_psnr_codec;
    rep.delta_finetuned_minus_pretrained = rep.mean_psnr_finetuned - rep.mean_psnr_pretrained;

    const auto bundle_bytes = serialize_bundle(out.bundle);
    rep.total_bpp = 8.0 * static_cast<double>(bundle_bytes.size()) / static_cast<double>(total_pixels);
    write_file(out_bundle, bundle_bytes);
    std::ofstream report_file(out_bundle + ".report.csv");
    if (!report_file) throw DataError(out_bundle + ".report.csv: cannot open for writing");
    rep.write_csv(report_file);
    return out;
}

void cmd_decode(const PipelineConfig& cfg, const std::string& bundle_path,
                const std::string& weights_path, const std::string& out_dir) {
    cfg.validate();
    const Bundle bundle = parse_bundle(read_file(bundle_path));
    Network<float> net = read_weights_file(weights_path, cfg.net);
    const VecX<float> w0 = flatten_weights(net);

    // The update applies to a copy; w0 itself stays the operative baseline.
    if (bundle.has_update) unflatten_weights(net, apply_update(w0, deserialize_update(bundle.update)));

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    char name[64];
    for (size_t i = 0; i < bundle.images.size(); ++i) {
        const Image dec = decode_image(bundle.images[i]);
        std::snprintf(name, sizeof name, "decoded_%03zu.ppm", i);
        write_ppm(dec, (fs::path(out_dir) / name).string());
        const Image filt = filter_image(net, dec);
        std::snprintf(name, sizeof name, "filtered_%03zu.ppm", i);
        write_ppm(filt, (fs::path(out_dir) / name).string());
    }
}

RateReport cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& original_paths,
                        const std::string& bundle_path, const std::string& weights_path) {
    cfg.validate();
    const Bundle bundle = parse_bundle(read_file(bundle_path));
    const auto originals = load_images(original_paths);
    if (originals.size() != bundle.images.size())
        throw UsageError("evaluate: " + std::to_string(originals.size()) + " originals for " +
                         std::to_string(bundle.images.size()) + " bundle images");

    Network<float> net = read_weights_file(weights_path, cfg.net);
    const VecX<float> w0 = flatten_weights(net);
    VecX<float> w_rec = w0;
    if (bundle.has_update) w_rec = apply_update(w0, deserialize_update(bundle.update));

    RateReport rep;
    rep.update_included = bundle.has_update;
    std::int64_t total_pixels = 0;
    for (const auto& li : originals) total_pixels += li.original.pixels();

    Network<float> fin_net = read_weights_file(weights_path, cfg.net);
    unflatten_weights(fin_net, w_rec);
    for (size_t i = 0; i < originals.size(); ++i) {
        const Image dec = decode_image(bundle.images[i]);
        const auto& orig = originals[i].original;
        if (dec.width < orig.width || dec.height < orig.height)
            throw DataError("evaluate: bundle image " + std::to_string(i) +
                            " is smaller than its original");
        RateRow row;
        row.name = originals[i].name;
        row.width = orig.width;
        row.height = orig.height;
        row.q = parse_encoded(bundle.images[i]).q;
        row.image_bpp = 8.0 * static_cast<double>(bundle.images[i].size()) /
                        static_cast<double>(orig.pixels());
        row.psnr_codec = psnr(crop(dec, orig.width, orig.height), orig);
        row.psnr_pretrained = psnr(crop(filter_image(net, dec), orig.width, orig.height), orig);
        row.psnr_finetuned =
            bundle.has_update ? psnr(crop(filter_image(fin_net, dec), orig.width, orig.height), orig)
                              : row.psnr_pretrained;
        rep.rows.push_back(std::move(row));
    }

    std::vector<double> c, p, f;
    for (const auto& row : rep.rows) {
        c.push_back(row.psnr_codec);
        p.push_back(row.psnr_pretrained);
        f.push_back(row.psnr_finetuned);
    }
    rep.mean_psnr_codec = mean_psnr(c);
    rep.mean_psnr_pretrained = mean_psnr(p);
    rep.mean_psnr_finetuned = mean_psnr(f);
    rep.delta_pretrained_minus_codec = rep.mean_psnr_pretrained - rep.mean_psnr_codec;
    rep.delta_finetuned_minus_pretrained = rep.mean_psnr_finetuned - rep.mean_psnr_pretrained;
    rep.update_bpp = bundle.has_update ? 8.0 * static_cast<double>(bundle.update.size()) /
                                             static_cast<double>(total_pixels)
                                       : 0.0;
    rep.total_bpp = 8.0 * static_cast<double>(bundle.total_bytes()) / static_cast<double>(total_pixels);
    return rep;
}

SweepResult cmd_sweep(const PipelineConfig& cfg, const std::vector<std::string>& image_paths,
                      const std::string& weights_path, const std::string& out_csv) {
    cfg.validate();
    const std::string tmp_bundle = out_csv.empty() ? "sweep.tmp.ntb" : out_csv + ".tmp.ntb";
    EncodeOutcome enc = cmd_encode(cfg, image_paths, weights_path, tmp_bundle);
    std::filesystem::remove(tmp_bundle);
    std::filesystem::remove(tmp_bundle + ".report.csv");

    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        if (!f) throw DataError(out_csv + ": cannot open for writing");
        f << "tau,k,bpp,psnr,feasible\n";
        char buf[256];
        for (const auto& cand : enc.sweep.grid) {
            std::snprintf(buf, sizeof buf, "%.9g,%d,%.17g,%.17g,%d\n", cand.tau, cand.k, cand.bpp,
                          cand.psnr, cand.feasible ? 1 : 0);
            f << buf;
        }
    }
    return enc.sweep;
}

}  // namespace ntc
