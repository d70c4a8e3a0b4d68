#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ntc/net.hpp"
#include "ntc/trainer.hpp"

// Flat key=value configuration covering the network, training, rate targets,
// and sweep grids. Unknown keys are rejected so typos fail loudly.

namespace ntc {

struct PipelineConfig {
    std::uint64_t seed = 1;

    NetConfig net;

    int pretrain_steps = 300;
    float pretrain_lr = 0.001f;
    float pretrain_q = 12.0f;  // codec strength used to synthesize training pairs
    float bn_momentum = 0.1f;

    FinetuneConfig<float> finetune;

    double budget_bpp = 0.60;   // total bundle budget B
    double margin_bpp = 0.10;   // weight-update margin M
    double rate_tol = 0.02;     // bisection tolerance, bpp

    std::vector<double> tau_grid{1e-5, 5e-4, 5e-3, 2e-2};
    std::vector<int> k_grid{4, 16, 64};

    void validate() const;
};

/// Parses `key = value` lines; '#' starts a comment, blank lines are
/// ignored. Later assignments override earlier ones. Unknown keys, malformed
/// lines, and out-of-range values raise ConfigError naming the line.
PipelineConfig parse_config_text(const std::string& text, const std::string& name);
PipelineConfig parse_config_file(const std::string& path);

/// The recognized keys with their default values, one per line (the
/// `--dump-config` output).
std::string default_config_text();

}  // namespace ntc
