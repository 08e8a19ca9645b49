#pragma once

#include <filesystem>
#include <string>

#include "mytm/backend.hpp"
#include "mytm/trainer.hpp"

namespace mytm {

// Flat, typed run configuration. Defaults -> config file -> flag overrides,
// in that order; the hash of the effective configuration is recorded into
// every artifact and is stable under key reordering in the file.
struct RunConfig {
    // backend selection
    std::string backend = "toy";
    std::uint64_t backend_seed = 1234;
    std::string real_backend_dir;

    // run identity
    std::uint64_t seed = 7;

    // training
    int iterations = 10000;
    std::string optimizer = "adam";
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int checkpoint_every = 1000;
    double p_extrapolate = 0.5;
    int reference_window_years = 3;

    LossWeights weights;
    AblationFlags flags;
    AdapterDims adapter_dims;

    /// Parses a flat JSON object; unknown keys are rejected with their names.
    static RunConfig from_file(const std::filesystem::path& path);
    /// Merges keys from a flat JSON object over the current values.
    void apply_json_text(const std::string& json_text);

    /// Canonical serialization of the effective configuration.
    std::string canonical_json() const;
    /// FNV-1a64 hex of canonical_json(); stable under key reordering.
    std::string hash() const;

    TrainingConfig training_config() const;
    BackendBundle make_bundle() const;
};

} // namespace mytm
