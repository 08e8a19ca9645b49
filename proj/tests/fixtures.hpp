#pragma once

#include <map>

#include "mytm/synth.hpp"
#include "mytm/toy_backend.hpp"
#include "mytm/trainer.hpp"
#include "test_util.hpp"

namespace mytm::test {

/// 12 train photos over ages 30-70 plus reference/test splits; built once per
/// process under a caller-chosen name so parallel test binaries don't clash.
inline const AgedPhotoCollection& shared_collection(const std::string& tag = "unit") {
    static std::map<std::string, AgedPhotoCollection> cache;
    auto it = cache.find(tag);
    if (it == cache.end()) {
        const auto dir = scratch_dir("fixture_" + tag);
        it = cache.emplace(tag, write_synth_dataset(dir, SynthDatasetSpec{})).first;
    }
    return it->second;
}

inline BackendBundle shared_bundle() { return make_backend("toy", ToyBackend::kDefaultSeed); }

/// Fast training configuration: width-reduced adapter, stronger learning
/// rate, frequent checkpoints.
inline TrainingConfig fast_config(int iterations, std::uint64_t seed = 7) {
    TrainingConfig cfg;
    cfg.iterations = iterations;
    cfg.learning_rate = 1e-3;
    cfg.seed = seed;
    cfg.checkpoint_every = std::max(1, iterations / 2);
    cfg.adapter_dims = AdapterDims{16, 4, 32};
    cfg.config_hash = "testhash";
    return cfg;
}

} // namespace mytm::test
