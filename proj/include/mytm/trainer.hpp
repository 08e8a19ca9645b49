#pragma once

#include <filesystem>
#include <memory>
#include <unordered_map>

#include "mytm/adapter.hpp"
#include "mytm/corpus.hpp"
#include "mytm/losses.hpp"

namespace mytm {

struct TrainingConfig {
    int iterations = 10000;
    std::string optimizer = "adam";
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LossWeights weights;
    double p_extrapolate = 0.5;
    std::uint64_t seed = 7;
    int checkpoint_every = 1000;
    int reference_window_years = 3;
    AblationFlags flags;
    AdapterDims adapter_dims;
    std::string backend_name = "toy";
    std::string config_hash; // recorded into every artifact

    void validate() const;
};

/// Adam with bias correction; state is serializable bit-for-bit so a resumed
/// run continues the exact parameter trajectory.
class AdamOptimizer {
public:
    void ensure_initialized(const std::vector<std::pair<std::string, Eigen::MatrixXd*>>& params);
    void step(std::vector<std::pair<std::string, Eigen::MatrixXd*>>& params,
              const std::vector<Eigen::MatrixXd>& grads, const TrainingConfig& cfg);

    void save(std::ostream& os) const;
    void load(std::istream& is);
    long step_count() const { return t_; }

private:
    long t_ = 0;
    std::vector<Eigen::MatrixXd> m_, v_;
};

/// Shared loader cache; collections are small enough to pin in memory.
class ImageCache {
public:
    const ImageTensor& get(const std::filesystem::path& path, const BackendBundle& bundle);

private:
    std::unordered_map<std::string, ImageTensor> cache_;
};

/// Tape construction of the full per-step objective; returns the scalar total
/// and an itemized report reading the same tape values. Exposed so gradient
/// checks can drive the exact training graph.
struct TapeStepLoss {
    diff::Var total;
    LossReport report;
};
TapeStepLoss tape_total_personalization_loss(diff::Tape& tape, const BackendBundle& bundle,
                                             const AdapterNetwork& net,
                                             const AdapterNetwork::TapeParams& params,
                                             const ImageTensor& x, const StepContext& ctx,
                                             const LossWeights& w, const AblationFlags& flags);

// Personalization training loop: per iteration it samples a training photo
// and a target age, runs the personalized forward pass, the cycle pass and
// (with probability p_extrapolate) the replay branch, aggregates the losses
// and applies one optimizer update. Single logical writer over parameters.
class Trainer {
public:
    Trainer(BackendBundle bundle, AgedPhotoCollection collection, TrainingConfig config);

    /// One iteration. On backend failure the step aborts with state unchanged.
    LossReport step();

    long iteration() const { return iteration_; }
    const AdapterNetwork& adapter() const { return adapter_; }
    AdapterNetwork& adapter() { return adapter_; }
    const TrainingConfig& config() const { return config_; }
    const AgedPhotoCollection& collection() const { return collection_; }

    /// Runs to config.iterations, appending to <out_dir>/losses.csv and
    /// writing periodic checkpoints <out_dir>/ckpt_<iter>/. Returns the last
    /// checkpoint directory. `stop_after` halts early at the given iteration
    /// (the determinism harness uses it to emulate an interrupted run).
    std::filesystem::path train(const std::filesystem::path& out_dir,
                                std::optional<long> stop_after = std::nullopt);

    void save_checkpoint(const std::filesystem::path& dir) const;
    /// Restores adapter, optimizer moments and RNG state from a checkpoint.
    void restore_checkpoint(const std::filesystem::path& dir);

private:
    StepContext make_context(const PhotoRecord& rec, AgeYears target_age,
                             std::optional<AgeYears> extrapolation_age);

    BackendBundle bundle_;
    AgedPhotoCollection collection_;
    TrainingConfig config_;
    AdapterNetwork adapter_;
    AdamOptimizer optimizer_;
    Rng rng_;
    long iteration_ = 0;
    ImageCache images_;
};

/// Loads just the adapter from a checkpoint directory (inference-side use).
AdapterNetwork load_checkpoint_adapter(const std::filesystem::path& dir);

/// Reads the metadata JSON of a checkpoint; verifies content hashes.
struct CheckpointMeta {
    double age_min = 0.0;
    double age_max = 0.0;
    long iteration = 0;
    std::string config_hash;
    std::string backend_name;
    std::uint64_t seed = 0;
};
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

} // namespace mytm
