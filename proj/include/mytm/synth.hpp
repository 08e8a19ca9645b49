#pragma once

#include <filesystem>

#include "mytm/corpus.hpp"
#include "mytm/image.hpp"

namespace mytm {

// Synthetic subject for the toy backend. The identity band rotates with age
// inside a fixed per-person 2-plane: band(a) = A*(u*cos(phi) + v*sin(phi))
// with phi proportional to age. Identity similarity between two ages is then
// close to cos(arc * |a1 - a2| / 100), so faces a few years apart stay nearly
// identical while a 40-year gap is clearly separated - a genuine, learnable
// aging pattern for the personalization losses. The rest of the image is a
// fixed per-person texture plus small per-photo jitter.
class SynthPerson {
public:
    /// Angle swept over the full 0-100y range (radians).
    static constexpr double kAgingArc = 1.1;
    static constexpr double kBandAmplitude = 6.0;

    explicit SynthPerson(std::uint64_t person_seed);

    ImageTensor photo(AgeYears age, std::uint64_t photo_seed) const;

    /// Identity band (256 pixels) at an age, before jitter and clamping.
    Eigen::VectorXd clean_band(AgeYears age) const;

private:
    Eigen::VectorXd plane_u_; // orthonormal pair spanning the aging plane
    Eigen::VectorXd plane_v_;
    Eigen::VectorXd texture_; // full-image backdrop
};

struct SynthDatasetSpec {
    int train_count = 12;
    double train_age_min = 30.0;
    double train_age_max = 70.0;
    double reference_step = 5.0;  // reference photos every N years over the range
    std::vector<double> test_ages = {70.0};
    std::uint64_t person_seed = 42;
    std::uint64_t photo_seed = 100;
};

/// Writes PNG photos plus a manifest under `dir` and returns the loaded,
/// validated collection. Fully deterministic for a given spec.
AgedPhotoCollection write_synth_dataset(const std::filesystem::path& dir,
                                        const SynthDatasetSpec& spec);

} // namespace mytm
