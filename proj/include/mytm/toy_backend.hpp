#pragma once

#include <vector>

#include "mytm/backend.hpp"

namespace mytm {

// Deterministic desk-scale backend. The 32x32 image carries its semantics in
// fixed pixel bands:
//
//   channel 0, rows 0-1  : age band; every pixel equals 2*(age/100) - 1
//   channel 1, rows 0-7  : identity band; a fixed projection of it defines
//                          the identity embedding
//
// The decoder is tanh(base + latent carrier entries): pixel p is carried by
// style row 2 + p/192, column p%192, so rows 0-1 and columns 192-511 of W+
// are spare capacity. The encoder inverts the decoder exactly (atanh) and
// overwrites the age-band carriers from the target age, which makes the
// age-matching loss exactly optimizable: estimate(decode(encode(x, a)))
// recovers a up to the atanh clamp (~5e-5 years at the range ends).
class ToyBackend final : public Backend {
public:
    static constexpr int kResolution = 32;
    static constexpr int kPixelCount = 3 * kResolution * kResolution;
    static constexpr int kAgeBandBegin = 0;
    static constexpr int kAgeBandSize = 64;
    static constexpr int kIdBandBegin = 1024;
    static constexpr int kIdBandSize = 256;
    static constexpr int kCarrierPerRow = 192;
    static constexpr int kEmbeddingDim = 512;
    static constexpr std::uint64_t kDefaultSeed = 1234;
    static constexpr double kSwapBlend = 0.9;
    // A frame whose identity band is (near-)zero carries no face. The
    // threshold leaves room for 8-bit PNG quantization of a zeroed band
    // (norm ~0.06) while real bands sit well above 1.
    static constexpr double kNoFaceBandNorm = 0.1;

    explicit ToyBackend(std::uint64_t seed = kDefaultSeed);

    std::string name() const override { return "toy"; }
    int resolution() const override { return kResolution; }
    std::uint64_t seed() const override { return seed_; }
    const MeanLatent& mean_latent() const override { return mean_; }

    LatentCode encode(const ImageTensor& image, AgeYears target_age) const override;
    ImageTensor decode(const LatentCode& code) const override;
    IdentityEmbedding embed_identity(const ImageTensor& image) const override;
    AgeYears estimate_age(const ImageTensor& image, AgeEstimatorMode mode) const override;
    double perceptual_distance(const ImageTensor& a, const ImageTensor& b) const override;
    std::optional<ImageTensor> swap_face(const ImageTensor& source_face,
                                         const ImageTensor& target_frame) const override;
    ImageTensor align_face(const ImageTensor& raw_image) const override;

    diff::Var decode_on_tape(diff::Tape& tape, diff::Var latent) const override;
    diff::Var encode_on_tape(diff::Tape& tape, diff::Var image, AgeYears target_age) const override;
    diff::Var identity_features_on_tape(diff::Tape& tape, diff::Var image) const override;
    diff::Var estimate_age_on_tape(diff::Tape& tape, diff::Var image) const override;
    diff::Var perceptual_features_on_tape(diff::Tape& tape, diff::Var image) const override;

    // Exposed for oracle tests.
    const Eigen::VectorXd& base_preimage() const { return base_pre_; }
    const Eigen::MatrixXd& embed_projection() const { return embed_proj_; }
    const Eigen::VectorXd& eval_age_weights() const { return eval_age_weights_; }
    const diff::ConvSpec& perceptual_conv() const { return conv_; }

    /// Pre-image value the encoder writes into every age-band carrier.
    static double age_band_preimage(AgeYears age);

private:
    void check_convention(const ImageTensor& image, const char* op) const;

    std::uint64_t seed_;
    Eigen::VectorXd base_pre_;        // 3072, decode(0) == tanh(base_pre)
    Eigen::MatrixXd embed_proj_;      // 512 x 256
    Eigen::VectorXd eval_age_weights_; // 64, positive, sums to 1
    diff::ConvSpec conv_;
    MeanLatent mean_;
};

} // namespace mytm
