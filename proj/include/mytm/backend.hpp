#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "mytm/image.hpp"
#include "mytm/latent.hpp"
#include "mytm/tape.hpp"

namespace mytm {

enum class AgeEstimatorMode { train, eval };

// Interface over every pre-trained component the pipeline consumes: age
// encoder, generator, identity network, the two age estimators (the training
// one must be differentiable, the evaluation one is a separate network so
// training can't grade itself), perceptual metric, face swapper and aligner.
//
// Implementations are immutable after construction; concurrent inference
// calls are safe.
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string name() const = 0;
    virtual int resolution() const = 0;
    virtual std::uint64_t seed() const = 0;
    virtual const MeanLatent& mean_latent() const = 0;

    /// Projects an image into W+ conditioned on the target age.
    virtual LatentCode encode(const ImageTensor& image, AgeYears target_age) const = 0;
    /// Synthesizes an image from a latent code.
    virtual ImageTensor decode(const LatentCode& code) const = 0;
    /// Unit-norm identity feature vector.
    virtual IdentityEmbedding embed_identity(const ImageTensor& image) const = 0;
    /// Apparent age of a face. Train mode is differentiable w.r.t. pixels.
    virtual AgeYears estimate_age(const ImageTensor& image, AgeEstimatorMode mode) const = 0;
    /// Feature-space distance; >= 0, symmetric, 0 for identical images.
    virtual double perceptual_distance(const ImageTensor& a, const ImageTensor& b) const = 0;
    /// Transfers the source identity onto the target frame. nullopt signals
    /// "no face in target" and callers skip the frame.
    virtual std::optional<ImageTensor> swap_face(const ImageTensor& source_face,
                                                 const ImageTensor& target_frame) const = 0;
    /// Crops/resizes a raw image to the backend's aligned-face convention.
    virtual ImageTensor align_face(const ImageTensor& raw_image) const = 0;

    // Differentiable counterparts used by the trainer. Images travel as flat
    // CHW column vectors; latents as 18x512 matrices. Backends without
    // gradient support keep the default (throwing) implementations.
    virtual diff::Var decode_on_tape(diff::Tape& tape, diff::Var latent) const;
    virtual diff::Var encode_on_tape(diff::Tape& tape, diff::Var image, AgeYears target_age) const;
    /// Raw (unnormalized) identity features; cosine handles normalization.
    virtual diff::Var identity_features_on_tape(diff::Tape& tape, diff::Var image) const;
    /// Train-mode age estimate in years.
    virtual diff::Var estimate_age_on_tape(diff::Tape& tape, diff::Var image) const;
    /// Features whose mean squared difference is perceptual_distance.
    virtual diff::Var perceptual_features_on_tape(diff::Tape& tape, diff::Var image) const;
};

/// One handle per pre-trained component. The factory wires every handle to a
/// consistent implementation (same resolution and latent conventions).
struct BackendBundle {
    std::shared_ptr<const Backend> encoder;
    std::shared_ptr<const Backend> decoder;
    std::shared_ptr<const Backend> identity_embedder;
    std::shared_ptr<const Backend> age_estimator_train;
    std::shared_ptr<const Backend> age_estimator_eval;
    std::shared_ptr<const Backend> perceptual_metric;
    std::shared_ptr<const Backend> face_swapper;
    std::shared_ptr<const Backend> aligner;
    MeanLatent mean_latent;
    std::string backend_name;
    std::uint64_t backend_seed = 0;

    static BackendBundle from_single(std::shared_ptr<const Backend> impl);
};

/// Builds the bundle named by `backend` ("toy" or "real"). Absence of a real
/// implementation raises BackendUnavailableError; there is no silent
/// substitution.
BackendBundle make_backend(const std::string& backend, std::uint64_t backend_seed,
                           const std::string& real_backend_dir = "");

} // namespace mytm
