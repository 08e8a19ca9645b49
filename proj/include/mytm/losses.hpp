#pragma once

#include <string>
#include <vector>

#include "mytm/adapter.hpp"
#include "mytm/backend.hpp"
#include "mytm/corpus.hpp"

namespace mytm {

/// Loss weights. The four composite sub-weights follow the global encoder's
/// published training setup; the age weight is per-year (0.05/year matches a
/// weight of 5.0 on [0,1]-normalized ages). The three personalization weights
/// default to 1.
struct LossWeights {
    double lambda_l2 = 1.0;
    double lambda_lpips = 0.8;
    double lambda_id = 0.1;
    double lambda_age = 0.05;
    double lambda_pers_age = 1.0;
    double lambda_reg_extra = 1.0;
    double lambda_reg = 1.0; // scales the adaptive w-norm schedule

    void validate() const;
};

struct LossTerm {
    std::string name;
    double raw = 0.0;
    double weight = 0.0;
    double contribution = 0.0; // raw * weight, 0 when skipped
    bool skipped = false;
};

/// Itemized loss breakdown; total is the sum of contributions.
struct LossReport {
    std::vector<LossTerm> terms;
    double total = 0.0;

    void add(std::string name, double raw, double weight);
    void add_skipped(std::string name, double weight = 0.0);
    const LossTerm* find(const std::string& name) const;
    bool has(const std::string& name) const { return find(name) != nullptr; }
};

/// Pixel-space mean squared error.
double image_mse(const ImageTensor& a, const ImageTensor& b);

/// Composite forward loss: weighted pixel, perceptual, identity and
/// age-matching terms of the re-aged image against the input.
LossReport sam_forward_loss(const BackendBundle& bundle, const ImageTensor& y,
                            const ImageTensor& x, AgeYears target_age,
                            const LossWeights& w);

/// Cycle pass: re-encode y_tgt at the input age through the personalized
/// path, decode, and score the round trip against the input image.
LossReport sam_cycle_loss(const BackendBundle& bundle, const AdapterNetwork& net,
                          const ImageTensor& y_tgt, const ImageTensor& x,
                          AgeYears input_age, const LossWeights& w);

/// Records of one split whose age lies within the reference window of the
/// target. If the +-3y window is empty it widens a year at a time up to
/// +-10y; an empty result after that is flagged, not an error.
struct ReferenceSet {
    std::vector<const PhotoRecord*> records;
    int effective_window_years = 3;
    bool exhausted = false; // nothing within +-10 years

    bool empty() const { return records.empty(); }
};

ReferenceSet build_reference_set(const AgedPhotoCollection& collection, AgeYears target_age,
                                 int window_years = 3, Split split = Split::train);

/// 1 - max_j cos(R(y), R(x_j)) over a nonempty reference set; in [0, 2].
double personalized_aging_loss(const BackendBundle& bundle, const ImageTensor& y_p,
                               const std::vector<ImageTensor>& reference);
double personalized_aging_loss_from_embeddings(const IdentityEmbedding& y_emb,
                                               const std::vector<IdentityEmbedding>& reference);

/// Experience-replay anchor: weighted pixel + perceptual + identity distance
/// between the personalized output and the adapter-bypassed output.
double extrapolation_regularization(const BackendBundle& bundle, const ImageTensor& y_p,
                                    const ImageTensor& y_global, const LossWeights& w);

/// Cosine ramp 1 - cos(pi * delta / 100); exactly 0, 1, 2 at delta 0, 50, 100.
double adaptive_reg_weight(double delta_age_years);

/// adaptive_reg_weight(|input - target|) * ||combined - mean||_F.
double adaptive_wnorm_loss(const LatentCode& combined, const MeanLatent& mean,
                           AgeYears input_age, AgeYears target_age);

/// Switches mirroring the ablation rows: each proposed component can be
/// removed independently.
struct AblationFlags {
    bool use_adapter = true;
    bool use_extrapolation_reg = true;
    bool use_personalized_aging_loss = true;
    bool use_adaptive_wnorm = true;
};

/// Everything total_personalization_loss needs beyond the photo itself.
struct StepContext {
    AgeYears input_age = AgeYears::clamped(0.0);
    AgeYears target_age = AgeYears::clamped(0.0);
    /// Reference images near target_age (train split); empty means "skip the
    /// personalized aging term and record it as skipped".
    std::vector<ImageTensor> reference_images;
    /// Extrapolated age for the replay branch; unset means the branch was not
    /// drawn this step.
    std::optional<AgeYears> extrapolation_age;
};

/// One training step's full objective, itemized. Terms:
///   forward_l2/lpips/id/age, cycle_l2/lpips/id/age, pers_age, reg_extra, wnorm.
/// Skipped terms (disabled by flags, empty reference set, no extrapolation
/// draw) appear in the report with zero contribution.
LossReport total_personalization_loss(const BackendBundle& bundle, const AdapterNetwork& net,
                                      const ImageTensor& x, const StepContext& ctx,
                                      const LossWeights& w, const AblationFlags& flags);

} // namespace mytm
