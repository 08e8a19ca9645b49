#include "mytm/losses.hpp"

#include <algorithm>
#include <cmath>

namespace mytm {

namespace {

/// cos(pi * t) with exact values at the anchors t = 0, 0.5, 1.
double cos_pi(double t) {
    if (t == 0.0) return 1.0;
    if (t == 0.5) return 0.0;
    if (t == 1.0) return -1.0;
    return std::cos(3.141592653589793238462643383279502884 * t);
}

void add_composite_terms(LossReport& report, const std::string& prefix,
                         const BackendBundle& bundle, const ImageTensor& y,
                         const ImageTensor& x, AgeYears target_age, const LossWeights& w) {
    report.add(prefix + "l2", image_mse(y, x), w.lambda_l2);
    report.add(prefix + "lpips", bundle.perceptual_metric->perceptual_distance(y, x),
               w.lambda_lpips);
    const IdentityEmbedding ey = bundle.identity_embedder->embed_identity(y);
    const IdentityEmbedding ex = bundle.identity_embedder->embed_identity(x);
    report.add(prefix + "id", 1.0 - cosine_similarity(ey, ex), w.lambda_id);
    const AgeYears est = bundle.age_estimator_train->estimate_age(y, AgeEstimatorMode::train);
    report.add(prefix + "age", std::abs(target_age.value() - est.value()), w.lambda_age);
}

} // namespace

void LossWeights::validate() const {
    for (double v : {lambda_l2, lambda_lpips, lambda_id, lambda_age, lambda_pers_age,
                     lambda_reg_extra, lambda_reg}) {
        if (!(v >= 0.0)) throw ValidationError("loss weights must be >= 0");
    }
}

void LossReport::add(std::string name, double raw, double weight) {
    LossTerm t;
    t.name = std::move(name);
    t.raw = raw;
    t.weight = weight;
    t.contribution = raw * weight;
    terms.push_back(std::move(t));
    total += terms.back().contribution;
}

void LossReport::add_skipped(std::string name, double weight) {
    LossTerm t;
    t.name = std::move(name);
    t.weight = weight;
    t.skipped = true;
    terms.push_back(std::move(t));
}

const LossTerm* LossReport::find(const std::string& name) const {
    for (const auto& t : terms)
        if (t.name == name) return &t;
    return nullptr;
}

double image_mse(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_shape(b)) {
        throw StructuralError("image_mse: shape mismatch");
    }
    return (a.pixels() - b.pixels()).squaredNorm() / static_cast<double>(a.pixels().size());
}

LossReport sam_forward_loss(const BackendBundle& bundle, const ImageTensor& y,
                            const ImageTensor& x, AgeYears target_age, const LossWeights& w) {
    if (!y.same_shape(x)) {
        throw StructuralError("sam_forward_loss: shape mismatch");
    }
    LossReport report;
    add_composite_terms(report, "", bundle, y, x, target_age, w);
    return report;
}

LossReport sam_cycle_loss(const BackendBundle& bundle, const AdapterNetwork& net,
                          const ImageTensor& y_tgt, const ImageTensor& x,
                          AgeYears input_age, const LossWeights& w) {
    const auto [y_cycle, combined] = personalized_reage(bundle, net, y_tgt, input_age);
    return sam_forward_loss(bundle, y_cycle, x, input_age, w);
}

ReferenceSet build_reference_set(const AgedPhotoCollection& collection, AgeYears target_age,
                                 int window_years, Split split) {
    ReferenceSet out;
    constexpr int kMaxWindow = 10;
    for (int win = window_years; win <= kMaxWindow; ++win) {
        out.records.clear();
        out.effective_window_years = win;
        for (const auto* r : collection.split_records(split)) {
            if (std::abs(r->age_years.value() - target_age.value()) <= static_cast<double>(win)) {
                out.records.push_back(r);
            }
        }
        if (!out.records.empty()) return out;
    }
    out.exhausted = true;
    out.effective_window_years = kMaxWindow;
    return out;
}

double personalized_aging_loss(const BackendBundle& bundle, const ImageTensor& y_p,
                               const std::vector<ImageTensor>& reference) {
    if (reference.empty()) {
        throw ValidationError("personalized_aging_loss: empty reference set (caller must skip)");
    }
    const IdentityEmbedding ey = bundle.identity_embedder->embed_identity(y_p);
    std::vector<IdentityEmbedding> refs;
    refs.reserve(reference.size());
    for (const auto& img : reference) refs.push_back(bundle.identity_embedder->embed_identity(img));
    return personalized_aging_loss_from_embeddings(ey, refs);
}

double personalized_aging_loss_from_embeddings(const IdentityEmbedding& y_emb,
                                               const std::vector<IdentityEmbedding>& reference) {
    if (reference.empty()) {
        throw ValidationError("personalized_aging_loss: empty reference set (caller must skip)");
    }
    double best = -1.0;
    for (const auto& r : reference) best = std::max(best, cosine_similarity(y_emb, r));
    return 1.0 - best;
}

double extrapolation_regularization(const BackendBundle& bundle, const ImageTensor& y_p,
                                    const ImageTensor& y_global, const LossWeights& w) {
    if (!y_p.same_shape(y_global)) {
        throw StructuralError("extrapolation_regularization: shape mismatch");
    }
    const double l2 = image_mse(y_p, y_global);
    const double lp = bundle.perceptual_metric->perceptual_distance(y_p, y_global);
    const IdentityEmbedding ep = bundle.identity_embedder->embed_identity(y_p);
    const IdentityEmbedding eg = bundle.identity_embedder->embed_identity(y_global);
    const double id = 1.0 - cosine_similarity(ep, eg);
    return w.lambda_l2 * l2 + w.lambda_lpips * lp + w.lambda_id * id;
}

double adaptive_reg_weight(double delta_age_years) {
    double d = delta_age_years;
    if (d < 0.0) d = 0.0;
    if (d > 100.0) d = 100.0;
    return 1.0 - cos_pi(d / 100.0);
}

double adaptive_wnorm_loss(const LatentCode& combined, const MeanLatent& mean,
                           AgeYears input_age, AgeYears target_age) {
    const double delta = std::abs(input_age.value() - target_age.value());
    return adaptive_reg_weight(delta) * latent_wnorm_distance(combined, mean);
}

LossReport total_personalization_loss(const BackendBundle& bundle, const AdapterNetwork& net,
                                      const ImageTensor& x, const StepContext& ctx,
                                      const LossWeights& w, const AblationFlags& flags) {
    w.validate();
    LossReport report;

    // forward pass at the target age (personalized unless the adapter is ablated)
    const auto [y_p, combined] =
        flags.use_adapter ? personalized_reage(bundle, net, x, ctx.target_age)
                          : global_reage(bundle, x, ctx.target_age);
    add_composite_terms(report, "forward_", bundle, y_p, x, ctx.target_age, w);

    // cycle pass back to the input age
    if (flags.use_adapter) {
        const auto [y_cycle, cyc_latent] = personalized_reage(bundle, net, y_p, ctx.input_age);
        add_composite_terms(report, "cycle_", bundle, y_cycle, x, ctx.input_age, w);
    } else {
        const auto [y_cycle, cyc_latent] = global_reage(bundle, y_p, ctx.input_age);
        add_composite_terms(report, "cycle_", bundle, y_cycle, x, ctx.input_age, w);
    }

    // personalized aging loss vs the reference set near the target age
    if (!flags.use_personalized_aging_loss) {
        report.add_skipped("pers_age", w.lambda_pers_age);
    } else if (ctx.reference_images.empty()) {
        report.add_skipped("pers_age", w.lambda_pers_age);
    } else {
        report.add("pers_age", personalized_aging_loss(bundle, y_p, ctx.reference_images),
                   w.lambda_pers_age);
    }

    // extrapolation replay branch
    if (!flags.use_extrapolation_reg || !ctx.extrapolation_age.has_value()) {
        report.add_skipped("reg_extra", w.lambda_reg_extra);
    } else {
        const AgeYears a_ext = *ctx.extrapolation_age;
        const auto [y_ext_global, ext_latent] = global_reage(bundle, x, a_ext);
        if (flags.use_adapter) {
            const auto [y_ext_p, ext_comb] = personalized_reage(bundle, net, x, a_ext);
            report.add("reg_extra",
                       extrapolation_regularization(bundle, y_ext_p, y_ext_global, w),
                       w.lambda_reg_extra);
        } else {
            report.add("reg_extra",
                       extrapolation_regularization(bundle, y_ext_global, y_ext_global, w),
                       w.lambda_reg_extra);
        }
    }

    // adaptive w-norm on the combined latent actually decoded
    if (!flags.use_adaptive_wnorm) {
        report.add_skipped("wnorm");
    } else {
        const double sched = adaptive_reg_weight(
            std::abs(ctx.input_age.value() - ctx.target_age.value()));
        report.add("wnorm", latent_wnorm_distance(combined, bundle.mean_latent),
                   w.lambda_reg * sched);
    }
    return report;
}

} // namespace mytm
