#include "mytm/toy_backend.hpp"

#include <cmath>

#include "mytm/rng.hpp"

namespace mytm {

namespace {

constexpr double kAtanhClamp = 1e-6;

double atanh_clamped(double v) {
    const double lim = 1.0 - kAtanhClamp;
    if (v > lim) v = lim;
    if (v < -lim) v = -lim;
    return std::atanh(v);
}

// pixel p lives at style row 2 + p/192, column p%192
inline int carrier_row(int p) { return 2 + p / ToyBackend::kCarrierPerRow; }
inline int carrier_col(int p) { return p % ToyBackend::kCarrierPerRow; }

} // namespace

ToyBackend::ToyBackend(std::uint64_t seed) : seed_(seed) {
    Rng rng(seed);

    base_pre_.resize(kPixelCount);
    for (int i = 0; i < kPixelCount; ++i) base_pre_[i] = rng.uniform(-0.4, 0.4);

    embed_proj_.resize(kEmbeddingDim, kIdBandSize);
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(kIdBandSize));
    for (int i = 0; i < kEmbeddingDim; ++i)
        for (int j = 0; j < kIdBandSize; ++j)
            embed_proj_(i, j) = rng.normal() * proj_scale;

    eval_age_weights_.resize(kAgeBandSize);
    double wsum = 0.0;
    for (int i = 0; i < kAgeBandSize; ++i) {
        eval_age_weights_[i] = rng.uniform(0.5, 1.5);
        wsum += eval_age_weights_[i];
    }
    eval_age_weights_ /= wsum;

    conv_.in_channels = 3;
    conv_.out_channels = 4;
    conv_.ksize = 3;
    conv_.stride = 2;
    conv_.height = kResolution;
    conv_.width = kResolution;
    auto kernels = std::make_shared<std::vector<double>>();
    kernels->resize(static_cast<std::size_t>(conv_.out_channels) * conv_.in_channels *
                    conv_.ksize * conv_.ksize);
    const double kscale = 1.0 / std::sqrt(27.0);
    for (auto& k : *kernels) k = rng.normal() * kscale;
    conv_.kernels = std::move(kernels);

    mean_ = MeanLatent(); // zero code decodes to the canonical base image
}

void ToyBackend::check_convention(const ImageTensor& image, const char* op) const {
    if (image.height() != kResolution || image.width() != kResolution) {
        throw StructuralError(std::string(op) + ": expected a " +
                              std::to_string(kResolution) + "x" +
                              std::to_string(kResolution) + " aligned image, got " +
                              std::to_string(image.height()) + "x" +
                              std::to_string(image.width()));
    }
}

double ToyBackend::age_band_preimage(AgeYears age) {
    return atanh_clamped(2.0 * age.normalized() - 1.0);
}

LatentCode ToyBackend::encode(const ImageTensor& image, AgeYears target_age) const {
    check_convention(image, "encode");
    Eigen::MatrixXd styles = mean_.center();
    const double age_pre = age_band_preimage(target_age);
    for (int p = 0; p < kPixelCount; ++p) {
        const double pre = (p >= kAgeBandBegin && p < kAgeBandBegin + kAgeBandSize)
                               ? age_pre
                               : atanh_clamped(image.pixels()[p]);
        styles(carrier_row(p), carrier_col(p)) = pre - base_pre_[p];
    }
    return LatentCode(std::move(styles));
}

ImageTensor ToyBackend::decode(const LatentCode& code) const {
    Eigen::VectorXd px(kPixelCount);
    for (int p = 0; p < kPixelCount; ++p) {
        px[p] = std::tanh(base_pre_[p] + code(carrier_row(p), carrier_col(p)));
    }
    return ImageTensor(kResolution, kResolution, std::move(px));
}

IdentityEmbedding ToyBackend::embed_identity(const ImageTensor& image) const {
    check_convention(image, "embed_identity");
    Eigen::VectorXd band = image.pixels().segment(kIdBandBegin, kIdBandSize);
    return IdentityEmbedding(embed_proj_ * band); // normalizes; throws on zero band
}

AgeYears ToyBackend::estimate_age(const ImageTensor& image, AgeEstimatorMode mode) const {
    check_convention(image, "estimate_age");
    const auto band = image.pixels().segment(kAgeBandBegin, kAgeBandSize);
    double v = 0.0;
    if (mode == AgeEstimatorMode::train) {
        v = band.mean();
    } else {
        v = eval_age_weights_.dot(band);
    }
    return AgeYears::clamped((v + 1.0) * 50.0);
}

double ToyBackend::perceptual_distance(const ImageTensor& a, const ImageTensor& b) const {
    check_convention(a, "perceptual_distance");
    if (!a.same_shape(b)) {
        throw StructuralError("perceptual_distance: shape mismatch");
    }
    diff::Tape tape;
    const diff::Var fa = tape.conv_features(tape.constant(a.pixels()), conv_);
    const diff::Var fb = tape.conv_features(tape.constant(b.pixels()), conv_);
    return (tape.value(fa) - tape.value(fb)).squaredNorm() /
           static_cast<double>(conv_.feature_count());
}

std::optional<ImageTensor> ToyBackend::swap_face(const ImageTensor& source_face,
                                                 const ImageTensor& target_frame) const {
    check_convention(source_face, "swap_face(source)");
    check_convention(target_frame, "swap_face(target)");
    const auto tgt_band = target_frame.pixels().segment(kIdBandBegin, kIdBandSize);
    if (tgt_band.norm() < kNoFaceBandNorm) {
        return std::nullopt; // toy no-face sentinel: empty identity band
    }
    ImageTensor out = target_frame;
    const auto src_band = source_face.pixels().segment(kIdBandBegin, kIdBandSize);
    // out = t + beta*(s - t); exact pass-through when s == t
    out.pixels().segment(kIdBandBegin, kIdBandSize) += kSwapBlend * (src_band - tgt_band);
    return out;
}

ImageTensor ToyBackend::align_face(const ImageTensor& raw_image) const {
    if (raw_image.height() == kResolution && raw_image.width() == kResolution) {
        return raw_image;
    }
    const int m = std::min(raw_image.height(), raw_image.width());
    const int top = (raw_image.height() - m) / 2;
    const int left = (raw_image.width() - m) / 2;
    ImageTensor out(kResolution, kResolution);
    const double scale = static_cast<double>(m) / kResolution;
    // area-average resampling of the centered m x m crop
    for (int c = 0; c < 3; ++c) {
        for (int oy = 0; oy < kResolution; ++oy) {
            const double y0 = oy * scale, y1 = (oy + 1) * scale;
            for (int ox = 0; ox < kResolution; ++ox) {
                const double x0 = ox * scale, x1 = (ox + 1) * scale;
                double acc = 0.0, wacc = 0.0;
                for (int iy = static_cast<int>(y0); iy < static_cast<int>(std::ceil(y1)); ++iy) {
                    const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                    if (wy <= 0.0) continue;
                    for (int ix = static_cast<int>(x0); ix < static_cast<int>(std::ceil(x1)); ++ix) {
                        const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                        if (wx <= 0.0) continue;
                        acc += wy * wx * raw_image.at(c, top + std::min(iy, m - 1),
                                                      left + std::min(ix, m - 1));
                        wacc += wy * wx;
                    }
                }
                out.at(c, oy, ox) = acc / wacc;
            }
        }
    }
    return out;
}

diff::Var ToyBackend::decode_on_tape(diff::Tape& tape, diff::Var latent) const {
    std::vector<int> idx(kPixelCount);
    for (int p = 0; p < kPixelCount; ++p)
        idx[p] = carrier_row(p) * kLatentCols + carrier_col(p);
    const diff::Var flat = tape.flatten_rowmajor(latent);
    const diff::Var carriers = tape.gather(flat, idx);
    const diff::Var pre = tape.add(carriers, tape.constant(base_pre_));
    return tape.tanh(pre);
}

diff::Var ToyBackend::encode_on_tape(diff::Tape& tape, diff::Var image,
                                     AgeYears target_age) const {
    const diff::Var pre = tape.atanh_clamped(image, kAtanhClamp);
    const diff::Var carriers = tape.sub(pre, tape.constant(base_pre_));
    // age-band carriers come from the target age, not the image
    Eigen::MatrixXd age_vals(kAgeBandSize, 1);
    for (int i = 0; i < kAgeBandSize; ++i)
        age_vals(i, 0) = age_band_preimage(target_age) - base_pre_[kAgeBandBegin + i];
    const diff::Var age_carriers = tape.constant(age_vals);

    const diff::Var rest = tape.segment(carriers, kAgeBandSize, kPixelCount - kAgeBandSize);
    const diff::Var all_carriers = tape.concat({age_carriers, rest});

    // assemble the 18x512 latent: rows 0-1 and columns >= 192 are spare (zero)
    const diff::Var zero_rows = tape.constant(Eigen::MatrixXd::Zero(2L * kLatentCols, 1));
    const diff::Var zero_tail =
        tape.constant(Eigen::MatrixXd::Zero(kLatentCols - kCarrierPerRow, 1));
    std::vector<diff::Var> parts;
    parts.push_back(zero_rows);
    for (int r = 0; r < 16; ++r) {
        parts.push_back(tape.segment(all_carriers, r * kCarrierPerRow, kCarrierPerRow));
        parts.push_back(zero_tail);
    }
    return tape.unflatten_rowmajor(tape.concat(parts), kLatentRows, kLatentCols);
}

diff::Var ToyBackend::identity_features_on_tape(diff::Tape& tape, diff::Var image) const {
    const diff::Var band = tape.segment(image, kIdBandBegin, kIdBandSize);
    return tape.matmul(tape.constant(embed_proj_), band);
}

diff::Var ToyBackend::estimate_age_on_tape(diff::Tape& tape, diff::Var image) const {
    const diff::Var band = tape.segment(image, kAgeBandBegin, kAgeBandSize);
    // (mean + 1) * 50; decoded pixels are strictly inside (-1, 1) so the
    // [0, 100] clamp never binds on this path
    return tape.add_scalar(tape.scale(tape.mean(band), 50.0), 50.0);
}

diff::Var ToyBackend::perceptual_features_on_tape(diff::Tape& tape, diff::Var image) const {
    return tape.conv_features(image, conv_);
}

} // namespace mytm
