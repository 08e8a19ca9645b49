#pragma once

#include <Eigen/Core>

#include "mytm/errors.hpp"

namespace mytm {

inline constexpr int kLatentRows = 18;
inline constexpr int kLatentCols = 512;

/// Extended latent: one 512-vector of style coefficients per synthesis layer.
/// Offsets produced by the adapter share this type; the combination rule is a
/// plain elementwise sum, so keeping one type makes the additive contract
/// directly checkable.
class LatentCode {
public:
    LatentCode() : styles_(Eigen::MatrixXd::Zero(kLatentRows, kLatentCols)) {}

    explicit LatentCode(Eigen::MatrixXd styles) : styles_(std::move(styles)) {
        validate();
    }

    static LatentCode zeros() { return LatentCode{}; }

    const Eigen::MatrixXd& styles() const { return styles_; }
    Eigen::MatrixXd& styles() { return styles_; }

    double operator()(int row, int col) const { return styles_(row, col); }

private:
    void validate() const {
        if (styles_.rows() != kLatentRows || styles_.cols() != kLatentCols) {
            throw StructuralError("LatentCode must be 18x512, got " +
                                  std::to_string(styles_.rows()) + "x" +
                                  std::to_string(styles_.cols()));
        }
        if (!styles_.allFinite()) {
            throw DomainError("LatentCode contains non-finite entries");
        }
    }

    Eigen::MatrixXd styles_;
};

/// Center of the latent space for a given decoder backend.
class MeanLatent {
public:
    MeanLatent() : center_(Eigen::MatrixXd::Zero(kLatentRows, kLatentCols)) {}

    explicit MeanLatent(Eigen::MatrixXd center) : center_(std::move(center)) {
        if (center_.rows() != kLatentRows || center_.cols() != kLatentCols) {
            throw StructuralError("MeanLatent must be 18x512");
        }
        if (!center_.allFinite()) {
            throw DomainError("MeanLatent contains non-finite entries");
        }
    }

    const Eigen::MatrixXd& center() const { return center_; }

private:
    Eigen::MatrixXd center_;
};

/// Unit-norm identity feature vector. Length is backend-defined (512 for the
/// bundled backends).
class IdentityEmbedding {
public:
    explicit IdentityEmbedding(Eigen::VectorXd v) : vector_(std::move(v)) {
        const double n = vector_.norm();
        if (n < 1e-12) {
            throw DomainError("IdentityEmbedding: zero-norm vector");
        }
        vector_ /= n;
    }

    const Eigen::VectorXd& vector() const { return vector_; }
    Eigen::Index dim() const { return vector_.size(); }

private:
    Eigen::VectorXd vector_;
};

/// Age in years, guaranteed to lie in [0, 100].
class AgeYears {
public:
    /// Validating constructor for externally supplied ages.
    static AgeYears years(double v) {
        if (!(v >= 0.0 && v <= 100.0)) {
            throw DomainError("age " + std::to_string(v) +
                              " outside [0, 100] years");
        }
        return AgeYears(v);
    }

    /// Clamping constructor for internally derived ages (estimator outputs).
    static AgeYears clamped(double v) {
        if (v < 0.0) v = 0.0;
        if (v > 100.0) v = 100.0;
        return AgeYears(v);
    }

    double value() const { return value_; }

    /// Normalized age in [0, 1]; the encoder-side convention.
    double normalized() const { return value_ / 100.0; }

private:
    explicit AgeYears(double v) : value_(v) {}
    double value_ = 0.0;
};

/// Elementwise sum of two codes (the latent combination rule).
LatentCode latent_add(const LatentCode& a, const LatentCode& b);

/// Frobenius distance from a code to the latent-space mean.
double latent_wnorm_distance(const LatentCode& w, const MeanLatent& mean);

/// Cosine similarity of two embeddings, in [-1, 1]; exactly symmetric.
double cosine_similarity(const IdentityEmbedding& a, const IdentityEmbedding& b);

} // namespace mytm
