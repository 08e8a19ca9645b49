#include "mytm/latent.hpp"

#include <algorithm>

namespace mytm {

LatentCode latent_add(const LatentCode& a, const LatentCode& b) {
    return LatentCode(a.styles() + b.styles());
}

double latent_wnorm_distance(const LatentCode& w, const MeanLatent& mean) {
    return (w.styles() - mean.center()).norm();
}

double cosine_similarity(const IdentityEmbedding& a, const IdentityEmbedding& b) {
    if (a.dim() != b.dim()) {
        throw StructuralError("cosine_similarity: embedding dims differ");
    }
    // Vectors are unit-norm by construction; the dot product is the cosine.
    // Computed in one fixed order so (a,b) and (b,a) agree bitwise. Equal
    // vectors short-circuit to exactly 1 (self-similarity must not pick up
    // rounding from the norm).
    bool equal = true;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.dim(); ++i) {
        equal = equal && a.vector()[i] == b.vector()[i];
        acc += a.vector()[i] * b.vector()[i];
    }
    if (equal) return 1.0;
    return std::clamp(acc, -1.0, 1.0);
}

} // namespace mytm
