#include "mytm/backend.hpp"

#include <filesystem>

#include "mytm/toy_backend.hpp"

namespace mytm {

diff::Var Backend::decode_on_tape(diff::Tape&, diff::Var) const {
    throw BackendUnavailableError("backend '" + name() + "' has no differentiable decoder");
}
diff::Var Backend::encode_on_tape(diff::Tape&, diff::Var, AgeYears) const {
    throw BackendUnavailableError("backend '" + name() + "' has no differentiable encoder");
}
diff::Var Backend::identity_features_on_tape(diff::Tape&, diff::Var) const {
    throw BackendUnavailableError("backend '" + name() + "' has no differentiable identity features");
}
diff::Var Backend::estimate_age_on_tape(diff::Tape&, diff::Var) const {
    throw BackendUnavailableError("backend '" + name() + "' has no differentiable age estimator");
}
diff::Var Backend::perceptual_features_on_tape(diff::Tape&, diff::Var) const {
    throw BackendUnavailableError("backend '" + name() + "' has no differentiable perceptual features");
}

BackendBundle BackendBundle::from_single(std::shared_ptr<const Backend> impl) {
    BackendBundle b;
    b.encoder = impl;
    b.decoder = impl;
    b.identity_embedder = impl;
    b.age_estimator_train = impl;
    b.age_estimator_eval = impl;
    b.perceptual_metric = impl;
    b.face_swapper = impl;
    b.aligner = impl;
    b.mean_latent = impl->mean_latent();
    b.backend_name = impl->name();
    b.backend_seed = impl->seed();
    return b;
}

BackendBundle make_backend(const std::string& backend, std::uint64_t backend_seed,
                           const std::string& real_backend_dir) {
    if (backend == "toy") {
        return BackendBundle::from_single(std::make_shared<ToyBackend>(backend_seed));
    }
    if (backend == "real") {
        // Real pre-trained weights (generator, age encoder, identity and age
        // networks, swapper) are consumed, not shipped. Loading them requires
        // a weight directory and an inference runtime that this build does
        // not register, so the request fails loudly instead of silently
        // falling back to the toy backend.
        std::string dir = real_backend_dir;
        if (dir.empty()) {
            if (const char* env = std::getenv("MYTM_BACKEND_DIR")) dir = env;
        }
        if (dir.empty()) {
            throw BackendUnavailableError(
                "real backend requested but no weight directory configured "
                "(set config key 'real_backend_dir' or MYTM_BACKEND_DIR)");
        }
        if (!std::filesystem::exists(dir)) {
            throw BackendUnavailableError("real backend weight directory not found: " + dir);
        }
        throw BackendUnavailableError(
            "real backend weights found at '" + dir +
            "' but no real-backend runtime is registered in this build");
    }
    throw ValidationError("unknown backend '" + backend + "' (expected toy|real)");
}

} // namespace mytm
