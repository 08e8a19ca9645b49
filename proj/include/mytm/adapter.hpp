#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mytm/backend.hpp"
#include "mytm/latent.hpp"
#include "mytm/tape.hpp"

namespace mytm {

/// Width configuration of the adapter stack. Output dimensions are fixed by
/// the architecture; only hidden widths are tunable (the gradient-check
/// harness shrinks them).
struct AdapterDims {
    int global_hidden = 256;
    int aging_hidden = 64;
    int style_hidden = 512;

    static constexpr int kLatentFlat = kLatentRows * kLatentCols; // 9216
    // the global branch compresses W+ to 18x32 and flattens it
    static constexpr int kGlobalOut = 18 * 32; // 576
    // flattened 18x32 is 576-dimensional; a linear projection brings it to
    // the 1x512 interface the style branches consume
    static constexpr int kGlobalFeat = 512;
    static constexpr int kAgeFeat = 16;
    static constexpr int kStyleIn = kLatentCols + kGlobalFeat + kAgeFeat; // 1040
};

// Personalized age adapter: a Global MLP summarizing the whole W+ code, an
// Aging MLP embedding the scalar target age, and 18 independent Style MLPs
// emitting one 512-d offset per style row. All three are 2-layer ReLU MLPs.
//
// Every Style MLP's output layer is zero-initialized, so a freshly
// constructed adapter is the identity mapping: the personalized path
// coincides with the global one until training moves the weights.
class AdapterNetwork {
public:
    AdapterNetwork() : AdapterNetwork(AdapterDims{}, 7) {}
    AdapterNetwork(const AdapterDims& dims, std::uint64_t init_seed);

    const AdapterDims& dims() const { return dims_; }
    std::uint64_t init_seed() const { return init_seed_; }

    /// Offset latent for a code and target age. Zero matrix at init.
    LatentCode forward(const LatentCode& code, AgeYears target_age) const;

    /// Parameter tensors in serialization order, paired with stable names.
    std::vector<std::pair<std::string, Eigen::MatrixXd*>> parameters();
    std::vector<std::pair<std::string, const Eigen::MatrixXd*>> parameters() const;
    std::size_t parameter_count() const;

    // --- differentiable path ---
    struct TapeParams {
        std::vector<diff::Var> leaves; // parameters() order
    };
    /// Registers every parameter tensor as a tape leaf.
    TapeParams register_on_tape(diff::Tape& tape) const;
    /// Forward pass on the tape. `code` may be a constant (first pass) or a
    /// variable (cycle pass); gradients flow into both the parameters and a
    /// variable code.
    diff::Var forward_on_tape(diff::Tape& tape, const TapeParams& params,
                              diff::Var code, AgeYears target_age) const;

    void save(const std::string& path) const;
    static AdapterNetwork load(const std::string& path);

    bool equal_parameters(const AdapterNetwork& other) const;

private:
    AdapterDims dims_;
    std::uint64_t init_seed_ = 0;

    Eigen::MatrixXd global_w1_, global_b1_, global_w2_, global_b2_;
    Eigen::MatrixXd proj_w_, proj_b_;
    Eigen::MatrixXd aging_w1_, aging_b1_, aging_w2_, aging_b2_;
    std::vector<Eigen::MatrixXd> style_w1_, style_b1_, style_w2_, style_b2_;
};

/// Eq.-4 style personalized re-age: decode(encode(x, a) + AN(encode(x, a), a)).
/// Returns the decoded image and the combined latent that was decoded.
std::pair<ImageTensor, LatentCode> personalized_reage(const BackendBundle& bundle,
                                                      const AdapterNetwork& net,
                                                      const ImageTensor& image,
                                                      AgeYears target_age);

/// Adapter-bypassed path: decode(encode(x, a)).
std::pair<ImageTensor, LatentCode> global_reage(const BackendBundle& bundle,
                                                const ImageTensor& image,
                                                AgeYears target_age);

} // namespace mytm
