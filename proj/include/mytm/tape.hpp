#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

#include "mytm/errors.hpp"

#include <memory>

namespace mytm::diff {

using Mat = Eigen::MatrixXd;

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Fixed (non-trainable) strided convolution over a planar CHW image, used by
/// feature-space metrics. Kernels are shared so tapes never copy them.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int ksize = 0;
    int stride = 1;
    int height = 0;
    int width = 0;
    // layout: [oc][ic][ky][kx]
    std::shared_ptr<const std::vector<double>> kernels;

    int out_h() const { return (height - ksize) / stride + 1; }
    int out_w() const { return (width - ksize) / stride + 1; }
    int feature_count() const { return out_channels * out_h() * out_w(); }
    double kernel(int oc, int ic, int ky, int kx) const {
        return (*kernels)[((static_cast<std::size_t>(oc) * in_channels + ic) * ksize + ky) * ksize + kx];
    }
};

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records one computation; nodes are appended in evaluation order, so
// running their pullbacks in reverse is a valid topological sweep. Tapes are
// cheap and short-lived: the trainer builds a fresh one per step, reads the
// leaf gradients, and drops it.
//
// Only the operations the training graph needs are provided. Gradients are
// accumulated (+=) into parents, so diamond-shaped graphs work.
class Tape {
public:
    /// Differentiable input (parameter or intermediate the caller owns).
    Var leaf(const Mat& value);
    /// Non-differentiable input; backward never propagates into it.
    Var constant(const Mat& value);
    Var constant_scalar(double v);

    const Mat& value(Var v) const { return nodes_[v.id].value; }
    double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
    /// Gradient of the last backward() target w.r.t. this node.
    const Mat& grad(Var v) const { return nodes_[v.id].grad; }

    // --- linear algebra ---
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var cwise_mul(Var a, Var b);

    // --- nonlinearities ---
    Var relu(Var a);
    Var tanh(Var a);
    /// atanh with input clamped to [-(1-eps), 1-eps]; gradient is zero on the
    /// clamped region.
    Var atanh_clamped(Var a, double eps = 1e-6);
    Var abs(Var a);

    // --- shape / selection ---
    /// Row-major flatten of an RxC matrix into an (R*C)x1 column vector.
    Var flatten_rowmajor(Var a);
    /// Inverse of flatten_rowmajor.
    Var unflatten_rowmajor(Var a, int rows, int cols);
    /// Extract a column-vector row slice: row r of a matrix, as Cx1.
    Var row_as_vector(Var a, int r);
    /// Vertical concatenation of column vectors.
    Var concat(const std::vector<Var>& parts);
    /// v[idx[0..n)] as an nx1 vector; backward scatter-adds.
    Var gather(Var v, const std::vector<int>& idx);
    /// Contiguous sub-vector v[start .. start+len).
    Var segment(Var v, int start, int len);

    // --- reductions ---
    Var sum(Var a);
    Var mean(Var a);
    /// mean((a - b)^2) over all entries.
    Var mse(Var a, Var b);
    Var dot(Var a, Var b);
    /// Frobenius norm; gradient uses a small floor to stay finite at zero.
    Var frobenius_norm(Var a);
    /// Cosine similarity of two vectors (not required to be unit norm).
    Var cosine(Var a, Var b);
    /// Maximum of scalar nodes; subgradient routes to the first argmax.
    Var max_of(const std::vector<Var>& scalars);

    /// Feature vector (oc*oh*ow x 1) of a fixed convolution applied to a flat
    /// CHW image vector.
    Var conv_features(Var image_chw, const ConvSpec& spec);

    /// Seeds d(target)/d(target)=1 and sweeps the tape in reverse.
    /// `target` must be a 1x1 scalar node.
    void backward(Var target);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        std::function<void(Tape&)> pullback; // empty for leaves/constants
    };

    Var push(Mat value, bool needs_grad, std::function<void(Tape&)> pullback);
    Mat& grad_ref(Var v) { return nodes_[v.id].grad; }
    bool needs(Var v) const { return nodes_[v.id].needs_grad; }

    std::vector<Node> nodes_;
};

} // namespace mytm::diff
