#pragma once

#include <Eigen/Core>

#include "mytm/errors.hpp"

namespace mytm {

/// Planar CHW image with 3 channels and values in [-1, 1]. Backend-convention
/// images are square (toy: 32x32); raw ingestion may be rectangular until the
/// aligner has run.
class ImageTensor {
public:
    ImageTensor(int height, int width)
        : height_(height), width_(width),
          pixels_(Eigen::VectorXd::Zero(3L * height * width)) {
        if (height <= 0 || width <= 0) {
            throw StructuralError("ImageTensor: non-positive dimensions");
        }
    }

    ImageTensor(int height, int width, Eigen::VectorXd pixels)
        : height_(height), width_(width), pixels_(std::move(pixels)) {
        if (height <= 0 || width <= 0 ||
            pixels_.size() != 3L * height * width) {
            throw StructuralError("ImageTensor: pixel buffer does not match dimensions");
        }
        validate_range();
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return 3; }
    bool square() const { return height_ == width_; }

    /// Flat CHW index.
    Eigen::Index index(int c, int y, int x) const {
        return (static_cast<Eigen::Index>(c) * height_ + y) * width_ + x;
    }

    double at(int c, int y, int x) const { return pixels_[index(c, y, x)]; }
    double& at(int c, int y, int x) { return pixels_[index(c, y, x)]; }

    const Eigen::VectorXd& pixels() const { return pixels_; }
    Eigen::VectorXd& pixels() { return pixels_; }

    bool same_shape(const ImageTensor& o) const {
        return height_ == o.height_ && width_ == o.width_;
    }

private:
    void validate_range() const {
        if (!pixels_.allFinite()) {
            throw DomainError("ImageTensor: non-finite pixel values");
        }
        if (pixels_.minCoeff() < -1.0 - 1e-12 || pixels_.maxCoeff() > 1.0 + 1e-12) {
            throw DomainError("ImageTensor: pixel values outside [-1, 1]");
        }
    }

    int height_;
    int width_;
    Eigen::VectorXd pixels_;
};

} // namespace mytm
