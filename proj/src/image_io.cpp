#include "mytm/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "mytm/errors.hpp"

namespace mytm {

ImageTensor load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ValidationError("image file not found: " + path.string());
    }
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw ValidationError("cannot decode image: " + path.string());
    }
    ImageTensor out(bgr.rows, bgr.cols);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            // BGR -> RGB, [0,255] -> [-1,1]
            out.at(0, y, x) = row[x][2] / 127.5 - 1.0;
            out.at(1, y, x) = row[x][1] / 127.5 - 1.0;
            out.at(2, y, x) = row[x][0] / 127.5 - 1.0;
        }
    }
    return out;
}

void save_image(const ImageTensor& image, const std::filesystem::path& path) {
    cv::Mat bgr(image.height(), image.width(), CV_8UC3);
    auto q = [](double v) {
        int iv = static_cast<int>(std::lround((v + 1.0) * 127.5));
        if (iv < 0) iv = 0;
        if (iv > 255) iv = 255;
        return static_cast<unsigned char>(iv);
    };
    for (int y = 0; y < image.height(); ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width(); ++x) {
            row[x][2] = q(image.at(0, y, x));
            row[x][1] = q(image.at(1, y, x));
            row[x][0] = q(image.at(2, y, x));
        }
    }
    if (!path.parent_path().empty()) {
        std::filesystem::create_directories(path.parent_path());
    }
    if (!cv::imwrite(path.string(), bgr)) {
        throw ValidationError("cannot write image: " + path.string());
    }
}

} // namespace mytm
