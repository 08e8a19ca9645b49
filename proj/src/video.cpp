#include "mytm/video.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "mytm/image_io.hpp"

namespace mytm {

using nlohmann::json;

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& frames_dir) {
    if (!std::filesystem::is_directory(frames_dir)) {
        throw ValidationError("frames directory not found: " + frames_dir.string());
    }
    static const std::regex frame_re("frame_([0-9]{6})\\.png");
    std::vector<std::filesystem::path> frames;
    for (const auto& entry : std::filesystem::directory_iterator(frames_dir)) {
        if (std::regex_match(entry.path().filename().string(), frame_re)) {
            frames.push_back(entry.path());
        }
    }
    std::sort(frames.begin(), frames.end());
    if (frames.empty()) {
        throw ValidationError("no frame_NNNNNN.png files in " + frames_dir.string());
    }
    return frames;
}

ImageTensor reage_keyframe(const BackendBundle& bundle, const AdapterNetwork& net,
                           const VideoJob& job) {
    const auto frames = list_frames(job.frames_dir);
    if (job.keyframe_index < 0 || job.keyframe_index >= static_cast<int>(frames.size())) {
        throw ValidationError("keyframe index " + std::to_string(job.keyframe_index) +
                              " outside frame count " + std::to_string(frames.size()));
    }
    const ImageTensor raw = load_image(frames[static_cast<std::size_t>(job.keyframe_index)]);
    const ImageTensor aligned = bundle.aligner->align_face(raw);
    return personalized_reage(bundle, net, aligned, job.target_age).first;
}

namespace {

/// Centered square crop box, matching the toy aligner's convention.
struct CropBox {
    int top, left, size;
};

CropBox center_box(const ImageTensor& frame) {
    const int m = std::min(frame.height(), frame.width());
    return {(frame.height() - m) / 2, (frame.width() - m) / 2, m};
}

/// Area-average resample (both directions) of a square image.
ImageTensor resample_square(const ImageTensor& in, int out_side) {
    if (in.height() == out_side && in.width() == out_side) return in;
    ImageTensor out(out_side, out_side);
    const double scale = static_cast<double>(in.height()) / out_side;
    for (int c = 0; c < 3; ++c) {
        for (int oy = 0; oy < out_side; ++oy) {
            const double y0 = oy * scale, y1 = (oy + 1) * scale;
            for (int ox = 0; ox < out_side; ++ox) {
                const double x0 = ox * scale, x1 = (ox + 1) * scale;
                double acc = 0.0, wacc = 0.0;
                for (int iy = static_cast<int>(y0); iy < static_cast<int>(std::ceil(y1)); ++iy) {
                    const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                    if (wy <= 0.0) continue;
                    for (int ix = static_cast<int>(x0); ix < static_cast<int>(std::ceil(x1)); ++ix) {
                        const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                        if (wx <= 0.0) continue;
                        acc += wy * wx * in.at(c, std::min(iy, in.height() - 1),
                                               std::min(ix, in.width() - 1));
                        wacc += wy * wx;
                    }
                }
                out.at(c, oy, ox) = acc / wacc;
            }
        }
    }
    return out;
}

/// Pastes the swapped face back into the frame at the aligner's crop box.
ImageTensor paste_back(const ImageTensor& frame, const ImageTensor& face) {
    if (frame.height() == face.height() && frame.width() == face.width()) {
        return face; // frame already at face resolution
    }
    const CropBox box = center_box(frame);
    const ImageTensor scaled = resample_square(face, box.size);
    ImageTensor out = frame;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < box.size; ++y)
            for (int x = 0; x < box.size; ++x)
                out.at(c, box.top + y, box.left + x) = scaled.at(c, y, x);
    return out;
}

} // namespace

VideoSummary reage_video(const BackendBundle& bundle, const AdapterNetwork& net,
                         const VideoJob& job) {
    const auto frames = list_frames(job.frames_dir);
    const ImageTensor reaged_face = reage_keyframe(bundle, net, job);

    std::filesystem::create_directories(job.output_dir);
    VideoSummary summary;
    summary.frame_count = static_cast<int>(frames.size());
    summary.keyframe_index = job.keyframe_index;
    summary.target_age = job.target_age.value();

    for (std::size_t i = 0; i < frames.size(); ++i) {
        const ImageTensor frame = load_image(frames[i]);
        const ImageTensor aligned = bundle.aligner->align_face(frame);
        const auto swapped = bundle.face_swapper->swap_face(reaged_face, aligned);

        FrameStatus st;
        st.index = static_cast<int>(i);
        st.file = frames[i].filename().string();
        ImageTensor out = frame;
        if (swapped) {
            out = paste_back(frame, *swapped);
            st.swapped = true;
            ++summary.swapped_count;
        } else {
            ++summary.passthrough_count; // no face: frame passes through
        }
        save_image(out, job.output_dir / frames[i].filename());
        summary.frames.push_back(std::move(st));
    }

    json j;
    j["frame_count"] = summary.frame_count;
    j["swapped"] = summary.swapped_count;
    j["passthrough_no_face"] = summary.passthrough_count;
    j["keyframe_index"] = summary.keyframe_index;
    j["target_age"] = summary.target_age;
    j["frames"] = json::array();
    for (const auto& st : summary.frames) {
        j["frames"].push_back({{"index", st.index},
                               {"file", st.file},
                               {"status", st.swapped ? "swapped" : "passthrough_no_face"}});
    }
    std::ofstream f(job.output_dir / "summary.json", std::ios::binary);
    f << j.dump(2) << "\n";
    return summary;
}

} // namespace mytm
