#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mytm/adapter.hpp"

namespace mytm {

/// Keyframe-swap video job: re-age one chosen frame with the personalized
/// model, then propagate that single face to every frame via swapping.
struct VideoJob {
    std::filesystem::path frames_dir; // numbered frame_%06d.png images
    int keyframe_index = 0;           // position in the sorted frame sequence
    AgeYears target_age = AgeYears::clamped(0.0);
    std::filesystem::path output_dir;
};

struct FrameStatus {
    int index = 0;
    std::string file;
    bool swapped = false; // false: passed through (no face detected)
};

struct VideoSummary {
    int frame_count = 0;
    int swapped_count = 0;
    int passthrough_count = 0; // warning count
    int keyframe_index = 0;
    double target_age = 0.0;
    std::vector<FrameStatus> frames;
};

/// Sorted frame files of a job's directory (frame_NNNNNN.png).
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& frames_dir);

/// Aligns the keyframe and re-ages it through the personalized path.
ImageTensor reage_keyframe(const BackendBundle& bundle, const AdapterNetwork& net,
                           const VideoJob& job);

/// Full pipeline: one output frame per input frame, same order and
/// resolution; swap failures degrade to pass-through and are counted.
/// Writes frames plus summary.json into job.output_dir.
VideoSummary reage_video(const BackendBundle& bundle, const AdapterNetwork& net,
                         const VideoJob& job);

} // namespace mytm
