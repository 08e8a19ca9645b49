#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mytm/backend.hpp"
#include "mytm/latent.hpp"
#include "mytm/rng.hpp"

namespace mytm {

enum class Split { train, reference, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// One age-annotated photo of the subject.
struct PhotoRecord {
    std::filesystem::path path;
    AgeYears age_years = AgeYears::clamped(0.0);
    Split split = Split::train;
    std::optional<std::string> capture_date; // ISO-8601, informational
};

/// Manifest-backed photo collection for a single identity. Immutable after
/// construction; age_min/age_max are the exact min/max over the train split.
class AgedPhotoCollection {
public:
    static AgedPhotoCollection from_records(std::vector<PhotoRecord> records);

    const std::vector<PhotoRecord>& records() const { return records_; }
    AgeYears age_min() const { return age_min_; }
    AgeYears age_max() const { return age_max_; }

    std::vector<const PhotoRecord*> split_records(Split s) const;
    std::size_t split_size(Split s) const { return split_records(s).size(); }

private:
    AgedPhotoCollection(std::vector<PhotoRecord> records, AgeYears lo, AgeYears hi)
        : records_(std::move(records)), age_min_(lo), age_max_(hi) {}

    std::vector<PhotoRecord> records_;
    AgeYears age_min_;
    AgeYears age_max_;
};

/// Loads and validates a JSON-Lines manifest. Fields per line: exactly
/// {"path", "age_years", "split"} plus optional "capture_date". Relative
/// paths resolve against the manifest's directory. Errors cite line numbers.
AgedPhotoCollection load_manifest(const std::filesystem::path& manifest_path);

/// Writes the manifest for a collection; paths are stored relative to the
/// manifest directory when possible. Deterministic byte-for-byte.
void save_manifest(const AgedPhotoCollection& collection,
                   const std::filesystem::path& manifest_path);

/// Uniform target age in [age_min, age_max] of the train split.
AgeYears sample_target_age(const AgedPhotoCollection& c, Rng& rng);

/// Uniform age outside the training range, piecewise-proportional to the
/// lengths of [0, age_min) and (age_max, 100]. nullopt when the training
/// range already covers [0, 100]. Always consumes exactly two draws.
std::optional<AgeYears> sample_extrapolation_age(const AgedPhotoCollection& c, Rng& rng);

/// Age-stratified train subset of size n (bucket by decade, round-robin);
/// reference/test records pass through unchanged.
AgedPhotoCollection subsample_collection(const AgedPhotoCollection& c, int n, Rng& rng);

struct IngestReport {
    std::filesystem::path manifest;
    int written = 0;
    int skipped = 0; // unreadable inputs
};

/// Reads `<raw_dir>/ages.csv` (lines: filename,age_years), aligns each
/// readable image through the bundle's aligner, writes PNG copies next to the
/// manifest and emits the manifest itself. Re-running over unchanged inputs
/// produces a byte-identical manifest.
IngestReport ingest_and_align(const std::filesystem::path& raw_dir,
                              const std::filesystem::path& manifest_out,
                              const BackendBundle& bundle);

} // namespace mytm
