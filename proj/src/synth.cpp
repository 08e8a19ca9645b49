#include "mytm/synth.hpp"

#include <cmath>

#include "mytm/image_io.hpp"
#include "mytm/rng.hpp"
#include "mytm/toy_backend.hpp"

namespace mytm {

SynthPerson::SynthPerson(std::uint64_t person_seed) {
    Rng rng(person_seed);
    plane_u_.resize(ToyBackend::kIdBandSize);
    for (auto& v : plane_u_) v = rng.normal();
    plane_u_ /= plane_u_.norm();
    plane_v_.resize(ToyBackend::kIdBandSize);
    for (auto& v : plane_v_) v = rng.normal();
    plane_v_ -= plane_u_.dot(plane_v_) * plane_u_;
    plane_v_ /= plane_v_.norm();
    texture_.resize(ToyBackend::kPixelCount);
    for (auto& v : texture_) v = rng.uniform(-0.6, 0.6);
}

Eigen::VectorXd SynthPerson::clean_band(AgeYears age) const {
    const double phi = kAgingArc * age.normalized();
    return kBandAmplitude * (std::cos(phi) * plane_u_ + std::sin(phi) * plane_v_);
}

ImageTensor SynthPerson::photo(AgeYears age, std::uint64_t photo_seed) const {
    Rng rng(photo_seed);
    Eigen::VectorXd px = texture_;
    for (int i = 0; i < ToyBackend::kPixelCount; ++i) {
        px[i] = std::clamp(px[i] + 0.02 * rng.normal(), -0.95, 0.95);
    }
    const Eigen::VectorXd band = clean_band(age);
    for (int i = 0; i < ToyBackend::kIdBandSize; ++i) {
        const double v = band[i] + 0.01 * rng.normal();
        px[ToyBackend::kIdBandBegin + i] = std::clamp(v, -0.95, 0.95);
    }
    const double age_px = 2.0 * age.normalized() - 1.0;
    for (int i = 0; i < ToyBackend::kAgeBandSize; ++i) {
        px[ToyBackend::kAgeBandBegin + i] = age_px;
    }
    return ImageTensor(ToyBackend::kResolution, ToyBackend::kResolution, std::move(px));
}

AgedPhotoCollection write_synth_dataset(const std::filesystem::path& dir,
                                        const SynthDatasetSpec& spec) {
    if (spec.train_count < 1) {
        throw ValidationError("synth dataset needs at least one train photo");
    }
    const SynthPerson person(spec.person_seed);
    const auto img_dir = dir / "images";
    std::filesystem::create_directories(img_dir);

    std::vector<PhotoRecord> records;
    std::uint64_t next_seed = spec.photo_seed;
    auto emit = [&](AgeYears age, Split split, const std::string& stem) {
        const ImageTensor img = person.photo(age, next_seed++);
        const auto path = img_dir / (stem + ".png");
        save_image(img, path);
        PhotoRecord r;
        r.path = path;
        r.age_years = age;
        r.split = split;
        records.push_back(std::move(r));
    };

    for (int i = 0; i < spec.train_count; ++i) {
        const double t = spec.train_count == 1
                             ? 0.0
                             : static_cast<double>(i) / (spec.train_count - 1);
        const double age = spec.train_age_min + t * (spec.train_age_max - spec.train_age_min);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "train_%03d", i);
        emit(AgeYears::years(age), Split::train, stem);
    }
    int ref_i = 0;
    for (double age = spec.train_age_min; age <= spec.train_age_max + 1e-9;
         age += spec.reference_step) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "ref_%03d", ref_i++);
        emit(AgeYears::years(std::min(age, 100.0)), Split::reference, stem);
    }
    int test_i = 0;
    for (double age : spec.test_ages) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "test_%03d", test_i++);
        emit(AgeYears::years(age), Split::test, stem);
    }

    auto collection = AgedPhotoCollection::from_records(std::move(records));
    save_manifest(collection, dir / "manifest.jsonl");
    return load_manifest(dir / "manifest.jsonl");
}

} // namespace mytm
