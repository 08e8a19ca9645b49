#include "mytm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "mytm/errors.hpp"
#include "mytm/image_io.hpp"

namespace mytm {

using nlohmann::json;

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::reference: return "reference";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "reference") return Split::reference;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split '" + s + "' (expected train|reference|test)");
}

AgedPhotoCollection AgedPhotoCollection::from_records(std::vector<PhotoRecord> records) {
    double lo = 101.0, hi = -1.0;
    for (const auto& r : records) {
        if (r.split == Split::train) {
            lo = std::min(lo, r.age_years.value());
            hi = std::max(hi, r.age_years.value());
        }
    }
    if (hi < 0.0) {
        throw ValidationError("collection has an empty train split");
    }
    return AgedPhotoCollection(std::move(records), AgeYears::years(lo), AgeYears::years(hi));
}

std::vector<const PhotoRecord*> AgedPhotoCollection::split_records(Split s) const {
    std::vector<const PhotoRecord*> out;
    for (const auto& r : records_)
        if (r.split == s) out.push_back(&r);
    return out;
}

AgedPhotoCollection load_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) {
        throw ValidationError("manifest not found: " + manifest_path.string());
    }
    const auto base_dir = manifest_path.has_parent_path() ? manifest_path.parent_path()
                                                          : std::filesystem::path(".");
    std::vector<PhotoRecord> records;
    std::set<std::string> seen_paths;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = manifest_path.string() + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(where + ": malformed JSON line: " + e.what());
        }
        if (!j.is_object()) {
            throw ValidationError(where + ": expected a JSON object");
        }
        for (const auto& [key, val] : j.items()) {
            if (key != "path" && key != "age_years" && key != "split" && key != "capture_date") {
                throw ValidationError(where + ": unknown field '" + key + "'");
            }
        }
        if (!j.contains("path") || !j["path"].is_string())
            throw ValidationError(where + ": missing or non-string 'path'");
        if (!j.contains("age_years") || !j["age_years"].is_number())
            throw ValidationError(where + ": missing or non-numeric 'age_years'");
        if (!j.contains("split") || !j["split"].is_string())
            throw ValidationError(where + ": missing or non-string 'split'");

        PhotoRecord r;
        std::filesystem::path p = j["path"].get<std::string>();
        r.path = p.is_absolute() ? p : base_dir / p;
        const double age = j["age_years"].get<double>();
        if (!(age >= 0.0 && age <= 100.0)) {
            throw ValidationError(where + ": age_years " + std::to_string(age) +
                                  " outside [0, 100]");
        }
        r.age_years = AgeYears::years(age);
        try {
            r.split = split_from_string(j["split"].get<std::string>());
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        if (j.contains("capture_date")) {
            if (!j["capture_date"].is_string())
                throw ValidationError(where + ": non-string 'capture_date'");
            r.capture_date = j["capture_date"].get<std::string>();
        }
        if (!seen_paths.insert(r.path.string()).second) {
            throw ValidationError(where + ": duplicate path '" + r.path.string() + "'");
        }
        if (!std::filesystem::exists(r.path)) {
            throw ValidationError(where + ": image file missing: " + r.path.string());
        }
        records.push_back(std::move(r));
    }
    return AgedPhotoCollection::from_records(std::move(records));
}

void save_manifest(const AgedPhotoCollection& collection,
                   const std::filesystem::path& manifest_path) {
    if (manifest_path.has_parent_path()) {
        std::filesystem::create_directories(manifest_path.parent_path());
    }
    std::ofstream f(manifest_path, std::ios::binary); // binary: stable newlines
    if (!f) throw ValidationError("cannot write manifest: " + manifest_path.string());
    const auto base = manifest_path.has_parent_path() ? manifest_path.parent_path()
                                                      : std::filesystem::path(".");
    for (const auto& r : collection.records()) {
        json j;
        std::error_code ec;
        const auto rel = std::filesystem::relative(r.path, base, ec);
        j["path"] = (!ec && !rel.empty()) ? rel.generic_string() : r.path.generic_string();
        j["age_years"] = r.age_years.value();
        j["split"] = to_string(r.split);
        if (r.capture_date) j["capture_date"] = *r.capture_date;
        f << j.dump() << "\n";
    }
}

AgeYears sample_target_age(const AgedPhotoCollection& c, Rng& rng) {
    return AgeYears::years(rng.uniform(c.age_min().value(), c.age_max().value()));
}

std::optional<AgeYears> sample_extrapolation_age(const AgedPhotoCollection& c, Rng& rng) {
    const double lo_len = c.age_min().value();         // [0, age_min)
    const double hi_len = 100.0 - c.age_max().value(); // (age_max, 100]
    const double side = rng.u01();
    const double pos = rng.u01();
    if (lo_len <= 0.0 && hi_len <= 0.0) {
        return std::nullopt; // training range already spans [0, 100]
    }
    const double p_low = lo_len / (lo_len + hi_len);
    if (side < p_low) {
        return AgeYears::years(pos * lo_len); // in [0, age_min)
    }
    return AgeYears::years(c.age_max().value() + (1.0 - pos) * hi_len); // in (age_max, 100]
}

AgedPhotoCollection subsample_collection(const AgedPhotoCollection& c, int n, Rng& rng) {
    const auto train = c.split_records(Split::train);
    if (n <= 0) {
        throw ValidationError("subsample size must be positive (train split must stay nonempty)");
    }
    if (static_cast<std::size_t>(n) > train.size()) {
        throw ValidationError("subsample size " + std::to_string(n) + " exceeds train split size " +
                              std::to_string(train.size()));
    }
    // decade buckets, shuffled within, drained round-robin so every populated
    // decade stays represented in small subsets
    std::map<int, std::vector<const PhotoRecord*>> buckets;
    for (const auto* r : train) {
        buckets[std::min(static_cast<int>(r->age_years.value() / 10.0), 10)].push_back(r);
    }
    for (auto& [decade, v] : buckets) rng.shuffle(v);

    std::set<const PhotoRecord*> picked;
    while (picked.size() < static_cast<std::size_t>(n)) {
        for (auto& [decade, v] : buckets) {
            if (picked.size() >= static_cast<std::size_t>(n)) break;
            if (!v.empty()) {
                picked.insert(v.back());
                v.pop_back();
            }
        }
    }

    std::vector<PhotoRecord> out;
    for (const auto& r : c.records()) {
        if (r.split != Split::train || picked.count(&r)) out.push_back(r);
    }
    return AgedPhotoCollection::from_records(std::move(out));
}

IngestReport ingest_and_align(const std::filesystem::path& raw_dir,
                              const std::filesystem::path& manifest_out,
                              const BackendBundle& bundle) {
    const auto ages_csv = raw_dir / "ages.csv";
    std::ifstream f(ages_csv);
    if (!f) {
        throw ValidationError("ages file not found: " + ages_csv.string());
    }
    const auto out_base = manifest_out.has_parent_path() ? manifest_out.parent_path()
                                                         : std::filesystem::path(".");
    const auto aligned_dir = out_base / "aligned";
    std::filesystem::create_directories(aligned_dir);

    IngestReport report;
    report.manifest = manifest_out;
    std::vector<PhotoRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line == "filename,age_years") continue; // optional header
        const auto comma = line.find(',');
        const std::string where = ages_csv.string() + ":" + std::to_string(line_no);
        if (comma == std::string::npos) {
            throw ValidationError(where + ": expected 'filename,age_years'");
        }
        const std::string filename = line.substr(0, comma);
        double age = 0.0;
        try {
            age = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw ValidationError(where + ": cannot parse age");
        }
        if (!(age >= 0.0 && age <= 100.0)) {
            throw ValidationError(where + ": age " + std::to_string(age) + " outside [0, 100]");
        }

        ImageTensor raw(1, 1);
        try {
            raw = load_image(raw_dir / filename);
        } catch (const Error&) {
            ++report.skipped;
            continue;
        }
        const ImageTensor aligned = bundle.aligner->align_face(raw);
        auto out_name = std::filesystem::path(filename).stem().string() + ".png";
        save_image(aligned, aligned_dir / out_name);

        PhotoRecord r;
        r.path = aligned_dir / out_name;
        r.age_years = AgeYears::years(age);
        r.split = Split::train;
        records.push_back(std::move(r));
        ++report.written;
    }
    auto collection = AgedPhotoCollection::from_records(std::move(records));
    save_manifest(collection, manifest_out);
    return report;
}

} // namespace mytm
