#include "mytm/evaluator.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mytm/image_io.hpp"
#include "mytm/trainer.hpp"

namespace mytm {

using nlohmann::json;

EvalProtocol EvalProtocol::regression() {
    EvalProtocol p;
    p.task = Task::regression;
    for (int a = 0; a <= 70; a += 10) p.target_ages.push_back(a);
    p.sub_ranges.push_back({"50-70", 50.0, 70.0});
    p.sub_ranges.push_back({"30-70", 30.0, 70.0});
    return p;
}

EvalProtocol EvalProtocol::progression() {
    EvalProtocol p;
    p.task = Task::progression;
    for (int a = 40; a <= 100; a += 10) p.target_ages.push_back(a);
    p.sub_ranges.push_back({"40-60", 40.0, 60.0});
    return p;
}

EvalProtocol EvalProtocol::for_task(const std::string& name) {
    if (name == "regression") return regression();
    if (name == "progression") return progression();
    throw ValidationError("unknown eval task '" + name + "' (expected regression|progression)");
}

void EvalProtocol::validate() const {
    if (target_ages.empty()) throw ValidationError("protocol has no target ages");
    for (int a : target_ages) {
        if (a < 0 || a > 100 || a % 10 != 0) {
            throw ValidationError("target age " + std::to_string(a) +
                                  " must be a multiple of 10 in [0, 100]");
        }
    }
    if (reference_window_years < 0) throw ValidationError("negative reference window");
}

double age_mae(AgeYears predicted, AgeYears target) {
    return std::abs(predicted.value() - target.value());
}

double id_sim(const BackendBundle& bundle, const ImageTensor& reaged,
              const std::vector<ImageTensor>& reference) {
    if (reference.empty()) {
        throw ValidationError("id_sim: empty reference set (callers mark the age undefined)");
    }
    const IdentityEmbedding e = bundle.identity_embedder->embed_identity(reaged);
    double best = -1.0;
    for (const auto& r : reference) {
        best = std::max(best, cosine_similarity(e, bundle.identity_embedder->embed_identity(r)));
    }
    return best;
}

namespace {

EvalAggregate aggregate_over(const std::string& name, double lo, double hi,
                             const std::vector<PerAgeMetrics>& per_age) {
    EvalAggregate agg;
    agg.name = name;
    agg.lo = lo;
    agg.hi = hi;
    double mae_sum = 0.0, id_sum = 0.0;
    int id_count = 0;
    for (const auto& m : per_age) {
        if (m.target_age < lo || m.target_age > hi) continue;
        mae_sum += m.age_mae;
        ++agg.ages_counted;
        if (m.id_sim) {
            id_sum += *m.id_sim;
            ++id_count;
        } else {
            ++agg.id_sim_undefined_ages;
        }
    }
    if (agg.ages_counted > 0) agg.age_mae = mae_sum / agg.ages_counted;
    if (id_count > 0) agg.id_sim = id_sum / id_count;
    return agg;
}

} // namespace

EvalReport run_protocol(const BackendBundle& bundle, const AdapterNetwork& net,
                        const AgedPhotoCollection& collection, const EvalProtocol& protocol) {
    protocol.validate();
    const auto test_records = collection.split_records(Split::test);
    if (test_records.empty()) {
        throw ValidationError("run_protocol: collection has no test split");
    }

    ImageCache cache;
    EvalReport report;
    report.task = protocol.task == EvalProtocol::Task::regression ? "regression" : "progression";
    report.backend_name = bundle.backend_name;
    report.seed = bundle.backend_seed;
    report.train_age_min = collection.age_min().value();
    report.train_age_max = collection.age_max().value();

    for (int age : protocol.target_ages) {
        const AgeYears target = AgeYears::years(age);
        PerAgeMetrics m;
        m.target_age = age;

        const ReferenceSet refs = build_reference_set(
            collection, target, protocol.reference_window_years, Split::reference);
        m.reference_count = static_cast<int>(refs.records.size());
        m.effective_window_years = refs.effective_window_years;
        std::vector<ImageTensor> ref_images;
        for (const auto* r : refs.records) ref_images.push_back(cache.get(r->path, bundle));

        double mae_sum = 0.0, id_sum = 0.0;
        for (const auto* rec : test_records) {
            const ImageTensor& x = cache.get(rec->path, bundle);
            const auto [y, combined] = personalized_reage(bundle, net, x, target);
            const AgeYears est =
                bundle.age_estimator_eval->estimate_age(y, AgeEstimatorMode::eval);
            mae_sum += age_mae(est, target);
            if (!ref_images.empty()) id_sum += id_sim(bundle, y, ref_images);
        }
        m.age_mae = mae_sum / static_cast<double>(test_records.size());
        if (!ref_images.empty()) {
            m.id_sim = id_sum / static_cast<double>(test_records.size());
        }
        report.per_age.push_back(m);
    }

    report.aggregates.push_back(aggregate_over("overall", 0.0, 100.0, report.per_age));
    report.aggregates.push_back(aggregate_over("in_range", report.train_age_min,
                                               report.train_age_max, report.per_age));
    for (const auto& sr : protocol.sub_ranges) {
        report.aggregates.push_back(aggregate_over(sr.name, sr.lo, sr.hi, report.per_age));
    }
    return report;
}

const EvalAggregate* EvalReport::find_aggregate(const std::string& name) const {
    for (const auto& a : aggregates)
        if (a.name == name) return &a;
    return nullptr;
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
    json j;
    j["task"] = report.task;
    j["backend"] = report.backend_name;
    j["config_hash"] = report.config_hash;
    j["seed"] = report.seed;
    j["train_age_min"] = report.train_age_min;
    j["train_age_max"] = report.train_age_max;
    j["per_age"] = json::array();
    for (const auto& m : report.per_age) {
        json e;
        e["target_age"] = m.target_age;
        e["age_mae"] = m.age_mae;
        if (m.id_sim) e["id_sim"] = *m.id_sim;
        else e["id_sim"] = nullptr;
        e["reference_count"] = m.reference_count;
        e["effective_window_years"] = m.effective_window_years;
        j["per_age"].push_back(e);
    }
    j["aggregates"] = json::array();
    for (const auto& a : report.aggregates) {
        json e;
        e["name"] = a.name;
        e["lo"] = a.lo;
        e["hi"] = a.hi;
        e["age_mae"] = a.age_mae;
        if (a.id_sim) e["id_sim"] = *a.id_sim;
        else e["id_sim"] = nullptr;
        e["ages_counted"] = a.ages_counted;
        e["id_sim_undefined_ages"] = a.id_sim_undefined_ages;
        j["aggregates"].push_back(e);
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write report: " + path.string());
    f << j.dump(2) << "\n";
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write report: " + path.string());
    f << "# task=" << report.task << " backend=" << report.backend_name
      << " config_hash=" << report.config_hash << " seed=" << report.seed << "\n";
    f << "kind,name,age_mae,id_sim,refs,window\n";
    for (const auto& m : report.per_age) {
        f << "age," << m.target_age << ',' << fmt(m.age_mae) << ','
          << (m.id_sim ? fmt(*m.id_sim) : "undefined") << ',' << m.reference_count << ','
          << m.effective_window_years << "\n";
    }
    for (const auto& a : report.aggregates) {
        f << "aggregate," << a.name << ',' << fmt(a.age_mae) << ','
          << (a.id_sim ? fmt(*a.id_sim) : "undefined") << ',' << a.ages_counted << ','
          << a.id_sim_undefined_ages << "\n";
    }
}

EvalReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open report csv: " + path.string());
    EvalReport report;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("kind,", 0) == 0) continue;
        std::istringstream ss(line);
        std::string kind, name, mae, idsim, refs, window;
        std::getline(ss, kind, ',');
        std::getline(ss, name, ',');
        std::getline(ss, mae, ',');
        std::getline(ss, idsim, ',');
        std::getline(ss, refs, ',');
        std::getline(ss, window, ',');
        if (kind == "age") {
            PerAgeMetrics m;
            m.target_age = std::stoi(name);
            m.age_mae = std::stod(mae);
            if (idsim != "undefined") m.id_sim = std::stod(idsim);
            m.reference_count = std::stoi(refs);
            m.effective_window_years = std::stoi(window);
            report.per_age.push_back(m);
        } else if (kind == "aggregate") {
            EvalAggregate a;
            a.name = name;
            a.age_mae = std::stod(mae);
            if (idsim != "undefined") a.id_sim = std::stod(idsim);
            a.ages_counted = std::stoi(refs);
            a.id_sim_undefined_ages = std::stoi(window);
            report.aggregates.push_back(a);
        }
    }
    return report;
}

} // namespace mytm
