#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mytm/adapter.hpp"
#include "mytm/corpus.hpp"
#include "mytm/losses.hpp"

namespace mytm {

/// Evaluation protocol: which target ages to sweep and how references are
/// selected. Regression de-ages a held-out old photo down the grid
/// {0,...,70}; progression ages a younger one over {40,...,100}.
struct EvalProtocol {
    enum class Task { regression, progression };

    struct SubRange {
        std::string name;
        double lo = 0.0;
        double hi = 100.0;
    };

    Task task = Task::regression;
    std::vector<int> target_ages;
    int reference_window_years = 3;
    std::vector<SubRange> sub_ranges;

    static EvalProtocol regression();
    static EvalProtocol progression();
    static EvalProtocol for_task(const std::string& name);

    void validate() const; // ages must be multiples of 10 in [0, 100]
};

/// |predicted - target| in years.
double age_mae(AgeYears predicted, AgeYears target);

/// Max cosine identity similarity of the re-aged face against the reference
/// images; the reference list must be nonempty.
double id_sim(const BackendBundle& bundle, const ImageTensor& reaged,
              const std::vector<ImageTensor>& reference);

struct PerAgeMetrics {
    int target_age = 0;
    double age_mae = 0.0;
    std::optional<double> id_sim; // unset: no references within the widened window
    int reference_count = 0;
    int effective_window_years = 0;
};

struct EvalAggregate {
    std::string name;
    double lo = 0.0;
    double hi = 100.0;
    double age_mae = 0.0;
    std::optional<double> id_sim;
    int ages_counted = 0;
    int id_sim_undefined_ages = 0;
};

struct EvalReport {
    std::string task;
    std::string backend_name;
    std::string config_hash;
    std::uint64_t seed = 0;
    double train_age_min = 0.0;
    double train_age_max = 0.0;
    std::vector<PerAgeMetrics> per_age;
    std::vector<EvalAggregate> aggregates; // "overall", "in_range", protocol extras

    const EvalAggregate* find_aggregate(const std::string& name) const;
};

/// Sweeps the protocol grid over every test-split photo: re-age, score
/// Age_MAE with the eval-mode estimator, score ID_sim against the
/// reference-split photos near the target age. Ages without references
/// become metric-undefined markers excluded from aggregates.
EvalReport run_protocol(const BackendBundle& bundle, const AdapterNetwork& net,
                        const AgedPhotoCollection& collection, const EvalProtocol& protocol);

void write_report_json(const EvalReport& report, const std::filesystem::path& path);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
/// Parses a report CSV back into (per-age, aggregate) rows; round-trip test
/// support and ablation-table assembly.
EvalReport read_report_csv(const std::filesystem::path& path);

} // namespace mytm
