#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "mytm/config.hpp"
#include "mytm/evaluator.hpp"

namespace mytm {

struct AblateRow {
    std::string name;
    AblationFlags flags;
    bool trained = false;
    bool available = true;
    std::string note;
    std::optional<double> age_mae_overall;
    std::optional<double> id_sim_overall;
    std::optional<double> id_sim_in_range;
};

struct AblateReport {
    std::string mode; // "ladder" or "datasize"
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<AblateRow> rows;

    const AblateRow* find(const std::string& name) const;
};

/// Component ladder: untrained baseline, then training runs that introduce
/// w-norm regularization, the personalized aging loss, extrapolation
/// regularization and finally the adapter network itself. Rows without the
/// adapter have no trainable parameters, so their outputs coincide with the
/// global path; they are kept so the table mirrors the full protocol.
/// Per-row failures yield an unavailable row, not an aborted table.
AblateReport run_ablation_ladder(const BackendBundle& bundle,
                                 const AgedPhotoCollection& collection, const RunConfig& config,
                                 int iterations_per_row,
                                 const std::filesystem::path& out_dir);

/// Dataset-size sweep: trains the full method on stratified train subsets of
/// the requested sizes; sizes above the available train split are marked
/// unavailable.
AblateReport run_dataset_size_ablation(const BackendBundle& bundle,
                                       const AgedPhotoCollection& collection,
                                       const RunConfig& config, const std::vector<int>& sizes,
                                       int iterations_per_row,
                                       const std::filesystem::path& out_dir);

void write_ablate_csv(const AblateReport& report, const std::filesystem::path& path);
std::string render_ablate_table(const AblateReport& report);

} // namespace mytm
