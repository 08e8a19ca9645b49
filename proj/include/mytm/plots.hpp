#pragma once

#include <filesystem>

#include "mytm/evaluator.hpp"

namespace mytm {

/// Renders per-age metric curves (age_mae.svg, id_sim.svg) plus a summary CSV
/// into `out_dir`. Undefined ID_sim ages are drawn as gaps.
void emit_plots(const EvalReport& report, const std::filesystem::path& out_dir);

/// Overlay of two reports (e.g. trained vs baseline) per metric.
void emit_comparison_plots(const EvalReport& a, const std::string& label_a,
                           const EvalReport& b, const std::string& label_b,
                           const std::filesystem::path& out_dir);

} // namespace mytm
