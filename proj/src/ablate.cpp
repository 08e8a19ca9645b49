#include "mytm/ablate.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mytm {

namespace {

std::string fmt_opt(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}

void fill_metrics_from_eval(AblateRow& row, const EvalReport& report) {
    if (const auto* a = report.find_aggregate("overall")) {
        row.age_mae_overall = a->age_mae;
        row.id_sim_overall = a->id_sim;
    }
    if (const auto* a = report.find_aggregate("in_range")) {
        row.id_sim_in_range = a->id_sim;
    }
}

AblateRow run_row(const std::string& name, const AblationFlags& flags, bool train,
                  const BackendBundle& bundle, const AgedPhotoCollection& collection,
                  const RunConfig& base_config, int iterations,
                  const std::filesystem::path& row_dir) {
    AblateRow row;
    row.name = name;
    row.flags = flags;
    row.trained = train;
    try {
        RunConfig cfg = base_config;
        cfg.flags = flags;
        cfg.iterations = iterations;
        cfg.checkpoint_every = std::max(1, iterations);

        AdapterNetwork net(cfg.adapter_dims, cfg.seed);
        if (train) {
            Trainer trainer(bundle, collection, cfg.training_config());
            trainer.train(row_dir);
            net = trainer.adapter();
        }
        const EvalReport eval = run_protocol(bundle, net, collection, EvalProtocol::regression());
        write_report_csv(eval, row_dir / "eval.csv");
        fill_metrics_from_eval(row, eval);
    } catch (const std::exception& e) {
        row.available = false;
        row.note = e.what();
    }
    return row;
}

} // namespace

const AblateRow* AblateReport::find(const std::string& name) const {
    for (const auto& r : rows)
        if (r.name == name) return &r;
    return nullptr;
}

AblateReport run_ablation_ladder(const BackendBundle& bundle,
                                 const AgedPhotoCollection& collection, const RunConfig& config,
                                 int iterations_per_row,
                                 const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    AblateReport report;
    report.mode = "ladder";
    report.config_hash = config.hash();
    report.seed = config.seed;

    const AblationFlags none{false, false, false, false};
    AblationFlags wnorm = none;
    wnorm.use_adaptive_wnorm = true;
    AblationFlags persage = wnorm;
    persage.use_personalized_aging_loss = true;
    AblationFlags extra = persage;
    extra.use_extrapolation_reg = true;
    AblationFlags full = extra;
    full.use_adapter = true;

    report.rows.push_back(run_row("sam_baseline", none, /*train=*/false, bundle, collection,
                                  config, iterations_per_row, out_dir / "row_sam_baseline"));
    report.rows.push_back(run_row("sam_pers_ft", none, /*train=*/true, bundle, collection,
                                  config, iterations_per_row, out_dir / "row_sam_pers_ft"));
    report.rows.push_back(run_row("plus_wnorm", wnorm, /*train=*/true, bundle, collection,
                                  config, iterations_per_row, out_dir / "row_plus_wnorm"));
    report.rows.push_back(run_row("plus_pers_age", persage, /*train=*/true, bundle, collection,
                                  config, iterations_per_row, out_dir / "row_plus_pers_age"));
    report.rows.push_back(run_row("plus_extrapolation", extra, /*train=*/true, bundle,
                                  collection, config, iterations_per_row,
                                  out_dir / "row_plus_extrapolation"));
    report.rows.push_back(run_row("full_method", full, /*train=*/true, bundle, collection,
                                  config, iterations_per_row, out_dir / "row_full_method"));

    write_ablate_csv(report, out_dir / "ablation.csv");
    return report;
}

AblateReport run_dataset_size_ablation(const BackendBundle& bundle,
                                       const AgedPhotoCollection& collection,
                                       const RunConfig& config, const std::vector<int>& sizes,
                                       int iterations_per_row,
                                       const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    AblateReport report;
    report.mode = "datasize";
    report.config_hash = config.hash();
    report.seed = config.seed;

    const auto train_size = collection.split_size(Split::train);
    for (int n : sizes) {
        const std::string name = "n_" + std::to_string(n);
        if (static_cast<std::size_t>(n) > train_size) {
            AblateRow row;
            row.name = name;
            row.available = false;
            row.note = "train split has only " + std::to_string(train_size) + " photos";
            report.rows.push_back(std::move(row));
            continue;
        }
        Rng rng(config.seed + static_cast<std::uint64_t>(n));
        const AgedPhotoCollection subset = subsample_collection(collection, n, rng);
        report.rows.push_back(run_row(name, AblationFlags{}, /*train=*/true, bundle, subset,
                                      config, iterations_per_row, out_dir / ("row_" + name)));
    }
    write_ablate_csv(report, out_dir / "ablation.csv");
    return report;
}

void write_ablate_csv(const AblateReport& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write ablation report: " + path.string());
    f << "# mode=" << report.mode << " config_hash=" << report.config_hash
      << " seed=" << report.seed << "\n";
    f << "row,adapter,extrapolation_reg,pers_age_loss,adaptive_wnorm,age_mae,id_sim,"
         "id_sim_in_range,available,note\n";
    for (const auto& r : report.rows) {
        f << r.name << ',' << (r.flags.use_adapter ? 1 : 0) << ','
          << (r.flags.use_extrapolation_reg ? 1 : 0) << ','
          << (r.flags.use_personalized_aging_loss ? 1 : 0) << ','
          << (r.flags.use_adaptive_wnorm ? 1 : 0) << ',' << fmt_opt(r.age_mae_overall) << ','
          << fmt_opt(r.id_sim_overall) << ',' << fmt_opt(r.id_sim_in_range) << ','
          << (r.available ? 1 : 0) << ',' << r.note << "\n";
    }
}

std::string render_ablate_table(const AblateReport& report) {
    std::ostringstream os;
    os << "mode: " << report.mode << "\n";
    char head[160];
    std::snprintf(head, sizeof(head), "%-20s %-8s %-6s %-8s %-6s %10s %10s %12s\n", "row",
                  "adapter", "extra", "persage", "wnorm", "age_mae", "id_sim", "id_in_range");
    os << head;
    for (const auto& r : report.rows) {
        if (!r.available) {
            char line[240];
            std::snprintf(line, sizeof(line), "%-20s unavailable: %s\n", r.name.c_str(),
                          r.note.c_str());
            os << line;
            continue;
        }
        char line[240];
        std::snprintf(line, sizeof(line), "%-20s %-8s %-6s %-8s %-6s %10s %10s %12s\n",
                      r.name.c_str(), r.flags.use_adapter ? "yes" : "-",
                      r.flags.use_extrapolation_reg ? "yes" : "-",
                      r.flags.use_personalized_aging_loss ? "yes" : "-",
                      r.flags.use_adaptive_wnorm ? "yes" : "-",
                      fmt_opt(r.age_mae_overall).c_str(), fmt_opt(r.id_sim_overall).c_str(),
                      fmt_opt(r.id_sim_in_range).c_str());
        os << line;
    }
    return os.str();
}

} // namespace mytm
