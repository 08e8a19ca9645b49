// Command-line entry point: dataset ingestion/validation, training,
// single-image re-aging, evaluation, video re-aging and ablation harnesses,
// all sharing one flat config schema.
//
// Exit codes: 0 success, 1 runtime/backend failure, 2 usage/validation error.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <sstream>

#include "mytm/ablate.hpp"
#include "mytm/config.hpp"
#include "mytm/image_io.hpp"
#include "mytm/plots.hpp"
#include "mytm/synth.hpp"
#include "mytm/video.hpp"

namespace {

using namespace mytm;

struct GlobalOpts {
    std::string config_path;
    std::string backend;
    std::int64_t seed = -1;
    bool verbose = false;
};

RunConfig effective_config(const GlobalOpts& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = RunConfig::from_file(g.config_path);
    if (!g.backend.empty()) cfg.backend = g.backend;
    if (g.seed >= 0) cfg.seed = static_cast<std::uint64_t>(g.seed);
    return cfg;
}

void apply_ablate_list(RunConfig& cfg, const std::string& list) {
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        if (tok == "adapter") cfg.flags.use_adapter = false;
        else if (tok == "extra") cfg.flags.use_extrapolation_reg = false;
        else if (tok == "persage") cfg.flags.use_personalized_aging_loss = false;
        else if (tok == "wnorm") cfg.flags.use_adaptive_wnorm = false;
        else throw ValidationError("unknown --ablate component '" + tok +
                                   "' (expected adapter|extra|persage|wnorm)");
    }
}

int cmd_dataset_validate(const std::string& manifest) {
    const AgedPhotoCollection c = load_manifest(manifest);
    std::map<Split, std::map<int, int>> decades;
    std::map<Split, int> counts;
    for (const auto& r : c.records()) {
        ++counts[r.split];
        ++decades[r.split][static_cast<int>(r.age_years.value() / 10.0) * 10];
    }
    std::cout << "manifest: " << manifest << "\n";
    std::cout << "train age range: [" << c.age_min().value() << ", " << c.age_max().value()
              << "]\n";
    for (const auto split : {Split::train, Split::reference, Split::test}) {
        std::cout << to_string(split) << " (" << counts[split] << " photos):";
        for (const auto& [decade, n] : decades[split]) {
            std::cout << "  " << decade << "s:" << n;
        }
        std::cout << "\n";
    }
    // eval-grid coverage of the reference split (both task grids, +-3 years)
    std::vector<int> uncovered;
    for (int age = 0; age <= 100; age += 10) {
        bool covered = false;
        for (const auto* r : c.split_records(Split::reference)) {
            if (std::abs(r->age_years.value() - age) <= 3.0) {
                covered = true;
                break;
            }
        }
        if (!covered) uncovered.push_back(age);
    }
    if (!uncovered.empty()) {
        std::cout << "warning: reference split has no photo within 3 years of eval grid age";
        for (int a : uncovered) std::cout << ' ' << a;
        std::cout << "\n";
    }
    std::cout << "ok\n";
    return 0;
}

int cmd_dataset_synth(const std::string& out_dir, int train_count, double age_min,
                      double age_max, std::uint64_t person_seed, std::uint64_t photo_seed) {
    SynthDatasetSpec spec;
    spec.train_count = train_count;
    spec.train_age_min = age_min;
    spec.train_age_max = age_max;
    spec.person_seed = person_seed;
    spec.photo_seed = photo_seed;
    const auto collection = write_synth_dataset(out_dir, spec);
    std::cout << "wrote " << collection.records().size() << " photos and "
              << (std::filesystem::path(out_dir) / "manifest.jsonl").string() << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& manifest, const std::string& out_dir,
              int iterations, const std::string& ablate_list, const std::string& resume) {
    RunConfig cfg = effective_config(g);
    if (iterations > 0) cfg.iterations = iterations;
    if (!ablate_list.empty()) apply_ablate_list(cfg, ablate_list);

    const BackendBundle bundle = cfg.make_bundle();
    const AgedPhotoCollection collection = load_manifest(manifest);
    Trainer trainer(bundle, collection, cfg.training_config());
    if (!resume.empty()) {
        trainer.restore_checkpoint(resume);
        std::cout << "resumed at iteration " << trainer.iteration() << "\n";
    }
    const auto ckpt = trainer.train(out_dir);
    std::cout << "final checkpoint: " << ckpt.string() << "\n";
    std::cout << "loss log: " << (std::filesystem::path(out_dir) / "losses.csv").string() << "\n";
    return 0;
}

int cmd_reage(const GlobalOpts& g, const std::string& image_path, double age_value,
              const std::string& ckpt, const std::string& out_path, bool no_adapter) {
    RunConfig cfg = effective_config(g);
    AgeYears age = AgeYears::years(age_value); // rejects out-of-range ages
    const BackendBundle bundle = cfg.make_bundle();

    AdapterNetwork net(cfg.adapter_dims, cfg.seed);
    if (!no_adapter) {
        if (ckpt.empty()) {
            throw ValidationError("either --ckpt or --no-adapter is required");
        }
        net = load_checkpoint_adapter(ckpt);
    }
    const ImageTensor aligned = bundle.aligner->align_face(load_image(image_path));
    const auto [reaged, combined] = personalized_reage(bundle, net, aligned, age);

    std::filesystem::path out = out_path.empty()
        ? std::filesystem::path(image_path).parent_path() /
              (std::filesystem::path(image_path).stem().string() + "_reaged_" +
               std::to_string(static_cast<int>(age_value)) + ".png")
        : std::filesystem::path(out_path);
    save_image(reaged, out);

    const AgeYears est = bundle.age_estimator_eval->estimate_age(reaged, AgeEstimatorMode::eval);
    std::cout << "wrote " << out.string() << "\n";
    std::cout << "eval-mode age estimate: " << est.value() << "\n";
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& manifest, const std::string& ckpt,
             const std::string& task, const std::string& out_dir) {
    RunConfig cfg = effective_config(g);
    const BackendBundle bundle = cfg.make_bundle();
    const AgedPhotoCollection collection = load_manifest(manifest);
    const AdapterNetwork net = load_checkpoint_adapter(ckpt);
    const CheckpointMeta meta = read_checkpoint_meta(ckpt);

    EvalReport report = run_protocol(bundle, net, collection, EvalProtocol::for_task(task));
    report.config_hash = meta.config_hash;

    const std::filesystem::path out(out_dir);
    write_report_json(report, out / "report.json");
    write_report_csv(report, out / "report.csv");
    emit_plots(report, out / "plots");

    for (const auto& a : report.aggregates) {
        std::cout << a.name << ": age_mae=" << a.age_mae;
        if (a.id_sim) std::cout << " id_sim=" << *a.id_sim;
        else std::cout << " id_sim=undefined";
        std::cout << " (over " << a.ages_counted << " ages)\n";
    }
    std::cout << "report: " << (out / "report.json").string() << "\n";
    return 0;
}

int cmd_video(const GlobalOpts& g, const std::string& frames, int keyframe, double age_value,
              const std::string& ckpt, const std::string& out_dir) {
    RunConfig cfg = effective_config(g);
    const BackendBundle bundle = cfg.make_bundle();
    const AdapterNetwork net = load_checkpoint_adapter(ckpt);
    VideoJob job;
    job.frames_dir = frames;
    job.keyframe_index = keyframe;
    job.target_age = AgeYears::years(age_value);
    job.output_dir = out_dir;
    const VideoSummary s = reage_video(bundle, net, job);
    std::cout << "frames: " << s.frame_count << " swapped: " << s.swapped_count
              << " passthrough_no_face: " << s.passthrough_count << "\n";
    std::cout << "summary: " << (job.output_dir / "summary.json").string() << "\n";
    return 0;
}

int cmd_ablate(const GlobalOpts& g, const std::string& manifest, const std::string& out_dir,
               const std::string& mode, int iterations, const std::string& sizes_list) {
    RunConfig cfg = effective_config(g);
    const BackendBundle bundle = cfg.make_bundle();
    const AgedPhotoCollection collection = load_manifest(manifest);

    AblateReport report;
    if (mode == "ladder") {
        report = run_ablation_ladder(bundle, collection, cfg, iterations, out_dir);
    } else if (mode == "datasize") {
        std::vector<int> sizes;
        std::stringstream ss(sizes_list);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) sizes.push_back(std::stoi(tok));
        }
        if (sizes.empty()) sizes = {10, 50, 100};
        report = run_dataset_size_ablation(bundle, collection, cfg, sizes, iterations, out_dir);
    } else {
        throw ValidationError("unknown ablate mode '" + mode + "' (expected ladder|datasize)");
    }
    std::cout << render_ablate_table(report);
    std::cout << "table: " << (std::filesystem::path(out_dir) / "ablation.csv").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"personalized face re-aging toolkit"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    GlobalOpts g;
    app.add_option("--config", g.config_path, "flat JSON config file");
    app.add_option("--backend", g.backend, "backend override (toy|real)");
    app.add_option("--seed", g.seed, "run seed override");
    app.add_flag("--verbose", g.verbose, "chatty output");

    // dataset
    auto* dataset = app.add_subcommand("dataset", "manifest utilities");
    dataset->require_subcommand(1);
    std::string ds_manifest;
    auto* validate = dataset->add_subcommand("validate", "validate a manifest & report coverage");
    validate->add_option("--manifest", ds_manifest, "manifest path")->required();

    std::string synth_out;
    int synth_train = 12;
    double synth_age_min = 30.0, synth_age_max = 70.0;
    std::uint64_t synth_person_seed = 42, synth_photo_seed = 100;
    auto* synth = dataset->add_subcommand("synth", "generate a synthetic toy collection");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--train", synth_train, "number of train photos");
    synth->add_option("--age-min", synth_age_min, "train age range start");
    synth->add_option("--age-max", synth_age_max, "train age range end");
    synth->add_option("--person-seed", synth_person_seed, "identity seed");
    synth->add_option("--photo-seed", synth_photo_seed, "photo jitter seed");

    std::string ingest_raw, ingest_manifest;
    auto* ingest = dataset->add_subcommand("ingest", "align a raw photo directory into a manifest");
    ingest->add_option("--raw", ingest_raw, "directory with images + ages.csv")->required();
    ingest->add_option("--manifest", ingest_manifest, "output manifest path")->required();

    // train
    std::string train_manifest, train_out, train_ablate, train_resume;
    int train_iterations = -1;
    auto* train = app.add_subcommand("train", "personalize the adapter on a photo collection");
    train->add_option("--manifest", train_manifest, "manifest path")->required();
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--iterations", train_iterations, "iteration override");
    train->add_option("--ablate", train_ablate, "components to disable: adapter,extra,persage,wnorm");
    train->add_option("--resume", train_resume, "checkpoint directory to resume from");

    // reage
    std::string reage_image, reage_ckpt, reage_out;
    double reage_age = 0.0;
    bool reage_no_adapter = false;
    auto* reage = app.add_subcommand("reage", "re-age a single image");
    reage->add_option("--image", reage_image, "input image")->required();
    reage->add_option("--age", reage_age, "target age in years")->required();
    reage->add_option("--ckpt", reage_ckpt, "checkpoint directory");
    reage->add_option("--out", reage_out, "output PNG path");
    reage->add_flag("--no-adapter", reage_no_adapter, "bypass the adapter (global path)");

    // eval
    std::string eval_manifest, eval_ckpt, eval_task = "regression", eval_out;
    auto* eval = app.add_subcommand("eval", "run an evaluation protocol");
    eval->add_option("--manifest", eval_manifest, "manifest path")->required();
    eval->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();
    eval->add_option("--task", eval_task, "regression|progression");
    eval->add_option("--out", eval_out, "output directory")->required();

    // video
    std::string video_frames, video_ckpt, video_out;
    int video_keyframe = 0;
    double video_age = 0.0;
    auto* video = app.add_subcommand("video", "keyframe-swap video re-aging");
    video->add_option("--frames", video_frames, "directory of frame_NNNNNN.png")->required();
    video->add_option("--keyframe", video_keyframe, "keyframe index")->required();
    video->add_option("--age", video_age, "target age in years")->required();
    video->add_option("--ckpt", video_ckpt, "checkpoint directory")->required();
    video->add_option("--out", video_out, "output directory")->required();

    // ablate
    std::string ablate_manifest, ablate_out, ablate_mode = "ladder", ablate_sizes;
    int ablate_iterations = 200;
    auto* ablate = app.add_subcommand("ablate", "component ladder / dataset-size harness");
    ablate->add_option("--manifest", ablate_manifest, "manifest path")->required();
    ablate->add_option("--out", ablate_out, "output directory")->required();
    ablate->add_option("--mode", ablate_mode, "ladder|datasize");
    ablate->add_option("--iterations", ablate_iterations, "iterations per trained row");
    ablate->add_option("--sizes", ablate_sizes, "comma list for datasize mode (default 10,50,100)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2; // usage errors are exit code 2
    }

    try {
        if (validate->parsed()) return cmd_dataset_validate(ds_manifest);
        if (synth->parsed())
            return cmd_dataset_synth(synth_out, synth_train, synth_age_min, synth_age_max,
                                     synth_person_seed, synth_photo_seed);
        if (ingest->parsed()) {
            RunConfig cfg = effective_config(g);
            const auto report = ingest_and_align(ingest_raw, ingest_manifest, cfg.make_bundle());
            std::cout << "aligned " << report.written << " photos, skipped " << report.skipped
                      << " unreadable\n";
            std::cout << "manifest: " << report.manifest.string() << "\n";
            return 0;
        }
        if (train->parsed())
            return cmd_train(g, train_manifest, train_out, train_iterations, train_ablate,
                             train_resume);
        if (reage->parsed())
            return cmd_reage(g, reage_image, reage_age, reage_ckpt, reage_out, reage_no_adapter);
        if (eval->parsed()) return cmd_eval(g, eval_manifest, eval_ckpt, eval_task, eval_out);
        if (video->parsed())
            return cmd_video(g, video_frames, video_keyframe, video_age, video_ckpt, video_out);
        if (ablate->parsed())
            return cmd_ablate(g, ablate_manifest, ablate_out, ablate_mode, ablate_iterations,
                              ablate_sizes);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const BackendUnavailableError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 1;
    }
}
