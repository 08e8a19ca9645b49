#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "fixtures.hpp"
#include "mytm/image_io.hpp"

using namespace mytm;

namespace {

struct CliResult {
    int code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const auto out_file = std::filesystem::temp_directory_path() /
                          ("mytm_cli_out_" + std::to_string(counter++) + ".txt");
    const std::string cmd =
        std::string(MYTM_BIN_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream f(out_file);
    r.output.assign((std::istreambuf_iterator<char>(f)), {});
    std::filesystem::remove(out_file);
    return r;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), {});
}

/// Config with the width-reduced adapter and test learning rate.
std::filesystem::path write_fast_config(const std::filesystem::path& dir) {
    const auto path = dir / "config.json";
    std::ofstream f(path);
    f << R"({"adapter_global_hidden":16,"adapter_aging_hidden":4,"adapter_style_hidden":32,)"
      << R"("learning_rate":1e-3,"checkpoint_every":5})" << "\n";
    return path;
}

} // namespace

TEST_CASE("cli: synth -> validate round trip exits 0 with a decade histogram") {
    const auto dir = test::scratch_dir("cli_synth");
    const CliResult synth = run_cli("dataset synth --out " + dir.string());
    CHECK(synth.code == 0);
    const CliResult val = run_cli("dataset validate --manifest " +
                                  (dir / "manifest.jsonl").string());
    CHECK(val.code == 0);
    CHECK(val.output.find("train age range: [30, 70]") != std::string::npos);
    CHECK(val.output.find("train (12 photos)") != std::string::npos);
    // grid ages 0..20 and 80..100 lack references in this fixture
    CHECK(val.output.find("warning: reference split has no photo within 3 years") !=
          std::string::npos);
    CHECK(val.output.find("ok") != std::string::npos);
}

TEST_CASE("cli: validate rejects a bad manifest with exit 2 and a line number") {
    const auto dir = test::scratch_dir("cli_badmanifest");
    std::ofstream f(dir / "bad.jsonl");
    f << R"({"path":"nope.png","age_years":150,"split":"train"})" << "\n";
    f.close();
    const CliResult r = run_cli("dataset validate --manifest " + (dir / "bad.jsonl").string());
    CHECK(r.code == 2);
    CHECK(r.output.find(":1") != std::string::npos);
}

TEST_CASE("cli: reage rejects out-of-range ages with exit 2") {
    const auto dir = test::scratch_dir("cli_age150");
    const SynthPerson person(30);
    save_image(person.photo(AgeYears::years(40.0), 1), dir / "x.png");
    const CliResult r =
        run_cli("reage --image " + (dir / "x.png").string() + " --age 150 --no-adapter");
    CHECK(r.code == 2);
    CHECK(r.output.find("150") != std::string::npos);
}

TEST_CASE("cli: train writes a loss log and checkpoints; same seed reproduces bytes") {
    const auto data = test::scratch_dir("cli_train_data");
    run_cli("dataset synth --out " + data.string());
    const auto cfg = write_fast_config(data);
    const auto out1 = test::scratch_dir("cli_train_out1");
    const auto out2 = test::scratch_dir("cli_train_out2");

    const std::string base = "--config " + cfg.string() + " train --manifest " +
                             (data / "manifest.jsonl").string() + " --iterations 10 --seed 5";
    const CliResult r1 = run_cli(base + " --out " + out1.string());
    CHECK(r1.code == 0);
    CHECK(std::filesystem::exists(out1 / "losses.csv"));
    CHECK(std::filesystem::exists(out1 / "ckpt_10" / "adapter.bin"));
    CHECK(std::filesystem::exists(out1 / "ckpt_10" / "meta.json"));

    const CliResult r2 = run_cli(base + " --out " + out2.string());
    CHECK(r2.code == 0);
    CHECK(slurp(out1 / "losses.csv") == slurp(out2 / "losses.csv"));
}

TEST_CASE("cli: reage with a zero-init checkpoint equals --no-adapter") {
    const auto data = test::scratch_dir("cli_reage_data");
    run_cli("dataset synth --out " + data.string());
    const auto cfg = write_fast_config(data);
    const auto out = test::scratch_dir("cli_reage_out");

    // adapter ablated: parameters stay at the zero-init identity
    const CliResult tr = run_cli("--config " + cfg.string() + " train --manifest " +
                                 (data / "manifest.jsonl").string() + " --iterations 5 --seed 3" +
                                 " --ablate adapter --out " + out.string());
    CHECK(tr.code == 0);

    const auto img = data / "images" / "test_000.png";
    const CliResult with_ckpt =
        run_cli("--config " + cfg.string() + " reage --image " + img.string() +
                " --age 40 --ckpt " + (out / "ckpt_5").string() + " --out " +
                (out / "a.png").string());
    CHECK(with_ckpt.code == 0);
    CHECK(with_ckpt.output.find("eval-mode age estimate") != std::string::npos);
    const CliResult no_adapter =
        run_cli("--config " + cfg.string() + " reage --image " + img.string() +
                " --age 40 --no-adapter --out " + (out / "b.png").string());
    CHECK(no_adapter.code == 0);
    CHECK(slurp(out / "a.png") == slurp(out / "b.png"));
}

TEST_CASE("cli: eval produces report.json, report.csv and plots") {
    const auto data = test::scratch_dir("cli_eval_data");
    run_cli("dataset synth --out " + data.string());
    const auto cfg = write_fast_config(data);
    const auto train_out = test::scratch_dir("cli_eval_train");
    run_cli("--config " + cfg.string() + " train --manifest " +
            (data / "manifest.jsonl").string() + " --iterations 5 --seed 4 --out " +
            train_out.string());

    const auto eval_out = test::scratch_dir("cli_eval_out");
    const CliResult r = run_cli("--config " + cfg.string() + " eval --manifest " +
                                (data / "manifest.jsonl").string() + " --ckpt " +
                                (train_out / "ckpt_5").string() +
                                " --task regression --out " + eval_out.string());
    CHECK(r.code == 0);
    CHECK(std::filesystem::exists(eval_out / "report.json"));
    CHECK(std::filesystem::exists(eval_out / "report.csv"));
    CHECK(std::filesystem::exists(eval_out / "plots" / "age_mae.svg"));
    CHECK(r.output.find("overall") != std::string::npos);
}

TEST_CASE("cli: the real backend fails with exit 1, unknown flags with exit 2") {
    const CliResult real = run_cli("--backend real reage --image x.png --age 30 --no-adapter");
    CHECK(real.code == 1);
    CHECK(real.output.find("backend") != std::string::npos);

    const CliResult usage = run_cli("--definitely-not-a-flag");
    CHECK(usage.code == 2);
}

TEST_CASE("cli: video subcommand runs the toy pipeline end to end") {
    const auto data = test::scratch_dir("cli_video_data");
    run_cli("dataset synth --out " + data.string());
    const auto cfg = write_fast_config(data);
    const auto train_out = test::scratch_dir("cli_video_train");
    run_cli("--config " + cfg.string() + " train --manifest " +
            (data / "manifest.jsonl").string() + " --iterations 5 --seed 6 --out " +
            train_out.string());

    const auto frames = test::scratch_dir("cli_video_frames");
    const SynthPerson person(31);
    for (int i = 0; i < 3; ++i) {
        char fname[32];
        std::snprintf(fname, sizeof(fname), "frame_%06d.png", i);
        save_image(person.photo(AgeYears::years(45.0 + i), 500 + static_cast<std::uint64_t>(i)),
                   frames / fname);
    }
    const auto video_out = test::scratch_dir("cli_video_out");
    const CliResult r = run_cli("--config " + cfg.string() + " video --frames " +
                                frames.string() + " --keyframe 1 --age 60 --ckpt " +
                                (train_out / "ckpt_5").string() + " --out " + video_out.string());
    CHECK(r.code == 0);
    CHECK(std::filesystem::exists(video_out / "frame_000002.png"));
    CHECK(std::filesystem::exists(video_out / "summary.json"));
    CHECK(r.output.find("frames: 3") != std::string::npos);
}
