#include <doctest.h>

#include <fstream>

#include "fixtures.hpp"

using namespace mytm;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), {});
}

} // namespace

TEST_CASE("all ablation flags off: parameters frozen, loss is the pure composite loss") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    TrainingConfig cfg = test::fast_config(3);
    cfg.flags = AblationFlags{false, false, false, false};
    Trainer trainer(bundle, collection, cfg);
    const AdapterNetwork before = trainer.adapter();
    LossReport r;
    for (int i = 0; i < 3; ++i) r = trainer.step();
    CHECK(trainer.adapter().equal_parameters(before));
    // only the forward/cycle composite terms contribute
    double composite = 0.0;
    for (const auto& t : r.terms) {
        if (t.name.rfind("forward_", 0) == 0 || t.name.rfind("cycle_", 0) == 0) {
            composite += t.contribution;
            CHECK_FALSE(t.skipped);
        } else {
            CHECK(t.skipped);
        }
    }
    CHECK(r.total == doctest::Approx(composite).epsilon(1e-12));
}

TEST_CASE("ten full steps move the parameters and the output") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    Trainer trainer(bundle, collection, test::fast_config(10));
    const AdapterNetwork before = trainer.adapter();
    for (int i = 0; i < 10; ++i) trainer.step();
    CHECK_FALSE(trainer.adapter().equal_parameters(before));

    const SynthPerson person(42);
    const ImageTensor x = person.photo(AgeYears::years(70.0), 1000);
    const auto [yp, wp] = personalized_reage(bundle, trainer.adapter(), x, AgeYears::years(40.0));
    const auto [yg, wg] = global_reage(bundle, x, AgeYears::years(40.0));
    CHECK(yp.pixels() != yg.pixels());
}

TEST_CASE("seed-fixed smoke: loss trends down over 200 reduced-width steps") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    Trainer trainer(bundle, collection, test::fast_config(200, 11));
    std::vector<double> totals;
    for (int i = 0; i < 200; ++i) totals.push_back(trainer.step().total);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 20; ++i) head += totals[static_cast<std::size_t>(i)];
    for (int i = 180; i < 200; ++i) tail += totals[static_cast<std::size_t>(i)];
    CHECK(tail < head);
}

TEST_CASE("three-seed monotone smoke property") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    double head_mean = 0.0, tail_mean = 0.0;
    for (const std::uint64_t seed : {101u, 202u, 303u}) {
        Trainer trainer(bundle, collection, test::fast_config(500, seed));
        std::vector<double> totals;
        for (int i = 0; i < 500; ++i) totals.push_back(trainer.step().total);
        for (int i = 0; i < 50; ++i) head_mean += totals[static_cast<std::size_t>(i)];
        for (int i = 450; i < 500; ++i) tail_mean += totals[static_cast<std::size_t>(i)];
    }
    CHECK(tail_mean < head_mean);
}

TEST_CASE("same seed reproduces the exact loss sequence") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    Trainer a(bundle, collection, test::fast_config(20, 5));
    Trainer b(bundle, collection, test::fast_config(20, 5));
    for (int i = 0; i < 20; ++i) {
        CHECK(a.step().total == b.step().total);
    }
}

TEST_CASE("resume from checkpoint reproduces the uninterrupted run bitwise") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    const auto dir_a = test::scratch_dir("resume_a");
    const auto dir_b = test::scratch_dir("resume_b");

    TrainingConfig cfg = test::fast_config(40, 9);
    cfg.checkpoint_every = 20;

    Trainer full(bundle, collection, cfg);
    full.train(dir_a);

    Trainer part1(bundle, collection, cfg);
    part1.train(dir_b, /*stop_after=*/20);
    Trainer part2(bundle, collection, cfg);
    part2.restore_checkpoint(dir_b / "ckpt_20");
    CHECK(part2.iteration() == 20);
    part2.train(dir_b);

    CHECK(slurp(dir_a / "losses.csv") == slurp(dir_b / "losses.csv"));

    // and the final parameters are bitwise identical
    CHECK(full.adapter().equal_parameters(part2.adapter()));
}

TEST_CASE("save -> load -> forward is bitwise identical to pre-save forward") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    const auto dir = test::scratch_dir("ckpt_roundtrip");
    Trainer trainer(bundle, collection, test::fast_config(8, 3));
    for (int i = 0; i < 8; ++i) trainer.step();
    trainer.save_checkpoint(dir / "ckpt_8");

    const AdapterNetwork loaded = load_checkpoint_adapter(dir / "ckpt_8");
    Rng rng(90);
    const LatentCode code = test::random_latent(rng, 0.5);
    const AgeYears age = AgeYears::years(52.0);
    CHECK(loaded.forward(code, age).styles() == trainer.adapter().forward(code, age).styles());
}

TEST_CASE("corrupt checkpoint files fail the hash check") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    const auto dir = test::scratch_dir("ckpt_corrupt");
    Trainer trainer(bundle, collection, test::fast_config(2, 3));
    trainer.step();
    trainer.save_checkpoint(dir / "ckpt");

    // truncate the adapter file
    const auto adapter_path = dir / "ckpt" / "adapter.bin";
    const auto size = std::filesystem::file_size(adapter_path);
    std::filesystem::resize_file(adapter_path, size / 2);
    try {
        load_checkpoint_adapter(dir / "ckpt");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("hash mismatch") != std::string::npos);
    }
}

TEST_CASE("checkpoint metadata records the collection age range and config hash") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    const auto dir = test::scratch_dir("ckpt_meta");
    Trainer trainer(bundle, collection, test::fast_config(2, 3));
    trainer.step();
    trainer.save_checkpoint(dir / "ckpt");
    const CheckpointMeta meta = read_checkpoint_meta(dir / "ckpt");
    CHECK(meta.age_min == collection.age_min().value());
    CHECK(meta.age_max == collection.age_max().value());
    CHECK(meta.iteration == 1);
    CHECK(meta.config_hash == "testhash");
    CHECK(meta.backend_name == "toy");
}

TEST_CASE("tape objective agrees with the plain objective") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    AdapterNetwork net(AdapterDims{16, 4, 32}, 55);
    Rng prng(91);
    for (auto& [name, p] : net.parameters())
        for (Eigen::Index j = 0; j < p->cols(); ++j)
            for (Eigen::Index i = 0; i < p->rows(); ++i) (*p)(i, j) += prng.normal() * 0.01;

    ImageCache cache;
    const auto* rec = collection.split_records(Split::train)[2];
    const ImageTensor& x = cache.get(rec->path, bundle);
    StepContext ctx;
    ctx.input_age = rec->age_years;
    ctx.target_age = AgeYears::years(58.0);
    const ReferenceSet refs = build_reference_set(collection, ctx.target_age, 3, Split::train);
    for (const auto* r : refs.records) ctx.reference_images.push_back(cache.get(r->path, bundle));
    ctx.extrapolation_age = AgeYears::years(12.0);

    const LossWeights w;
    const AblationFlags flags;
    const LossReport plain = total_personalization_loss(bundle, net, x, ctx, w, flags);

    diff::Tape tape;
    const auto tp = net.register_on_tape(tape);
    const TapeStepLoss tl = tape_total_personalization_loss(tape, bundle, net, tp, x, ctx, w, flags);
    CHECK(tl.report.total == doctest::Approx(plain.total).epsilon(1e-9));
    REQUIRE(tl.report.terms.size() == plain.terms.size());
    for (std::size_t i = 0; i < plain.terms.size(); ++i) {
        CHECK(tl.report.terms[i].name == plain.terms[i].name);
        if (!plain.terms[i].skipped) {
            CHECK(tl.report.terms[i].raw == doctest::Approx(plain.terms[i].raw).epsilon(1e-9));
        }
    }
    CHECK(tape.scalar(tl.total) == doctest::Approx(plain.total).epsilon(1e-9));
}

TEST_CASE("tape gradients of the step objective match finite differences") {
    const auto bundle = test::shared_bundle();
    const auto& collection = test::shared_collection();
    AdapterNetwork net(AdapterDims{16, 4, 32}, 77);
    Rng prng(92);
    for (auto& [name, p] : net.parameters())
        for (Eigen::Index j = 0; j < p->cols(); ++j)
            for (Eigen::Index i = 0; i < p->rows(); ++i) (*p)(i, j) += prng.normal() * 0.01;

    ImageCache cache;
    const auto* rec = collection.split_records(Split::train)[5];
    const ImageTensor& x = cache.get(rec->path, bundle);
    StepContext ctx;
    ctx.input_age = rec->age_years;
    ctx.target_age = AgeYears::years(44.0);
    const ReferenceSet refs = build_reference_set(collection, ctx.target_age, 3, Split::train);
    for (const auto* r : refs.records) ctx.reference_images.push_back(cache.get(r->path, bundle));
    ctx.extrapolation_age = AgeYears::years(88.0);

    const LossWeights w;
    const AblationFlags flags;
    diff::Tape tape;
    const auto tp = net.register_on_tape(tape);
    const TapeStepLoss tl = tape_total_personalization_loss(tape, bundle, net, tp, x, ctx, w, flags);
    tape.backward(tl.total);

    auto params = net.parameters();
    Rng pick(93);
    const double h = 1e-5;
    int checked = 0;
    for (std::size_t pi = 0; pi < params.size(); pi += 7) { // sample of tensors
        Eigen::MatrixXd* p = params[pi].second;
        for (int s = 0; s < 2; ++s) {
            const auto i = static_cast<Eigen::Index>(pick.index(static_cast<std::size_t>(p->rows())));
            const auto j = static_cast<Eigen::Index>(pick.index(static_cast<std::size_t>(p->cols())));
            const double orig = (*p)(i, j);
            (*p)(i, j) = orig + h;
            const double up = total_personalization_loss(bundle, net, x, ctx, w, flags).total;
            (*p)(i, j) = orig - h;
            const double dn = total_personalization_loss(bundle, net, x, ctx, w, flags).total;
            (*p)(i, j) = orig;
            const double fd = (up - dn) / (2.0 * h);
            const double an = tape.grad(tp.leaves[pi])(i, j);
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            INFO(params[pi].first, "(", i, ",", j, ")");
            CHECK(std::abs(fd - an) / denom < 1e-4);
            ++checked;
        }
    }
    CHECK(checked > 10);
}
