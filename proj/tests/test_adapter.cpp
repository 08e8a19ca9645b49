#include <doctest.h>

#include "mytm/adapter.hpp"
#include "mytm/synth.hpp"
#include "mytm/toy_backend.hpp"
#include "test_util.hpp"

using namespace mytm;

namespace {

/// Additive random perturbation of every tensor, including the zero-init
/// output layers.
void perturb_adapter(AdapterNetwork& net, Rng& rng, double scale) {
    for (auto& [name, p] : net.parameters()) {
        for (Eigen::Index j = 0; j < p->cols(); ++j)
            for (Eigen::Index i = 0; i < p->rows(); ++i)
                (*p)(i, j) += rng.normal() * scale;
    }
}

const AdapterDims kSmallDims{16, 4, 32}; // widths / 16

} // namespace

TEST_CASE("fresh adapter emits an exactly zero offset for any input") {
    AdapterNetwork net;
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        const LatentCode code = test::random_latent(rng, 2.0);
        const LatentCode off = net.forward(code, AgeYears::years(10.0 * trial));
        CHECK(off.styles() == Eigen::MatrixXd::Zero(kLatentRows, kLatentCols));
    }
}

TEST_CASE("perturbed adapter offset: frozen fingerprint and age sensitivity") {
    AdapterNetwork net(AdapterDims{}, 7);
    Rng prng(42);
    perturb_adapter(net, prng, 0.01);
    Rng rng(43);
    const LatentCode code = test::random_latent(rng, 0.5);

    const LatentCode off30 = net.forward(code, AgeYears::years(30.0));
    const LatentCode off60 = net.forward(code, AgeYears::years(60.0));
    CHECK(off30.styles().allFinite());
    // the aging feature feeds every style MLP, so offsets differ across ages
    CHECK(off30.styles() != off60.styles());
    // frozen golden fingerprint (computed once from this fixed-seed setup)
    CHECK(off30.styles().sum() == doctest::Approx(-22.723922256158573).epsilon(1e-9));
    CHECK(off30.styles()(0, 0) == doctest::Approx(0.26304482304389637).epsilon(1e-9));
    CHECK(off30.styles()(17, 511) == doctest::Approx(-0.11045404356087192).epsilon(1e-9));
}

TEST_CASE("adapter offsets stay finite for bounded inputs") {
    AdapterNetwork net(AdapterDims{}, 11);
    Rng prng(44);
    perturb_adapter(net, prng, 0.05);
    Rng rng(45);
    for (int trial = 0; trial < 5; ++trial) {
        const LatentCode code = test::random_latent(rng, 5.0);
        const LatentCode off = net.forward(code, AgeYears::years(95.0));
        CHECK(off.styles().allFinite());
    }
}

TEST_CASE("personalized_reage with a fresh adapter equals the global path bitwise") {
    const auto bundle = make_backend("toy", ToyBackend::kDefaultSeed);
    const AdapterNetwork net;
    const SynthPerson person(3);
    const ImageTensor x = person.photo(AgeYears::years(50.0), 5);
    const auto [yp, wp] = personalized_reage(bundle, net, x, AgeYears::years(20.0));
    const auto [yg, wg] = global_reage(bundle, x, AgeYears::years(20.0));
    CHECK(yp.pixels() == yg.pixels());
    CHECK(wp.styles() == wg.styles());
    CHECK(wp.styles().rows() == 18);
    CHECK(wp.styles().cols() == 512);
}

TEST_CASE("tape forward agrees with plain forward") {
    AdapterNetwork net(kSmallDims, 13);
    Rng prng(46);
    perturb_adapter(net, prng, 0.02);
    Rng rng(47);
    const LatentCode code = test::random_latent(rng, 0.8);
    const AgeYears age = AgeYears::years(44.0);

    const LatentCode plain = net.forward(code, age);
    diff::Tape tape;
    const auto tp = net.register_on_tape(tape);
    const diff::Var off = net.forward_on_tape(tape, tp, tape.constant(code.styles()), age);
    CHECK((tape.value(off) - plain.styles()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adapter gradients match central differences on the down-scaled net") {
    AdapterNetwork net(kSmallDims, 17);
    Rng prng(48);
    perturb_adapter(net, prng, 0.02);
    Rng rng(49);
    const LatentCode code = test::random_latent(rng, 0.6);
    const AgeYears age = AgeYears::years(61.0);

    // analytic: d(sum of offset entries)/d(params)
    diff::Tape tape;
    const auto tp = net.register_on_tape(tape);
    const diff::Var off = net.forward_on_tape(tape, tp, tape.constant(code.styles()), age);
    const diff::Var total = tape.sum(off);
    tape.backward(total);

    auto params = net.parameters();
    Rng pick(50);
    const double h = 1e-5;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Eigen::MatrixXd* p = params[pi].second;
        for (int s = 0; s < 4; ++s) {
            const auto i = static_cast<Eigen::Index>(pick.index(static_cast<std::size_t>(p->rows())));
            const auto j = static_cast<Eigen::Index>(pick.index(static_cast<std::size_t>(p->cols())));
            const double orig = (*p)(i, j);
            (*p)(i, j) = orig + h;
            const double up = net.forward(code, age).styles().sum();
            (*p)(i, j) = orig - h;
            const double dn = net.forward(code, age).styles().sum();
            (*p)(i, j) = orig;
            const double fd = (up - dn) / (2.0 * h);
            const double an = tape.grad(tp.leaves[pi])(i, j);
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            INFO(params[pi].first, "(", i, ",", j, ") fd=", fd, " an=", an);
            CHECK(std::abs(fd - an) / denom < 1e-4);
        }
    }
}

TEST_CASE("adapter save/load round trip is exact") {
    const auto dir = test::scratch_dir("adapter_io");
    AdapterNetwork net(kSmallDims, 19);
    Rng prng(51);
    perturb_adapter(net, prng, 0.03);
    net.save((dir / "adapter.bin").string());
    const AdapterNetwork loaded = AdapterNetwork::load((dir / "adapter.bin").string());
    CHECK(loaded.equal_parameters(net));
    CHECK(loaded.dims().global_hidden == kSmallDims.global_hidden);

    // forward outputs identical
    Rng rng(52);
    const LatentCode code = test::random_latent(rng);
    CHECK(loaded.forward(code, AgeYears::years(33.0)).styles() ==
          net.forward(code, AgeYears::years(33.0)).styles());
}

TEST_CASE("adapter rejects non-finite codes") {
    AdapterNetwork net(kSmallDims, 23);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(18, 512);
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(LatentCode{bad}, DomainError);
}

TEST_CASE("adapter parameter inventory is stable") {
    AdapterNetwork net;
    const auto params = net.parameters();
    CHECK(params.size() == 10 + 4 * 18);
    CHECK(params[0].first == "global_w1");
    CHECK(params[10].first == "style0_w1");
    CHECK(net.parameter_count() > 0);
}
