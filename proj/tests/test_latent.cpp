#include <doctest.h>

#include "mytm/latent.hpp"
#include "test_util.hpp"

using namespace mytm;

TEST_CASE("latent_add: additive identity and zero") {
    Rng rng(11);
    const LatentCode a = test::random_latent(rng);
    const LatentCode z = LatentCode::zeros();
    const LatentCode sum = latent_add(a, z);
    CHECK(sum.styles() == a.styles());
    CHECK(latent_add(z, z).styles() == z.styles());
}

TEST_CASE("latent_add matches the elementwise oracle on all 9216 entries") {
    Rng rng(12);
    const LatentCode a = test::random_latent(rng);
    const LatentCode b = test::random_latent(rng);
    const LatentCode sum = latent_add(a, b);
    for (int i = 0; i < kLatentRows; ++i)
        for (int j = 0; j < kLatentCols; ++j)
            CHECK(sum(i, j) == a(i, j) + b(i, j));
}

TEST_CASE("latent_add is commutative and associative within 1e-6") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const LatentCode a = test::random_latent(rng);
        const LatentCode b = test::random_latent(rng);
        const LatentCode c = test::random_latent(rng);
        CHECK(latent_add(a, b).styles() == latent_add(b, a).styles());
        const auto left = latent_add(latent_add(a, b), c);
        const auto right = latent_add(a, latent_add(b, c));
        CHECK((left.styles() - right.styles()).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("latent shape mismatch is a structural error") {
    CHECK_THROWS_AS(LatentCode(Eigen::MatrixXd::Zero(17, 512)), StructuralError);
    CHECK_THROWS_AS(LatentCode(Eigen::MatrixXd::Zero(18, 511)), StructuralError);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(18, 512);
    bad(3, 3) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(LatentCode(std::move(bad)), DomainError);
}

TEST_CASE("latent_wnorm_distance: zero at the mean, closed form for all-ones") {
    Rng rng(14);
    const LatentCode w = test::random_latent(rng);
    CHECK(latent_wnorm_distance(w, MeanLatent(w.styles())) == 0.0);

    const MeanLatent mean(test::random_latent(rng).styles());
    const LatentCode shifted(mean.center() + Eigen::MatrixXd::Ones(kLatentRows, kLatentCols));
    // sqrt(18*512) = sqrt(9216) = 96 exactly
    CHECK(latent_wnorm_distance(shifted, mean) == doctest::Approx(96.0).epsilon(1e-12));
}

TEST_CASE("latent_wnorm_distance matches a scalar sum-of-squares oracle") {
    Rng rng(15);
    const LatentCode w = test::random_latent(rng);
    const MeanLatent zero_mean;
    double ss = 0.0;
    for (int i = 0; i < kLatentRows; ++i)
        for (int j = 0; j < kLatentCols; ++j) ss += w(i, j) * w(i, j);
    CHECK(latent_wnorm_distance(w, zero_mean) == doctest::Approx(std::sqrt(ss)).epsilon(1e-12));
}

TEST_CASE("latent_wnorm_distance satisfies the triangle inequality") {
    Rng rng(16);
    for (int trial = 0; trial < 30; ++trial) {
        const LatentCode a = test::random_latent(rng);
        const LatentCode b = test::random_latent(rng);
        const LatentCode c = test::random_latent(rng);
        const double ac = latent_wnorm_distance(a, MeanLatent(c.styles()));
        const double ab = latent_wnorm_distance(a, MeanLatent(b.styles()));
        const double bc = latent_wnorm_distance(b, MeanLatent(c.styles()));
        CHECK(ac <= ab + bc + 1e-6);
    }
}

TEST_CASE("cosine_similarity basics") {
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(8);
    e1[0] = 1.0;
    Eigen::VectorXd e2 = Eigen::VectorXd::Zero(8);
    e2[1] = 1.0;
    const IdentityEmbedding a(e1), b(e2), na(-e1);
    CHECK(cosine_similarity(a, a) == 1.0);
    CHECK(cosine_similarity(a, b) == 0.0);
    CHECK(cosine_similarity(a, na) == -1.0);
    CHECK_THROWS_AS(IdentityEmbedding(Eigen::VectorXd::Zero(8)), DomainError);
}

TEST_CASE("cosine_similarity is exactly symmetric and bounded") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd v1(32), v2(32);
        for (int i = 0; i < 32; ++i) {
            v1[i] = rng.normal();
            v2[i] = rng.normal();
        }
        const IdentityEmbedding a(v1), b(v2);
        const double ab = cosine_similarity(a, b);
        CHECK(ab == cosine_similarity(b, a)); // bitwise symmetric
        CHECK(ab >= -1.0);
        CHECK(ab <= 1.0);
    }
}

TEST_CASE("IdentityEmbedding normalizes to unit norm") {
    Rng rng(18);
    Eigen::VectorXd v(64);
    for (int i = 0; i < 64; ++i) v[i] = rng.normal() * 7.0;
    const IdentityEmbedding e(v);
    CHECK(std::abs(e.vector().norm() - 1.0) < 1e-6);
}

TEST_CASE("AgeYears validates and clamps") {
    CHECK(AgeYears::years(42.5).value() == 42.5);
    CHECK_THROWS_AS(AgeYears::years(101.0), DomainError);
    CHECK_THROWS_AS(AgeYears::years(-0.5), DomainError);
    CHECK(AgeYears::clamped(150.0).value() == 100.0);
    CHECK(AgeYears::clamped(-3.0).value() == 0.0);
    CHECK(AgeYears::years(30.0).normalized() == doctest::Approx(0.3));
}
