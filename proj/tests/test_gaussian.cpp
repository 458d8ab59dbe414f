#include "test_support.hpp"
#include "twinsplat/errors.hpp"
#include "twinsplat/gaussian.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

using namespace twinsplat;

namespace {

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("activation of the zero vector") {
    RawParams raw{};
    const Gaussian g = activate_raw_params(raw);
    CHECK(g.center.isZero(0.0f));
    CHECK(g.rotation == Eigen::Vector4f(1, 0, 0, 0));
    CHECK(g.opacity == doctest::Approx(0.5));
    for (int k = 0; k < 3; ++k) {
        CHECK(g.color[k] == doctest::Approx(0.5));
        CHECK(g.scale[k] == doctest::Approx(1e-4 + std::log(2.0)));
    }
    CHECK(g.valid());
}

TEST_CASE("activation normalizes the quaternion and squashes opacity") {
    RawParams raw{};
    raw[6] = 2.0;
    CHECK(activate_raw_params(raw).rotation == Eigen::Vector4f(1, 0, 0, 0));

    raw = {};
    raw[10] = 4.0;
    // 1 / (1 + e^-4)
    CHECK(activate_raw_params(raw).opacity == doctest::Approx(0.9820137900379085).epsilon(1e-7));

    raw = {};
    raw[7] = 3.0;
    raw[8] = 4.0;
    const Gaussian g = activate_raw_params(raw);
    CHECK(g.rotation[1] == doctest::Approx(0.6));
    CHECK(g.rotation[2] == doctest::Approx(0.8));
}

TEST_CASE("activation rejects non-finite and wrongly sized input") {
    RawParams raw{};
    raw[4] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)activate_raw_params(raw), ParameterDomainError);
    raw[4] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS((void)activate_raw_params(raw), ParameterDomainError);
    std::vector<double> short_raw(13, 0.0);
    CHECK_THROWS_AS((void)activate_raw_params(short_raw), ParameterDomainError);
}

TEST_CASE("activation yields valid Gaussians for random finite inputs") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> wide(0.0, 30.0);
    std::uniform_int_distribution<int> exponent(-12, 300);
    for (int trial = 0; trial < 20000; ++trial) {
        RawParams raw;
        for (auto& v : raw) v = wide(rng);
        if (trial % 10 == 0) {
            // Extreme magnitudes, including tiny quaternions.
            for (auto& v : raw) v = std::copysign(std::pow(10.0, exponent(rng)), wide(rng));
        }
        const Gaussian g = activate_raw_params(raw);
        REQUIRE_MESSAGE(g.valid(), "trial " << trial);
    }
}

TEST_CASE("density of an empty set and of an isotropic Gaussian") {
    GaussianSet empty;
    CHECK(density_at(empty, {0.3, -0.2, 0.1}) == 0.0);

    GaussianSet one;
    Gaussian g;
    g.center = {0.1f, 0.2f, -0.3f};
    g.scale = Eigen::Vector3f::Constant(0.1f);
    g.opacity = 1.0f;
    one.gaussians.push_back(g);
    const Eigen::Vector3d c = g.center.cast<double>();
    CHECK(density_at(one, c) == doctest::Approx(1.0));
    CHECK(density_at(one, c + Eigen::Vector3d(0, 0.1, 0)) == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));
}

TEST_CASE("density matches the covariance form and is rotation invariant") {
    std::mt19937_64 rng(11);
    GaussianSet set;
    for (int i = 0; i < 12; ++i) set.gaussians.push_back(testing::random_gaussian(rng));
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Vector3d p(u(rng), u(rng), u(rng));
        double expected = 0.0;
        for (const auto& g : set.gaussians) {
            const Eigen::Vector3d d = p - g.center.cast<double>();
            expected += g.opacity * std::exp(-0.5 * d.dot(covariance(g).inverse() * d));
        }
        CHECK(density_at(set, p) == doctest::Approx(expected).epsilon(1e-9));

        const Eigen::Matrix3d r = testing::random_rotation(rng);
        const GaussianSet rotated = rotate_set(set, r);
        CHECK(std::abs(density_at(rotated, r * p) - density_at(set, p)) < 1e-5);
    }
}

TEST_CASE("splat files round-trip bit-exactly") {
    testing::TempDir dir("splat");
    std::mt19937_64 rng(3);

    SUBCASE("single Gaussian, re-saved bytes identical") {
        GaussianSet set;
        set.kind = GaussianKind::normal;
        set.gaussians.push_back(testing::random_gaussian(rng));
        save_splat(set, dir.path / "a.splat");
        const GaussianSet loaded = load_splat(dir.path / "a.splat");
        CHECK(loaded == set);
        save_splat(loaded, dir.path / "b.splat");
        CHECK(file_bytes(dir.path / "a.splat") == file_bytes(dir.path / "b.splat"));
        CHECK(file_bytes(dir.path / "a.splat").size() == 4 + 4 + 1 + 4 + 14 * 4);
    }

    SUBCASE("empty set keeps its kind") {
        GaussianSet set;
        set.kind = GaussianKind::normal;
        save_splat(set, dir.path / "e.splat");
        const GaussianSet loaded = load_splat(dir.path / "e.splat");
        CHECK(loaded.size() == 0);
        CHECK(loaded.kind == GaussianKind::normal);
    }

    SUBCASE("randomized sets up to 1e5 Gaussians") {
        for (std::size_t n : {std::size_t{2}, std::size_t{977}, std::size_t{100000}}) {
            GaussianSet set;
            set.kind = n % 2 ? GaussianKind::normal : GaussianKind::texture;
            for (std::size_t i = 0; i < n; ++i) set.gaussians.push_back(testing::random_gaussian(rng));
            save_splat(set, dir.path / "r.splat");
            CHECK(load_splat(dir.path / "r.splat") == set);
        }
    }
}

TEST_CASE("splat loader reports format errors") {
    testing::TempDir dir("splat_err");
    std::mt19937_64 rng(5);
    GaussianSet set;
    for (int i = 0; i < 3; ++i) set.gaussians.push_back(testing::random_gaussian(rng));
    save_splat(set, dir.path / "ok.splat");
    const auto bytes = file_bytes(dir.path / "ok.splat");

    auto write = [&](const std::vector<char>& b) {
        std::ofstream out(dir.path / "bad.splat", std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    SUBCASE("truncated mid-record names the record") {
        // Header is 13 bytes; cut inside record 1.
        write({bytes.begin(), bytes.begin() + 13 + 56 + 20});
        try {
            (void)load_splat(dir.path / "bad.splat");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("record 1") != std::string::npos);
        }
    }
    SUBCASE("bad magic") {
        auto b = bytes;
        b[0] = 'X';
        write(b);
        CHECK_THROWS_WITH_AS((void)load_splat(dir.path / "bad.splat"), doctest::Contains("magic"), FormatError);
    }
    SUBCASE("version mismatch") {
        auto b = bytes;
        b[4] = 2;
        write(b);
        CHECK_THROWS_WITH_AS((void)load_splat(dir.path / "bad.splat"), doctest::Contains("version"), FormatError);
    }
}
