#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "pae/analysis.hpp"
#include "pae/eig.hpp"
#include "pae/error.hpp"
#include "pae/io.hpp"
#include "pae/rng.hpp"

using namespace pae;

namespace {

// independent dominant-eigenvalue estimate: 500 power iterations + Rayleigh
double power_radius(const Tensor& m, Rng& rng) {
    const std::size_t n = m.rows();
    Tensor v = Tensor::uniform({n, 1}, rng, -1.0, 1.0);
    for (int it = 0; it < 500; ++it) {
        Tensor w = matmul(m, v);
        const double norm = std::sqrt([&] {
            double s = 0.0;
            for (double x : w.data) s += x * x;
            return s;
        }());
        for (double& x : w.data) x /= norm;
        v = w;
    }
    const Tensor mv = matmul(m, v);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += v.data[i] * mv.data[i];
        den += v.data[i] * v.data[i];
    }
    return std::abs(num / den);
}

Tensor rotation2(double theta) {
    Tensor r({2, 2});
    r(0, 0) = std::cos(theta);
    r(0, 1) = -std::sin(theta);
    r(1, 0) = std::sin(theta);
    r(1, 1) = std::cos(theta);
    return r;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("spectral radius: identity, scaling, rotation, shape errors") {
    CHECK(spectral_radius(Tensor::identity(5)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spectral_radius(scale(Tensor::identity(7), 0.5)) == doctest::Approx(0.5).epsilon(1e-12));
    Tensor rot({2, 2});
    rot(0, 1) = -1.0;
    rot(1, 0) = 1.0;
    CHECK(spectral_radius(rot) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(spectral_radius(Tensor({3, 4})), ShapeError);
    CHECK_THROWS_AS(spectral_radius(Tensor({3})), ShapeError);
}

TEST_CASE("spectral radius agrees with a power-iteration oracle") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 77);
        // similarity transform of a diagonal with a separated dominant entry
        const std::size_t n = 16;
        Tensor d = Tensor::zeros({n, n});
        d(0, 0) = 2.0;
        for (std::size_t i = 1; i < n; ++i) d(i, i) = rng.uniform(-0.9, 0.9);
        Tensor v = Tensor::identity(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) v(i, j) += 0.1 * rng.uniform(-1.0, 1.0);
        const Tensor m = matmul(matmul(v, d), inverse(v));
        const double oracle = power_radius(m, rng);
        CHECK(spectral_radius(m) == doctest::Approx(oracle).epsilon(1e-4));
        CHECK(std::abs(oracle - 2.0) < 1e-3);  // the construction's planted value
    }
}

TEST_CASE("linear cka: self-similarity and invariances") {
    Rng rng(11);
    const Tensor x = Tensor::gaussian({6, 2}, rng);
    CHECK(linear_cka(x, x) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(linear_cka(x, scale(x, -3.7)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(linear_cka(x, matmul(x, rotation2(0.83))) == doctest::Approx(1.0).epsilon(1e-7));

    // permutation of columns is orthogonal too
    Tensor y = Tensor::gaussian({5, 4}, rng);
    Tensor perm = Tensor::zeros({4, 4});
    perm(0, 2) = perm(1, 0) = perm(2, 3) = perm(3, 1) = 1.0;
    CHECK(linear_cka(y, matmul(y, perm)) == doctest::Approx(1.0).epsilon(1e-9));

    for (int rep = 0; rep < 50; ++rep) {
        const Tensor a = Tensor::gaussian({4, 3}, rng);
        const Tensor b = Tensor::gaussian({4, 5}, rng);
        const double v = linear_cka(a, b);
        CHECK(v >= -1e-9);
        CHECK(v <= 1.0 + 1e-9);
        CHECK(linear_cka(b, a) == doctest::Approx(v).epsilon(1e-12));
    }
}

TEST_CASE("linear cka: degenerate and malformed inputs") {
    Rng rng(12);
    const Tensor x = Tensor::gaussian({4, 3}, rng);
    CHECK_THROWS_AS(linear_cka(Tensor::full({4, 3}, 2.5), x), DegenerateInputError);
    CHECK_THROWS_AS(linear_cka(x, Tensor::zeros({4, 2})), DegenerateInputError);
    CHECK_THROWS_AS(linear_cka(x, Tensor::gaussian({5, 3}, rng)), ShapeError);
    CHECK_THROWS_AS(linear_cka(Tensor({4}), x), ShapeError);
    CHECK_THROWS_AS(linear_cka(Tensor::gaussian({1, 3}, rng), Tensor::gaussian({1, 3}, rng)),
                    ContractError);
}

TEST_CASE("prompt cka matrix: structure and degeneracy reporting") {
    Rng rng(13);
    const Tensor p = Tensor::gaussian({4, 8}, rng);
    const CkaMatrix same = prompt_cka_matrix({p, p, p});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(same.values(i, j) == doctest::Approx(1.0).epsilon(1e-9));

    std::vector<Tensor> layers;
    for (int l = 0; l < 4; ++l) layers.push_back(Tensor::gaussian({4, 8}, rng));
    const CkaMatrix m = prompt_cka_matrix(layers);
    CHECK(m.layers() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(m.values(i, i) == doctest::Approx(1.0).epsilon(1e-9));
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(m.values(i, j) == m.values(j, i));
            CHECK(m.values(i, j) >= -1e-9);
            CHECK(m.values(i, j) <= 1.0 + 1e-9);
        }
    }

    layers[2] = Tensor::full({4, 8}, 1.0);
    try {
        prompt_cka_matrix(layers);
        FAIL("expected DegenerateInputError");
    } catch (const DegenerateInputError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
    CHECK_THROWS_AS(prompt_cka_matrix({p}), ContractError);
}

TEST_CASE("spearman: monotone, ties, degenerate") {
    CHECK(spearman({1, 2, 3, 4, 5}, {2, 4, 6, 8, 10}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman({1, 2, 3, 4, 5}, {10, 8, 6, 4, 2}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(spearman({1, 2, 3, 4}, {1, 4, 9, 16}) == doctest::Approx(1.0).epsilon(1e-12));
    // hand-computed with average ranks: ra={1.5,1.5,3,4} vs rb={1,2,3,4} -> sqrt(0.9)
    CHECK(spearman({1, 1, 2, 3}, {10, 20, 30, 40}) ==
          doctest::Approx(std::sqrt(0.9)).epsilon(1e-12));
    CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), DegenerateInputError);
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(spearman({1}, {1}), ContractError);
}

TEST_CASE("cka distance trend detects a diagonal band") {
    CkaMatrix band;
    band.values = Tensor({4, 4});
    const double by_dist[4] = {1.0, 0.9, 0.5, 0.2};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            band.values(i, j) = by_dist[i > j ? i - j : j - i];
    CHECK(cka_distance_trend(band) == doctest::Approx(-1.0).epsilon(1e-12));

    CkaMatrix anti = band;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            if (i != j) anti.values(i, j) = 1.0 - anti.values(i, j);
    CHECK(cka_distance_trend(anti) == doctest::Approx(1.0).epsilon(1e-12));

    CkaMatrix tiny;
    tiny.values = Tensor::full({2, 2}, 1.0);
    CHECK_THROWS_AS(cka_distance_trend(tiny), ContractError);
}

TEST_CASE("spectrum reports: identity init, cardinality, eigensolver parity") {
    const KoopmanSystem sys = KoopmanSystem::init(8, 6, 42);
    const std::vector<SpectrumReport> global = spectrum_reports(sys, {});
    REQUIRE(global.size() == 1);
    CHECK(global[0].tag == "global");
    CHECK(global[0].radius == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(global[0].mean_abs == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(global[0].eigs.size() == 6);
    for (const auto& ev : global[0].eigs) {
        CHECK(ev.real() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(ev.imag() == doctest::Approx(0.0).epsilon(1e-12));
    }

    const std::vector<Tensor> ops = layerwise_operators(6, 4);
    const std::vector<SpectrumReport> lw = spectrum_reports(sys, ops);
    REQUIRE(lw.size() == 3);
    CHECK(lw[0].tag == "layer_1");
    CHECK(lw[2].tag == "layer_3");

    Rng rng(5);
    const Tensor m = Tensor::gaussian({6, 6}, rng);
    const SpectrumReport r = spectrum_report(m, "global");
    const auto direct = eigenvalues(m);
    REQUIRE(r.eigs.size() == direct.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < direct.size(); ++i) {
        CHECK(r.eigs[i] == direct[i]);  // same routine, bit-identical
        mean += std::abs(direct[i]);
    }
    CHECK(r.mean_abs == doctest::Approx(mean / 6.0).epsilon(1e-12));
    CHECK(r.mean_abs <= r.radius + 1e-15);
}

TEST_CASE("spectrum json and cka csv round trip") {
    Rng rng(9);
    const Tensor m = Tensor::gaussian({5, 5}, rng);
    const SpectrumReport r = spectrum_report(m, "global");
    const std::string jpath = temp_path("pae_spectrum_test.json");
    write_spectrum_json(jpath, {r});
    const nlohmann::json j = nlohmann::json::parse(io::read_text(jpath));
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 1);
    CHECK(j[0]["tag"] == "global");
    CHECK(j[0]["spectral_radius"].get<double>() == r.radius);
    REQUIRE(j[0]["eigenvalues"].size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(j[0]["eigenvalues"][i][0].get<double>() == r.eigs[i].real());
        CHECK(j[0]["eigenvalues"][i][1].get<double>() == r.eigs[i].imag());
    }
    std::filesystem::remove(jpath);

    CkaMatrix cm;
    cm.values = Tensor({3, 3});
    for (std::size_t i = 0; i < 9; ++i) cm.values.data[i] = 0.125 * static_cast<double>(i);
    const std::string cpath = temp_path("pae_cka_test.csv");
    write_cka_csv(cpath, cm);
    const std::string text = io::read_text(cpath);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    CHECK(std::count(text.begin(), text.end(), ',') == 6);
    CHECK(text.substr(0, text.find('\n')) == "0,0.125,0.25");
    std::filesystem::remove(cpath);
}
