#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "pae/rng.hpp"
#include "pae/spectral.hpp"
#include "pae/tensor.hpp"

using pae::FrequencyMask;
using pae::Rng;
using pae::Spectrum;
using pae::Tensor;

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor sinusoid(std::size_t h, std::size_t w, std::size_t kr, std::size_t kc, double phase) {
    Tensor img({h, w});
    for (std::size_t a = 0; a < h; ++a)
        for (std::size_t b = 0; b < w; ++b)
            img(a, b) = std::cos(2.0 * kPi * (double(kr) * double(a) / double(h) +
                                              double(kc) * double(b) / double(w)) +
                                 phase);
    return img;
}

FrequencyMask full_grid_mask(std::size_t h, std::size_t w, double fill) {
    FrequencyMask m;
    m.img_h = h;
    m.img_w = w;
    m.w = 0;
    m.grid = Tensor::full({h, w}, fill);
    return m;
}

double energy(const Tensor& t) { return pae::frobenius_sq(t); }

}  // namespace

TEST_CASE("constant image concentrates at the centered DC bin") {
    const double c = 0.37;
    Spectrum s = pae::fft2(Tensor::full({32, 32}, c));
    for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t j = 0; j < 32; ++j) {
            if (i == 16 && j == 16)
                CHECK(std::abs(s.at(i, j) - std::complex<double>(c * 32 * 32, 0)) <= 1e-9);
            else
                CHECK(std::abs(s.at(i, j)) <= 1e-9);
        }
}

TEST_CASE("round trip and Parseval on random images") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Tensor img = Tensor::uniform({32, 32}, rng, -1, 1);
        Spectrum s = pae::fft2(img);
        Tensor back = pae::ifft2(s);
        CHECK(pae::max_abs(pae::sub(back, img)) <= 1e-9);

        double img_e = energy(img);
        double spec_e = 0.0;
        for (auto v : s.data) spec_e += std::norm(v);
        CHECK(std::abs(img_e - spec_e / (32.0 * 32.0)) / img_e <= 1e-8);
    }
}

TEST_CASE("fft2 rejects non-power-of-two extents") {
    CHECK_THROWS_AS(pae::fft2(Tensor({24, 32})), pae::ConfigError);
    CHECK_THROWS_AS(pae::fft2(Tensor({32, 17})), pae::ConfigError);
}

TEST_CASE("mask grid geometry") {
    CHECK(pae::mask_count(32, 32, 8, 4) == 49);
    auto masks = pae::generate_masks(32, 32, 8, 4);
    CHECK(masks.size() == 49);
    for (const auto& m : masks) {
        std::size_t window_ones = 0;
        for (std::size_t i = m.origin_row; i < m.origin_row + m.w; ++i)
            for (std::size_t j = m.origin_col; j < m.origin_col + m.w; ++j)
                window_ones += m.grid(i, j) != 0.0 ? 1 : 0;
        CHECK(window_ones == m.w * m.w);  // raw window fully set
        CHECK(m.ones() >= m.w * m.w);
        CHECK(m.ones() <= 2 * m.w * m.w);
        for (std::size_t i = 0; i < 32; ++i)  // reflection closure
            for (std::size_t j = 0; j < 32; ++j) {
                auto [ri, rj] = pae::reflect_bin(i, j, 32, 32);
                CHECK(m.grid(i, j) == m.grid(ri, rj));
            }
    }

    auto single = pae::generate_masks(16, 16, 16, 3);
    CHECK(single.size() == 1);
    CHECK(single[0].ones() == 16 * 16);

    CHECK_THROWS_AS(pae::generate_masks(32, 32, 33, 4), pae::ConfigError);
    CHECK_THROWS_AS(pae::generate_masks(32, 32, 8, 0), pae::ConfigError);
}

TEST_CASE("identity and null filters") {
    Rng rng(7);
    Tensor img = Tensor::uniform({32, 32}, rng, -1, 1);
    CHECK(pae::max_abs(pae::sub(pae::filter_image(img, full_grid_mask(32, 32, 1.0)), img)) <=
          1e-9);
    CHECK(pae::max_abs(pae::filter_image(img, full_grid_mask(32, 32, 0.0))) == 0.0);
}

TEST_CASE("planted sinusoid passes covering mask, dies under disjoint mask") {
    // natural-order frequency (3,5) sits at centered bins (19,21) and (13,11)
    Tensor img = sinusoid(32, 32, 3, 5, 0.4);
    auto masks = pae::generate_masks(32, 32, 8, 4);
    const FrequencyMask* covering = nullptr;
    const FrequencyMask* disjoint = nullptr;
    for (const auto& m : masks) {
        const bool has = m.grid(19, 21) != 0.0 || m.grid(13, 11) != 0.0;
        if (has && !covering) covering = &m;
        if (!has && !disjoint) disjoint = &m;
    }
    REQUIRE(covering != nullptr);
    REQUIRE(disjoint != nullptr);
    // symmetrization guarantees either both bins or neither
    CHECK(covering->grid(19, 21) == covering->grid(13, 11));

    const double e0 = energy(img);
    CHECK(energy(pae::filter_image(img, *covering)) / e0 >= 0.99);
    CHECK(energy(pae::filter_image(img, *disjoint)) / e0 <= 1e-6);
}

TEST_CASE("symmetrized masks leave negligible imaginary residue") {
    Rng rng(9);
    Tensor img = Tensor::uniform({32, 32}, rng, -1, 1);
    auto masks = pae::generate_masks(32, 32, 8, 4);
    Spectrum s = pae::fft2(img);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] *= masks[11].grid.data[i];
    double resid = 0.0;
    for (auto v : pae::ifft2_complex(s)) resid = std::max(resid, std::abs(v.imag()));
    CHECK(resid <= 1e-9);
}

TEST_CASE("filtering is linear and idempotent") {
    Rng rng(11);
    Tensor x = Tensor::uniform({32, 32}, rng, -1, 1);
    Tensor y = Tensor::uniform({32, 32}, rng, -1, 1);
    auto masks = pae::generate_masks(32, 32, 8, 4);
    const FrequencyMask& m = masks[23];

    Tensor mix = pae::add(pae::scale(x, 1.3), pae::scale(y, -0.7));
    Tensor lhs = pae::filter_image(mix, m);
    Tensor rhs = pae::add(pae::scale(pae::filter_image(x, m), 1.3),
                          pae::scale(pae::filter_image(y, m), -0.7));
    CHECK(pae::max_abs(pae::sub(lhs, rhs)) <= 1e-10);

    Tensor once = pae::filter_image(x, m);
    CHECK(pae::max_abs(pae::sub(pae::filter_image(once, m), once)) <= 1e-9);
}

TEST_CASE("disjoint masks covering the grid reconstruct the image") {
    // checkerboard partition is closed under point reflection
    FrequencyMask even = full_grid_mask(32, 32, 0.0);
    FrequencyMask odd = full_grid_mask(32, 32, 0.0);
    for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t j = 0; j < 32; ++j) ((i + j) % 2 == 0 ? even : odd).grid(i, j) = 1.0;
    Rng rng(13);
    Tensor img = Tensor::uniform({32, 32}, rng, -1, 1);
    Tensor sum = pae::add(pae::filter_image(img, even), pae::filter_image(img, odd));
    CHECK(pae::max_abs(pae::sub(sum, img)) <= 1e-9);
}
