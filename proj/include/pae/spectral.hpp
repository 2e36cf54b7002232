#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "pae/tensor.hpp"

namespace pae {

// Centered 2D spectrum: zero frequency sits at (h/2, w/2).
struct Spectrum {
    std::size_t h = 0, w = 0;
    std::vector<std::complex<double>> data;  // row-major

    std::complex<double>& at(std::size_t i, std::size_t j) { return data[i * w + j]; }
    const std::complex<double>& at(std::size_t i, std::size_t j) const { return data[i * w + j]; }
};

// Binary window mask on the centered spectrum grid, closed under point
// reflection about the spectral origin so filtered images stay real.
struct FrequencyMask {
    std::size_t img_h = 0, img_w = 0;
    std::size_t origin_row = 0, origin_col = 0;
    std::size_t w = 0;
    Tensor grid;  // img_h×img_w of {0,1}

    std::size_t ones() const;
};

Spectrum fft2(const Tensor& img);
Tensor ifft2(const Spectrum& s);  // real part of the inverse transform
std::vector<std::complex<double>> ifft2_complex(const Spectrum& s);

std::vector<FrequencyMask> generate_masks(std::size_t img_h, std::size_t img_w, long long w,
                                          long long r);
// Count of sliding-window origins for the given geometry.
std::size_t mask_count(std::size_t img_h, std::size_t img_w, long long w, long long r);

Tensor filter_image(const Tensor& img, const FrequencyMask& mask);

// Reflects (i,j) through the centered-spectrum origin.
inline std::pair<std::size_t, std::size_t> reflect_bin(std::size_t i, std::size_t j,
                                                       std::size_t h, std::size_t w) {
    return {(h - i) % h, (w - j) % w};
}

}  // namespace pae
