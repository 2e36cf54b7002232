#include "pae/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pae {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey.
void fft_1d(std::complex<double>* x, std::size_t n, bool inverse) {
    for (std::size_t i = 1, j = 0; i < n; ++i) {  // bit reversal
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = x[i + k];
                const std::complex<double> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

void fft_2d(std::vector<std::complex<double>>& a, std::size_t h, std::size_t w, bool inverse) {
    for (std::size_t i = 0; i < h; ++i) fft_1d(a.data() + i * w, w, inverse);
    std::vector<std::complex<double>> col(h);
    for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t i = 0; i < h; ++i) col[i] = a[i * w + j];
        fft_1d(col.data(), h, inverse);
        for (std::size_t i = 0; i < h; ++i) a[i * w + j] = col[i];
    }
}

// Moves bin (i,j) to ((i+h/2)%h, (j+w/2)%w); self-inverse for even extents.
std::vector<std::complex<double>> shift_center(const std::vector<std::complex<double>>& a,
                                               std::size_t h, std::size_t w) {
    std::vector<std::complex<double>> out(a.size());
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
            out[((i + h / 2) % h) * w + ((j + w / 2) % w)] = a[i * w + j];
    return out;
}

void require_image(const Tensor& img, const char* who) {
    if (img.rank() != 2)
        throw ShapeError(std::string(who) + ": want rank-2 image, got " + img.shape_str());
    if (!power_of_two(img.rows()) || !power_of_two(img.cols()))
        throw ConfigError(std::string(who) + ": extents must be powers of two, got " +
                          img.shape_str());
}

}  // namespace

std::size_t FrequencyMask::ones() const {
    std::size_t c = 0;
    for (double v : grid.data) c += v != 0.0 ? 1 : 0;
    return c;
}

Spectrum fft2(const Tensor& img) {
    require_image(img, "fft2");
    Spectrum s;
    s.h = img.rows();
    s.w = img.cols();
    s.data.assign(img.data.begin(), img.data.end());
    fft_2d(s.data, s.h, s.w, false);
    s.data = shift_center(s.data, s.h, s.w);
    return s;
}

std::vector<std::complex<double>> ifft2_complex(const Spectrum& s) {
    if (!power_of_two(s.h) || !power_of_two(s.w))
        throw ConfigError("ifft2: extents must be powers of two");
    std::vector<std::complex<double>> a = shift_center(s.data, s.h, s.w);
    fft_2d(a, s.h, s.w, true);
    const double norm = 1.0 / static_cast<double>(s.h * s.w);
    for (auto& v : a) v *= norm;
    return a;
}

Tensor ifft2(const Spectrum& s) {
    auto a = ifft2_complex(s);
    Tensor img({s.h, s.w});
    for (std::size_t i = 0; i < a.size(); ++i) img.data[i] = a[i].real();
    return img;
}

std::size_t mask_count(std::size_t img_h, std::size_t img_w, long long w, long long r) {
    if (w < 1 || static_cast<std::size_t>(w) > std::min(img_h, img_w))
        throw ConfigError("mask window w=" + std::to_string(w) + " outside [1," +
                          std::to_string(std::min(img_h, img_w)) + "]");
    if (r < 1) throw ConfigError("mask stride r=" + std::to_string(r) + " must be >= 1");
    const std::size_t rows = (img_h - static_cast<std::size_t>(w)) / static_cast<std::size_t>(r) + 1;
    const std::size_t cols = (img_w - static_cast<std::size_t>(w)) / static_cast<std::size_t>(r) + 1;
    return rows * cols;
}

std::vector<FrequencyMask> generate_masks(std::size_t img_h, std::size_t img_w, long long w,
                                          long long r) {
    mask_count(img_h, img_w, w, r);  // validates
    const std::size_t ww = static_cast<std::size_t>(w);
    const std::size_t rr = static_cast<std::size_t>(r);
    std::vector<FrequencyMask> masks;
    for (std::size_t row = 0; row + ww <= img_h; row += rr) {
        for (std::size_t col = 0; col + ww <= img_w; col += rr) {
            FrequencyMask m;
            m.img_h = img_h;
            m.img_w = img_w;
            m.origin_row = row;
            m.origin_col = col;
            m.w = ww;
            m.grid = Tensor({img_h, img_w});
            for (std::size_t i = row; i < row + ww; ++i)
                for (std::size_t j = col; j < col + ww; ++j) m.grid(i, j) = 1.0;
            // close under point reflection so filtered images stay real
            Tensor sym = m.grid;
            for (std::size_t i = 0; i < img_h; ++i)
                for (std::size_t j = 0; j < img_w; ++j)
                    if (m.grid(i, j) != 0.0) {
                        auto [ri, rj] = reflect_bin(i, j, img_h, img_w);
                        sym(ri, rj) = 1.0;
                    }
            m.grid = std::move(sym);
            masks.push_back(std::move(m));
        }
    }
    return masks;
}

Tensor filter_image(const Tensor& img, const FrequencyMask& mask) {
    require_image(img, "filter_image");
    if (mask.grid.rank() != 2 || mask.grid.rows() != img.rows() || mask.grid.cols() != img.cols())
        throw ShapeError("filter_image: mask grid " + mask.grid.shape_str() +
                         " vs image " + img.shape_str());
    if (mask.ones() == mask.grid.numel()) return img;  // keeps every bin
    Spectrum s = fft2(img);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] *= mask.grid.data[i];
    return ifft2(s);
}

}  // namespace pae
