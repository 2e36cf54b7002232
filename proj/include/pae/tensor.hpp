#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "pae/error.hpp"
#include "pae/rng.hpp"

namespace pae {

// Dense row-major double tensor, rank 1..3.
struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> d);
    Tensor(std::initializer_list<std::size_t> d) : Tensor(std::vector<std::size_t>(d)) {}

    static Tensor zeros(std::initializer_list<std::size_t> d) { return Tensor(d); }
    static Tensor full(std::initializer_list<std::size_t> d, double v);
    static Tensor identity(std::size_t n);
    static Tensor uniform(std::initializer_list<std::size_t> d, Rng& rng, double lo, double hi);
    static Tensor gaussian(std::initializer_list<std::size_t> d, Rng& rng, double stddev = 1.0);

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return dims.size(); }
    std::size_t rows() const { return dims.at(0); }
    std::size_t cols() const { return dims.at(1); }
    bool same_shape(const Tensor& o) const { return dims == o.dims; }
    bool is_scalar() const { return numel() == 1; }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * dims[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * dims[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * dims[1] + j) * dims[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * dims[1] + j) * dims[2] + k];
    }

    bool all_finite() const;
    std::string shape_str() const;
};

std::string shape_str(const std::vector<std::size_t>& dims);

// C[m×n] = A[m×k] · B[k×n]; accumulates into C when acc is set.
void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool acc);
// C[m×n] = A[m×k] · B[n×k]ᵀ
void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool acc);
// C[m×n] = A[k×m]ᵀ · B[k×n]
void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool acc);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// a += c·b, in place (optimizer update path).
void axpy(Tensor& a, double c, const Tensor& b);

double dot_all(const Tensor& a, const Tensor& b);
double frobenius_sq(const Tensor& a);
double trace(const Tensor& a);
double max_abs(const Tensor& a);

// fan_in×fan_out, uniform on ±sqrt(6/fan_in).
Tensor kaiming_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace pae
