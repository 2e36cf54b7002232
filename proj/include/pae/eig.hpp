#pragma once

#include <complex>
#include <vector>

#include "pae/tensor.hpp"

namespace pae {

// Full complex spectrum of a general real square matrix: Householder
// Hessenberg reduction + Francis double-shift QR. Sweep budget 100·n,
// relative deflation tolerance 1e-12 on subdiagonals.
std::vector<std::complex<double>> eigenvalues(const Tensor& m);

// Determinant via LU with partial pivoting.
double det(const Tensor& m);

// Inverse via LU; throws NumericError on a (numerically) singular matrix.
Tensor inverse(const Tensor& m);

}  // namespace pae
