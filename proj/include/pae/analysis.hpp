#pragma once

#include <complex>
#include <string>
#include <vector>

#include "pae/koopman.hpp"
#include "pae/tensor.hpp"

namespace pae {

// Spectrum summary of one evolution operator.
struct SpectrumReport {
    std::string tag;  // "global" or "layer_<i>"
    std::vector<std::complex<double>> eigs;
    double radius = 0.0;    // max |λ|
    double mean_abs = 0.0;  // mean |λ|, always ≤ radius
};

// Pairwise prompt-layer similarity, symmetric with unit diagonal.
struct CkaMatrix {
    Tensor values;  // L×L in [0,1]
    std::size_t layers() const { return values.dims.empty() ? 0 : values.dims[0]; }
};

double spectral_radius(const Tensor& op);

// ‖X̄ᵀȲ‖_F² / (‖X̄ᵀX̄‖_F · ‖ȲᵀȲ‖_F) with column-centered inputs; rows are
// samples. 1 for Y = X and invariant to orthogonal maps and nonzero scaling.
double linear_cka(const Tensor& x, const Tensor& y);

CkaMatrix prompt_cka_matrix(const std::vector<Tensor>& prompts);

// Rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Spearman between layer distance |i−j| and CKA(i,j) over i<j pairs;
// negative means similarity decays with distance (a diagonal band).
double cka_distance_trend(const CkaMatrix& m);

SpectrumReport spectrum_report(const Tensor& op, const std::string& tag);

// One global report, or L−1 per-layer reports when layer-wise operators
// are present.
std::vector<SpectrumReport> spectrum_reports(const KoopmanSystem& sys,
                                             const std::vector<Tensor>& layer_ops);

// JSON with eigenvalues as (re, im) pairs, radius and mean |λ| per report.
void write_spectrum_json(const std::string& path, const std::vector<SpectrumReport>& reports);
// Plain L×L comma-separated grid, one row per line.
void write_cka_csv(const std::string& path, const CkaMatrix& m);

}  // namespace pae
