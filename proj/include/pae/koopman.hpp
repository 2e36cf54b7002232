#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pae/autodiff.hpp"
#include "pae/tensor.hpp"

namespace pae {

// Cross-layer prompt dynamics: each layer's prompt is lifted row-wise into a
// K-dim latent space where a single shared operator advances layer i to i+1.
struct KoopmanSystem {
    Tensor U;    // d×K lifting map
    Tensor Kop;  // K×K shared evolution operator
    Tensor A;    // K×K unconstrained factor of the Lyapunov metric
    double eps = 1e-4;

    // U Kaiming-uniform, Kop and A identity (Q starts as the identity metric).
    static KoopmanSystem init(std::size_t d, std::size_t k_dim, std::uint64_t seed,
                              double eps = 1e-4);
    Tensor q() const;  // A·Aᵀ + eps·I
};

// Independent per-transition operators (L−1 of them) for the layer-wise
// ablation; shares nothing with the default shared-operator path.
std::vector<Tensor> layerwise_operators(std::size_t k_dim, std::size_t layers);

// Q = A·Aᵀ + eps·I — symmetric, min eigenvalue ≥ eps for any A.
Tensor spd_materialize(const Tensor& a, double eps);

Tensor lift(const Tensor& p, const Tensor& u);      // z = P·U
Tensor evolve(const Tensor& z, const Tensor& kop);  // ẑ⁺ = z·Kop

struct LiftedTrajectory {
    std::vector<Tensor> z;     // z[i] = P_i·U, one per layer
    std::vector<Tensor> pred;  // pred[i] = z[i]·Kop, one per transition
};
LiftedTrajectory lift_trajectory(const std::vector<Tensor>& prompts, const Tensor& u,
                                 const Tensor& kop);

double lyapunov_v(const Tensor& z, const Tensor& q);  // tr(z·Q·zᵀ)

// Σᵢ ∥P_{i+1}U − P_iU·Kop∥_F² over the L−1 transitions.
double loss_kp(const std::vector<Tensor>& prompts, const Tensor& u, const Tensor& kop);
// Σᵢ max(0, V(z_{i+1}) − V(z_i)) over the L−1 transitions.
double loss_stab(const LiftedTrajectory& traj, const Tensor& q);

// Closed-form prompt gradients; kept as oracles against the tape path.
std::vector<Tensor> grad_kp_analytic(const std::vector<Tensor>& prompts, const Tensor& u,
                                     const Tensor& kop);
std::vector<Tensor> grad_stab_analytic(const LiftedTrajectory& traj, const Tensor& q,
                                       const Tensor& u);

// Tape-built losses (the training path). `ops` holds either the one shared
// operator or L−1 per-transition operators.
Var loss_kp_tape(Tape& t, const std::vector<Var>& prompts, Var u, const std::vector<Var>& ops);
Var loss_stab_tape(Tape& t, const std::vector<Var>& prompts, Var u, Var q);
Var spd_materialize_tape(Tape& t, Var a, double eps);

// Checkpoint directory: u/kop/a tensors plus manifest (k_dim, eps); the
// layer-wise ablation adds kop_0..kop_{L−2}.
struct KoopmanCheckpoint {
    KoopmanSystem sys;
    std::vector<Tensor> layer_ops;  // empty on the shared-operator path
};
void save_koopman(const std::string& dir, const KoopmanSystem& sys,
                  const std::vector<Tensor>& layer_ops = {});
KoopmanCheckpoint load_koopman(const std::string& dir);

}  // namespace pae
