#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pae {

// One oracle suite's outcome: worst observed error against its budget.
struct OracleResult {
    std::string name;
    bool pass = false;
    double worst = 0.0;   // largest error (or smallest margin) seen
    double budget = 0.0;  // the bound `worst` must stay within
    double seconds = 0.0;
};

OracleResult check_kp_grad_fd(std::uint64_t seed);        // analytic vs central differences
OracleResult check_kp_grad_tape(std::uint64_t seed);      // analytic vs tape backward
OracleResult check_stab_grad_fd(std::uint64_t seed);      // hinge-safe instances only
OracleResult check_stab_grad_tape(std::uint64_t seed);
OracleResult check_full_objective_fd(std::uint64_t seed);  // dL_total/dP_1, desk-scale model
OracleResult check_fft(std::uint64_t seed);                // round-trip + Parseval + mask count
OracleResult check_hinge_iff(std::uint64_t seed);          // loss_stab = 0 iff V non-increasing
OracleResult check_spd_floor(std::uint64_t seed);          // min eig of A·Aᵀ+εI ≥ ε
OracleResult check_block_grad_fd(std::uint64_t seed);      // encoder block vs differences

// All suites in a fixed order.
std::vector<OracleResult> run_oracle_suites(std::uint64_t seed);

}  // namespace pae
