#pragma once

#include <cstdint>
#include <vector>

#include "pae/backbone.hpp"
#include "pae/dataset.hpp"
#include "pae/spectral.hpp"
#include "pae/tensor.hpp"

namespace pae {

// Throwaway linear classifier used only to score masks in Phase I.
struct ProbeHead {
    Tensor w;  // d×C
    Tensor b;  // C
    double init_loss = 0.0;
    double final_loss = 0.0;
};

struct ShortcutRanking {
    struct Entry {
        std::size_t mask_id;
        double loss;
    };
    std::vector<Entry> entries;  // ascending by loss, ties broken by lower id

    std::vector<std::size_t> top_ids(std::size_t t) const;
};

// 200 full-batch gradient steps (lr 0.1) from zero init on unfiltered
// embeddings — convex, so no randomness is involved.
ProbeHead fit_probe_head(const FrozenBackbone& bb, const Dataset& batch, std::size_t n_classes,
                         std::size_t steps = 200, double lr = 0.1);

// Scores every mask by the probe's mean cross-entropy on the band-filtered
// batch. Order-independent per mask; honors PAE_THREADS.
ShortcutRanking discover_shortcuts(const FrozenBackbone& bb, const ProbeHead& probe,
                                   const Dataset& batch, const std::vector<FrequencyMask>& masks);

// Energy-weighted pooling of token rows into one 1×d representative: weights
// are squared norms normalized over every row.
Tensor energy_pooling(const Tensor& tokens);

// Row t pools the patch tokens (class token excluded) of the batch filtered
// through the t-th chosen mask.
Tensor build_first_prompt(const FrozenBackbone& bb, const Dataset& batch,
                          const std::vector<FrequencyMask>& masks,
                          const std::vector<std::size_t>& top_ids);

// P_{i+1} = E_i(P_i): the prompt matrix alone flows through the frozen blocks.
// Returns all L per-layer prompts, P_1 first.
std::vector<Tensor> propagate_init(const FrozenBackbone& bb, const Tensor& p1);

// Both phases end to end on one seeded mini-batch of `train`.
struct MpaInit {
    ShortcutRanking ranking;
    std::vector<std::size_t> top_ids;
    std::vector<std::size_t> batch_indices;
    std::vector<Tensor> prompts;  // L entries, T×d
    double phase1_seconds = 0.0;
    double phase2_seconds = 0.0;
};
MpaInit run_mpa(const FrozenBackbone& bb, const Dataset& train, std::size_t n_classes,
                std::size_t batch_size, std::size_t top_t, long long mask_w, long long mask_r,
                std::uint64_t seed, bool copy_init = false);

}  // namespace pae
