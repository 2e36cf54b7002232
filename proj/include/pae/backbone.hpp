#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pae/autodiff.hpp"
#include "pae/config.hpp"
#include "pae/tensor.hpp"

namespace pae {

// One T×d prompt matrix per layer.
using PromptStack = std::vector<Tensor>;

struct ArchConfig {
    std::size_t img_h = 32, img_w = 32, patch = 4;
    std::size_t d = 32, heads = 4, layers = 4, classes = 8;
    std::size_t mlp_ratio = 4;

    std::size_t n_patches() const { return (img_h / patch) * (img_w / patch); }
    std::size_t head_dim() const { return d / heads; }
    std::size_t mlp_hidden() const { return d * mlp_ratio; }
    void validate() const;
    bool operator==(const ArchConfig&) const = default;
};

struct BlockWeights {
    Tensor ln1_g, ln1_b;            // d
    Tensor wq, wk, wv, wo;          // d×d
    Tensor bq, bk, bv, bo;          // d
    Tensor ln2_g, ln2_b;            // d
    Tensor w1, b1, w2, b2;          // d×hidden, hidden, hidden×d, d
};

// Encoder weights are immutable during tuning; the classifier head is the
// only part the tuning loop re-initializes and trains.
struct FrozenBackbone {
    ArchConfig arch;
    Tensor patch_proj;  // patch²×d
    Tensor patch_bias;  // d
    Tensor cls;         // 1×d
    Tensor pos;         // (N+1)×d
    std::vector<BlockWeights> blocks;
    Tensor head_w;      // d×C
    Tensor head_b;      // C

    static FrozenBackbone random_init(const ArchConfig& arch, std::uint64_t seed);

    // SHA-256 over the serialized encoder weights (head excluded: it is the
    // jointly-trained part, not covered by the frozen contract).
    std::string frozen_hash() const;

    // Enumerates every weight tensor in a fixed order, head included.
    std::vector<const Tensor*> all_weights() const;
    std::vector<Tensor*> all_weights();
};

// Tape handles for one forward build; trainable=false lifts weights as
// constants (no gradient ever materialized for them).
struct BackboneVars {
    struct BlockVars {
        Var ln1_g, ln1_b, wq, wk, wv, wo, bq, bk, bv, bo, ln2_g, ln2_b, w1, b1, w2, b2;
    };
    Var patch_proj, patch_bias, cls, pos;
    std::vector<BlockVars> blocks;
    Var head_w, head_b;
};

BackboneVars lift_backbone(Tape& t, const FrozenBackbone& bb, bool trainable);

// Rows of flattened patches (row-major patch grid, row-major pixels).
Tensor patch_matrix(const ArchConfig& arch, const Tensor& image);

// (N+1)×d tokens: class token first, positional table added.
Var patch_embed(Tape& t, const BackboneVars& v, const ArchConfig& arch, const Tensor& image);

// Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(·)).
Var encoder_block(Tape& t, const BackboneVars::BlockVars& bw, const ArchConfig& arch, Var tokens);

// Deep prompting: layer i consumes [P_i ; class ; patch rows]; prompt rows
// are replaced at every layer; returns 1×C logits from the class token.
Var forward_deep_prompted(Tape& t, const BackboneVars& v, const ArchConfig& arch,
                          const Tensor& image, const std::vector<Var>& prompts);

// Class-token embedding of the final layer, no prompts, no gradients.
Tensor encode(const FrozenBackbone& bb, const Tensor& image);

// Plain-ViT logits for one image (no prompts), via the stored head.
Tensor plain_logits(const FrozenBackbone& bb, const Tensor& image);

struct PretrainResult {
    FrozenBackbone backbone;
    double final_loss = 0.0;
    double train_accuracy = 0.0;
};

// Cross-entropy SGD (momentum 0.9) on all weights incl. head; deterministic
// given seed. steps=0 returns the seeded random initialization.
PretrainResult pretrain_source(const ArchConfig& arch, const Tensor& images,
                               const std::vector<std::size_t>& labels, std::size_t steps,
                               double lr, std::size_t batch, std::uint64_t seed);

void save_backbone(const std::string& dir, const FrozenBackbone& bb,
                   const std::vector<std::pair<std::string, std::string>>& manifest_extra = {});
FrozenBackbone load_backbone(const std::string& dir);

}  // namespace pae
