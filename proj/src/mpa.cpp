#include "pae/mpa.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>
#include <utility>
#include <vector>

#include "pae/autodiff.hpp"
#include "pae/error.hpp"
#include "pae/rng.hpp"
#include "pae/spectral.hpp"

namespace pae {
namespace {

constexpr std::uint64_t kBatchStream = 0x6b5e;

double xent_row(const double* logits, std::size_t n, std::size_t label) {
    double m = logits[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
    double lse = 0.0;
    for (std::size_t i = 0; i < n; ++i) lse += std::exp(logits[i] - m);
    return m + std::log(lse) - logits[label];
}

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = 1;
    if (const char* env = std::getenv("PAE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

// n×d matrix of class-token embeddings, one row per image.
Tensor embed_all(const FrozenBackbone& bb, const Dataset& ds) {
    const std::size_t n = ds.size(), d = bb.arch.d;
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor e = encode(bb, ds.image(i));
        std::copy(e.data.begin(), e.data.end(), out.data.begin() + i * d);
    }
    return out;
}

// Mean cross-entropy of the probe over one embedding matrix.
double probe_loss(const ProbeHead& head, const Tensor& embs, const std::vector<std::size_t>& labels) {
    const std::size_t n = embs.dims[0], d = embs.dims[1], c = head.b.dims[0];
    std::vector<double> logits(c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < c; ++k) {
            double acc = head.b(k);
            for (std::size_t j = 0; j < d; ++j) acc += embs(i, j) * head.w(j, k);
            logits[k] = acc;
        }
        total += xent_row(logits.data(), c, labels[i]);
    }
    return total / static_cast<double>(n);
}

void check_probe_inputs(const FrozenBackbone& bb, const Dataset& batch, std::size_t n_classes) {
    if (batch.size() == 0) throw ContractError("probe batch is empty");
    if (n_classes < 2) throw ConfigError("probe needs at least 2 classes");
    if (batch.images.dims[1] != bb.arch.img_h || batch.images.dims[2] != bb.arch.img_w)
        throw ShapeError("batch image size does not match the backbone");
    for (std::size_t l : batch.labels)
        if (l >= n_classes) throw ContractError("label out of range for the probe head");
}

}  // namespace

std::vector<std::size_t> ShortcutRanking::top_ids(std::size_t t) const {
    if (t == 0) throw ConfigError("top-T must be positive");
    if (t > entries.size()) throw ConfigError("top-T exceeds the number of ranked masks");
    std::vector<std::size_t> ids(t);
    for (std::size_t i = 0; i < t; ++i) ids[i] = entries[i].mask_id;
    return ids;
}

ProbeHead fit_probe_head(const FrozenBackbone& bb, const Dataset& batch, std::size_t n_classes,
                         std::size_t steps, double lr) {
    check_probe_inputs(bb, batch, n_classes);
    const std::size_t d = bb.arch.d;
    const Tensor embs = embed_all(bb, batch);

    ProbeHead head;
    head.w = Tensor({d, n_classes});
    head.b = Tensor({n_classes});
    head.init_loss = probe_loss(head, embs, batch.labels);

    for (std::size_t s = 0; s < steps; ++s) {
        Tape t;
        const Var e = t.constant(embs);
        const Var w = t.leaf(head.w, true);
        const Var b = t.leaf(head.b, true);
        const Var logits = t.add_rowvec(t.matmul(e, w), b);
        const Var loss = t.cross_entropy_logits(logits, batch.labels);
        t.backward(loss);
        axpy(head.w, -lr, w.grad());
        axpy(head.b, -lr, b.grad());
    }
    head.final_loss = probe_loss(head, embs, batch.labels);
    return head;
}

ShortcutRanking discover_shortcuts(const FrozenBackbone& bb, const ProbeHead& probe,
                                   const Dataset& batch, const std::vector<FrequencyMask>& masks) {
    if (masks.empty()) throw ConfigError("no masks to rank");
    if (batch.size() == 0) throw ContractError("scoring batch is empty");
    if (probe.w.rank() != 2 || probe.w.dims[0] != bb.arch.d)
        throw ShapeError("probe head does not match the backbone width");

    std::vector<double> losses(masks.size(), 0.0);
    const std::size_t workers = worker_count(masks.size());
    std::vector<std::exception_ptr> errors(workers);

    auto score_range = [&](std::size_t wid) {
        try {
            std::vector<double> logits(probe.b.dims[0]);
            for (std::size_t m = wid; m < masks.size(); m += workers) {
                double total = 0.0;
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    const Tensor filtered = filter_image(batch.image(i), masks[m]);
                    const Tensor emb = encode(bb, filtered);
                    for (std::size_t k = 0; k < logits.size(); ++k) {
                        double acc = probe.b(k);
                        for (std::size_t j = 0; j < emb.numel(); ++j)
                            acc += emb.data[j] * probe.w(j, k);
                        logits[k] = acc;
                    }
                    total += xent_row(logits.data(), logits.size(), batch.labels[i]);
                }
                losses[m] = total / static_cast<double>(batch.size());
            }
        } catch (...) {
            errors[wid] = std::current_exception();
        }
    };

    if (workers == 1) {
        score_range(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(score_range, w);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    ShortcutRanking ranking;
    ranking.entries.resize(masks.size());
    for (std::size_t m = 0; m < masks.size(); ++m) ranking.entries[m] = {m, losses[m]};
    std::sort(ranking.entries.begin(), ranking.entries.end(), [](const auto& a, const auto& b) {
        if (a.loss != b.loss) return a.loss < b.loss;
        return a.mask_id < b.mask_id;
    });
    return ranking;
}

Tensor energy_pooling(const Tensor& tokens) {
    if (tokens.rank() != 2 || tokens.dims[0] == 0 || tokens.dims[1] == 0)
        throw ShapeError("energy pooling expects a nonempty token matrix");
    const std::size_t n = tokens.dims[0], d = tokens.dims[1];
    std::vector<double> energy(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) energy[i] += tokens(i, j) * tokens(i, j);
        total += energy[i];
    }
    if (total <= 0.0) throw DegenerateInputError("all tokens have zero energy");
    Tensor pooled({1, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double w = energy[i] / total;
        for (std::size_t j = 0; j < d; ++j) pooled(0, j) += w * tokens(i, j);
    }
    return pooled;
}

Tensor build_first_prompt(const FrozenBackbone& bb, const Dataset& batch,
                          const std::vector<FrequencyMask>& masks,
                          const std::vector<std::size_t>& top_ids) {
    if (top_ids.empty()) throw ConfigError("prompt needs at least one selected mask");
    if (batch.size() == 0) throw ContractError("prompt batch is empty");
    for (std::size_t id : top_ids)
        if (id >= masks.size()) throw ContractError("selected mask id out of range");

    const std::size_t n_tok = bb.arch.n_patches();
    const std::size_t d = bb.arch.d;
    Tensor prompt({top_ids.size(), d});

    Tape t;
    const BackboneVars v = lift_backbone(t, bb, false);
    Tensor tokens({batch.size() * n_tok, d});
    for (std::size_t rank = 0; rank < top_ids.size(); ++rank) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const Tensor filtered = filter_image(batch.image(i), masks[top_ids[rank]]);
            const Var embedded = patch_embed(t, v, bb.arch, filtered);
            // row 0 is the class token; pooling runs over patch tokens only
            const Tensor& all = embedded.val();
            std::copy(all.data.begin() + d, all.data.end(), tokens.data.begin() + i * n_tok * d);
        }
        const Tensor pooled = energy_pooling(tokens);
        std::copy(pooled.data.begin(), pooled.data.end(), prompt.data.begin() + rank * d);
    }
    return prompt;
}

std::vector<Tensor> propagate_init(const FrozenBackbone& bb, const Tensor& p1) {
    if (p1.rank() != 2 || p1.dims[0] == 0 || p1.dims[1] != bb.arch.d)
        throw ShapeError("first prompt must be T×d");
    std::vector<Tensor> prompts;
    prompts.reserve(bb.arch.layers);
    prompts.push_back(p1);

    Tape t;
    const BackboneVars v = lift_backbone(t, bb, false);
    Var p = t.constant(p1);
    for (std::size_t i = 0; i + 1 < bb.arch.layers; ++i) {
        p = encoder_block(t, v.blocks[i], bb.arch, p);
        prompts.push_back(p.val());
    }
    return prompts;
}

MpaInit run_mpa(const FrozenBackbone& bb, const Dataset& train, std::size_t n_classes,
                std::size_t batch_size, std::size_t top_t, long long mask_w, long long mask_r,
                std::uint64_t seed, bool copy_init) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (train.size() == 0) throw ContractError("training set is empty");

    const std::size_t take = std::min(batch_size, train.size());
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::derive(seed, kBatchStream);
    rng.shuffle(order.begin(), order.end());
    order.resize(take);

    const std::size_t h = bb.arch.img_h, w = bb.arch.img_w;
    Dataset batch;
    batch.images = Tensor({take, h, w});
    batch.labels.resize(take);
    for (std::size_t i = 0; i < take; ++i) {
        const Tensor img = train.image(order[i]);
        std::copy(img.data.begin(), img.data.end(), batch.images.data.begin() + i * h * w);
        batch.labels[i] = train.labels[order[i]];
    }

    const auto masks = generate_masks(h, w, mask_w, mask_r);

    MpaInit init;
    init.batch_indices = order;

    const auto t0 = std::chrono::steady_clock::now();
    const ProbeHead probe = fit_probe_head(bb, batch, n_classes);
    init.ranking = discover_shortcuts(bb, probe, batch, masks);
    init.top_ids = init.ranking.top_ids(top_t);
    const auto t1 = std::chrono::steady_clock::now();

    const Tensor p1 = build_first_prompt(bb, batch, masks, init.top_ids);
    if (copy_init) {
        init.prompts.assign(bb.arch.layers, p1);
    } else {
        init.prompts = propagate_init(bb, p1);
    }
    const auto t2 = std::chrono::steady_clock::now();

    init.phase1_seconds = std::chrono::duration<double>(t1 - t0).count();
    init.phase2_seconds = std::chrono::duration<double>(t2 - t1).count();
    return init;
}

}  // namespace pae
