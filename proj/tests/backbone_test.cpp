#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pae/backbone.hpp"
#include "pae/io.hpp"
#include "pae/rng.hpp"

namespace fs = std::filesystem;
using pae::ArchConfig;
using pae::BackboneVars;
using pae::FrozenBackbone;
using pae::Rng;
using pae::Tape;
using pae::Tensor;
using pae::Var;

namespace {

ArchConfig tiny_arch() {
    ArchConfig a;
    a.img_h = a.img_w = 16;
    a.patch = 4;
    a.d = 16;
    a.heads = 4;
    a.layers = 2;
    a.classes = 4;
    return a;
}

std::vector<Var> lift_prompts(Tape& t, const pae::PromptStack& ps, bool trainable) {
    std::vector<Var> out;
    for (const Tensor& p : ps) out.push_back(t.leaf(p, trainable));
    return out;
}

}  // namespace

TEST_CASE("patch_embed token count and class token row") {
    ArchConfig a;  // default 32x32/4
    FrozenBackbone bb = FrozenBackbone::random_init(a, 1);
    Tape t;
    BackboneVars v = pae::lift_backbone(t, bb, false);
    Var tok = pae::patch_embed(t, v, a, Tensor({32, 32}));
    CHECK(tok.val().rows() == 65);
    CHECK(tok.val().cols() == 32);
    // zero image: token rows reduce to bias/class/positional contributions
    for (std::size_t j = 0; j < a.d; ++j)
        CHECK(tok.val()(0, j) == doctest::Approx(bb.cls(0, j) + bb.pos(0, j)));
}

TEST_CASE("patch embedding is local") {
    ArchConfig a = tiny_arch();
    FrozenBackbone bb = FrozenBackbone::random_init(a, 2);
    Rng rng(3);
    Tensor img1 = Tensor::uniform({16, 16}, rng, -1, 1);
    Tensor img2 = img1;
    img2(9, 2) += 0.5;  // inside patch (2,0) => patch row index 8
    Tensor pm1 = pae::patch_matrix(a, img1);
    Tensor pm2 = pae::patch_matrix(a, img2);
    std::size_t diff_rows = 0;
    for (std::size_t r = 0; r < pm1.rows(); ++r) {
        bool diff = false;
        for (std::size_t c = 0; c < pm1.cols(); ++c)
            if (pm1(r, c) != pm2(r, c)) diff = true;
        if (diff) {
            ++diff_rows;
            CHECK(r == 8);
        }
    }
    CHECK(diff_rows == 1);
}

TEST_CASE("indivisible image extent rejected") {
    ArchConfig a = tiny_arch();
    a.img_h = 15;
    CHECK_THROWS_AS(a.validate(), pae::ConfigError);
}

TEST_CASE("encoder block with zeroed output projections is identity") {
    ArchConfig a = tiny_arch();
    FrozenBackbone bb = FrozenBackbone::random_init(a, 4);
    auto& blk = bb.blocks[0];
    std::fill(blk.wo.data.begin(), blk.wo.data.end(), 0.0);
    std::fill(blk.bo.data.begin(), blk.bo.data.end(), 0.0);
    std::fill(blk.w2.data.begin(), blk.w2.data.end(), 0.0);
    std::fill(blk.b2.data.begin(), blk.b2.data.end(), 0.0);
    Rng rng(5);
    Tensor x = Tensor::gaussian({7, 16}, rng);
    Tape t;
    BackboneVars v = pae::lift_backbone(t, bb, false);
    Var out = pae::encoder_block(t, v.blocks[0], a, t.constant(x));
    CHECK(pae::max_abs(pae::sub(out.val(), x)) == 0.0);
}

TEST_CASE("encoder block is permutation equivariant") {
    ArchConfig a = tiny_arch();
    FrozenBackbone bb = FrozenBackbone::random_init(a, 6);
    Rng rng(7);
    Tensor x = Tensor::gaussian({5, 16}, rng);
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    Tensor xp({5, 16});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 16; ++j) xp(i, j) = x(perm[i], j);

    Tape t;
    BackboneVars v = pae::lift_backbone(t, bb, false);
    Tensor y = pae::encoder_block(t, v.blocks[1], a, t.constant(x)).val();
    Tensor yp = pae::encoder_block(t, v.blocks[1], a, t.constant(xp)).val();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 16; ++j)
            CHECK(yp(i, j) == doctest::Approx(y(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("block gradient matches finite differences") {
    ArchConfig a = tiny_arch();
    FrozenBackbone bb = FrozenBackbone::random_init(a, 8);
    Rng rng(9);
    Tensor x0 = Tensor::gaussian({4, 16}, rng);
    Tensor w = Tensor::gaussian({4, 16}, rng);

    auto loss_of = [&](const Tensor& x) {
        Tape t;
        BackboneVars v = pae::lift_backbone(t, bb, false);
        Var out = pae::encoder_block(t, v.blocks[0], a, t.leaf(x, false));
        return t.sum_all(t.hadamard(out, t.constant(w))).val()(0);
    };
    Tape t;
    BackboneVars v = pae::lift_backbone(t, bb, false);
    Var x = t.leaf(x0, true);
    Var out = pae::encoder_block(t, v.blocks[0], a, x);
    Var loss = t.sum_all(t.hadamard(out, t.constant(w)));
    t.backward(loss);
    Tensor fd = pae::finite_diff_grad(loss_of, x0);
    CHECK(pae::max_rel_err(t.grad(x.id), fd) <= 1e-5);
}

TEST_CASE("deep prompted forward shape, replacement semantics, T=0") {
    ArchConfig a = tiny_arch();
    FrozenBackbone bb = FrozenBackbone::random_init(a, 10);
    Rng rng(11);
    Tensor img = Tensor::uniform({16, 16}, rng, -1, 1);

    SUBCASE("logits shape and finiteness") {
        pae::PromptStack ps;
        for (std::size_t i = 0; i < a.layers; ++i) ps.push_back(Tensor::gaussian({3, 16}, rng));
        Tape t;
        BackboneVars v = pae::lift_backbone(t, bb, false);
        Var logits = pae::forward_deep_prompted(t, v, a, img, lift_prompts(t, ps, false));
        CHECK(logits.val().rows() == 1);
        CHECK(logits.val().cols() == a.classes);
        CHECK(logits.val().all_finite());
    }

    SUBCASE("T=0 equals plain forward") {
        Tape t;
        BackboneVars v = pae::lift_backbone(t, bb, false);
        Var logits = pae::forward_deep_prompted(t, v, a, img, {});
        Tensor plain = pae::plain_logits(bb, img);
        for (std::size_t j = 0; j < a.classes; ++j)
            CHECK(logits.val()(0, j) == doctest::Approx(plain(j)));
    }

    SUBCASE("zeroed blocks keep prompt rows equal to P_1") {
        FrozenBackbone zb = FrozenBackbone::random_init(a, 12);
        for (auto& blk : zb.blocks) {
            std::fill(blk.wo.data.begin(), blk.wo.data.end(), 0.0);
            std::fill(blk.bo.data.begin(), blk.bo.data.end(), 0.0);
            std::fill(blk.w2.data.begin(), blk.w2.data.end(), 0.0);
            std::fill(blk.b2.data.begin(), blk.b2.data.end(), 0.0);
        }
        Tensor p1 = Tensor::gaussian({2, 16}, rng);
        Tape t;
        BackboneVars v = pae::lift_backbone(t, zb, false);
        // with identity blocks the carried rows never change, so feeding the
        // same prompt at each layer keeps layer-L prompt rows equal to P_1
        std::vector<Var> prompts(a.layers, t.constant(p1));
        Var tok = pae::patch_embed(t, v, a, img);
        Var last;
        for (std::size_t i = 0; i < a.layers; ++i) {
            Var input = t.concat_rows({prompts[i], tok});
            last = pae::encoder_block(t, v.blocks[i], a, input);
            tok = t.slice_rows(last, 2, 2 + a.n_patches() + 1);
        }
        Tensor prows = t.slice_rows(last, 0, 2).val();
        CHECK(pae::max_abs(pae::sub(prows, p1)) == 0.0);
    }
}

TEST_CASE("prompt gradient flows, backbone stays grad-free") {
    ArchConfig a = tiny_arch();
    FrozenBackbone bb = FrozenBackbone::random_init(a, 13);
    Rng rng(14);
    Tensor img = Tensor::uniform({16, 16}, rng, -1, 1);
    pae::PromptStack ps;
    for (std::size_t i = 0; i < a.layers; ++i) ps.push_back(Tensor::gaussian({2, 16}, rng, 0.1));

    Tape t;
    BackboneVars v = pae::lift_backbone(t, bb, false);
    auto pvars = lift_prompts(t, ps, true);
    Var logits = pae::forward_deep_prompted(t, v, a, img, pvars);
    Var loss = t.cross_entropy_logits(logits, {1});
    t.backward(loss);
    CHECK(pae::max_abs(t.grad(pvars[0].id)) > 0.0);
    CHECK(pae::max_abs(t.grad(v.blocks[0].wq.id)) == 0.0);  // never accumulated

    // finite-difference check of d(loss)/d(P_1)
    Tensor fd = pae::finite_diff_grad(
        [&](const Tensor& p1) {
            Tape t2;
            BackboneVars v2 = pae::lift_backbone(t2, bb, false);
            pae::PromptStack ps2 = ps;
            ps2[0] = p1;
            Var lg = pae::forward_deep_prompted(t2, v2, a, img, lift_prompts(t2, ps2, false));
            return t2.cross_entropy_logits(lg, {1}).val()(0);
        },
        ps[0]);
    CHECK(pae::max_rel_err(t.grad(pvars[0].id), fd) <= 1e-5);
}

TEST_CASE("pretrain is deterministic and beats chance") {
    ArchConfig a = tiny_arch();
    a.classes = 4;
    // four crude classes: bright quadrant patterns
    const std::size_t n = 48;
    Tensor images({n, 16, 16});
    std::vector<std::size_t> labels(n);
    Rng rng(20);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = i % 4;
        for (std::size_t r = 0; r < 16; ++r)
            for (std::size_t c = 0; c < 16; ++c) {
                const bool hot = (labels[i] / 2 == (r < 8 ? 0u : 1u)) &&
                                 (labels[i] % 2 == (c < 8 ? 0u : 1u));
                images((i * 16 + r) * 16 + c) = (hot ? 0.8 : 0.0) + 0.05 * rng.gaussian();
            }
    }
    auto r1 = pae::pretrain_source(a, images, labels, 400, 0.01, 16, 10);
    auto r2 = pae::pretrain_source(a, images, labels, 400, 0.01, 16, 10);
    CHECK(r1.backbone.frozen_hash() == r2.backbone.frozen_hash());
    CHECK(r1.backbone.head_w.data == r2.backbone.head_w.data);
    CHECK(r1.train_accuracy > 0.9);

    auto r0 = pae::pretrain_source(a, images, labels, 0, 0.01, 16, 10);
    CHECK(r0.backbone.frozen_hash() ==
          FrozenBackbone::random_init(a, 10).frozen_hash());
}

TEST_CASE("backbone save/load round trip") {
    ArchConfig a = tiny_arch();
    FrozenBackbone bb = FrozenBackbone::random_init(a, 21);
    const std::string dir =
        (fs::temp_directory_path() / ("pae_bb_test_" + std::to_string(::getpid()))).string();
    pae::save_backbone(dir, bb, {{"source_task", "unit"}});
    FrozenBackbone back = pae::load_backbone(dir);
    CHECK(back.frozen_hash() == bb.frozen_hash());
    CHECK(back.head_w.data == bb.head_w.data);
    CHECK(back.arch == a);
    const std::string manifest = pae::io::read_text(dir + "/manifest.txt");
    CHECK(manifest.find("source_task=unit") != std::string::npos);
    fs::remove_all(dir);
}
