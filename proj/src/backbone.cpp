#include "pae/backbone.hpp"

#include <bit>
#include <cmath>
#include <filesystem>

#include "pae/io.hpp"
#include "pae/rng.hpp"

namespace pae {

namespace {

std::vector<std::string> weight_names(const ArchConfig& arch) {
    std::vector<std::string> names = {"patch_proj", "patch_bias", "cls", "pos"};
    static const char* suffix[] = {"ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv",
                                   "wo",    "bo",    "ln2_g", "ln2_b", "w1", "b1", "w2", "b2"};
    for (std::size_t i = 0; i < arch.layers; ++i)
        for (const char* s : suffix) names.push_back("blk" + std::to_string(i) + "_" + s);
    names.push_back("head_w");
    names.push_back("head_b");
    return names;
}

std::vector<Var> var_list(const BackboneVars& v) {
    std::vector<Var> out = {v.patch_proj, v.patch_bias, v.cls, v.pos};
    for (const auto& b : v.blocks)
        for (Var w : {b.ln1_g, b.ln1_b, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo, b.ln2_g,
                      b.ln2_b, b.w1, b.b1, b.w2, b.b2})
            out.push_back(w);
    out.push_back(v.head_w);
    out.push_back(v.head_b);
    return out;
}

void append_tensor_bytes(std::string& buf, const Tensor& t) {
    for (std::size_t d : t.dims) {
        const auto u = static_cast<std::uint64_t>(d);
        for (std::size_t i = 0; i < 8; ++i) buf.push_back(char((u >> (8 * i)) & 0xff));
    }
    for (double x : t.data) {
        const auto u = std::bit_cast<std::uint64_t>(x);
        for (std::size_t i = 0; i < 8; ++i) buf.push_back(char((u >> (8 * i)) & 0xff));
    }
}

}  // namespace

void ArchConfig::validate() const {
    if (img_h == 0 || img_w == 0 || patch == 0 || d == 0 || heads == 0 || layers == 0 ||
        classes < 2 || mlp_ratio == 0)
        throw ConfigError("arch: all extents must be positive (classes >= 2)");
    if (img_h % patch != 0 || img_w % patch != 0)
        throw ConfigError("arch: image " + std::to_string(img_h) + "x" + std::to_string(img_w) +
                          " not divisible by patch " + std::to_string(patch));
    if (d % heads != 0)
        throw ConfigError("arch: d=" + std::to_string(d) + " not divisible by heads=" +
                          std::to_string(heads));
}

FrozenBackbone FrozenBackbone::random_init(const ArchConfig& arch, std::uint64_t seed) {
    arch.validate();
    FrozenBackbone bb;
    bb.arch = arch;
    std::uint64_t slot = 0;
    auto next_rng = [&] { return Rng::derive(seed, slot++); };

    {
        Rng r = next_rng();
        bb.patch_proj = kaiming_uniform(arch.patch * arch.patch, arch.d, r);
    }
    bb.patch_bias = Tensor({arch.d});
    {
        Rng r = next_rng();
        bb.cls = Tensor::gaussian({1, arch.d}, r, 0.02);
    }
    {
        Rng r = next_rng();
        bb.pos = Tensor::gaussian({arch.n_patches() + 1, arch.d}, r, 0.02);
    }
    for (std::size_t i = 0; i < arch.layers; ++i) {
        BlockWeights b;
        b.ln1_g = Tensor::full({arch.d}, 1.0);
        b.ln1_b = Tensor({arch.d});
        Rng r = next_rng();
        // ViT-style small-scale block projections: residual branches start
        // near zero, so blocks are near-identity and token norms stay
        // bounded through depth (prompt-only forwards included)
        b.wq = Tensor::gaussian({arch.d, arch.d}, r, 0.05);
        b.wk = Tensor::gaussian({arch.d, arch.d}, r, 0.05);
        b.wv = Tensor::gaussian({arch.d, arch.d}, r, 0.05);
        b.wo = Tensor::gaussian({arch.d, arch.d}, r, 0.05);
        b.bq = Tensor({arch.d});
        b.bk = Tensor({arch.d});
        b.bv = Tensor({arch.d});
        b.bo = Tensor({arch.d});
        b.ln2_g = Tensor::full({arch.d}, 1.0);
        b.ln2_b = Tensor({arch.d});
        b.w1 = Tensor::gaussian({arch.d, arch.mlp_hidden()}, r, 0.05);
        b.b1 = Tensor({arch.mlp_hidden()});
        b.w2 = Tensor::gaussian({arch.mlp_hidden(), arch.d}, r, 0.05);
        b.b2 = Tensor({arch.d});
        bb.blocks.push_back(std::move(b));
    }
    {
        // nonzero head so a fresh backbone routes gradient into the encoder
        Rng r = next_rng();
        bb.head_w = kaiming_uniform(arch.d, arch.classes, r);
    }
    bb.head_b = Tensor({arch.classes});
    return bb;
}

std::vector<const Tensor*> FrozenBackbone::all_weights() const {
    std::vector<const Tensor*> out = {&patch_proj, &patch_bias, &cls, &pos};
    for (const auto& b : blocks)
        for (const Tensor* t : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv,
                                &b.wo, &b.bo, &b.ln2_g, &b.ln2_b, &b.w1, &b.b1, &b.w2, &b.b2})
            out.push_back(t);
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
}

std::vector<Tensor*> FrozenBackbone::all_weights() {
    std::vector<Tensor*> out;
    for (const Tensor* t : static_cast<const FrozenBackbone*>(this)->all_weights())
        out.push_back(const_cast<Tensor*>(t));
    return out;
}

std::string FrozenBackbone::frozen_hash() const {
    std::string buf;
    auto ws = all_weights();
    for (std::size_t i = 0; i + 2 < ws.size(); ++i)  // skip head_w, head_b
        append_tensor_bytes(buf, *ws[i]);
    return io::sha256_str(buf);
}

BackboneVars lift_backbone(Tape& t, const FrozenBackbone& bb, bool trainable) {
    BackboneVars v;
    v.patch_proj = t.leaf(bb.patch_proj, trainable);
    v.patch_bias = t.leaf(bb.patch_bias, trainable);
    v.cls = t.leaf(bb.cls, trainable);
    v.pos = t.leaf(bb.pos, trainable);
    for (const auto& b : bb.blocks) {
        BackboneVars::BlockVars bv;
        bv.ln1_g = t.leaf(b.ln1_g, trainable);
        bv.ln1_b = t.leaf(b.ln1_b, trainable);
        bv.wq = t.leaf(b.wq, trainable);
        bv.bq = t.leaf(b.bq, trainable);
        bv.wk = t.leaf(b.wk, trainable);
        bv.bk = t.leaf(b.bk, trainable);
        bv.wv = t.leaf(b.wv, trainable);
        bv.bv = t.leaf(b.bv, trainable);
        bv.wo = t.leaf(b.wo, trainable);
        bv.bo = t.leaf(b.bo, trainable);
        bv.ln2_g = t.leaf(b.ln2_g, trainable);
        bv.ln2_b = t.leaf(b.ln2_b, trainable);
        bv.w1 = t.leaf(b.w1, trainable);
        bv.b1 = t.leaf(b.b1, trainable);
        bv.w2 = t.leaf(b.w2, trainable);
        bv.b2 = t.leaf(b.b2, trainable);
        v.blocks.push_back(bv);
    }
    v.head_w = t.leaf(bb.head_w, trainable);
    v.head_b = t.leaf(bb.head_b, trainable);
    return v;
}

Tensor patch_matrix(const ArchConfig& arch, const Tensor& image) {
    if (image.rank() != 2 || image.rows() != arch.img_h || image.cols() != arch.img_w)
        throw ShapeError("patch_matrix: image " + image.shape_str() + " vs arch " +
                         std::to_string(arch.img_h) + "x" + std::to_string(arch.img_w));
    const std::size_t p = arch.patch;
    const std::size_t gh = arch.img_h / p, gw = arch.img_w / p;
    Tensor pm({gh * gw, p * p});
    for (std::size_t gr = 0; gr < gh; ++gr)
        for (std::size_t gc = 0; gc < gw; ++gc) {
            const std::size_t row = gr * gw + gc;
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < p; ++j)
                    pm(row, i * p + j) = image(gr * p + i, gc * p + j);
        }
    return pm;
}

Var patch_embed(Tape& t, const BackboneVars& v, const ArchConfig& arch, const Tensor& image) {
    Var pm = t.constant(patch_matrix(arch, image));
    Var tokens = t.add_rowvec(t.matmul(pm, v.patch_proj), v.patch_bias);
    Var all = t.concat_rows({v.cls, tokens});
    return t.add(all, v.pos);
}

Var encoder_block(Tape& t, const BackboneVars::BlockVars& bw, const ArchConfig& arch,
                  Var tokens) {
    const std::size_t hd = arch.head_dim();
    Var h = t.layer_norm(tokens, bw.ln1_g, bw.ln1_b);
    Var q = t.add_rowvec(t.matmul(h, bw.wq), bw.bq);
    Var k = t.add_rowvec(t.matmul(h, bw.wk), bw.bk);
    Var vv = t.add_rowvec(t.matmul(h, bw.wv), bw.bv);
    std::vector<Var> heads;
    for (std::size_t hi = 0; hi < arch.heads; ++hi) {
        Var qh = t.slice_cols(q, hi * hd, (hi + 1) * hd);
        Var kh = t.slice_cols(k, hi * hd, (hi + 1) * hd);
        Var vh = t.slice_cols(vv, hi * hd, (hi + 1) * hd);
        Var attn = t.row_softmax(t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(double(hd))));
        heads.push_back(t.matmul(attn, vh));
    }
    Var mhsa = t.add_rowvec(t.matmul(t.concat_cols(heads), bw.wo), bw.bo);
    Var x1 = t.add(tokens, mhsa);
    Var h2 = t.layer_norm(x1, bw.ln2_g, bw.ln2_b);
    Var mlp = t.add_rowvec(
        t.matmul(t.gelu(t.add_rowvec(t.matmul(h2, bw.w1), bw.b1)), bw.w2), bw.b2);
    return t.add(x1, mlp);
}

Var forward_deep_prompted(Tape& t, const BackboneVars& v, const ArchConfig& arch,
                          const Tensor& image, const std::vector<Var>& prompts) {
    if (!prompts.empty() && prompts.size() != arch.layers)
        throw ShapeError("forward: " + std::to_string(prompts.size()) + " prompt layers for " +
                         std::to_string(arch.layers) + " blocks");
    std::size_t T = 0;
    for (const Var& p : prompts) {
        const Tensor& pv = p.val();
        if (pv.rank() != 2 || pv.cols() != arch.d)
            throw ShapeError("forward: prompt shape " + pv.shape_str());
        if (T == 0) T = pv.rows();
        if (pv.rows() != T) throw ShapeError("forward: inconsistent prompt row counts");
    }
    const std::size_t rest_rows = arch.n_patches() + 1;
    Var tok = patch_embed(t, v, arch, image);
    for (std::size_t i = 0; i < arch.layers; ++i) {
        Var input = prompts.empty() ? tok : t.concat_rows({prompts[i], tok});
        Var out = encoder_block(t, v.blocks[i], arch, input);
        tok = prompts.empty() ? out : t.slice_rows(out, T, T + rest_rows);
    }
    Var cls_out = t.slice_rows(tok, 0, 1);
    return t.add_rowvec(t.matmul(cls_out, v.head_w), v.head_b);
}

Tensor encode(const FrozenBackbone& bb, const Tensor& image) {
    Tape t;
    BackboneVars v = lift_backbone(t, bb, false);
    Var tok = patch_embed(t, v, bb.arch, image);
    for (std::size_t i = 0; i < bb.arch.layers; ++i) tok = encoder_block(t, v.blocks[i], bb.arch, tok);
    const Tensor& out = tok.val();
    Tensor e({bb.arch.d});
    for (std::size_t j = 0; j < bb.arch.d; ++j) e(j) = out(0, j);
    return e;
}

Tensor plain_logits(const FrozenBackbone& bb, const Tensor& image) {
    Tape t;
    BackboneVars v = lift_backbone(t, bb, false);
    Var logits = forward_deep_prompted(t, v, bb.arch, image, {});
    Tensor out({bb.arch.classes});
    for (std::size_t j = 0; j < bb.arch.classes; ++j) out(j) = logits.val()(0, j);
    return out;
}

PretrainResult pretrain_source(const ArchConfig& arch, const Tensor& images,
                               const std::vector<std::size_t>& labels, std::size_t steps,
                               double lr, std::size_t batch, std::uint64_t seed) {
    arch.validate();
    if (images.rank() != 3 || images.dims[1] != arch.img_h || images.dims[2] != arch.img_w)
        throw ShapeError("pretrain: images " + images.shape_str());
    const std::size_t n = images.dims[0];
    if (labels.size() != n) throw ContractError("pretrain: label count mismatch");
    if (batch == 0) throw ConfigError("pretrain: batch must be positive");

    PretrainResult res;
    res.backbone = FrozenBackbone::random_init(arch, seed);
    FrozenBackbone& bb = res.backbone;

    auto image_at = [&](std::size_t idx) {
        Tensor img({arch.img_h, arch.img_w});
        const std::size_t stride = arch.img_h * arch.img_w;
        std::copy(images.data.begin() + idx * stride, images.data.begin() + (idx + 1) * stride,
                  img.data.begin());
        return img;
    };

    if (steps > 0) {
        auto ws = bb.all_weights();
        std::vector<Tensor> acc, vel;
        for (Tensor* w : ws) {
            acc.emplace_back(w->dims);
            vel.emplace_back(w->dims);
        }
        Rng order = Rng::derive(seed, 0x0bb0);
        for (std::size_t step = 0; step < steps; ++step) {
            for (Tensor& a : acc) std::fill(a.data.begin(), a.data.end(), 0.0);
            double loss_sum = 0.0;
            const std::size_t bsz = std::min(batch, n);
            for (std::size_t bi = 0; bi < bsz; ++bi) {
                const std::size_t idx = order.below(n);
                Tape t;
                BackboneVars v = lift_backbone(t, bb, true);
                Var logits = forward_deep_prompted(t, v, arch, image_at(idx), {});
                Var loss = t.cross_entropy_logits(logits, {labels[idx]});
                loss_sum += loss.val()(0);
                t.backward(loss);
                auto vars = var_list(v);
                for (std::size_t wi = 0; wi < ws.size(); ++wi)
                    axpy(acc[wi], 1.0 / static_cast<double>(bsz), t.grad(vars[wi].id));
            }
            for (std::size_t wi = 0; wi < ws.size(); ++wi) {
                Tensor& vw = vel[wi];
                for (std::size_t j = 0; j < vw.numel(); ++j)
                    vw.data[j] = 0.9 * vw.data[j] + acc[wi].data[j];
                axpy(*ws[wi], -lr, vw);
            }
            res.final_loss = loss_sum / static_cast<double>(std::min(batch, n));
        }
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor lg = plain_logits(bb, image_at(i));
        std::size_t am = 0;
        for (std::size_t j = 1; j < lg.numel(); ++j)
            if (lg(j) > lg(am)) am = j;
        correct += am == labels[i] ? 1 : 0;
    }
    res.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return res;
}

void save_backbone(const std::string& dir, const FrozenBackbone& bb,
                   const std::vector<std::pair<std::string, std::string>>& manifest_extra) {
    std::filesystem::create_directories(dir);
    const auto names = weight_names(bb.arch);
    const auto ws = bb.all_weights();
    for (std::size_t i = 0; i < ws.size(); ++i)
        io::write_tensor(dir + "/" + names[i] + ".paet", *ws[i]);
    Config m;
    m.set("img_h", std::to_string(bb.arch.img_h));
    m.set("img_w", std::to_string(bb.arch.img_w));
    m.set("patch", std::to_string(bb.arch.patch));
    m.set("d", std::to_string(bb.arch.d));
    m.set("heads", std::to_string(bb.arch.heads));
    m.set("layers", std::to_string(bb.arch.layers));
    m.set("classes", std::to_string(bb.arch.classes));
    m.set("mlp_ratio", std::to_string(bb.arch.mlp_ratio));
    m.set("frozen_hash", bb.frozen_hash());
    for (const auto& [k, v] : manifest_extra) m.set(k, v);
    io::write_text(dir + "/manifest.txt", m.to_string());
}

FrozenBackbone load_backbone(const std::string& dir) {
    Config m = Config::parse_file(dir + "/manifest.txt");
    ArchConfig arch;
    arch.img_h = static_cast<std::size_t>(m.get_int("img_h"));
    arch.img_w = static_cast<std::size_t>(m.get_int("img_w"));
    arch.patch = static_cast<std::size_t>(m.get_int("patch"));
    arch.d = static_cast<std::size_t>(m.get_int("d"));
    arch.heads = static_cast<std::size_t>(m.get_int("heads"));
    arch.layers = static_cast<std::size_t>(m.get_int("layers"));
    arch.classes = static_cast<std::size_t>(m.get_int("classes"));
    arch.mlp_ratio = static_cast<std::size_t>(m.get_int("mlp_ratio"));
    arch.validate();
    FrozenBackbone bb = FrozenBackbone::random_init(arch, 0);
    const auto names = weight_names(arch);
    auto ws = bb.all_weights();
    for (std::size_t i = 0; i < ws.size(); ++i) {
        Tensor t = io::read_tensor(dir + "/" + names[i] + ".paet");
        if (t.dims != ws[i]->dims)
            throw ConfigError("backbone file " + names[i] + ": shape " + t.shape_str() +
                              " vs expected " + ws[i]->shape_str());
        *ws[i] = std::move(t);
    }
    const std::string want = m.get_str("frozen_hash", "");
    if (!want.empty() && want != bb.frozen_hash())
        throw ConfigError("backbone checkpoint hash mismatch in " + dir);
    return bb;
}

}  // namespace pae
