#include "pae/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <utility>

#include <json.hpp>

#include "pae/autodiff.hpp"
#include "pae/error.hpp"
#include "pae/io.hpp"
#include "pae/mpa.hpp"
#include "pae/rng.hpp"

namespace pae {
namespace {

constexpr std::uint64_t kOrderStream = 0x7a11;
constexpr std::uint64_t kPromptStream = 0x9021;
constexpr std::uint64_t kHeadStream = 0x4ead;
constexpr double kDivergenceCap = 1e6;

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "img_h", "img_w", "patch", "d",      "heads",  "layers",  "classes", "prompt_t",
        "k_dim", "alpha", "beta",  "lr",     "momentum", "epochs", "batch",  "seed",
        "w",     "r",     "mpa_on", "kp_on", "stab_on", "layerwise_k", "copy_init"};
    return keys;
}

std::string fmt_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

double frobenius(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return std::sqrt(s);
}

// Per-image task forward with trainable head and prompts spliced in.
Var task_forward(Tape& t, const FrozenBackbone& bb, Var head_w, Var head_b,
                 const std::vector<Var>& prompts, const Tensor& image, std::size_t label) {
    BackboneVars v = lift_backbone(t, bb, false);
    v.head_w = head_w;
    v.head_b = head_b;
    const Var logits = forward_deep_prompted(t, v, bb.arch, image, prompts);
    return t.cross_entropy_logits(logits, {label});
}

struct ParamSet {
    std::vector<Tensor*> params;
    std::vector<const Tensor*> grads;
};

// Fixed update order: prompts, head, U, Kop, A, layer operators.
ParamSet collect(TunedModel& m, const StepGradients& g) {
    ParamSet s;
    for (std::size_t i = 0; i < m.prompts.size(); ++i) {
        s.params.push_back(&m.prompts[i]);
        s.grads.push_back(&g.prompts[i]);
    }
    s.params.push_back(&m.head_w);
    s.grads.push_back(&g.head_w);
    s.params.push_back(&m.head_b);
    s.grads.push_back(&g.head_b);
    s.params.push_back(&m.system.U);
    s.grads.push_back(&g.u);
    s.params.push_back(&m.system.Kop);
    s.grads.push_back(&g.kop);
    s.params.push_back(&m.system.A);
    s.grads.push_back(&g.a);
    for (std::size_t i = 0; i < m.layer_ops.size(); ++i) {
        s.params.push_back(&m.layer_ops[i]);
        s.grads.push_back(&g.layer_ops[i]);
    }
    return s;
}

Dataset take_batch(const Dataset& ds, const std::vector<std::size_t>& idx, std::size_t begin,
                   std::size_t end) {
    const std::size_t h = ds.images.dims[1], w = ds.images.dims[2], n = end - begin;
    Dataset out;
    out.images = Tensor({n, h, w});
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = idx[begin + i];
        std::copy(ds.images.data.begin() + src * h * w, ds.images.data.begin() + (src + 1) * h * w,
                  out.images.data.begin() + i * h * w);
        out.labels[i] = ds.labels[src];
    }
    return out;
}

}  // namespace

ArchConfig TrainConfig::arch() const {
    ArchConfig a;
    a.img_h = img_h;
    a.img_w = img_w;
    a.patch = patch;
    a.d = d;
    a.heads = heads;
    a.layers = layers;
    a.classes = classes;
    return a;
}

void TrainConfig::validate() const {
    arch().validate();
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("loss weights must be nonnegative");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
    if (prompt_t == 0) throw ConfigError("prompt length must be at least 1");
    if (k_dim == 0) throw ConfigError("lifted dimension must be at least 1");
    if (epochs == 0 || batch == 0) throw ConfigError("epochs and batch must be positive");
    if (w <= 0 || r <= 0) throw ConfigError("mask window and stride must be positive");
}

TrainConfig TrainConfig::from_config(const Config& c) {
    const auto& keys = config_keys();
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [k, v] : c.kv)
        if (!known.count(k)) throw ConfigError("unknown config key: " + k);

    TrainConfig t;
    t.img_h = static_cast<std::size_t>(c.get_int("img_h", t.img_h));
    t.img_w = static_cast<std::size_t>(c.get_int("img_w", t.img_w));
    t.patch = static_cast<std::size_t>(c.get_int("patch", t.patch));
    t.d = static_cast<std::size_t>(c.get_int("d", t.d));
    t.heads = static_cast<std::size_t>(c.get_int("heads", t.heads));
    t.layers = static_cast<std::size_t>(c.get_int("layers", t.layers));
    t.classes = static_cast<std::size_t>(c.get_int("classes", t.classes));
    t.prompt_t = static_cast<std::size_t>(c.get_int("prompt_t", t.prompt_t));
    t.k_dim = static_cast<std::size_t>(c.get_int("k_dim", t.k_dim));
    t.alpha = c.get_double("alpha", t.alpha);
    t.beta = c.get_double("beta", t.beta);
    t.lr = c.get_double("lr", t.lr);
    t.momentum = c.get_double("momentum", t.momentum);
    t.epochs = static_cast<std::size_t>(c.get_int("epochs", t.epochs));
    t.batch = static_cast<std::size_t>(c.get_int("batch", t.batch));
    t.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(t.seed)));
    t.w = c.get_int("w", t.w);
    t.r = c.get_int("r", t.r);
    t.mpa_on = c.get_bool("mpa_on", t.mpa_on);
    t.kp_on = c.get_bool("kp_on", t.kp_on);
    t.stab_on = c.get_bool("stab_on", t.stab_on);
    t.layerwise_k = c.get_bool("layerwise_k", t.layerwise_k);
    t.copy_init = c.get_bool("copy_init", t.copy_init);
    t.validate();
    return t;
}

Config TrainConfig::to_config() const {
    Config c;
    c.set("img_h", std::to_string(img_h));
    c.set("img_w", std::to_string(img_w));
    c.set("patch", std::to_string(patch));
    c.set("d", std::to_string(d));
    c.set("heads", std::to_string(heads));
    c.set("layers", std::to_string(layers));
    c.set("classes", std::to_string(classes));
    c.set("prompt_t", std::to_string(prompt_t));
    c.set("k_dim", std::to_string(k_dim));
    c.set("alpha", fmt_double(alpha));
    c.set("beta", fmt_double(beta));
    c.set("lr", fmt_double(lr));
    c.set("momentum", fmt_double(momentum));
    c.set("epochs", std::to_string(epochs));
    c.set("batch", std::to_string(batch));
    c.set("seed", std::to_string(seed));
    c.set("w", std::to_string(w));
    c.set("r", std::to_string(r));
    c.set("mpa_on", mpa_on ? "true" : "false");
    c.set("kp_on", kp_on ? "true" : "false");
    c.set("stab_on", stab_on ? "true" : "false");
    c.set("layerwise_k", layerwise_k ? "true" : "false");
    c.set("copy_init", copy_init ? "true" : "false");
    return c;
}

LossBreakdown total_loss(const FrozenBackbone& bb, const TunedModel& m, const Dataset& batch,
                         double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("loss weights must be nonnegative");
    if (batch.size() == 0) throw ContractError("loss batch is empty");

    LossBreakdown out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tape t;
        std::vector<Var> pv;
        for (const Tensor& p : m.prompts) pv.push_back(t.constant(p));
        const Var ce = task_forward(t, bb, t.constant(m.head_w), t.constant(m.head_b), pv,
                                    batch.image(i), batch.labels[i]);
        out.task += ce.val()(0);
    }
    out.task /= static_cast<double>(batch.size());

    if (m.prompts.size() >= 2) {
        if (m.layer_ops.empty()) {
            out.kp = loss_kp(m.prompts, m.system.U, m.system.Kop);
        } else {
            for (std::size_t i = 0; i + 1 < m.prompts.size(); ++i) {
                const Tensor diff = sub(lift(m.prompts[i + 1], m.system.U),
                                        evolve(lift(m.prompts[i], m.system.U), m.layer_ops[i]));
                for (double v : diff.data) out.kp += v * v;
            }
        }
        const Tensor q = m.system.q();
        out.stab = loss_stab(lift_trajectory(m.prompts, m.system.U, m.system.Kop), q);
    }
    out.total = out.task + alpha * out.kp + beta * out.stab;
    return out;
}

StepGradients compute_gradients(const FrozenBackbone& bb, const TunedModel& m,
                                const Dataset& batch, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("loss weights must be nonnegative");
    if (batch.size() == 0) throw ContractError("gradient batch is empty");

    const std::size_t layers = m.prompts.size();
    StepGradients g;
    g.prompts.reserve(layers);
    for (const Tensor& p : m.prompts) g.prompts.emplace_back(p.dims);
    g.head_w = Tensor(m.head_w.dims);
    g.head_b = Tensor(m.head_b.dims);
    g.u = Tensor(m.system.U.dims);
    g.kop = Tensor(m.system.Kop.dims);
    g.a = Tensor(m.system.A.dims);
    for (const Tensor& op : m.layer_ops) g.layer_ops.emplace_back(op.dims);

    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tape t;
        const Var hw = t.leaf(m.head_w, true);
        const Var hb = t.leaf(m.head_b, true);
        std::vector<Var> pv;
        for (const Tensor& p : m.prompts) pv.push_back(t.leaf(p, true));
        const Var ce = task_forward(t, bb, hw, hb, pv, batch.image(i), batch.labels[i]);
        g.loss.task += ce.val()(0);
        t.backward(ce);
        for (std::size_t l = 0; l < layers; ++l) axpy(g.prompts[l], inv, pv[l].grad());
        axpy(g.head_w, inv, hw.grad());
        axpy(g.head_b, inv, hb.grad());
    }
    g.loss.task *= inv;

    if ((alpha > 0.0 || beta > 0.0) && layers >= 2) {
        Tape t;
        std::vector<Var> pv;
        for (const Tensor& p : m.prompts) pv.push_back(t.leaf(p, true));
        const Var u = t.leaf(m.system.U, true);

        Var root{};
        bool have_root = false;
        Var kop{};
        std::vector<Var> ops;
        if (alpha > 0.0) {
            if (m.layer_ops.empty()) {
                kop = t.leaf(m.system.Kop, true);
                ops = {kop};
            } else {
                for (const Tensor& op : m.layer_ops) ops.push_back(t.leaf(op, true));
            }
            const Var kp = loss_kp_tape(t, pv, u, ops);
            g.loss.kp = kp.val()(0);
            root = t.scale(kp, alpha);
            have_root = true;
        }
        Var a{};
        if (beta > 0.0) {
            a = t.leaf(m.system.A, true);
            const Var q = spd_materialize_tape(t, a, m.system.eps);
            const Var st = loss_stab_tape(t, pv, u, q);
            g.loss.stab = st.val()(0);
            const Var weighted = t.scale(st, beta);
            root = have_root ? t.add(root, weighted) : weighted;
            have_root = true;
        }
        t.backward(root);
        for (std::size_t l = 0; l < layers; ++l) axpy(g.prompts[l], 1.0, pv[l].grad());
        axpy(g.u, 1.0, u.grad());
        if (alpha > 0.0) {
            if (m.layer_ops.empty()) {
                axpy(g.kop, 1.0, kop.grad());
            } else {
                for (std::size_t i = 0; i < ops.size(); ++i) axpy(g.layer_ops[i], 1.0, ops[i].grad());
            }
        }
        if (beta > 0.0) axpy(g.a, 1.0, a.grad());
    }

    g.loss.total = g.loss.task + alpha * g.loss.kp + beta * g.loss.stab;
    return g;
}

TunedModel init_model(const TrainConfig& cfg, const FrozenBackbone& bb, const Dataset& train,
                      double* mpa_seconds) {
    cfg.validate();
    if (bb.arch.img_h != cfg.img_h || bb.arch.img_w != cfg.img_w || bb.arch.patch != cfg.patch ||
        bb.arch.d != cfg.d || bb.arch.heads != cfg.heads || bb.arch.layers != cfg.layers)
        throw ConfigError("backbone geometry does not match the training config");

    TunedModel m;
    if (mpa_seconds) *mpa_seconds = 0.0;
    if (cfg.mpa_on) {
        const MpaInit init = run_mpa(bb, train, cfg.classes, cfg.batch, cfg.prompt_t, cfg.w, cfg.r,
                                     cfg.seed, cfg.copy_init);
        m.prompts = init.prompts;
        if (mpa_seconds) *mpa_seconds = init.phase1_seconds + init.phase2_seconds;
    } else {
        Rng rng = Rng::derive(cfg.seed, kPromptStream);
        const double bound = std::sqrt(6.0 / static_cast<double>(cfg.d));
        for (std::size_t i = 0; i < cfg.layers; ++i)
            m.prompts.push_back(Tensor::uniform({cfg.prompt_t, cfg.d}, rng, -bound, bound));
    }

    Rng head_rng = Rng::derive(cfg.seed, kHeadStream);
    m.head_w = kaiming_uniform(cfg.d, cfg.classes, head_rng);
    m.head_b = Tensor({cfg.classes});
    m.system = KoopmanSystem::init(cfg.d, cfg.k_dim, cfg.seed);
    if (cfg.layerwise_k) m.layer_ops = layerwise_operators(cfg.k_dim, cfg.layers);
    return m;
}

double accuracy(const FrozenBackbone& bb, const TunedModel& m, const Dataset& ds) {
    if (ds.size() == 0) throw ContractError("accuracy over an empty split");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Tape t;
        BackboneVars v = lift_backbone(t, bb, false);
        v.head_w = t.constant(m.head_w);
        v.head_b = t.constant(m.head_b);
        std::vector<Var> pv;
        for (const Tensor& p : m.prompts) pv.push_back(t.constant(p));
        const Tensor& logits = forward_deep_prompted(t, v, bb.arch, ds.image(i), pv).val();
        std::size_t am = 0;
        for (std::size_t j = 1; j < logits.numel(); ++j)
            if (logits(0, j) > logits(0, am)) am = j;
        hits += am == ds.labels[i];
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(ds.size());
}

TrainResult run_training(const TrainConfig& cfg, const FrozenBackbone& bb, const Dataset& train,
                         const Dataset& val) {
    cfg.validate();
    if (train.size() == 0 || val.size() == 0) throw ContractError("empty training or val split");

    TrainResult res;
    res.model = init_model(cfg, bb, train, &res.trace.mpa_seconds);
    const double alpha = cfg.kp_on ? cfg.alpha : 0.0;
    const double beta = cfg.stab_on ? cfg.beta : 0.0;

    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = train.size();
    const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;

    ParamSet dummy;
    std::vector<Tensor> vel;
    {
        StepGradients probe;
        probe.prompts.reserve(res.model.prompts.size());
        for (const Tensor& p : res.model.prompts) probe.prompts.emplace_back(p.dims);
        probe.head_w = Tensor(res.model.head_w.dims);
        probe.head_b = Tensor(res.model.head_b.dims);
        probe.u = Tensor(res.model.system.U.dims);
        probe.kop = Tensor(res.model.system.Kop.dims);
        probe.a = Tensor(res.model.system.A.dims);
        for (const Tensor& op : res.model.layer_ops) probe.layer_ops.emplace_back(op.dims);
        const ParamSet ps = collect(res.model, probe);
        for (const Tensor* p : ps.grads) vel.emplace_back(p->dims);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = Rng::derive(cfg.seed, kOrderStream);

    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs && !res.trace.diverged; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < n; start += cfg.batch) {
            const Dataset batch = take_batch(train, order, start, std::min(start + cfg.batch, n));
            const double lr_t =
                cfg.lr * 0.5 *
                (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));

            StepRecord rec;
            rec.step = step;
            rec.epoch = epoch;
            rec.lr = lr_t;
            bool blew_up = false;
            try {
                const StepGradients g = compute_gradients(bb, res.model, batch, alpha, beta);
                rec.loss_task = g.loss.task;
                rec.loss_kp = g.loss.kp;
                rec.loss_stab = g.loss.stab;
                rec.loss_total = g.loss.total;
                for (const Tensor& pg : g.prompts) rec.prompt_grad_norms.push_back(frobenius(pg));
                blew_up = !std::isfinite(g.loss.total) || g.loss.total > kDivergenceCap;
                if (!blew_up) {
                    const ParamSet ps = collect(res.model, g);
                    for (std::size_t i = 0; i < ps.params.size(); ++i) {
                        Tensor& v = vel[i];
                        const Tensor& grad = *ps.grads[i];
                        for (std::size_t j = 0; j < v.numel(); ++j)
                            v.data[j] = cfg.momentum * v.data[j] + grad.data[j];
                        axpy(*ps.params[i], -lr_t, v);
                    }
                }
            } catch (const NumericError&) {
                rec.loss_total = std::numeric_limits<double>::quiet_NaN();
                rec.prompt_grad_norms.assign(res.model.prompts.size(), 0.0);
                blew_up = true;
            }
            res.trace.steps.push_back(std::move(rec));
            if (blew_up) {
                res.trace.diverged = true;
                res.trace.divergence_step = step;
                break;
            }
            ++step;
        }
        if (!res.trace.diverged) res.trace.val_accuracy.push_back(accuracy(bb, res.model, val));
    }
    res.trace.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!res.trace.val_accuracy.empty()) {
        res.final_val_accuracy = res.trace.val_accuracy.back();
        res.best_epoch = epochs_to_best(res.trace.val_accuracy);
    }
    return res;
}

std::size_t epochs_to_best(const std::vector<double>& val_curve) {
    if (val_curve.empty()) throw ContractError("empty validation curve");
    const double best = *std::max_element(val_curve.begin(), val_curve.end());
    for (std::size_t i = 0; i < val_curve.size(); ++i)
        if (val_curve[i] >= best - 0.1) return i + 1;
    return val_curve.size();  // unreachable: the max itself qualifies
}

double speedup(const std::vector<double>& baseline, const std::vector<double>& treated) {
    return static_cast<double>(epochs_to_best(baseline)) /
           static_cast<double>(epochs_to_best(treated));
}

double oscillation_score(const std::vector<double>& grad_norms, std::size_t window) {
    if (window < 2) throw ConfigError("oscillation window must be at least 2");
    if (grad_norms.size() < 2 * window)
        throw ContractError("oscillation score needs at least two windows of steps");

    const std::size_t n_win = grad_norms.size() / window;
    const double w = static_cast<double>(window);
    double score = 0.0;
    for (std::size_t k = 0; k < n_win; ++k) {
        const double* y = grad_norms.data() + k * window;
        // least-squares line over x = 0..window−1
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < window; ++i) {
            const double x = static_cast<double>(i);
            sx += x;
            sy += y[i];
            sxx += x * x;
            sxy += x * y[i];
        }
        const double denom = w * sxx - sx * sx;
        const double slope = (w * sxy - sx * sy) / denom;
        const double intercept = (sy - slope * sx) / w;
        double rss = 0.0;
        for (std::size_t i = 0; i < window; ++i) {
            const double r = y[i] - (intercept + slope * static_cast<double>(i));
            rss += r * r;
        }
        score += std::sqrt(rss / w);
    }
    return score / static_cast<double>(n_win);
}

void write_trace_csv(const std::string& path, const TrainTrace& trace, std::size_t layers) {
    std::string out = "step,epoch,lr,loss_task,loss_kp,loss_stab,loss_total";
    for (std::size_t l = 1; l <= layers; ++l) out += ",grad_p" + std::to_string(l);
    out += "\n";
    for (const StepRecord& r : trace.steps) {
        out += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + fmt_double(r.lr) +
               "," + fmt_double(r.loss_task) + "," + fmt_double(r.loss_kp) + "," +
               fmt_double(r.loss_stab) + "," + fmt_double(r.loss_total);
        for (std::size_t l = 0; l < layers; ++l)
            out += "," + fmt_double(l < r.prompt_grad_norms.size() ? r.prompt_grad_norms[l] : 0.0);
        out += "\n";
    }
    io::write_text(path, out);
}

void write_val_csv(const std::string& path, const std::vector<double>& val_curve) {
    std::string out = "epoch,val_accuracy\n";
    for (std::size_t i = 0; i < val_curve.size(); ++i)
        out += std::to_string(i + 1) + "," + fmt_double(val_curve[i]) + "\n";
    io::write_text(path, out);
}

void save_model(const std::string& dir, const TunedModel& m) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < m.prompts.size(); ++i)
        io::write_tensor(dir + "/prompt_" + std::to_string(i) + ".paet", m.prompts[i]);
    io::write_tensor(dir + "/head_w.paet", m.head_w);
    io::write_tensor(dir + "/head_b.paet", m.head_b);
    save_koopman(dir + "/koopman", m.system, m.layer_ops);

    nlohmann::json j;
    j["layers"] = m.prompts.size();
    j["layerwise"] = !m.layer_ops.empty();
    io::write_text(dir + "/model.json", j.dump(2) + "\n");
}

TunedModel load_model(const std::string& dir) {
    const nlohmann::json j = nlohmann::json::parse(io::read_text(dir + "/model.json"));
    const std::size_t layers = j.at("layers").get<std::size_t>();
    if (layers == 0) throw ContractError("model checkpoint has no prompt layers");

    TunedModel m;
    for (std::size_t i = 0; i < layers; ++i)
        m.prompts.push_back(io::read_tensor(dir + "/prompt_" + std::to_string(i) + ".paet"));
    m.head_w = io::read_tensor(dir + "/head_w.paet");
    m.head_b = io::read_tensor(dir + "/head_b.paet");
    const KoopmanCheckpoint ck = load_koopman(dir + "/koopman");
    m.system = ck.sys;
    m.layer_ops = ck.layer_ops;
    return m;
}

}  // namespace pae
