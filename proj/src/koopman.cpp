#include "pae/koopman.hpp"

#include <charconv>
#include <filesystem>

#include "pae/config.hpp"
#include "pae/error.hpp"
#include "pae/io.hpp"
#include "pae/rng.hpp"

namespace pae {

namespace {

// shortest round-trip decimal form
std::string fmt_double(double x) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

void check_system_shapes(const std::vector<Tensor>& prompts, const Tensor& u) {
    if (u.rank() != 2) throw ShapeError("koopman: U must be rank 2, got " + u.shape_str());
    for (const Tensor& p : prompts)
        if (p.rank() != 2 || p.cols() != u.rows())
            throw ShapeError("koopman: prompt " + p.shape_str() + " does not match U " +
                             u.shape_str());
}

}  // namespace

KoopmanSystem KoopmanSystem::init(std::size_t d, std::size_t k_dim, std::uint64_t seed,
                                  double eps) {
    if (d == 0 || k_dim == 0) throw ConfigError("koopman: d and k_dim must be positive");
    if (eps <= 0.0) throw ConfigError("koopman: eps must be positive");
    KoopmanSystem sys;
    Rng r = Rng::derive(seed, 0);
    sys.U = kaiming_uniform(d, k_dim, r);
    sys.Kop = Tensor::identity(k_dim);
    sys.A = Tensor::identity(k_dim);
    sys.eps = eps;
    return sys;
}

Tensor KoopmanSystem::q() const { return spd_materialize(A, eps); }

std::vector<Tensor> layerwise_operators(std::size_t k_dim, std::size_t layers) {
    if (layers < 2) throw ConfigError("koopman: layer-wise operators need at least 2 layers");
    std::vector<Tensor> ops;
    for (std::size_t i = 0; i + 1 < layers; ++i) ops.push_back(Tensor::identity(k_dim));
    return ops;
}

Tensor spd_materialize(const Tensor& a, double eps) {
    if (eps <= 0.0) throw ConfigError("koopman: eps must be positive");
    if (a.rank() != 2 || a.rows() != a.cols())
        throw ShapeError("koopman: SPD factor must be square, got " + a.shape_str());
    Tensor q = matmul_nt(a, a);
    for (std::size_t i = 0; i < q.rows(); ++i) q(i, i) += eps;
    return q;
}

Tensor lift(const Tensor& p, const Tensor& u) { return matmul(p, u); }

Tensor evolve(const Tensor& z, const Tensor& kop) { return matmul(z, kop); }

LiftedTrajectory lift_trajectory(const std::vector<Tensor>& prompts, const Tensor& u,
                                 const Tensor& kop) {
    check_system_shapes(prompts, u);
    LiftedTrajectory traj;
    for (const Tensor& p : prompts) traj.z.push_back(lift(p, u));
    for (std::size_t i = 0; i + 1 < traj.z.size(); ++i) traj.pred.push_back(evolve(traj.z[i], kop));
    return traj;
}

double lyapunov_v(const Tensor& z, const Tensor& q) { return dot_all(matmul(z, q), z); }

double loss_kp(const std::vector<Tensor>& prompts, const Tensor& u, const Tensor& kop) {
    if (prompts.size() < 2) throw ConfigError("loss_kp: needs at least 2 prompt layers");
    check_system_shapes(prompts, u);
    double total = 0.0;
    Tensor z_next = lift(prompts[0], u);
    for (std::size_t i = 0; i + 1 < prompts.size(); ++i) {
        Tensor z_i = std::move(z_next);
        z_next = lift(prompts[i + 1], u);
        total += frobenius_sq(sub(z_next, evolve(z_i, kop)));
    }
    return total;
}

double loss_stab(const LiftedTrajectory& traj, const Tensor& q) {
    double total = 0.0;
    double v_prev = traj.z.empty() ? 0.0 : lyapunov_v(traj.z[0], q);
    for (std::size_t i = 1; i < traj.z.size(); ++i) {
        const double v = lyapunov_v(traj.z[i], q);
        total += std::max(0.0, v - v_prev);
        v_prev = v;
    }
    return total;
}

std::vector<Tensor> grad_kp_analytic(const std::vector<Tensor>& prompts, const Tensor& u,
                                     const Tensor& kop) {
    if (prompts.size() < 2) throw ConfigError("loss_kp: needs at least 2 prompt layers");
    check_system_shapes(prompts, u);
    const std::size_t levels = prompts.size();
    const Tensor uk = matmul(u, kop);
    std::vector<Tensor> z;
    for (const Tensor& p : prompts) z.push_back(lift(p, u));

    std::vector<Tensor> grads;
    for (std::size_t i = 0; i < levels; ++i) {
        Tensor g(prompts[i].dims);
        if (i > 0) axpy(g, 2.0, matmul_nt(sub(z[i], evolve(z[i - 1], kop)), u));
        if (i + 1 < levels) axpy(g, 2.0, matmul_nt(sub(evolve(z[i], kop), z[i + 1]), uk));
        grads.push_back(std::move(g));
    }
    return grads;
}

std::vector<Tensor> grad_stab_analytic(const LiftedTrajectory& traj, const Tensor& q,
                                       const Tensor& u) {
    const std::size_t levels = traj.z.size();
    std::vector<double> v;
    for (const Tensor& z : traj.z) v.push_back(lyapunov_v(z, q));
    // eta[i] = 1 when V increases over transition i; outside 0..L−2 treat as 0
    auto eta = [&](std::size_t i) { return i + 1 < levels && v[i + 1] - v[i] > 0.0 ? 1.0 : 0.0; };

    std::vector<Tensor> grads;
    for (std::size_t i = 0; i < levels; ++i) {
        const double c = (i > 0 ? eta(i - 1) : 0.0) - eta(i);
        Tensor g({traj.z[i].rows(), u.rows()});
        if (c != 0.0) g = scale(matmul_nt(matmul(traj.z[i], q), u), 2.0 * c);
        grads.push_back(std::move(g));
    }
    return grads;
}

Var loss_kp_tape(Tape& t, const std::vector<Var>& prompts, Var u, const std::vector<Var>& ops) {
    const std::size_t levels = prompts.size();
    if (levels < 2) throw ConfigError("loss_kp: needs at least 2 prompt layers");
    if (ops.size() != 1 && ops.size() != levels - 1)
        throw ConfigError("loss_kp: need 1 shared or L-1 layer-wise operators, got " +
                          std::to_string(ops.size()));
    std::vector<Var> z;
    for (const Var& p : prompts) z.push_back(t.matmul(p, u));
    Var total;
    for (std::size_t i = 0; i + 1 < levels; ++i) {
        const Var& op = ops.size() == 1 ? ops[0] : ops[i];
        Var term = t.frobenius_sq(t.sub(z[i + 1], t.matmul(z[i], op)));
        total = i == 0 ? term : t.add(total, term);
    }
    return total;
}

Var loss_stab_tape(Tape& t, const std::vector<Var>& prompts, Var u, Var q) {
    const std::size_t levels = prompts.size();
    if (levels < 2) throw ConfigError("loss_stab: needs at least 2 prompt layers");
    std::vector<Var> v;
    for (const Var& p : prompts) {
        Var z = t.matmul(p, u);
        v.push_back(t.sum_all(t.hadamard(t.matmul(z, q), z)));
    }
    Var total;
    for (std::size_t i = 0; i + 1 < levels; ++i) {
        Var hinge = t.relu(t.sub(v[i + 1], v[i]));
        total = i == 0 ? hinge : t.add(total, hinge);
    }
    return total;
}

Var spd_materialize_tape(Tape& t, Var a, double eps) {
    if (eps <= 0.0) throw ConfigError("koopman: eps must be positive");
    const Tensor& av = a.val();
    if (av.rank() != 2 || av.rows() != av.cols())
        throw ShapeError("koopman: SPD factor must be square, got " + av.shape_str());
    return t.add(t.matmul_nt(a, a), t.constant(scale(Tensor::identity(av.rows()), eps)));
}

void save_koopman(const std::string& dir, const KoopmanSystem& sys,
                  const std::vector<Tensor>& layer_ops) {
    std::filesystem::create_directories(dir);
    io::write_tensor(dir + "/u.paet", sys.U);
    io::write_tensor(dir + "/kop.paet", sys.Kop);
    io::write_tensor(dir + "/a.paet", sys.A);
    for (std::size_t i = 0; i < layer_ops.size(); ++i)
        io::write_tensor(dir + "/kop_" + std::to_string(i) + ".paet", layer_ops[i]);
    std::string manifest = "k_dim=" + std::to_string(sys.Kop.rows()) + "\n";
    manifest += "eps=" + fmt_double(sys.eps) + "\n";
    manifest += "layer_ops=" + std::to_string(layer_ops.size()) + "\n";
    io::write_text(dir + "/manifest.txt", manifest);
}

KoopmanCheckpoint load_koopman(const std::string& dir) {
    Config m = Config::parse_file(dir + "/manifest.txt");
    const auto k_dim = static_cast<std::size_t>(m.get_int("k_dim"));
    KoopmanCheckpoint ck;
    ck.sys.U = io::read_tensor(dir + "/u.paet");
    ck.sys.Kop = io::read_tensor(dir + "/kop.paet");
    ck.sys.A = io::read_tensor(dir + "/a.paet");
    ck.sys.eps = m.get_double("eps");
    const auto n_ops = static_cast<std::size_t>(m.get_int("layer_ops", 0));
    for (std::size_t i = 0; i < n_ops; ++i)
        ck.layer_ops.push_back(io::read_tensor(dir + "/kop_" + std::to_string(i) + ".paet"));
    if (ck.sys.U.rank() != 2 || ck.sys.U.cols() != k_dim)
        throw ConfigError("koopman checkpoint: U " + ck.sys.U.shape_str() + " vs k_dim=" +
                          std::to_string(k_dim));
    for (const Tensor* op : {&ck.sys.Kop, &ck.sys.A})
        if (op->rank() != 2 || op->rows() != k_dim || op->cols() != k_dim)
            throw ConfigError("koopman checkpoint: operator " + op->shape_str() + " vs k_dim=" +
                              std::to_string(k_dim));
    for (const Tensor& op : ck.layer_ops)
        if (op.rank() != 2 || op.rows() != k_dim || op.cols() != k_dim)
            throw ConfigError("koopman checkpoint: layer op " + op.shape_str() + " vs k_dim=" +
                              std::to_string(k_dim));
    if (ck.sys.eps <= 0.0) throw ConfigError("koopman checkpoint: eps must be positive");
    return ck;
}

}  // namespace pae
