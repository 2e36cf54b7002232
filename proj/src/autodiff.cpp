#include "pae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pae {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

const Tensor& Var::val() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Var Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
    if (!value.all_finite())
        throw NumericError("tape node " + std::to_string(nodes_.size()) + " is non-finite");
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_mut(int id) {
    Node& n = nodes_[id];
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.dims);
    return n.grad;
}

const Tensor& Tape::grad(int id) { return grad_mut(id); }

void Tape::check(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw ContractError("var does not belong to this tape");
}

Var Tape::leaf(Tensor value, bool needs_grad) { return push(std::move(value), needs_grad, nullptr); }

Var Tape::matmul(Var a, Var b) {
    check(a);
    check(b);
    Tensor c = pae::matmul(value(a.id), value(b.id));
    const bool ng = needs_grad(a.id) || needs_grad(b.id);
    const int ai = a.id, bi = b.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, bi, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            const Tensor& A = t.nodes_[ai].value;
            const Tensor& B = t.nodes_[bi].value;
            if (t.nodes_[ai].needs_grad) {
                Tensor& ga = t.grad_mut(ai);  // dA = g·Bᵀ
                mm_nt(g.data.data(), B.data.data(), ga.data.data(), A.rows(), B.cols(), A.cols(),
                      true);
            }
            if (t.nodes_[bi].needs_grad) {
                Tensor& gb = t.grad_mut(bi);  // dB = Aᵀ·g
                mm_tn(A.data.data(), g.data.data(), gb.data.data(), A.cols(), A.rows(), B.cols(),
                      true);
            }
        };
    return push(std::move(c), ng, std::move(back));
}

Var Tape::matmul_nt(Var a, Var b) {
    check(a);
    check(b);
    Tensor c = pae::matmul_nt(value(a.id), value(b.id));
    const bool ng = needs_grad(a.id) || needs_grad(b.id);
    const int ai = a.id, bi = b.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, bi, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;  // m×n, C = A·Bᵀ with A m×k, B n×k
            const Tensor& A = t.nodes_[ai].value;
            const Tensor& B = t.nodes_[bi].value;
            if (t.nodes_[ai].needs_grad) {
                Tensor& ga = t.grad_mut(ai);  // dA = g·B
                mm_nn(g.data.data(), B.data.data(), ga.data.data(), A.rows(), B.rows(), A.cols(),
                      true);
            }
            if (t.nodes_[bi].needs_grad) {
                Tensor& gb = t.grad_mut(bi);  // dB = gᵀ·A
                mm_tn(g.data.data(), A.data.data(), gb.data.data(), B.rows(), A.rows(), A.cols(),
                      true);
            }
        };
    return push(std::move(c), ng, std::move(back));
}

Var Tape::add(Var a, Var b) {
    check(a);
    check(b);
    Tensor c = pae::add(value(a.id), value(b.id));
    const bool ng = needs_grad(a.id) || needs_grad(b.id);
    const int ai = a.id, bi = b.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, bi, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            if (t.nodes_[ai].needs_grad) axpy(t.grad_mut(ai), 1.0, g);
            if (t.nodes_[bi].needs_grad) axpy(t.grad_mut(bi), 1.0, g);
        };
    return push(std::move(c), ng, std::move(back));
}

Var Tape::sub(Var a, Var b) {
    check(a);
    check(b);
    Tensor c = pae::sub(value(a.id), value(b.id));
    const bool ng = needs_grad(a.id) || needs_grad(b.id);
    const int ai = a.id, bi = b.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, bi, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            if (t.nodes_[ai].needs_grad) axpy(t.grad_mut(ai), 1.0, g);
            if (t.nodes_[bi].needs_grad) axpy(t.grad_mut(bi), -1.0, g);
        };
    return push(std::move(c), ng, std::move(back));
}

Var Tape::add_rowvec(Var mat, Var row) {
    check(mat);
    check(row);
    const Tensor& x = value(mat.id);
    const Tensor& r = value(row.id);
    if (x.rank() != 2 || r.rank() != 1 || r.dims[0] != x.cols())
        throw ShapeError("add_rowvec: " + x.shape_str() + " + " + r.shape_str());
    Tensor y = x;
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += r(j);
    const bool ng = needs_grad(mat.id) || needs_grad(row.id);
    const int mi = mat.id, ri = row.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [mi, ri, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            if (t.nodes_[mi].needs_grad) axpy(t.grad_mut(mi), 1.0, g);
            if (t.nodes_[ri].needs_grad) {
                Tensor& gr = t.grad_mut(ri);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) gr(j) += g(i, j);
            }
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::scale(Var a, double c) {
    check(a);
    Tensor y = pae::scale(value(a.id), c);
    const bool ng = needs_grad(a.id);
    const int ai = a.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, c, out](Tape& t) { axpy(t.grad_mut(ai), c, t.nodes_[out].grad); };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::hadamard(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& x = value(a.id);
    const Tensor& w = value(b.id);
    if (!x.same_shape(w))
        throw ShapeError("hadamard: shape mismatch " + x.shape_str() + " vs " + w.shape_str());
    Tensor y = x;
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] *= w.data[i];
    const bool ng = needs_grad(a.id) || needs_grad(b.id);
    const int ai = a.id, bi = b.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, bi, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            const Tensor& A = t.nodes_[ai].value;
            const Tensor& B = t.nodes_[bi].value;
            if (t.nodes_[ai].needs_grad) {
                Tensor& ga = t.grad_mut(ai);
                for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * B.data[i];
            }
            if (t.nodes_[bi].needs_grad) {
                Tensor& gb = t.grad_mut(bi);
                for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i] * A.data[i];
            }
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::relu(Var a) {
    check(a);
    Tensor y = value(a.id);
    for (double& v : y.data) v = std::max(0.0, v);
    const bool ng = needs_grad(a.id);
    const int ai = a.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            const Tensor& x = t.nodes_[ai].value;
            Tensor& ga = t.grad_mut(ai);
            for (std::size_t i = 0; i < g.numel(); ++i)
                if (x.data[i] > 0.0) ga.data[i] += g.data[i];
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::gelu(Var a) {
    check(a);
    Tensor y = value(a.id);
    for (double& v : y.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    const bool ng = needs_grad(a.id);
    const int ai = a.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            const Tensor& x = t.nodes_[ai].value;
            Tensor& ga = t.grad_mut(ai);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double v = x.data[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                ga.data[i] += g.data[i] * (cdf + v * pdf);
            }
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::row_softmax(Var a) {
    check(a);
    const Tensor& x = value(a.id);
    if (x.rank() != 2) throw ShapeError("row_softmax: want rank-2, got " + x.shape_str());
    Tensor y = x;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double m = y(i, 0);
        for (std::size_t j = 1; j < y.cols(); ++j) m = std::max(m, y(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) s += (y(i, j) = std::exp(y(i, j) - m));
        for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) /= s;
    }
    const bool ng = needs_grad(a.id);
    const int ai = a.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            const Tensor& y = t.nodes_[out].value;
            Tensor& ga = t.grad_mut(ai);
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j)
                    ga(i, j) += y(i, j) * (g(i, j) - dot);
            }
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::layer_norm(Var xv, Var gv, Var bv, double eps) {
    check(xv);
    check(gv);
    check(bv);
    const Tensor& x = value(xv.id);
    const Tensor& gamma = value(gv.id);
    const Tensor& beta = value(bv.id);
    if (x.rank() != 2 || gamma.rank() != 1 || beta.rank() != 1 || gamma.dims[0] != x.cols() ||
        beta.dims[0] != x.cols())
        throw ShapeError("layer_norm: x " + x.shape_str() + ", gamma " + gamma.shape_str() +
                         ", beta " + beta.shape_str());
    const std::size_t n = x.cols();
    Tensor xhat(x.dims);
    Tensor inv({x.rows()});
    Tensor y(x.dims);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += x(i, j);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = x(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double iv = 1.0 / std::sqrt(var + eps);
        inv(i) = iv;
        for (std::size_t j = 0; j < n; ++j) {
            xhat(i, j) = (x(i, j) - mu) * iv;
            y(i, j) = gamma(j) * xhat(i, j) + beta(j);
        }
    }
    const bool ng = needs_grad(xv.id) || needs_grad(gv.id) || needs_grad(bv.id);
    const int xi = xv.id, gi = gv.id, bi = bv.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [xi, gi, bi, out, xhat, inv, n](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            const Tensor& gamma = t.nodes_[gi].value;
            if (t.nodes_[bi].needs_grad) {
                Tensor& gb = t.grad_mut(bi);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < n; ++j) gb(j) += g(i, j);
            }
            if (t.nodes_[gi].needs_grad) {
                Tensor& gg = t.grad_mut(gi);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < n; ++j) gg(j) += g(i, j) * xhat(i, j);
            }
            if (t.nodes_[xi].needs_grad) {
                Tensor& gx = t.grad_mut(xi);
                const double dn = static_cast<double>(n);
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dxh = g(i, j) * gamma(j);
                        m1 += dxh;
                        m2 += dxh * xhat(i, j);
                    }
                    m1 /= dn;
                    m2 /= dn;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dxh = g(i, j) * gamma(j);
                        gx(i, j) += inv(i) * (dxh - m1 - xhat(i, j) * m2);
                    }
                }
            }
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty part list");
    std::size_t total = 0;
    const std::size_t cols = value(parts[0].id).cols();
    bool ng = false;
    for (Var p : parts) {
        check(p);
        const Tensor& v = value(p.id);
        if (v.rank() != 2 || v.cols() != cols)
            throw ShapeError("concat_rows: incompatible part " + v.shape_str());
        total += v.rows();
        ng = ng || needs_grad(p.id);
    }
    Tensor y({total, cols});
    std::size_t off = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offs;
    for (Var p : parts) {
        const Tensor& v = value(p.id);
        std::copy(v.data.begin(), v.data.end(), y.data.begin() + off * cols);
        ids.push_back(p.id);
        offs.push_back(off);
        off += v.rows();
    }
    const int out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ids, offs, cols, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            for (std::size_t p = 0; p < ids.size(); ++p) {
                if (!t.nodes_[ids[p]].needs_grad) continue;
                Tensor& gp = t.grad_mut(ids[p]);
                const std::size_t base = offs[p] * cols;
                for (std::size_t i = 0; i < gp.numel(); ++i) gp.data[i] += g.data[base + i];
            }
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty part list");
    const std::size_t rows = value(parts[0].id).rows();
    std::size_t total = 0;
    bool ng = false;
    for (Var p : parts) {
        check(p);
        const Tensor& v = value(p.id);
        if (v.rank() != 2 || v.rows() != rows)
            throw ShapeError("concat_cols: incompatible part " + v.shape_str());
        total += v.cols();
        ng = ng || needs_grad(p.id);
    }
    Tensor y({rows, total});
    std::vector<int> ids;
    std::vector<std::size_t> offs;
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& v = value(p.id);
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(v.data.begin() + i * v.cols(), v.data.begin() + (i + 1) * v.cols(),
                      y.data.begin() + i * total + off);
        ids.push_back(p.id);
        offs.push_back(off);
        off += v.cols();
    }
    const int out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ids, offs, rows, total, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            for (std::size_t p = 0; p < ids.size(); ++p) {
                if (!t.nodes_[ids[p]].needs_grad) continue;
                Tensor& gp = t.grad_mut(ids[p]);
                const std::size_t pc = gp.cols();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < pc; ++j)
                        gp(i, j) += g.data[i * total + offs[p] + j];
            }
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
    check(a);
    const Tensor& x = value(a.id);
    if (x.rank() != 2 || r0 >= r1 || r1 > x.rows())
        throw ShapeError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") of " + x.shape_str());
    const std::size_t cols = x.cols();
    Tensor y({r1 - r0, cols});
    std::copy(x.data.begin() + r0 * cols, x.data.begin() + r1 * cols, y.data.begin());
    const bool ng = needs_grad(a.id);
    const int ai = a.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, r0, cols, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            Tensor& ga = t.grad_mut(ai);
            const std::size_t base = r0 * cols;
            for (std::size_t i = 0; i < g.numel(); ++i) ga.data[base + i] += g.data[i];
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
    check(a);
    const Tensor& x = value(a.id);
    if (x.rank() != 2 || c0 >= c1 || c1 > x.cols())
        throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") of " + x.shape_str());
    Tensor y({x.rows(), c1 - c0});
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = c0; j < c1; ++j) y(i, j - c0) = x(i, j);
    const bool ng = needs_grad(a.id);
    const int ai = a.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, c0, out](Tape& t) {
            const Tensor& g = t.nodes_[out].grad;
            Tensor& ga = t.grad_mut(ai);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) ga(i, c0 + j) += g(i, j);
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::frobenius_sq(Var a) {
    check(a);
    Tensor y({1});
    y(0) = pae::frobenius_sq(value(a.id));
    const bool ng = needs_grad(a.id);
    const int ai = a.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, out](Tape& t) {
            const double g0 = t.nodes_[out].grad(0);
            axpy(t.grad_mut(ai), 2.0 * g0, t.nodes_[ai].value);
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::sum_all(Var a) {
    check(a);
    Tensor y({1});
    for (double v : value(a.id).data) y(0) += v;
    const bool ng = needs_grad(a.id);
    const int ai = a.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [ai, out](Tape& t) {
            const double g0 = t.nodes_[out].grad(0);
            Tensor& ga = t.grad_mut(ai);
            for (double& v : ga.data) v += g0;
        };
    return push(std::move(y), ng, std::move(back));
}

Var Tape::cross_entropy_logits(Var logits, const std::vector<std::size_t>& labels) {
    check(logits);
    const Tensor& x = value(logits.id);
    if (x.rank() != 2) throw ShapeError("cross_entropy: want rank-2 logits, got " + x.shape_str());
    const std::size_t B = x.rows(), C = x.cols();
    if (labels.size() != B)
        throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(B) + " rows");
    Tensor probs(x.dims);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        if (labels[i] >= C) throw ContractError("cross_entropy: label out of range");
        double m = x(i, 0);
        for (std::size_t j = 1; j < C; ++j) m = std::max(m, x(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < C; ++j) s += (probs(i, j) = std::exp(x(i, j) - m));
        for (std::size_t j = 0; j < C; ++j) probs(i, j) /= s;
        loss += m + std::log(s) - x(i, labels[i]);
    }
    Tensor y({1});
    y(0) = loss / static_cast<double>(B);
    const bool ng = needs_grad(logits.id);
    const int li = logits.id, out = static_cast<int>(nodes_.size());
    std::function<void(Tape&)> back;
    if (ng)
        back = [li, out, probs, labels](Tape& t) {
            const double g0 = t.nodes_[out].grad(0);
            Tensor& gl = t.grad_mut(li);
            const double invB = 1.0 / static_cast<double>(probs.rows());
            for (std::size_t i = 0; i < probs.rows(); ++i)
                for (std::size_t j = 0; j < probs.cols(); ++j)
                    gl(i, j) += g0 * invB * (probs(i, j) - (j == labels[i] ? 1.0 : 0.0));
        };
    return push(std::move(y), ng, std::move(back));
}

void Tape::backward(Var root) {
    check(root);
    if (!value(root.id).is_scalar())
        throw ContractError("backward: root must be scalar, got shape " +
                            value(root.id).shape_str());
    for (Node& n : nodes_)
        if (n.grad.numel()) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    grad_mut(root.id)(0) = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.back && n.needs_grad && n.grad.numel()) n.back(*this);
    }
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& theta,
                        double h0) {
    if (h0 <= 0.0) throw ContractError("finite_diff_grad: step must be positive");
    Tensor g(theta.dims);
    Tensor t = theta;
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double orig = t.data[i];
        const double h = h0 * (1.0 + std::abs(orig));
        t.data[i] = orig + h;
        const double fp = f(t);
        t.data[i] = orig - h;
        const double fm = f(t);
        t.data[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                               std::to_string(i));
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double max_rel_err(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("max_rel_err: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    // Near-zero entries are measured against 1e-3 of the tensor scale so
    // finite-difference round-off on tiny coordinates does not dominate.
    const double floor = 1e-3 * std::max({1e-30, max_abs(a), max_abs(b)});
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = std::abs(a.data[i] - b.data[i]);
        const double den = std::max({floor, std::abs(a.data[i]), std::abs(b.data[i])});
        worst = std::max(worst, d / den);
    }
    return worst;
}

}  // namespace pae
