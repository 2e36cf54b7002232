#include "pae/eig.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pae {

namespace {

constexpr double kDeflateTol = 1e-12;

void require_square(const Tensor& m, const char* who) {
    if (m.rank() != 2 || m.rows() != m.cols())
        throw ShapeError(std::string(who) + ": want square matrix, got " + m.shape_str());
}

// Householder similarity reduction to upper Hessenberg form, in place.
void hessenberg_inplace(Tensor& a) {
    const int n = static_cast<int>(a.rows());
    std::vector<double> v(n), tmp(n);
    for (int j = 0; j + 2 < n; ++j) {
        double norm = 0.0;
        for (int i = j + 1; i < n; ++i) norm += a(i, j) * a(i, j);
        norm = std::sqrt(norm);
        if (norm <= 1e-300) continue;
        const double alpha = a(j + 1, j) >= 0.0 ? -norm : norm;
        double vnorm = 0.0;
        for (int i = j + 1; i < n; ++i) {
            v[i] = a(i, j) - (i == j + 1 ? alpha : 0.0);
            vnorm += v[i] * v[i];
        }
        if (vnorm <= 1e-300) continue;
        vnorm = std::sqrt(vnorm);
        for (int i = j + 1; i < n; ++i) v[i] /= vnorm;
        // left: rows j+1.., cols j..
        for (int c = j; c < n; ++c) {
            double s = 0.0;
            for (int i = j + 1; i < n; ++i) s += v[i] * a(i, c);
            s *= 2.0;
            for (int i = j + 1; i < n; ++i) a(i, c) -= s * v[i];
        }
        // right: all rows, cols j+1..
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int c = j + 1; c < n; ++c) s += a(r, c) * v[c];
            s *= 2.0;
            for (int c = j + 1; c < n; ++c) a(r, c) -= s * v[c];
        }
        a(j + 1, j) = alpha;
        for (int i = j + 2; i < n; ++i) a(i, j) = 0.0;
    }
}

}  // namespace

std::vector<std::complex<double>> eigenvalues(const Tensor& m) {
    require_square(m, "eigenvalues");
    const int n = static_cast<int>(m.rows());
    if (n > 256) throw ConfigError("eigenvalues: dimension " + std::to_string(n) + " > 256");

    Tensor a = m;
    hessenberg_inplace(a);

    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));
    if (anorm == 0.0) anorm = 1.0;

    std::vector<std::complex<double>> eig(n);
    const int max_sweeps = 100 * n;
    int sweeps = 0;
    int nn = n - 1;
    double t = 0.0;
    while (nn >= 0) {
        int its = 0;
        for (;;) {
            int l = 0;
            for (l = nn; l >= 1; --l) {
                double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(a(l, l - 1)) <= kDeflateTol * s) {
                    a(l, l - 1) = 0.0;
                    break;
                }
            }
            double x = a(nn, nn);
            if (l == nn) {  // isolated 1x1 block
                eig[nn--] = {x + t, 0.0};
                break;
            }
            double y = a(nn - 1, nn - 1);
            double w = a(nn, nn - 1) * a(nn - 1, nn);
            if (l == nn - 1) {  // isolated 2x2 block
                double p = 0.5 * (y - x);
                double q = p * p + w;
                double z = std::sqrt(std::abs(q));
                x += t;
                if (q >= 0.0) {
                    z = p + std::copysign(z, p);
                    eig[nn - 1] = {x + z, 0.0};
                    eig[nn] = {z != 0.0 ? x - w / z : x + z, 0.0};
                } else {
                    eig[nn - 1] = {x + p, z};
                    eig[nn] = {x + p, -z};
                }
                nn -= 2;
                break;
            }
            if (++sweeps > max_sweeps) {
                double resid = 0.0;
                for (int i = l; i < nn; ++i) resid = std::max(resid, std::abs(a(i + 1, i)));
                throw NumericError("eigenvalues: no convergence after " +
                                   std::to_string(max_sweeps) +
                                   " QR sweeps, max active subdiagonal " + std::to_string(resid));
            }
            double p = 0.0, q = 0.0, r = 0.0, z = 0.0, s = 0.0;
            if (its == 10 || its == 20) {  // exceptional shift to break cycling
                t += x;
                for (int i = 0; i <= nn; ++i) a(i, i) -= x;
                s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
                y = x = 0.75 * s;
                w = -0.4375 * s * s;
            }
            ++its;
            int mm = 0;
            for (mm = nn - 2; mm >= l; --mm) {  // two consecutive small subdiagonals
                z = a(mm, mm);
                r = x - z;
                s = y - z;
                p = (r * s - w) / a(mm + 1, mm) + a(mm, mm + 1);
                q = a(mm + 1, mm + 1) - z - r - s;
                r = a(mm + 2, mm + 1);
                s = std::abs(p) + std::abs(q) + std::abs(r);
                p /= s;
                q /= s;
                r /= s;
                if (mm == l) break;
                const double u = std::abs(a(mm, mm - 1)) * (std::abs(q) + std::abs(r));
                const double v = std::abs(p) * (std::abs(a(mm - 1, mm - 1)) + std::abs(z) +
                                                std::abs(a(mm + 1, mm + 1)));
                if (u <= kDeflateTol * v) break;
            }
            for (int i = mm + 2; i <= nn; ++i) {
                a(i, i - 2) = 0.0;
                if (i != mm + 2) a(i, i - 3) = 0.0;
            }
            for (int k = mm; k <= nn - 1; ++k) {  // double-shift bulge chase
                if (k != mm) {
                    p = a(k, k - 1);
                    q = a(k + 1, k - 1);
                    r = k != nn - 1 ? a(k + 2, k - 1) : 0.0;
                    x = std::abs(p) + std::abs(q) + std::abs(r);
                    if (x != 0.0) {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                s = std::copysign(std::sqrt(p * p + q * q + r * r), p);
                if (s == 0.0) continue;
                if (k == mm) {
                    if (l != mm) a(k, k - 1) = -a(k, k - 1);
                } else {
                    a(k, k - 1) = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;
                for (int j = k; j <= nn; ++j) {  // row transform
                    p = a(k, j) + q * a(k + 1, j);
                    if (k != nn - 1) {
                        p += r * a(k + 2, j);
                        a(k + 2, j) -= p * z;
                    }
                    a(k + 1, j) -= p * y;
                    a(k, j) -= p * x;
                }
                const int imax = nn < k + 3 ? nn : k + 3;
                for (int i = l; i <= imax; ++i) {  // column transform
                    p = x * a(i, k) + y * a(i, k + 1);
                    if (k != nn - 1) {
                        p += z * a(i, k + 2);
                        a(i, k + 2) -= p * r;
                    }
                    a(i, k + 1) -= p * q;
                    a(i, k) -= p;
                }
            }
        }
    }
    return eig;
}

namespace {

// LU with partial pivoting; returns false on exact singularity.
bool lu_factor(Tensor& a, std::vector<int>& piv, double& sign) {
    const int n = static_cast<int>(a.rows());
    piv.resize(n);
    sign = 1.0;
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
        piv[k] = p;
        if (p != k) {
            for (int j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
            sign = -sign;
        }
        if (a(k, k) == 0.0) return false;
        for (int i = k + 1; i < n; ++i) {
            a(i, k) /= a(k, k);
            const double f = a(i, k);
            for (int j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
        }
    }
    return true;
}

}  // namespace

double det(const Tensor& m) {
    require_square(m, "det");
    Tensor a = m;
    std::vector<int> piv;
    double sign;
    if (!lu_factor(a, piv, sign)) return 0.0;
    double d = sign;
    for (std::size_t i = 0; i < a.rows(); ++i) d *= a(i, i);
    return d;
}

Tensor inverse(const Tensor& m) {
    require_square(m, "inverse");
    const int n = static_cast<int>(m.rows());
    Tensor a = m;
    std::vector<int> piv;
    double sign;
    if (!lu_factor(a, piv, sign)) throw NumericError("inverse: singular matrix");
    double dmin = 1e300, dmax = 0.0;
    for (int i = 0; i < n; ++i) {
        dmin = std::min(dmin, std::abs(a(i, i)));
        dmax = std::max(dmax, std::abs(a(i, i)));
    }
    if (dmin <= 1e-14 * std::max(1.0, dmax))
        throw NumericError("inverse: matrix numerically singular (pivot ratio " +
                           std::to_string(dmin / std::max(1.0, dmax)) + ")");
    Tensor inv({static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
    std::vector<double> col(n);
    for (int c = 0; c < n; ++c) {
        std::fill(col.begin(), col.end(), 0.0);
        col[c] = 1.0;
        for (int k = 0; k < n; ++k) std::swap(col[k], col[piv[k]]);
        for (int i = 0; i < n; ++i)  // forward solve (unit lower)
            for (int j = 0; j < i; ++j) col[i] -= a(i, j) * col[j];
        for (int i = n - 1; i >= 0; --i) {  // back solve
            for (int j = i + 1; j < n; ++j) col[i] -= a(i, j) * col[j];
            col[i] /= a(i, i);
        }
        for (int i = 0; i < n; ++i) inv(i, c) = col[i];
    }
    return inv;
}

}  // namespace pae
