#include "pae/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace pae {

Tensor::Tensor(std::vector<std::size_t> d) : dims(std::move(d)) {
    if (dims.empty() || dims.size() > 3)
        throw ShapeError("tensor rank must be 1..3, got " + std::to_string(dims.size()));
    std::size_t n = 1;
    for (std::size_t e : dims) {
        if (e == 0) throw ShapeError("zero extent in shape " + pae::shape_str(dims));
        n *= e;
    }
    data.assign(n, 0.0);
}

Tensor Tensor::full(std::initializer_list<std::size_t> d, double v) {
    Tensor t(d);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor Tensor::uniform(std::initializer_list<std::size_t> d, Rng& rng, double lo, double hi) {
    Tensor t(d);
    for (double& x : t.data) x = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::gaussian(std::initializer_list<std::size_t> d, Rng& rng, double stddev) {
    Tensor t(d);
    for (double& x : t.data) x = stddev * rng.gaussian();
    return t;
}

Tensor kaiming_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t({fan_in, fan_out});
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

bool Tensor::all_finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const { return pae::shape_str(dims); }

std::string shape_str(const std::vector<std::size_t>& dims) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << ')';
    return os.str();
}

void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = ai[l];
            const double* bl = b + l * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += ail * bl[j];
        }
    }
}

void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool acc) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += ai[l] * bj[l];
            ci[j] = acc ? ci[j] + s : s;
        }
    }
}

void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool acc) {
    if (!acc) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t l = 0; l < k; ++l) {
        const double* al = a + l * m;
        const double* bl = b + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double ali = al[i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += ali * bl[j];
        }
    }
}

static void require_matrix(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw ShapeError(std::string(who) + ": want rank-2, got " + t.shape_str());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dims disagree " + a.shape_str() + " · " + b.shape_str());
    Tensor c({a.rows(), b.cols()});
    mm_nn(a.data.data(), b.data.data(), c.data.data(), a.rows(), a.cols(), b.cols(), false);
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: inner dims disagree " + a.shape_str() + " · " +
                         b.shape_str() + "ᵀ");
    Tensor c({a.rows(), b.rows()});
    mm_nt(a.data.data(), b.data.data(), c.data.data(), a.rows(), a.cols(), b.rows(), false);
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: inner dims disagree " + a.shape_str() + "ᵀ · " +
                         b.shape_str());
    Tensor c({a.cols(), b.cols()});
    mm_tn(a.data.data(), b.data.data(), c.data.data(), a.cols(), a.rows(), b.cols(), false);
    return c;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    Tensor t({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

static void require_same(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) c.data[i] += b.data[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.numel(); ++i) c.data[i] -= b.data[i];
    return c;
}

Tensor scale(const Tensor& a, double c) {
    Tensor t = a;
    for (double& x : t.data) x *= c;
    return t;
}

void axpy(Tensor& a, double c, const Tensor& b) {
    require_same(a, b, "axpy");
    for (std::size_t i = 0; i < a.numel(); ++i) a.data[i] += c * b.data[i];
}

double dot_all(const Tensor& a, const Tensor& b) {
    require_same(a, b, "dot_all");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double frobenius_sq(const Tensor& a) { return dot_all(a, a); }

double trace(const Tensor& a) {
    require_matrix(a, "trace");
    if (a.rows() != a.cols()) throw ShapeError("trace: want square, got " + a.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
    return s;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double x : a.data) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace pae
