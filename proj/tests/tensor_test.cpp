#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>

#include "pae/autodiff.hpp"
#include "pae/rng.hpp"
#include "pae/tensor.hpp"

using pae::Rng;
using pae::Tape;
using pae::Tensor;
using pae::Var;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor c({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j)
            for (std::size_t l = 0; l < a.cols(); ++l) c(i, j) += a(i, l) * b(l, j);
    return c;
}

// Checks tape gradient of a scalar-valued graph against central differences.
void check_grad(const std::function<Var(Tape&, Var)>& graph, const Tensor& theta, double tol) {
    Tape t;
    Var x = t.leaf(theta, true);
    Var loss = graph(t, x);
    REQUIRE(loss.val().is_scalar());
    t.backward(loss);
    Tensor tape_grad = loss.tape->grad(x.id);
    Tensor fd = pae::finite_diff_grad(
        [&](const Tensor& th) {
            Tape t2;
            Var x2 = t2.leaf(th, false);
            return graph(t2, x2).val()(0);
        },
        theta);
    CHECK(pae::max_rel_err(tape_grad, fd) <= tol);
}

}  // namespace

TEST_CASE("matmul identity and small example") {
    Rng rng(1);
    Tensor b = Tensor::gaussian({2, 3}, rng);
    Tensor c = pae::matmul(Tensor::identity(2), b);
    CHECK(pae::max_abs(pae::sub(c, b)) == 0.0);

    Tensor p({2, 2});
    p.data = {1, 2, 3, 4};
    Tensor q({2, 2});
    q.data = {5, 6, 7, 8};
    Tensor r = pae::matmul(p, q);
    CHECK(r(0, 0) == 19.0);
    CHECK(r(0, 1) == 22.0);
    CHECK(r(1, 0) == 43.0);
    CHECK(r(1, 1) == 50.0);
}

TEST_CASE("matmul matches naive oracle on random 8x8") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        Tensor a = Tensor::gaussian({8, 8}, rng);
        Tensor b = Tensor::gaussian({8, 8}, rng);
        CHECK(pae::max_abs(pae::sub(pae::matmul(a, b), naive_matmul(a, b))) <= 1e-12);
    }
}

TEST_CASE("matmul shape error names both shapes") {
    Tensor a({2, 3});
    Tensor b({4, 2});
    try {
        pae::matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const pae::ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2,3)") != std::string::npos);
        CHECK(msg.find("(4,2)") != std::string::npos);
    }
}

TEST_CASE("matmul associativity on conditioned triples") {
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
        Rng rng(seed);
        Tensor a = Tensor::uniform({6, 5}, rng, -1, 1);
        Tensor b = Tensor::uniform({5, 7}, rng, -1, 1);
        Tensor c = Tensor::uniform({7, 4}, rng, -1, 1);
        Tensor lhs = pae::matmul(pae::matmul(a, b), c);
        Tensor rhs = pae::matmul(a, pae::matmul(b, c));
        CHECK(pae::max_abs(pae::sub(lhs, rhs)) / std::max(1.0, pae::max_abs(lhs)) <= 1e-10);
    }
}

TEST_CASE("matmul_nt and matmul_tn against transpose composition") {
    Rng rng(3);
    Tensor a = Tensor::gaussian({4, 6}, rng);
    Tensor b = Tensor::gaussian({5, 6}, rng);
    CHECK(pae::max_abs(pae::sub(pae::matmul_nt(a, b), pae::matmul(a, pae::transpose(b)))) <=
          1e-14);
    Tensor c = Tensor::gaussian({6, 4}, rng);
    Tensor d = Tensor::gaussian({6, 5}, rng);
    CHECK(pae::max_abs(pae::sub(pae::matmul_tn(c, d), pae::matmul(pae::transpose(c), d))) <=
          1e-14);
}

TEST_CASE("frobenius_norm_sq examples") {
    CHECK(pae::frobenius_sq(Tensor({3, 3})) == 0.0);
    CHECK(pae::frobenius_sq(Tensor::identity(3)) == 3.0);
    Rng rng(4);
    Tensor a = Tensor::gaussian({4, 5}, rng);
    double manual = 0.0;
    for (double v : a.data) manual += v * v;
    CHECK(pae::frobenius_sq(a) == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("backward: x squared at 3 gives 6") {
    Tape t;
    Tensor x0({1});
    x0(0) = 3.0;
    Var x = t.leaf(x0, true);
    Var y = t.hadamard(x, x);
    Var s = t.sum_all(y);
    t.backward(s);
    CHECK(t.grad(x.id)(0) == doctest::Approx(6.0));
}

TEST_CASE("backward: frobenius_sq gradient is 2A") {
    Rng rng(5);
    Tensor a0 = Tensor::gaussian({3, 4}, rng);
    Tape t;
    Var a = t.leaf(a0, true);
    t.backward(t.frobenius_sq(a));
    CHECK(pae::max_abs(pae::sub(t.grad(a.id), pae::scale(a0, 2.0))) <= 1e-14);
}

TEST_CASE("backward rejects non-scalar root") {
    Tape t;
    Var a = t.leaf(Tensor({2, 2}), true);
    CHECK_THROWS_AS(t.backward(a), pae::ContractError);
}

TEST_CASE("unreached leaf keeps zero gradient") {
    Tape t;
    Var a = t.leaf(Tensor::full({2, 2}, 1.0), true);
    Var b = t.leaf(Tensor::full({2, 2}, 2.0), true);
    t.backward(t.frobenius_sq(a));
    CHECK(pae::max_abs(t.grad(b.id)) == 0.0);
}

TEST_CASE("finite_diff_grad basics") {
    Tensor x({1});
    x(0) = 2.0;
    Tensor g = pae::finite_diff_grad([](const Tensor& v) { return v(0) * v(0); }, x, 1e-5);
    CHECK(std::abs(g(0) - 4.0) <= 1e-8);

    Rng rng(6);
    Tensor a = Tensor::gaussian({4, 4}, rng);
    Tensor tg = pae::finite_diff_grad([](const Tensor& v) { return pae::trace(v); }, a);
    CHECK(pae::max_abs(pae::sub(tg, Tensor::identity(4))) <= 1e-9);

    Tensor sg = pae::finite_diff_grad(
        [](const Tensor& v) {
            double s = 0.0;
            for (double x : v.data) s += x;
            return s;
        },
        a);
    CHECK(pae::max_abs(pae::sub(sg, Tensor::full({4, 4}, 1.0))) <= 1e-9);
}

TEST_CASE("op gradients match finite differences") {
    Rng rng(7);
    const double tol = 1e-6;

    SUBCASE("matmul wrt left and right") {
        Tensor w = Tensor::gaussian({3, 5}, rng);
        Tensor a0 = Tensor::gaussian({4, 3}, rng);
        check_grad(
            [&](Tape& t, Var x) { return t.frobenius_sq(t.matmul(x, t.constant(w))); }, a0, tol);
        Tensor b0 = Tensor::gaussian({3, 5}, rng);
        Tensor u = Tensor::gaussian({4, 3}, rng);
        check_grad(
            [&](Tape& t, Var x) { return t.frobenius_sq(t.matmul(t.constant(u), x)); }, b0, tol);
    }

    SUBCASE("matmul_nt") {
        Tensor b = Tensor::gaussian({5, 3}, rng);
        Tensor a0 = Tensor::gaussian({4, 3}, rng);
        check_grad(
            [&](Tape& t, Var x) { return t.frobenius_sq(t.matmul_nt(x, t.constant(b))); }, a0,
            tol);
        check_grad(
            [&](Tape& t, Var x) { return t.frobenius_sq(t.matmul_nt(t.constant(a0), x)); }, b,
            tol);
    }

    SUBCASE("add sub scale hadamard") {
        Tensor b = Tensor::gaussian({3, 3}, rng);
        Tensor a0 = Tensor::gaussian({3, 3}, rng);
        check_grad(
            [&](Tape& t, Var x) {
                Var c = t.constant(b);
                Var y = t.scale(t.sub(t.add(x, c), t.hadamard(x, c)), 1.7);
                return t.frobenius_sq(y);
            },
            a0, tol);
    }

    SUBCASE("add_rowvec wrt matrix and row") {
        Tensor r = Tensor::gaussian({4}, rng);
        Tensor m0 = Tensor::gaussian({3, 4}, rng);
        check_grad(
            [&](Tape& t, Var x) { return t.frobenius_sq(t.add_rowvec(x, t.constant(r))); }, m0,
            tol);
        check_grad(
            [&](Tape& t, Var x) { return t.frobenius_sq(t.add_rowvec(t.constant(m0), x)); }, r,
            tol);
    }

    SUBCASE("gelu") {
        Tensor a0 = Tensor::gaussian({3, 4}, rng);
        check_grad([](Tape& t, Var x) { return t.frobenius_sq(t.gelu(x)); }, a0, 1e-5);
    }

    SUBCASE("relu off the kink") {
        Tensor a0 = Tensor::gaussian({3, 4}, rng);
        for (double& v : a0.data)
            if (std::abs(v) < 1e-2) v = 0.5;
        check_grad([](Tape& t, Var x) { return t.frobenius_sq(t.relu(x)); }, a0, tol);
    }

    SUBCASE("row_softmax") {
        Tensor a0 = Tensor::gaussian({3, 5}, rng);
        Tensor w = Tensor::gaussian({3, 5}, rng);
        check_grad(
            [&](Tape& t, Var x) {
                return t.sum_all(t.hadamard(t.row_softmax(x), t.constant(w)));
            },
            a0, 1e-5);
    }

    SUBCASE("layer_norm wrt input gamma beta") {
        Tensor gamma = Tensor::uniform({6}, rng, 0.5, 1.5);
        Tensor beta = Tensor::gaussian({6}, rng);
        Tensor x0 = Tensor::gaussian({4, 6}, rng);
        Tensor w = Tensor::gaussian({4, 6}, rng);
        check_grad(
            [&](Tape& t, Var x) {
                Var y = t.layer_norm(x, t.constant(gamma), t.constant(beta));
                return t.sum_all(t.hadamard(y, t.constant(w)));
            },
            x0, 1e-5);
        check_grad(
            [&](Tape& t, Var g) {
                Var y = t.layer_norm(t.constant(x0), g, t.constant(beta));
                return t.sum_all(t.hadamard(y, t.constant(w)));
            },
            gamma, 1e-5);
        check_grad(
            [&](Tape& t, Var b) {
                Var y = t.layer_norm(t.constant(x0), t.constant(gamma), b);
                return t.sum_all(t.hadamard(y, t.constant(w)));
            },
            beta, tol);
    }

    SUBCASE("slice and concat") {
        Tensor a0 = Tensor::gaussian({6, 5}, rng);
        check_grad(
            [](Tape& t, Var x) {
                Var top = t.slice_rows(x, 0, 2);
                Var rest = t.slice_rows(x, 2, 6);
                Var left = t.slice_cols(x, 0, 3);
                Var stacked = t.concat_rows({top, rest});
                Var wide = t.concat_cols({left, t.slice_cols(stacked, 3, 5)});
                return t.frobenius_sq(wide);
            },
            a0, tol);
    }

    SUBCASE("cross_entropy_logits") {
        Tensor l0 = Tensor::gaussian({4, 6}, rng);
        std::vector<std::size_t> labels = {1, 0, 5, 2};
        check_grad(
            [&](Tape& t, Var x) { return t.cross_entropy_logits(x, labels); }, l0, 1e-5);
    }
}

TEST_CASE("composite losses match finite differences across seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Tensor a0 = Tensor::gaussian({3, 4}, rng);
        Tensor w1 = Tensor::gaussian({4, 4}, rng);
        Tensor r = Tensor::gaussian({4}, rng);
        check_grad(
            [&](Tape& t, Var x) {
                Var h = t.gelu(t.add_rowvec(t.matmul(x, t.constant(w1)), t.constant(r)));
                Var s = t.row_softmax(h);
                return t.frobenius_sq(t.sub(s, t.hadamard(h, h)));
            },
            a0, 1e-5);
    }
}

TEST_CASE("tape rejects foreign vars and non-finite values") {
    Tape t1, t2;
    Var a = t1.leaf(Tensor::full({2, 2}, 1.0), true);
    Var b = t2.leaf(Tensor::full({2, 2}, 1.0), true);
    (void)b;
    CHECK_THROWS_AS(t2.matmul(a, a), pae::ContractError);

    Tensor bad({1});
    bad(0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(t1.leaf(bad, false), pae::NumericError);
}
