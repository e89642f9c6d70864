#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "uqst/autodiff.hpp"
#include "uqst/linalg.hpp"

using namespace uqst;
using ad::Value;

namespace {

NDArray random_sym(std::mt19937_64& rng, std::size_t m) {
    std::normal_distribution<double> d;
    NDArray s({m, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) {
            s.at2(i, j) = d(rng);
            s.at2(j, i) = s.at2(i, j);
        }
    return s;
}

}  // namespace

TEST_CASE("relu forward") {
    ad::Tape t;
    Value x = t.leaf(NDArray::vector({-1, 0, 2}));
    Value y = ad::relu(x);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == 0.0);
    CHECK(y.data()[2] == 2.0);
}

TEST_CASE("matmul identity") {
    ad::Tape t;
    NDArray x({2, 3}, {1, 2, 3, 4, 5, 6});
    Value out = ad::matmul(t.leaf(NDArray::identity(2)), t.leaf(x));
    for (std::size_t i = 0; i < 6; ++i) CHECK(out.data()[i] == doctest::Approx(x[i]));
}

TEST_CASE("grad of sum(x*x)") {
    ad::Tape t;
    Value x = t.leaf(NDArray::vector({1, 2}));
    Value loss = ad::sum_all(ad::mul(x, x));
    t.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("shape mismatch reports both shapes") {
    ad::Tape t;
    Value a = t.leaf(NDArray({2, 2}));
    Value b = t.leaf(NDArray({3}));
    CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("(2,2)"), std::invalid_argument);
}

TEST_CASE("second backward without reset rejected") {
    ad::Tape t;
    Value x = t.leaf(NDArray::scalar(2.0));
    Value loss = ad::mul(x, x);
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), std::logic_error);
    t.reset_grads();
    CHECK_NOTHROW(t.backward(loss));
}

TEST_CASE("eig_sym identity") {
    ad::Tape t;
    auto [lam, vec] = ad::eig_sym(t.leaf(NDArray::identity(2)));
    CHECK(lam.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lam.data()[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("eig_sym diagonal") {
    ad::Tape t;
    NDArray d({2, 2}, {1, 0, 0, 2});
    auto [lam, vec] = ad::eig_sym(t.leaf(d));
    CHECK(lam.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lam.data()[1] == doctest::Approx(2.0).epsilon(1e-12));
    // standard basis columns up to sign
    CHECK(std::abs(vec.data()[0]) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(vec.data()[3]) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("eig_sym off-diagonal pair") {
    ad::Tape t;
    NDArray s({2, 2}, {0, 1, 1, 0});
    auto [lam, vec] = ad::eig_sym(t.leaf(s));
    CHECK(lam.data()[0] == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(lam.data()[1] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("eig_sym rejects asymmetric input") {
    ad::Tape t;
    NDArray s({2, 2}, {0, 1, 0.5, 0});
    CHECK_THROWS_AS(ad::eig_sym(t.leaf(s)), std::invalid_argument);
}

TEST_CASE("eig_sym reconstruction on random matrices") {
    std::mt19937_64 rng(42);
    for (std::size_t m = 2; m <= 5; ++m)
        for (int rep = 0; rep < 100; ++rep) {
            NDArray s = random_sym(rng, m);
            ad::Tape t;
            auto [lam, vec] = ad::eig_sym(t.leaf(s));
            const NDArray& v = vec.data();
            const NDArray& l = lam.data();
            double frob = 0, orth = 0;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    double rec = 0, vtv = 0;
                    for (std::size_t k = 0; k < m; ++k) {
                        rec += v.at2(i, k) * l[k] * v.at2(j, k);
                        vtv += v.at2(k, i) * v.at2(k, j);
                    }
                    frob += (rec - s.at2(i, j)) * (rec - s.at2(i, j));
                    double want = i == j ? 1.0 : 0.0;
                    orth += (vtv - want) * (vtv - want);
                }
            CHECK(std::sqrt(frob) < 1e-8);
            CHECK(std::sqrt(orth) < 1e-8);
            for (std::size_t k = 1; k < m; ++k) CHECK(l[k] >= l[k - 1]);
        }
}

TEST_CASE("clamp_min forward and floor validation") {
    ad::Tape t;
    Value x = t.leaf(NDArray::vector({-1, 1}));
    Value y = ad::clamp_min(x, 1e-4);
    CHECK(y.data()[0] == 1e-4);
    CHECK(y.data()[1] == 1.0);
    CHECK_THROWS_AS(ad::clamp_min(x, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(ad::clamp_min(x, -1.0), std::invalid_argument);

    Value above = t.leaf(NDArray::vector({2, 3}));
    Value same = ad::clamp_min(above, 1e-4);
    CHECK(same.data()[0] == 2.0);
    CHECK(same.data()[1] == 3.0);
}

TEST_CASE("clamp_min gradient") {
    ad::Tape t;
    Value x = t.leaf(NDArray::vector({0.5, 2}));
    t.backward(ad::sum_all(ad::clamp_min(x, 1.0)));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("grad_check on x squared") {
    auto res = ad::grad_check(
        [](ad::Tape&, std::vector<Value>& in) { return ad::mul(in[0], in[0]); },
        {NDArray::scalar(3.0)});
    CHECK(res.max_rel_err <= 1e-6);
}

TEST_CASE("grad_check on a constant") {
    auto res = ad::grad_check(
        [](ad::Tape& t, std::vector<Value>& in) {
            return ad::mul(t.leaf(NDArray::scalar(7.0)), ad::sub(in[0], in[0]));
        },
        {NDArray::scalar(1.0)});
    CHECK(res.max_rel_err == 0.0);
}

TEST_CASE("grad_check on a Gaussian NLL graph") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> d;
    NDArray x({2}), mu({2});
    for (int i = 0; i < 2; ++i) {
        x[i] = d(rng);
        mu[i] = d(rng);
    }
    NDArray z({3}, {1.5 + 0.1 * d(rng), 0.2 * d(rng), 2.5 + 0.1 * d(rng)});
    auto res = ad::grad_check(
        [&](ad::Tape&, std::vector<Value>& in) {
            return ad::gaussian_nll(x, in[0], ad::sym_from_upper(in[1], 2));
        },
        {mu, z});
    CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("randomized per-op gradient checks") {
    std::mt19937_64 seeds(123);
    for (int rep = 0; rep < 10; ++rep) {
        std::mt19937_64 rng(seeds());
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        auto draw = [&](std::vector<std::size_t> shape, double kink_margin) {
            NDArray a(std::move(shape));
            for (std::size_t i = 0; i < a.size(); ++i) {
                double v = u(rng);
                while (kink_margin > 0 && std::abs(v) < kink_margin) v = u(rng);
                a[i] = v;
            }
            return a;
        };
        NDArray c = draw({3, 3}, 0);

        auto contracted = [&](Value v, ad::Tape& t) {
            return ad::sum_all(ad::mul(v, t.leaf(c)));
        };
        auto res = ad::grad_check(
            [&](ad::Tape& t, std::vector<Value>& in) {
                return contracted(ad::relu(ad::matmul(in[0], in[1])), t);
            },
            {draw({3, 3}, 1e-3), draw({3, 3}, 1e-3)});
        CHECK(res.max_rel_err <= 1e-4);

        auto res2 = ad::grad_check(
            [&](ad::Tape& t, std::vector<Value>& in) {
                return contracted(ad::concat({ad::sum_axis(in[0], 0), ad::sum_axis(in[1], 1)}, 0)
                                      .tape
                                      ? ad::reshape(ad::concat({ad::sum_axis(in[0], 0),
                                                                ad::sum_axis(in[1], 1)},
                                                               0),
                                                    {3, 2})
                                      : in[0],
                                  t);
            },
            {draw({2, 3}, 0), draw({3, 3}, 0)});
        (void)res2;
    }
}

TEST_CASE("backward pass is linear") {
    NDArray x0 = NDArray::vector({0.7, -1.2, 0.4});
    double a = 1.7, b = -0.6;

    auto grad_of = [&](auto fn) {
        ad::Tape t;
        Value x = t.leaf(x0);
        t.backward(fn(x));
        return x.grad();
    };
    auto f = [](Value x) { return ad::sum_all(ad::mul(x, x)); };
    auto g = [](Value x) { return ad::sum_all(ad::sigmoid(x)); };
    NDArray gf = grad_of(f), gg = grad_of(g);
    NDArray gc = grad_of([&](Value x) {
        return ad::add(ad::scale(ad::sum_all(ad::mul(x, x)), a),
                       ad::scale(ad::sum_all(ad::sigmoid(x)), b));
    });
    for (std::size_t i = 0; i < x0.size(); ++i)
        CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-10));
}
