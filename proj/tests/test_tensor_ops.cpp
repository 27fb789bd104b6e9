#include <doctest.h>

#include <cmath>

#include "tscam/gradcheck.hpp"
#include "tscam/ops.hpp"
#include "tscam/rng.hpp"

using namespace tscam;

namespace {

Tensor<double> random_tensor(Rng& rng, std::vector<index_t> shape, double lo = -1.0,
                             double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (double& v : t.values()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

// Independent matmul oracle: plain triple loop, no blocking.
Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
    const index_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<double> out({m, n});
    for (index_t i = 0; i < m; ++i) {
        for (index_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (index_t kk = 0; kk < k; ++kk) {
                acc += a(i, kk) * b(kk, j);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

// Independent conv oracle: materializes a zero-padded buffer first.
Tensor<double> naive_conv2d(const Tensor<double>& input, const Tensor<double>& kernel) {
    const index_t D = input.dim(0), h = input.dim(1), w = input.dim(2), C = kernel.dim(0);
    Tensor<double> padded({D, h + 2, w + 2});
    for (index_t d = 0; d < D; ++d) {
        for (index_t y = 0; y < h; ++y) {
            for (index_t x = 0; x < w; ++x) {
                padded(d, y + 1, x + 1) = input(d, y, x);
            }
        }
    }
    Tensor<double> out({C, h, w});
    for (index_t c = 0; c < C; ++c) {
        for (index_t y = 0; y < h; ++y) {
            for (index_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (index_t d = 0; d < D; ++d) {
                    for (index_t ky = 0; ky < 3; ++ky) {
                        for (index_t kx = 0; kx < 3; ++kx) {
                            acc += padded(d, y + ky, x + kx) * kernel(c, d, ky, kx);
                        }
                    }
                }
                out(c, y, x) = acc;
            }
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("tensor") {
    TEST_CASE("tensor shape and data invariants") {
        Tensor<double> t({2, 3});
        CHECK(t.size() == 6);
        CHECK_THROWS_AS(Tensor<double>({2, 3}, {1.0, 2.0}), ShapeError);
        CHECK_THROWS_AS(Tensor<double>({0, 3}), ShapeError);
        CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
        Tensor<double> r = t.reshaped({3, 2});
        CHECK(r.dim(0) == 3);
    }

    TEST_CASE("matmul identity") {
        Tensor<double> a({2, 2}, {1, 2, 3, 4});
        Tensor<double> eye({2, 2}, {1, 0, 0, 1});
        Tensor<double> out = ops::matmul(a, eye);
        CHECK(max_abs_diff(out, a) == 0.0);
    }

    TEST_CASE("matmul matches the naive oracle") {
        Tensor<double> a({2, 2}, {1, 2, 3, 4});
        Tensor<double> b({2, 2}, {5, 6, 7, 8});
        Tensor<double> expect = naive_matmul(a, b);
        CHECK(expect(0, 0) == 19.0);
        CHECK(expect(0, 1) == 22.0);
        CHECK(expect(1, 0) == 43.0);
        CHECK(expect(1, 1) == 50.0);
        CHECK(max_abs_diff(ops::matmul(a, b), expect) == 0.0);

        Rng rng(11);
        for (int trial = 0; trial < 20; ++trial) {
            const index_t m = 1 + rng.uniform_int(0, 6);
            const index_t k = 1 + rng.uniform_int(0, 6);
            const index_t n = 1 + rng.uniform_int(0, 6);
            Tensor<double> x = random_tensor(rng, {m, k});
            Tensor<double> y = random_tensor(rng, {k, n});
            CHECK(max_abs_diff(ops::matmul(x, y), naive_matmul(x, y)) < 1e-12);
        }
    }

    TEST_CASE("matmul backward of Y=AB with G=ones, B=I") {
        Tensor<double> a({2, 2}, {1, 2, 3, 4});
        Tensor<double> eye({2, 2}, {1, 0, 0, 1});
        Tensor<double> g = Tensor<double>::full({2, 2}, 1.0);
        auto [da, db] = ops::matmul_backward(g, a, eye);
        CHECK(max_abs_diff(da, Tensor<double>::full({2, 2}, 1.0)) == 0.0);
        // dB = A^T G
        CHECK(db(0, 0) == 4.0);
        CHECK(db(1, 1) == 6.0);
    }

    TEST_CASE("matmul shape mismatch names both shapes") {
        Tensor<double> a({2, 3});
        Tensor<double> b({2, 3});
        try {
            ops::matmul(a, b);
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("[2x3]") != std::string::npos);
        }
    }

    TEST_CASE("matmul associativity at double precision") {
        Rng rng(3);
        for (int trial = 0; trial < 25; ++trial) {
            Tensor<double> a = random_tensor(rng, {4, 5});
            Tensor<double> b = random_tensor(rng, {5, 3});
            Tensor<double> c = random_tensor(rng, {3, 6});
            Tensor<double> left = ops::matmul(ops::matmul(a, b), c);
            Tensor<double> right = ops::matmul(a, ops::matmul(b, c));
            CHECK(max_abs_diff(left, right) < 1e-4);
        }
    }

    TEST_CASE("softmax uniform and shift invariance") {
        Tensor<double> z({1, 3}, {0, 0, 0});
        Tensor<double> s = ops::softmax_rows(z);
        for (index_t i = 0; i < 3; ++i) {
            CHECK(s[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        }

        Rng rng(5);
        Tensor<double> x = random_tensor(rng, {3, 4}, -2.0, 2.0);
        Tensor<double> shifted = x;
        for (index_t r = 0; r < 3; ++r) {
            for (index_t c = 0; c < 4; ++c) {
                shifted(r, c) += 7.5;
            }
        }
        CHECK(max_abs_diff(ops::softmax_rows(x), ops::softmax_rows(shifted)) < 1e-12);
    }

    TEST_CASE("softmax of [1,2,3]") {
        Tensor<double> x({1, 3}, {1, 2, 3});
        Tensor<double> s = ops::softmax_rows(x);
        CHECK(s[0] == doctest::Approx(0.09003).epsilon(1e-4));
        CHECK(s[1] == doctest::Approx(0.24473).epsilon(1e-4));
        CHECK(s[2] == doctest::Approx(0.66524).epsilon(1e-4));
    }

    TEST_CASE("softmax rejects non-finite input") {
        Tensor<double> x({1, 2}, {1.0, std::nan("")});
        CHECK_THROWS_AS(ops::softmax_rows(x), ValueError);
    }

    TEST_CASE("softmax rows sum to one for random finite inputs") {
        Rng rng(17);
        for (int trial = 0; trial < 50; ++trial) {
            const index_t r = 1 + rng.uniform_int(0, 5);
            const index_t c = 1 + rng.uniform_int(0, 8);
            Tensor<double> x = random_tensor(rng, {r, c}, -50.0, 50.0);
            Tensor<double> s = ops::softmax_rows(x);
            for (index_t i = 0; i < r; ++i) {
                double sum = 0.0;
                for (index_t j = 0; j < c; ++j) {
                    CHECK(s(i, j) >= 0.0);
                    sum += s(i, j);
                }
                CHECK(std::abs(sum - 1.0) < 1e-6);
            }
        }
    }

    TEST_CASE("conv2d zero kernel and identity kernel") {
        Rng rng(23);
        Tensor<double> input = random_tensor(rng, {2, 4, 4});
        Tensor<double> zero_kernel({3, 2, 3, 3});
        Tensor<double> out = ops::conv2d_3x3(input, zero_kernel);
        CHECK(max_abs_diff(out, Tensor<double>({3, 4, 4})) == 0.0);

        Tensor<double> single = random_tensor(rng, {1, 5, 5});
        Tensor<double> delta({1, 1, 3, 3});
        delta(0, 0, 1, 1) = 1.0;
        CHECK(max_abs_diff(ops::conv2d_3x3(single, delta), single) == 0.0);
    }

    TEST_CASE("conv2d all-ones kernel on a 2x2 input") {
        Tensor<double> input({1, 2, 2}, {1, 2, 3, 4});
        Tensor<double> kernel = Tensor<double>::full({1, 1, 3, 3}, 1.0);
        Tensor<double> expect = naive_conv2d(input, kernel);
        CHECK(expect(0, 0, 0) == 10.0);
        CHECK(expect(0, 0, 1) == 10.0);
        CHECK(expect(0, 1, 0) == 10.0);
        CHECK(expect(0, 1, 1) == 10.0);
        CHECK(max_abs_diff(ops::conv2d_3x3(input, kernel), expect) == 0.0);
    }

    TEST_CASE("conv2d channel mismatch") {
        Tensor<double> input({2, 4, 4});
        Tensor<double> kernel({3, 5, 3, 3});
        CHECK_THROWS_AS(ops::conv2d_3x3(input, kernel), ShapeError);
    }

    TEST_CASE("conv2d matches the naive oracle on random inputs") {
        Rng rng(29);
        for (int trial = 0; trial < 30; ++trial) {
            const index_t D = 1 + rng.uniform_int(0, 4);
            const index_t C = 1 + rng.uniform_int(0, 4);
            const index_t h = 1 + rng.uniform_int(0, 8);
            const index_t w = 1 + rng.uniform_int(0, 8);
            Tensor<double> input = random_tensor(rng, {D, h, w});
            Tensor<double> kernel = random_tensor(rng, {C, D, 3, 3});
            CHECK(max_abs_diff(ops::conv2d_3x3(input, kernel), naive_conv2d(input, kernel)) <
                  1e-5);
        }
    }

    TEST_CASE("layer_norm constant vector is zeroed") {
        Tensor<double> x = Tensor<double>::full({1, 8}, 3.25);
        Tensor<double> gamma = Tensor<double>::full({8}, 1.0);
        Tensor<double> beta({8});
        Tensor<double> out = ops::layer_norm(x, gamma, beta, 1e-5);
        CHECK(max_abs_diff(out, Tensor<double>({1, 8})) < 1e-9);
    }

    TEST_CASE("layer_norm of [1,3]") {
        Tensor<double> x({1, 2}, {1, 3});
        Tensor<double> gamma = Tensor<double>::full({2}, 1.0);
        Tensor<double> beta({2});
        Tensor<double> out = ops::layer_norm(x, gamma, beta, 1e-12);
        CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-5));
        CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-5));
    }

    TEST_CASE("layer_norm output mean tracks beta when gamma is one") {
        Rng rng(31);
        Tensor<double> x = random_tensor(rng, {4, 16});
        Tensor<double> gamma = Tensor<double>::full({16}, 1.0);
        Tensor<double> beta = random_tensor(rng, {16});
        double beta_mean = 0.0;
        for (const double v : beta.values()) {
            beta_mean += v;
        }
        beta_mean /= 16.0;
        Tensor<double> out = ops::layer_norm(x, gamma, beta, 1e-10);
        for (index_t r = 0; r < 4; ++r) {
            double mean = 0.0;
            for (index_t c = 0; c < 16; ++c) {
                mean += out(r, c);
            }
            mean /= 16.0;
            CHECK(std::abs(mean - beta_mean) < 1e-6);
        }
    }

    TEST_CASE("grad_check accepts correct matmul gradients") {
        Rng rng(37);
        std::vector<Tensor<double>> params = {random_tensor(rng, {3, 3}),
                                              random_tensor(rng, {3, 3})};
        const ScalarFn f = [](const std::vector<Tensor<double>>& p,
                              std::vector<Tensor<double>>* grads) {
            Tensor<double> y = ops::matmul(p[0], p[1]);
            double loss = 0.0;
            for (const double v : y.values()) {
                loss += v;
            }
            if (grads) {
                Tensor<double> g = Tensor<double>::full(y.shape(), 1.0);
                auto [da, db] = ops::matmul_backward(g, p[0], p[1]);
                grads->push_back(da);
                grads->push_back(db);
            }
            return loss;
        };
        CHECK(grad_check(f, params, 1e-4) < 1e-6);
    }

    TEST_CASE("grad_check flags a negated gradient") {
        Rng rng(41);
        std::vector<Tensor<double>> params = {random_tensor(rng, {2, 2}, 0.5, 1.5),
                                              random_tensor(rng, {2, 2}, 0.5, 1.5)};
        const ScalarFn f = [](const std::vector<Tensor<double>>& p,
                              std::vector<Tensor<double>>* grads) {
            Tensor<double> y = ops::matmul(p[0], p[1]);
            double loss = 0.0;
            for (const double v : y.values()) {
                loss += v;
            }
            if (grads) {
                Tensor<double> g = Tensor<double>::full(y.shape(), 1.0);
                auto [da, db] = ops::matmul_backward(g, p[0], p[1]);
                for (double& v : da.values()) {
                    v = -v;  // deliberately wrong sign
                }
                grads->push_back(da);
                grads->push_back(db);
            }
            return loss;
        };
        CHECK(grad_check(f, params, 1e-4) == doctest::Approx(2.0).epsilon(0.05));
    }

    TEST_CASE("grad_check rejects a non-finite probe") {
        std::vector<Tensor<double>> params = {Tensor<double>({1})};
        const ScalarFn f = [](const std::vector<Tensor<double>>&,
                              std::vector<Tensor<double>>* grads) {
            if (grads) {
                grads->push_back(Tensor<double>({1}));
            }
            return std::numeric_limits<double>::quiet_NaN();
        };
        CHECK_THROWS_AS(grad_check(f, params, 1e-4), ValueError);
    }
}
