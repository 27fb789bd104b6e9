#include <doctest.h>

#include <cmath>
#include <functional>

#include "tscam/autograd.hpp"
#include "tscam/gradcheck.hpp"
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

using Builder = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

// Adapts a tape expression over leaf parameters to the grad_check interface.
ScalarFn tape_fn(Builder build) {
    return [build = std::move(build)](const std::vector<Tensor<double>>& params,
                                      std::vector<Tensor<double>>* grads) {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        vars.reserve(params.size());
        for (const auto& p : params) {
            vars.push_back(make_var(p, true));
        }
        Var<double> loss = build(tape, vars);
        const double value = loss->value[0];
        if (grads) {
            tape.backward(loss);
            for (const auto& v : vars) {
                grads->push_back(v->grad);
            }
        }
        return value;
    };
}

}  // namespace

TEST_SUITE("autograd") {
    TEST_CASE("backward requires a scalar") {
        Tape<double> tape;
        Var<double> v = make_var(Tensor<double>({2, 2}), true);
        CHECK_THROWS_AS(tape.backward(v), ShapeError);
    }

    TEST_CASE("softmax rows gradient") {
        Rng rng(1);
        std::vector<Tensor<double>> params = {random_tensor(rng, {3, 5})};
        auto f = tape_fn([](Tape<double>& tape, std::vector<Var<double>>& v) {
            Var<double> s = softmax_rows(tape, v[0]);
            return sum_all(tape, matmul_nt(tape, s, s));
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);
    }

    TEST_CASE("layer_norm gradient") {
        Rng rng(2);
        std::vector<Tensor<double>> params = {random_tensor(rng, {4, 6}),
                                              random_tensor(rng, {6}, 0.5, 1.5),
                                              random_tensor(rng, {6})};
        auto f = tape_fn([](Tape<double>& tape, std::vector<Var<double>>& v) {
            Var<double> y = layer_norm(tape, v[0], v[1], v[2], 1e-5);
            return sum_all(tape, gelu(tape, y));
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);
    }

    TEST_CASE("gelu gradient") {
        Rng rng(3);
        std::vector<Tensor<double>> params = {random_tensor(rng, {3, 4}, -2.0, 2.0)};
        auto f = tape_fn([](Tape<double>& tape, std::vector<Var<double>>& v) {
            Var<double> y = gelu(tape, v[0]);
            return sum_all(tape, matmul_nt(tape, y, y));
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);
    }

    TEST_CASE("conv2d gradient") {
        Rng rng(4);
        std::vector<Tensor<double>> params = {random_tensor(rng, {2, 4, 4}),
                                              random_tensor(rng, {3, 2, 3, 3})};
        auto f = tape_fn([](Tape<double>& tape, std::vector<Var<double>>& v) {
            Var<double> y = conv2d_3x3(tape, v[0], v[1]);
            Var<double> flat = reshape(tape, y, {3, 16});
            return sum_all(tape, matmul_nt(tape, flat, flat));
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);
    }

    TEST_CASE("conv1d gradient") {
        Rng rng(5);
        std::vector<Tensor<double>> params = {random_tensor(rng, {3, 6}),
                                              random_tensor(rng, {2, 3, 3})};
        auto f = tape_fn([](Tape<double>& tape, std::vector<Var<double>>& v) {
            Var<double> y = conv1d_k3(tape, v[0], v[1]);
            return sum_all(tape, matmul_nt(tape, y, y));
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);
    }

    TEST_CASE("cross entropy loss, probabilities and gradient") {
        Tape<double> tape;
        Var<double> logits = make_var(Tensor<double>({2}, {2.0, 0.0}), true);
        Tensor<double> probs;
        Var<double> loss = cross_entropy(tape, logits, 0, &probs);
        CHECK(loss->value[0] == doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-9));
        CHECK(probs[0] + probs[1] == doctest::Approx(1.0).epsilon(1e-12));

        Rng rng(6);
        std::vector<Tensor<double>> params = {random_tensor(rng, {5})};
        auto f = tape_fn([](Tape<double>& tape2, std::vector<Var<double>>& v) {
            return cross_entropy(tape2, v[0], 2, nullptr);
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);

        CHECK_THROWS_AS(cross_entropy(tape, logits, 2, nullptr), ValueError);
    }

    TEST_CASE("slice and concat gradients") {
        Rng rng(7);
        std::vector<Tensor<double>> params = {random_tensor(rng, {4, 6})};
        auto f = tape_fn([](Tape<double>& tape, std::vector<Var<double>>& v) {
            Var<double> left = slice_cols(tape, v[0], 0, 3);
            Var<double> right = slice_cols(tape, v[0], 3, 6);
            Var<double> top = slice_rows(tape, v[0], 0, 2);
            Var<double> joined = concat_cols(tape, {left, right});
            Var<double> stacked = concat_rows(tape, {top, joined});
            return sum_all(tape, matmul_nt(tape, stacked, stacked));
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);
    }

    TEST_CASE("bias and scale gradients") {
        Rng rng(8);
        std::vector<Tensor<double>> params = {random_tensor(rng, {3, 4}),
                                              random_tensor(rng, {4})};
        auto f = tape_fn([](Tape<double>& tape, std::vector<Var<double>>& v) {
            Var<double> y = add_bias(tape, scale(tape, v[0], 1.7), v[1]);
            return sum_all(tape, matmul_nt(tape, y, y));
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);
    }

    TEST_CASE("mean_spatial and transpose gradients") {
        Rng rng(9);
        std::vector<Tensor<double>> params = {random_tensor(rng, {4, 6})};
        auto f = tape_fn([](Tape<double>& tape, std::vector<Var<double>>& v) {
            Var<double> t = transpose(tape, v[0]);           // [6,4]
            Var<double> maps = reshape(tape, t, {6, 2, 2});  // [C,h,w]
            Var<double> pooled = mean_spatial(tape, maps);   // [6]
            return cross_entropy(tape, pooled, 1, nullptr);
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);
    }

    TEST_CASE("a parameter used twice accumulates one combined gradient") {
        Rng rng(10);
        std::vector<Tensor<double>> params = {random_tensor(rng, {3, 3})};
        auto f = tape_fn([](Tape<double>& tape, std::vector<Var<double>>& v) {
            return sum_all(tape, matmul(tape, v[0], v[0]));
        });
        CHECK(grad_check(f, params, 1e-5) < 1e-6);
    }

    TEST_CASE("matmul_nt agrees with matmul plus transpose") {
        Rng rng(11);
        Tensor<double> a = random_tensor(rng, {4, 5});
        Tensor<double> b = random_tensor(rng, {3, 5});
        Tensor<double> expect = ops::matmul(a, ops::transpose(b));
        CHECK(max_abs_diff(ops::matmul_nt(a, b), expect) < 1e-12);
    }

    TEST_CASE("constants do not accumulate gradients") {
        Tape<double> tape;
        Var<double> c = constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
        Var<double> p = make_var(Tensor<double>({2, 2}, {1, 1, 1, 1}), true);
        Var<double> loss = sum_all(tape, matmul(tape, c, p));
        tape.backward(loss);
        CHECK(c->grad.empty());
        CHECK(p->grad.size() == 4);
    }
}
