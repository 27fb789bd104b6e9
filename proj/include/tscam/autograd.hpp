#pragma once

#include <functional>
#include <memory>
#include <type_traits>
#include <vector>

#include "tscam/ops.hpp"
#include "tscam/tensor.hpp"

namespace tscam {

// A differentiable value: forward result plus a gradient buffer that the
// tape closures accumulate into.
template <typename T>
struct VarNode {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
};

template <typename T>
using Var = std::shared_ptr<VarNode<T>>;

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad) {
    auto node = std::make_shared<VarNode<T>>();
    node->requires_grad = requires_grad;
    if (requires_grad) {
        node->grad = Tensor<T>(value.shape());
    }
    node->value = std::move(value);
    return node;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
    return make_var(std::move(value), false);
}

// Records one closure per differentiable op, in forward order; backward()
// replays them in exact reverse. Confined to a single thread.
template <typename T>
class Tape {
public:
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

    // Seeds the scalar loss gradient with 1 and propagates.
    void backward(const Var<T>& loss) {
        if (loss->value.size() != 1) {
            throw ShapeError("Tape::backward expects a scalar loss, got " +
                             shape_str(loss->value.shape()));
        }
        loss->grad[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            (*it)();
        }
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    std::vector<std::function<void()>> nodes_;
};

namespace detail {

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    T* pd = dst.data();
    const T* ps = src.data();
    for (index_t i = 0; i < dst.size(); ++i) {
        pd[i] += ps[i];
    }
}

template <typename T>
Var<T> unary_result(Tape<T>& tape, const Var<T>& a, Tensor<T> value,
                    std::function<Tensor<T>(const Tensor<T>&)> grad_fn) {
    Var<T> out = make_var(std::move(value), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, out, grad_fn = std::move(grad_fn)]() {
            accumulate(a->grad, grad_fn(out->grad));
        });
    }
    return out;
}

}  // namespace detail

// -- tape-recorded ops ------------------------------------------------------

template <typename T>
Var<T> matmul(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> matmul_nt(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> transpose(Tape<T>& tape, const Var<T>& a);

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> add_bias(Tape<T>& tape, const Var<T>& a, const Var<T>& bias);

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, T c);

template <typename T>
Var<T> softmax_rows(Tape<T>& tape, const Var<T>& x);

template <typename T>
Var<T> layer_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

template <typename T>
Var<T> gelu(Tape<T>& tape, const Var<T>& x);

template <typename T>
Var<T> slice_rows(Tape<T>& tape, const Var<T>& a, index_t r0, index_t r1);

template <typename T>
Var<T> slice_cols(Tape<T>& tape, const Var<T>& a, index_t c0, index_t c1);

template <typename T>
Var<T> concat_cols(Tape<T>& tape, const std::vector<Var<T>>& parts);

template <typename T>
Var<T> concat_rows(Tape<T>& tape, const std::vector<Var<T>>& parts);

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& a, std::vector<index_t> shape);

template <typename T>
Var<T> conv2d_3x3(Tape<T>& tape, const Var<T>& input, const Var<T>& kernel);

template <typename T>
Var<T> conv1d_k3(Tape<T>& tape, const Var<T>& input, const Var<T>& kernel);

template <typename T>
Var<T> mean_spatial(Tape<T>& tape, const Var<T>& maps);

template <typename T>
Var<T> sum_all(Tape<T>& tape, const Var<T>& a);

// Returns the scalar loss; writes softmax probabilities to *probs_out if given.
template <typename T>
Var<T> cross_entropy(Tape<T>& tape, const Var<T>& logits, index_t label,
                     Tensor<std::type_identity_t<T>>* probs_out = nullptr);

}  // namespace tscam
