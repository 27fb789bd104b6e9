#pragma once

#include <utility>

#include "tscam/tensor.hpp"

// Forward/backward kernels for every differentiable primitive. Backward
// functions return fresh gradient tensors; accumulation is the caller's job.
namespace tscam::ops {

// [m,k] x [k,n] -> [m,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// dA = G B^T, dB = A^T G
template <typename T>
std::pair<Tensor<T>, Tensor<T>> matmul_backward(const Tensor<T>& g, const Tensor<T>& a,
                                                const Tensor<T>& b);

// [m,k] x [n,k]^T -> [m,n]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
// dA = G B, dB = G^T A
template <typename T>
std::pair<Tensor<T>, Tensor<T>> matmul_nt_backward(const Tensor<T>& g, const Tensor<T>& a,
                                                   const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// [m,n] + row-broadcast [n]
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// Row-wise stabilized softmax; rejects non-finite input.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);
// Needs the forward output y: dx = y * (g - rowsum(g * y)).
template <typename T>
Tensor<T> softmax_rows_backward(const Tensor<T>& g, const Tensor<T>& y);

// Normalizes the trailing dimension of [m,n] rows, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);
template <typename T>
void layer_norm_backward(const Tensor<T>& g, const Tensor<T>& x, const Tensor<T>& gamma, T eps,
                         Tensor<T>* dx, Tensor<T>* dgamma, Tensor<T>* dbeta);

// Exact GELU (erf form).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& g, const Tensor<T>& x);

// [D,h,w] (*) [C,D,3,3], stride 1, zero pad 1 -> [C,h,w]
template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& input, const Tensor<T>& kernel);
template <typename T>
void conv2d_3x3_backward(const Tensor<T>& g, const Tensor<T>& input, const Tensor<T>& kernel,
                         Tensor<T>* dinput, Tensor<T>* dkernel);

// [D,N] (*) [C,D,3] along the token axis, zero pad 1 -> [C,N]
template <typename T>
Tensor<T> conv1d_k3(const Tensor<T>& input, const Tensor<T>& kernel);
template <typename T>
void conv1d_k3_backward(const Tensor<T>& g, const Tensor<T>& input, const Tensor<T>& kernel,
                        Tensor<T>* dinput, Tensor<T>* dkernel);

// [C,h,w] -> [C], mean over the spatial extent.
template <typename T>
Tensor<T> mean_spatial(const Tensor<T>& maps);

// logits [C]; returns (loss, probabilities). Loss is -log softmax(logits)[label].
template <typename T>
std::pair<T, Tensor<T>> cross_entropy(const Tensor<T>& logits, index_t label);
// dlogits = probs - onehot(label), scaled by upstream g.
template <typename T>
Tensor<T> cross_entropy_backward(T g, const Tensor<T>& probs, index_t label);

}  // namespace tscam::ops
