#include "tscam/autograd.hpp"

namespace tscam {

using detail::accumulate;

template <typename T>
Var<T> matmul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
    Var<T> out = make_var(ops::matmul(a->value, b->value), a->requires_grad || b->requires_grad);
    if (out->requires_grad) {
        tape.record([a, b, out]() {
            auto [da, db] = ops::matmul_backward(out->grad, a->value, b->value);
            if (a->requires_grad) {
                accumulate(a->grad, da);
            }
            if (b->requires_grad) {
                accumulate(b->grad, db);
            }
        });
    }
    return out;
}

template <typename T>
Var<T> matmul_nt(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
    Var<T> out =
        make_var(ops::matmul_nt(a->value, b->value), a->requires_grad || b->requires_grad);
    if (out->requires_grad) {
        tape.record([a, b, out]() {
            auto [da, db] = ops::matmul_nt_backward(out->grad, a->value, b->value);
            if (a->requires_grad) {
                accumulate(a->grad, da);
            }
            if (b->requires_grad) {
                accumulate(b->grad, db);
            }
        });
    }
    return out;
}

template <typename T>
Var<T> transpose(Tape<T>& tape, const Var<T>& a) {
    return detail::unary_result<T>(tape, a, ops::transpose(a->value),
                                   [](const Tensor<T>& g) { return ops::transpose(g); });
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
    Var<T> out = make_var(ops::add(a->value, b->value), a->requires_grad || b->requires_grad);
    if (out->requires_grad) {
        tape.record([a, b, out]() {
            if (a->requires_grad) {
                accumulate(a->grad, out->grad);
            }
            if (b->requires_grad) {
                accumulate(b->grad, out->grad);
            }
        });
    }
    return out;
}

template <typename T>
Var<T> add_bias(Tape<T>& tape, const Var<T>& a, const Var<T>& bias) {
    Var<T> out =
        make_var(ops::add_bias(a->value, bias->value), a->requires_grad || bias->requires_grad);
    if (out->requires_grad) {
        tape.record([a, bias, out]() {
            if (a->requires_grad) {
                accumulate(a->grad, out->grad);
            }
            if (bias->requires_grad) {
                const index_t m = out->grad.dim(0), n = out->grad.dim(1);
                for (index_t i = 0; i < m; ++i) {
                    for (index_t j = 0; j < n; ++j) {
                        bias->grad[j] += out->grad(i, j);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, T c) {
    return detail::unary_result<T>(tape, a, ops::scale(a->value, c),
                                   [c](const Tensor<T>& g) { return ops::scale(g, c); });
}

template <typename T>
Var<T> softmax_rows(Tape<T>& tape, const Var<T>& x) {
    Var<T> out = make_var(ops::softmax_rows(x->value), x->requires_grad);
    if (out->requires_grad) {
        tape.record(
            [x, out]() { accumulate(x->grad, ops::softmax_rows_backward(out->grad, out->value)); });
    }
    return out;
}

template <typename T>
Var<T> layer_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
    Var<T> out = make_var(ops::layer_norm(x->value, gamma->value, beta->value, eps),
                          x->requires_grad || gamma->requires_grad || beta->requires_grad);
    if (out->requires_grad) {
        tape.record([x, gamma, beta, eps, out]() {
            Tensor<T> dx, dgamma, dbeta;
            ops::layer_norm_backward(out->grad, x->value, gamma->value, eps, &dx, &dgamma, &dbeta);
            if (x->requires_grad) {
                accumulate(x->grad, dx);
            }
            if (gamma->requires_grad) {
                accumulate(gamma->grad, dgamma);
            }
            if (beta->requires_grad) {
                accumulate(beta->grad, dbeta);
            }
        });
    }
    return out;
}

template <typename T>
Var<T> gelu(Tape<T>& tape, const Var<T>& x) {
    return detail::unary_result<T>(
        tape, x, ops::gelu(x->value),
        [x](const Tensor<T>& g) { return ops::gelu_backward(g, x->value); });
}

template <typename T>
Var<T> slice_rows(Tape<T>& tape, const Var<T>& a, index_t r0, index_t r1) {
    const Tensor<T>& v = a->value;
    if (v.rank() != 2 || r0 < 0 || r1 > v.dim(0) || r0 >= r1) {
        throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + ", " +
                         std::to_string(r1) + ") for " + shape_str(v.shape()));
    }
    const index_t n = v.dim(1);
    Tensor<T> out({r1 - r0, n});
    std::copy(v.data() + r0 * n, v.data() + r1 * n, out.data());
    Var<T> res = make_var(std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, res, r0, n]() {
            const Tensor<T>& g = res->grad;
            T* dst = a->grad.data() + r0 * n;
            const T* src = g.data();
            for (index_t i = 0; i < g.size(); ++i) {
                dst[i] += src[i];
            }
        });
    }
    return res;
}

template <typename T>
Var<T> slice_cols(Tape<T>& tape, const Var<T>& a, index_t c0, index_t c1) {
    const Tensor<T>& v = a->value;
    if (v.rank() != 2 || c0 < 0 || c1 > v.dim(1) || c0 >= c1) {
        throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") for " + shape_str(v.shape()));
    }
    const index_t m = v.dim(0), n = v.dim(1), k = c1 - c0;
    Tensor<T> out({m, k});
    for (index_t i = 0; i < m; ++i) {
        std::copy(v.data() + i * n + c0, v.data() + i * n + c1, out.data() + i * k);
    }
    Var<T> res = make_var(std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, res, c0, m, n, k]() {
            for (index_t i = 0; i < m; ++i) {
                const T* src = res->grad.data() + i * k;
                T* dst = a->grad.data() + i * n + c0;
                for (index_t j = 0; j < k; ++j) {
                    dst[j] += src[j];
                }
            }
        });
    }
    return res;
}

template <typename T>
Var<T> concat_cols(Tape<T>& tape, const std::vector<Var<T>>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no parts");
    }
    const index_t m = parts[0]->value.dim(0);
    index_t total = 0;
    bool grad = false;
    for (const auto& p : parts) {
        if (p->value.rank() != 2 || p->value.dim(0) != m) {
            throw ShapeError("concat_cols: row counts disagree");
        }
        total += p->value.dim(1);
        grad = grad || p->requires_grad;
    }
    Tensor<T> out({m, total});
    index_t off = 0;
    for (const auto& p : parts) {
        const index_t k = p->value.dim(1);
        for (index_t i = 0; i < m; ++i) {
            std::copy(p->value.data() + i * k, p->value.data() + (i + 1) * k,
                      out.data() + i * total + off);
        }
        off += k;
    }
    Var<T> res = make_var(std::move(out), grad);
    if (grad) {
        tape.record([parts, res, m, total]() {
            index_t off = 0;
            for (const auto& p : parts) {
                const index_t k = p->value.dim(1);
                if (p->requires_grad) {
                    for (index_t i = 0; i < m; ++i) {
                        const T* src = res->grad.data() + i * total + off;
                        T* dst = p->grad.data() + i * k;
                        for (index_t j = 0; j < k; ++j) {
                            dst[j] += src[j];
                        }
                    }
                }
                off += k;
            }
        });
    }
    return res;
}

template <typename T>
Var<T> concat_rows(Tape<T>& tape, const std::vector<Var<T>>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_rows: no parts");
    }
    const index_t n = parts[0]->value.dim(1);
    index_t total = 0;
    bool grad = false;
    for (const auto& p : parts) {
        if (p->value.rank() != 2 || p->value.dim(1) != n) {
            throw ShapeError("concat_rows: column counts disagree");
        }
        total += p->value.dim(0);
        grad = grad || p->requires_grad;
    }
    Tensor<T> out({total, n});
    T* dst = out.data();
    for (const auto& p : parts) {
        std::copy(p->value.data(), p->value.data() + p->value.size(), dst);
        dst += p->value.size();
    }
    Var<T> res = make_var(std::move(out), grad);
    if (grad) {
        tape.record([parts, res]() {
            const T* src = res->grad.data();
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    T* dst = p->grad.data();
                    for (index_t i = 0; i < p->grad.size(); ++i) {
                        dst[i] += src[i];
                    }
                }
                src += p->value.size();
            }
        });
    }
    return res;
}

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& a, std::vector<index_t> shape) {
    Var<T> res = make_var(a->value.reshaped(shape), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, res]() {
            const T* src = res->grad.data();
            T* dst = a->grad.data();
            for (index_t i = 0; i < res->grad.size(); ++i) {
                dst[i] += src[i];
            }
        });
    }
    return res;
}

template <typename T>
Var<T> conv2d_3x3(Tape<T>& tape, const Var<T>& input, const Var<T>& kernel) {
    Var<T> out = make_var(ops::conv2d_3x3(input->value, kernel->value),
                          input->requires_grad || kernel->requires_grad);
    if (out->requires_grad) {
        tape.record([input, kernel, out]() {
            Tensor<T> dinput, dkernel;
            ops::conv2d_3x3_backward(out->grad, input->value, kernel->value, &dinput, &dkernel);
            if (input->requires_grad) {
                accumulate(input->grad, dinput);
            }
            if (kernel->requires_grad) {
                accumulate(kernel->grad, dkernel);
            }
        });
    }
    return out;
}

template <typename T>
Var<T> conv1d_k3(Tape<T>& tape, const Var<T>& input, const Var<T>& kernel) {
    Var<T> out = make_var(ops::conv1d_k3(input->value, kernel->value),
                          input->requires_grad || kernel->requires_grad);
    if (out->requires_grad) {
        tape.record([input, kernel, out]() {
            Tensor<T> dinput, dkernel;
            ops::conv1d_k3_backward(out->grad, input->value, kernel->value, &dinput, &dkernel);
            if (input->requires_grad) {
                accumulate(input->grad, dinput);
            }
            if (kernel->requires_grad) {
                accumulate(kernel->grad, dkernel);
            }
        });
    }
    return out;
}

template <typename T>
Var<T> mean_spatial(Tape<T>& tape, const Var<T>& maps) {
    Var<T> out = make_var(ops::mean_spatial(maps->value), maps->requires_grad);
    if (maps->requires_grad) {
        const index_t C = maps->value.dim(0);
        const index_t hw = maps->value.dim(1) * maps->value.dim(2);
        tape.record([maps, out, C, hw]() {
            for (index_t c = 0; c < C; ++c) {
                const T g = out->grad[c] / T(hw);
                T* dst = maps->grad.data() + c * hw;
                for (index_t i = 0; i < hw; ++i) {
                    dst[i] += g;
                }
            }
        });
    }
    return out;
}

template <typename T>
Var<T> sum_all(Tape<T>& tape, const Var<T>& a) {
    T acc = T(0);
    for (const T& v : a->value.values()) {
        acc += v;
    }
    Var<T> out = make_var(Tensor<T>({1}, {acc}), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, out]() {
            const T g = out->grad[0];
            for (T& v : a->grad.values()) {
                v += g;
            }
        });
    }
    return out;
}

template <typename T>
Var<T> cross_entropy(Tape<T>& tape, const Var<T>& logits, index_t label,
                     Tensor<std::type_identity_t<T>>* probs_out) {
    auto [loss, probs] = ops::cross_entropy(logits->value, label);
    if (probs_out) {
        *probs_out = probs;
    }
    Var<T> out = make_var(Tensor<T>({1}, {loss}), logits->requires_grad);
    if (logits->requires_grad) {
        tape.record([logits, out, probs = std::move(probs), label]() {
            accumulate(logits->grad, ops::cross_entropy_backward(out->grad[0], probs, label));
        });
    }
    return out;
}

#define TSCAM_INSTANTIATE_AUTOGRAD(T)                                                          \
    template Var<T> matmul<T>(Tape<T>&, const Var<T>&, const Var<T>&);                        \
    template Var<T> matmul_nt<T>(Tape<T>&, const Var<T>&, const Var<T>&);                     \
    template Var<T> transpose<T>(Tape<T>&, const Var<T>&);                                    \
    template Var<T> add<T>(Tape<T>&, const Var<T>&, const Var<T>&);                           \
    template Var<T> add_bias<T>(Tape<T>&, const Var<T>&, const Var<T>&);                      \
    template Var<T> scale<T>(Tape<T>&, const Var<T>&, T);                                     \
    template Var<T> softmax_rows<T>(Tape<T>&, const Var<T>&);                                 \
    template Var<T> layer_norm<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, T);  \
    template Var<T> gelu<T>(Tape<T>&, const Var<T>&);                                         \
    template Var<T> slice_rows<T>(Tape<T>&, const Var<T>&, index_t, index_t);                 \
    template Var<T> slice_cols<T>(Tape<T>&, const Var<T>&, index_t, index_t);                 \
    template Var<T> concat_cols<T>(Tape<T>&, const std::vector<Var<T>>&);                     \
    template Var<T> concat_rows<T>(Tape<T>&, const std::vector<Var<T>>&);                     \
    template Var<T> reshape<T>(Tape<T>&, const Var<T>&, std::vector<index_t>);                \
    template Var<T> conv2d_3x3<T>(Tape<T>&, const Var<T>&, const Var<T>&);                    \
    template Var<T> conv1d_k3<T>(Tape<T>&, const Var<T>&, const Var<T>&);                     \
    template Var<T> mean_spatial<T>(Tape<T>&, const Var<T>&);                                 \
    template Var<T> sum_all<T>(Tape<T>&, const Var<T>&);                                      \
    template Var<T> cross_entropy<T>(Tape<T>&, const Var<T>&, index_t,                   \
                                     Tensor<std::type_identity_t<T>>*);

TSCAM_INSTANTIATE_AUTOGRAD(float)
TSCAM_INSTANTIATE_AUTOGRAD(double)

#undef TSCAM_INSTANTIATE_AUTOGRAD

}  // namespace tscam
