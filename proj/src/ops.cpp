#include "tscam/ops.hpp"

#include <algorithm>
#include <cmath>

namespace tscam::ops {

namespace {

template <typename T>
void require_matrix(const Tensor<T>& t, const char* who) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(who) + ": expected a matrix, got " + shape_str(t.shape()));
    }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const index_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (index_t i = 0; i < m; ++i) {
        T* orow = po + i * n;
        for (index_t kk = 0; kk < k; ++kk) {
            const T av = pa[i * k + kk];
            const T* brow = pb + kk * n;
            for (index_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> matmul_backward(const Tensor<T>& g, const Tensor<T>& a,
                                                const Tensor<T>& b) {
    // dA = G B^T: [m,n] x [k,n]^T; dB = A^T G
    Tensor<T> da = matmul_nt(g, b);
    const index_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> db({k, n});
    const T* pa = a.data();
    const T* pg = g.data();
    T* pdb = db.data();
    for (index_t i = 0; i < m; ++i) {
        for (index_t kk = 0; kk < k; ++kk) {
            const T av = pa[i * k + kk];
            const T* grow = pg + i * n;
            T* drow = pdb + kk * n;
            for (index_t j = 0; j < n; ++j) {
                drow[j] += av * grow[j];
            }
        }
    }
    return {std::move(da), std::move(db)};
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
    const index_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor<T> out({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (index_t i = 0; i < m; ++i) {
        const T* arow = pa + i * k;
        for (index_t j = 0; j < n; ++j) {
            const T* brow = pb + j * k;
            T acc = T(0);
            for (index_t kk = 0; kk < k; ++kk) {
                acc += arow[kk] * brow[kk];
            }
            po[i * n + j] = acc;
        }
    }
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> matmul_nt_backward(const Tensor<T>& g, const Tensor<T>& a,
                                                   const Tensor<T>& b) {
    // out = A B^T, so dA = G B and dB = G^T A.
    Tensor<T> da = matmul(g, b);
    const index_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor<T> db({n, k});
    const T* pa = a.data();
    const T* pg = g.data();
    T* pdb = db.data();
    for (index_t i = 0; i < m; ++i) {
        const T* arow = pa + i * k;
        const T* grow = pg + i * n;
        for (index_t j = 0; j < n; ++j) {
            const T gv = grow[j];
            T* drow = pdb + j * k;
            for (index_t kk = 0; kk < k; ++kk) {
                drow[kk] += gv * arow[kk];
            }
        }
    }
    return {std::move(da), std::move(db)};
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require_matrix(a, "transpose");
    const index_t m = a.dim(0), n = a.dim(1);
    Tensor<T> out({n, m});
    for (index_t i = 0; i < m; ++i) {
        for (index_t j = 0; j < n; ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add: shapes disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    Tensor<T> out = a;
    T* po = out.data();
    const T* pb = b.data();
    for (index_t i = 0; i < out.size(); ++i) {
        po[i] += pb[i];
    }
    return out;
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
    require_matrix(a, "add_bias");
    if (bias.rank() != 1 || bias.dim(0) != a.dim(1)) {
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match columns of " +
                         shape_str(a.shape()));
    }
    Tensor<T> out = a;
    const index_t m = a.dim(0), n = a.dim(1);
    T* po = out.data();
    const T* pb = bias.data();
    for (index_t i = 0; i < m; ++i) {
        for (index_t j = 0; j < n; ++j) {
            po[i * n + j] += pb[j];
        }
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    Tensor<T> out = a;
    for (T& v : out.values()) {
        v *= c;
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("mul: shapes disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    Tensor<T> out = a;
    T* po = out.data();
    const T* pb = b.data();
    for (index_t i = 0; i < out.size(); ++i) {
        po[i] *= pb[i];
    }
    return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    require_matrix(x, "softmax_rows");
    if (!all_finite(x)) {
        throw ValueError("softmax_rows: input contains non-finite values");
    }
    const index_t m = x.dim(0), n = x.dim(1);
    Tensor<T> out(x.shape());
    for (index_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * n;
        T* orow = out.data() + i * n;
        T mx = row[0];
        for (index_t j = 1; j < n; ++j) {
            mx = std::max(mx, row[j]);
        }
        T sum = T(0);
        for (index_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        const T inv = T(1) / sum;
        for (index_t j = 0; j < n; ++j) {
            orow[j] *= inv;
        }
    }
    return out;
}

template <typename T>
Tensor<T> softmax_rows_backward(const Tensor<T>& g, const Tensor<T>& y) {
    const index_t m = y.dim(0), n = y.dim(1);
    Tensor<T> dx(y.shape());
    for (index_t i = 0; i < m; ++i) {
        const T* grow = g.data() + i * n;
        const T* yrow = y.data() + i * n;
        T dot = T(0);
        for (index_t j = 0; j < n; ++j) {
            dot += grow[j] * yrow[j];
        }
        T* drow = dx.data() + i * n;
        for (index_t j = 0; j < n; ++j) {
            drow[j] = yrow[j] * (grow[j] - dot);
        }
    }
    return dx;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    require_matrix(x, "layer_norm");
    const index_t m = x.dim(0), n = x.dim(1);
    if (gamma.rank() != 1 || gamma.dim(0) != n || beta.rank() != 1 || beta.dim(0) != n) {
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(n) + "]");
    }
    if (eps <= T(0)) {
        throw ValueError("layer_norm: eps must be positive");
    }
    Tensor<T> out(x.shape());
    for (index_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * n;
        T mean = T(0);
        for (index_t j = 0; j < n; ++j) {
            mean += row[j];
        }
        mean /= T(n);
        T var = T(0);
        for (index_t j = 0; j < n; ++j) {
            const T d = row[j] - mean;
            var += d * d;
        }
        var /= T(n);
        const T inv_std = T(1) / std::sqrt(var + eps);
        T* orow = out.data() + i * n;
        for (index_t j = 0; j < n; ++j) {
            orow[j] = (row[j] - mean) * inv_std * gamma[j] + beta[j];
        }
    }
    return out;
}

template <typename T>
void layer_norm_backward(const Tensor<T>& g, const Tensor<T>& x, const Tensor<T>& gamma, T eps,
                         Tensor<T>* dx, Tensor<T>* dgamma, Tensor<T>* dbeta) {
    const index_t m = x.dim(0), n = x.dim(1);
    *dx = Tensor<T>(x.shape());
    *dgamma = Tensor<T>({n});
    *dbeta = Tensor<T>({n});
    std::vector<T> xhat(static_cast<std::size_t>(n));
    for (index_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * n;
        const T* grow = g.data() + i * n;
        T mean = T(0);
        for (index_t j = 0; j < n; ++j) {
            mean += row[j];
        }
        mean /= T(n);
        T var = T(0);
        for (index_t j = 0; j < n; ++j) {
            const T d = row[j] - mean;
            var += d * d;
        }
        var /= T(n);
        const T inv_std = T(1) / std::sqrt(var + eps);
        T sum_gh = T(0), sum_gh_xhat = T(0);
        for (index_t j = 0; j < n; ++j) {
            xhat[static_cast<std::size_t>(j)] = (row[j] - mean) * inv_std;
            const T gh = grow[j] * gamma[j];
            sum_gh += gh;
            sum_gh_xhat += gh * xhat[static_cast<std::size_t>(j)];
            (*dgamma)[j] += grow[j] * xhat[static_cast<std::size_t>(j)];
            (*dbeta)[j] += grow[j];
        }
        T* drow = dx->data() + i * n;
        for (index_t j = 0; j < n; ++j) {
            const T gh = grow[j] * gamma[j];
            drow[j] = inv_std * (gh - sum_gh / T(n) -
                                 xhat[static_cast<std::size_t>(j)] * sum_gh_xhat / T(n));
        }
    }
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (T& v : out.values()) {
        const double xv = static_cast<double>(v);
        v = static_cast<T>(0.5 * xv * (1.0 + std::erf(xv * 0.70710678118654752440)));
    }
    return out;
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& g, const Tensor<T>& x) {
    Tensor<T> dx(x.shape());
    for (index_t i = 0; i < x.size(); ++i) {
        const double xv = static_cast<double>(x[i]);
        const double cdf = 0.5 * (1.0 + std::erf(xv * 0.70710678118654752440));
        const double pdf = 0.39894228040143267794 * std::exp(-0.5 * xv * xv);
        dx[i] = g[i] * static_cast<T>(cdf + xv * pdf);
    }
    return dx;
}

template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& input, const Tensor<T>& kernel) {
    if (input.rank() != 3) {
        throw ShapeError("conv2d_3x3: input must be [D,h,w], got " + shape_str(input.shape()));
    }
    if (kernel.rank() != 4 || kernel.dim(2) != 3 || kernel.dim(3) != 3) {
        throw ShapeError("conv2d_3x3: kernel must be [C,D,3,3], got " + shape_str(kernel.shape()));
    }
    if (kernel.dim(1) != input.dim(0)) {
        throw ShapeError("conv2d_3x3: kernel channels " + std::to_string(kernel.dim(1)) +
                         " do not match input channels " + std::to_string(input.dim(0)));
    }
    const index_t D = input.dim(0), h = input.dim(1), w = input.dim(2), C = kernel.dim(0);
    Tensor<T> out({C, h, w});
    for (index_t c = 0; c < C; ++c) {
        for (index_t d = 0; d < D; ++d) {
            const T* plane = input.data() + d * h * w;
            const T* k = kernel.data() + (c * D + d) * 9;
            T* oplane = out.data() + c * h * w;
            for (index_t y = 0; y < h; ++y) {
                for (index_t x = 0; x < w; ++x) {
                    T acc = T(0);
                    for (index_t ky = 0; ky < 3; ++ky) {
                        const index_t sy = y + ky - 1;
                        if (sy < 0 || sy >= h) {
                            continue;
                        }
                        for (index_t kx = 0; kx < 3; ++kx) {
                            const index_t sx = x + kx - 1;
                            if (sx < 0 || sx >= w) {
                                continue;
                            }
                            acc += plane[sy * w + sx] * k[ky * 3 + kx];
                        }
                    }
                    oplane[y * w + x] += acc;
                }
            }
        }
    }
    return out;
}

template <typename T>
void conv2d_3x3_backward(const Tensor<T>& g, const Tensor<T>& input, const Tensor<T>& kernel,
                         Tensor<T>* dinput, Tensor<T>* dkernel) {
    const index_t D = input.dim(0), h = input.dim(1), w = input.dim(2), C = kernel.dim(0);
    *dinput = Tensor<T>(input.shape());
    *dkernel = Tensor<T>(kernel.shape());
    for (index_t c = 0; c < C; ++c) {
        const T* gplane = g.data() + c * h * w;
        for (index_t d = 0; d < D; ++d) {
            const T* plane = input.data() + d * h * w;
            const T* k = kernel.data() + (c * D + d) * 9;
            T* dplane = dinput->data() + d * h * w;
            T* dk = dkernel->data() + (c * D + d) * 9;
            for (index_t y = 0; y < h; ++y) {
                for (index_t x = 0; x < w; ++x) {
                    const T gv = gplane[y * w + x];
                    for (index_t ky = 0; ky < 3; ++ky) {
                        const index_t sy = y + ky - 1;
                        if (sy < 0 || sy >= h) {
                            continue;
                        }
                        for (index_t kx = 0; kx < 3; ++kx) {
                            const index_t sx = x + kx - 1;
                            if (sx < 0 || sx >= w) {
                                continue;
                            }
                            dplane[sy * w + sx] += k[ky * 3 + kx] * gv;
                            dk[ky * 3 + kx] += plane[sy * w + sx] * gv;
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor<T> conv1d_k3(const Tensor<T>& input, const Tensor<T>& kernel) {
    if (input.rank() != 2) {
        throw ShapeError("conv1d_k3: input must be [D,N], got " + shape_str(input.shape()));
    }
    if (kernel.rank() != 3 || kernel.dim(2) != 3) {
        throw ShapeError("conv1d_k3: kernel must be [C,D,3], got " + shape_str(kernel.shape()));
    }
    if (kernel.dim(1) != input.dim(0)) {
        throw ShapeError("conv1d_k3: kernel channels " + std::to_string(kernel.dim(1)) +
                         " do not match input channels " + std::to_string(input.dim(0)));
    }
    const index_t D = input.dim(0), N = input.dim(1), C = kernel.dim(0);
    Tensor<T> out({C, N});
    for (index_t c = 0; c < C; ++c) {
        for (index_t d = 0; d < D; ++d) {
            const T* row = input.data() + d * N;
            const T* k = kernel.data() + (c * D + d) * 3;
            T* orow = out.data() + c * N;
            for (index_t n = 0; n < N; ++n) {
                T acc = T(0);
                for (index_t o = 0; o < 3; ++o) {
                    const index_t s = n + o - 1;
                    if (s < 0 || s >= N) {
                        continue;
                    }
                    acc += row[s] * k[o];
                }
                orow[n] += acc;
            }
        }
    }
    return out;
}

template <typename T>
void conv1d_k3_backward(const Tensor<T>& g, const Tensor<T>& input, const Tensor<T>& kernel,
                        Tensor<T>* dinput, Tensor<T>* dkernel) {
    const index_t D = input.dim(0), N = input.dim(1), C = kernel.dim(0);
    *dinput = Tensor<T>(input.shape());
    *dkernel = Tensor<T>(kernel.shape());
    for (index_t c = 0; c < C; ++c) {
        const T* grow = g.data() + c * N;
        for (index_t d = 0; d < D; ++d) {
            const T* row = input.data() + d * N;
            const T* k = kernel.data() + (c * D + d) * 3;
            T* drow = dinput->data() + d * N;
            T* dk = dkernel->data() + (c * D + d) * 3;
            for (index_t n = 0; n < N; ++n) {
                const T gv = grow[n];
                for (index_t o = 0; o < 3; ++o) {
                    const index_t s = n + o - 1;
                    if (s < 0 || s >= N) {
                        continue;
                    }
                    drow[s] += k[o] * gv;
                    dk[o] += row[s] * gv;
                }
            }
        }
    }
}

template <typename T>
Tensor<T> mean_spatial(const Tensor<T>& maps) {
    if (maps.rank() != 3) {
        throw ShapeError("mean_spatial: expected [C,h,w], got " + shape_str(maps.shape()));
    }
    const index_t C = maps.dim(0), hw = maps.dim(1) * maps.dim(2);
    Tensor<T> out({C});
    for (index_t c = 0; c < C; ++c) {
        const T* plane = maps.data() + c * hw;
        T acc = T(0);
        for (index_t i = 0; i < hw; ++i) {
            acc += plane[i];
        }
        out[c] = acc / T(hw);
    }
    return out;
}

template <typename T>
std::pair<T, Tensor<T>> cross_entropy(const Tensor<T>& logits, index_t label) {
    if (logits.rank() != 1) {
        throw ShapeError("cross_entropy: logits must be [C], got " + shape_str(logits.shape()));
    }
    const index_t C = logits.dim(0);
    if (label < 0 || label >= C) {
        throw ValueError("cross_entropy: label " + std::to_string(label) + " out of range [0, " +
                         std::to_string(C) + ")");
    }
    T mx = logits[0];
    for (index_t c = 1; c < C; ++c) {
        mx = std::max(mx, logits[c]);
    }
    Tensor<T> probs({C});
    T sum = T(0);
    for (index_t c = 0; c < C; ++c) {
        probs[c] = std::exp(logits[c] - mx);
        sum += probs[c];
    }
    const T inv = T(1) / sum;
    for (index_t c = 0; c < C; ++c) {
        probs[c] *= inv;
    }
    const T loss = std::log(sum) - (logits[label] - mx);
    return {loss, std::move(probs)};
}

template <typename T>
Tensor<T> cross_entropy_backward(T g, const Tensor<T>& probs, index_t label) {
    Tensor<T> dlogits = probs;
    dlogits[label] -= T(1);
    for (T& v : dlogits.values()) {
        v *= g;
    }
    return dlogits;
}

#define TSCAM_INSTANTIATE_OPS(T)                                                               \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                         \
    template std::pair<Tensor<T>, Tensor<T>> matmul_backward<T>(const Tensor<T>&,             \
                                                                const Tensor<T>&,             \
                                                                const Tensor<T>&);            \
    template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template std::pair<Tensor<T>, Tensor<T>> matmul_nt_backward<T>(const Tensor<T>&,          \
                                                                   const Tensor<T>&,          \
                                                                   const Tensor<T>&);         \
    template Tensor<T> transpose<T>(const Tensor<T>&);                                        \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                         \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                     \
    template Tensor<T> softmax_rows_backward<T>(const Tensor<T>&, const Tensor<T>&);          \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
    template void layer_norm_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                         T, Tensor<T>*, Tensor<T>*, Tensor<T>*);              \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                             \
    template Tensor<T> gelu_backward<T>(const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> conv2d_3x3<T>(const Tensor<T>&, const Tensor<T>&);                     \
    template void conv2d_3x3_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                         Tensor<T>*, Tensor<T>*);                             \
    template Tensor<T> conv1d_k3<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template void conv1d_k3_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        Tensor<T>*, Tensor<T>*);                              \
    template Tensor<T> mean_spatial<T>(const Tensor<T>&);                                     \
    template std::pair<T, Tensor<T>> cross_entropy<T>(const Tensor<T>&, index_t);             \
    template Tensor<T> cross_entropy_backward<T>(T, const Tensor<T>&, index_t);

TSCAM_INSTANTIATE_OPS(float)
TSCAM_INSTANTIATE_OPS(double)

#undef TSCAM_INSTANTIATE_OPS

}  // namespace tscam::ops
