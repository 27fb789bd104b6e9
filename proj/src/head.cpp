#include "tscam/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tscam/image.hpp"

namespace tscam {

template <typename T>
Var<T> semantic_maps(Tape<T>& tape, const Var<T>& patch_tokens, const Var<T>& kernel,
                     HeadVariant variant, index_t grid_h, index_t grid_w) {
    const Tensor<T>& tok = patch_tokens->value;
    if (tok.rank() != 2) {
        throw ShapeError("semantic_maps: patch tokens must be [N,D], got " +
                         shape_str(tok.shape()));
    }
    const index_t N = tok.dim(0);
    if (N != grid_h * grid_w) {
        throw ConfigError("semantic_maps: " + std::to_string(N) + " tokens do not form a " +
                          std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
    }
    Var<T> maps_t = transpose(tape, patch_tokens);  // [D, N]
    switch (variant) {
        case HeadVariant::Conv2D: {
            const index_t D = tok.dim(1);
            Var<T> grid = reshape(tape, maps_t, {D, grid_h, grid_w});
            return conv2d_3x3(tape, grid, kernel);
        }
        case HeadVariant::Conv1D: {
            Var<T> flat = conv1d_k3(tape, maps_t, kernel);  // [C, N]
            return reshape(tape, flat, {kernel->value.dim(0), grid_h, grid_w});
        }
        case HeadVariant::FC: {
            // Per-token linear map: S[C,N] = kernel[C,D] tokens[N,D]^T.
            Var<T> flat = matmul_nt(tape, kernel, patch_tokens);
            return reshape(tape, flat, {kernel->value.dim(0), grid_h, grid_w});
        }
    }
    throw ConfigError("semantic_maps: unknown head variant");
}

template <typename T>
Var<T> semantic_loss(Tape<T>& tape, const Var<T>& maps, index_t label,
                     Tensor<std::type_identity_t<T>>* probs_out) {
    const Tensor<T>& m = maps->value;
    if (m.rank() != 3) {
        throw ShapeError("semantic_loss: maps must be [C,h,w], got " + shape_str(m.shape()));
    }
    if (label < 0 || label >= m.dim(0)) {
        throw ValueError("semantic_loss: label " + std::to_string(label) + " out of range [0, " +
                         std::to_string(m.dim(0)) + ")");
    }
    Var<T> pooled = mean_spatial(tape, maps);  // [C]
    return cross_entropy(tape, pooled, label, probs_out);
}

template <typename T>
Tensor<double> aggregate_attention(const AttentionRecord<T>& record, index_t layer_lo,
                                   index_t layer_hi, index_t grid_h, index_t grid_w) {
    const index_t L = record.depth();
    if (layer_lo < 1 || layer_lo > layer_hi || layer_hi > L) {
        throw ConfigError("aggregate_attention: bad layer range [" + std::to_string(layer_lo) +
                          ", " + std::to_string(layer_hi) + "] for depth " + std::to_string(L));
    }
    const index_t N = grid_h * grid_w;
    const Tensor<T>& first = record.cls_rows[static_cast<std::size_t>(layer_lo - 1)];
    if (first.size() != N + 1) {
        throw ShapeError("aggregate_attention: class rows have " + std::to_string(first.size()) +
                         " entries, expected " + std::to_string(N + 1));
    }
    Tensor<double> map({grid_h, grid_w});
    const double inv = 1.0 / static_cast<double>(layer_hi - layer_lo + 1);
    for (index_t l = layer_lo - 1; l < layer_hi; ++l) {
        const Tensor<T>& row = record.cls_rows[static_cast<std::size_t>(l)];
        // Entry 0 is the class token's self-attention; the grid holds the
        // N patch entries.
        for (index_t n = 0; n < N; ++n) {
            map[n] += static_cast<double>(row[n + 1]) * inv;
        }
    }
    return map;
}

Tensor<double> couple(const Tensor<double>& attn_map, const Tensor<double>& class_map) {
    if (!attn_map.same_shape(class_map)) {
        throw ShapeError("couple: attention map " + shape_str(attn_map.shape()) +
                         " does not match class map " + shape_str(class_map.shape()));
    }
    return ops::mul(attn_map, class_map);
}

Tensor<double> postprocess(const Tensor<double>& map, index_t out_h, index_t out_w) {
    if (map.rank() != 2) {
        throw ShapeError("postprocess: expected [h,w], got " + shape_str(map.shape()));
    }
    Tensor<double> up =
        bilinear_resize(map.reshaped({1, map.dim(0), map.dim(1)}), out_h, out_w)
            .reshaped({out_h, out_w});
    double lo = up[0], hi = up[0];
    for (const double v : up.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) {
        // Degenerate constant map.
        return Tensor<double>({out_h, out_w});
    }
    const double inv = 1.0 / (hi - lo);
    for (double& v : up.values()) {
        v = (v - lo) * inv;
    }
    return up;
}

Box extract_bbox(const Tensor<double>& map, double tau) {
    if (map.rank() != 2) {
        throw ShapeError("extract_bbox: expected [H,W], got " + shape_str(map.shape()));
    }
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ValueError("extract_bbox: tau must lie in (0,1), got " + std::to_string(tau));
    }
    const index_t h = map.dim(0), w = map.dim(1);
    double mx = map[0];
    for (const double v : map.values()) {
        mx = std::max(mx, v);
    }
    const double threshold = tau * mx;

    std::vector<std::uint8_t> fg(static_cast<std::size_t>(h * w), 0);
    bool any = false;
    for (index_t i = 0; i < h * w; ++i) {
        if (map[i] > threshold) {
            fg[static_cast<std::size_t>(i)] = 1;
            any = true;
        }
    }
    if (!any) {
        throw NoForegroundError("extract_bbox: thresholding left no foreground pixels");
    }

    // 8-connected component labeling; keep the largest area (first in raster
    // order on ties).
    std::vector<std::int32_t> label(static_cast<std::size_t>(h * w), -1);
    std::vector<index_t> stack;
    Box best{};
    long long best_area = 0;
    std::int32_t next_label = 0;
    for (index_t start = 0; start < h * w; ++start) {
        if (!fg[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) {
            continue;
        }
        long long area = 0;
        index_t min_x = w, max_x = -1, min_y = h, max_y = -1;
        stack.clear();
        stack.push_back(start);
        label[static_cast<std::size_t>(start)] = next_label;
        while (!stack.empty()) {
            const index_t cur = stack.back();
            stack.pop_back();
            const index_t cy = cur / w, cx = cur % w;
            ++area;
            min_x = std::min(min_x, cx);
            max_x = std::max(max_x, cx);
            min_y = std::min(min_y, cy);
            max_y = std::max(max_y, cy);
            for (index_t dy = -1; dy <= 1; ++dy) {
                for (index_t dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) {
                        continue;
                    }
                    const index_t ny = cy + dy, nx = cx + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) {
                        continue;
                    }
                    const index_t ni = ny * w + nx;
                    if (fg[static_cast<std::size_t>(ni)] &&
                        label[static_cast<std::size_t>(ni)] < 0) {
                        label[static_cast<std::size_t>(ni)] = next_label;
                        stack.push_back(ni);
                    }
                }
            }
        }
        if (area > best_area) {
            best_area = area;
            best = Box{static_cast<int>(min_x), static_cast<int>(min_y),
                       static_cast<int>(max_x + 1), static_cast<int>(max_y + 1)};
        }
        ++next_label;
    }
    return best;
}

Tensor<double> cosine_similarity_matrix(const Tensor<double>& vectors) {
    if (vectors.rank() != 2) {
        throw ShapeError("cosine_similarity_matrix: expected [n,D], got " +
                         shape_str(vectors.shape()));
    }
    const index_t n = vectors.dim(0), d = vectors.dim(1);
    std::vector<double> norms(static_cast<std::size_t>(n));
    for (index_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (index_t j = 0; j < d; ++j) {
            acc += vectors(i, j) * vectors(i, j);
        }
        if (acc <= 0.0) {
            throw ValueError("cosine_similarity_matrix: row " + std::to_string(i) +
                             " has zero norm");
        }
        norms[static_cast<std::size_t>(i)] = std::sqrt(acc);
    }
    Tensor<double> sim({n, n});
    for (index_t i = 0; i < n; ++i) {
        sim(i, i) = 1.0;
        for (index_t j = i + 1; j < n; ++j) {
            double dot = 0.0;
            for (index_t k = 0; k < d; ++k) {
                dot += vectors(i, k) * vectors(j, k);
            }
            const double v =
                dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
            sim(i, j) = v;
            sim(j, i) = v;
        }
    }
    return sim;
}

const char* localize_mode_name(LocalizeMode m) {
    switch (m) {
        case LocalizeMode::TSCAM:
            return "tscam";
        case LocalizeMode::TransAttention:
            return "transattention";
        case LocalizeMode::TransCAM:
            return "transcam";
    }
    return "tscam";
}

LocalizeMode localize_mode_from_name(const std::string& name) {
    if (name == "tscam") {
        return LocalizeMode::TSCAM;
    }
    if (name == "transattention") {
        return LocalizeMode::TransAttention;
    }
    if (name == "transcam") {
        return LocalizeMode::TransCAM;
    }
    throw ConfigError("unknown mode '" + name +
                      "' (expected tscam, transattention or transcam)");
}

template <typename T>
InferenceOutput run_inference(const Tensor<T>& image, const VitParams<T>& params,
                              index_t layer_lo, index_t layer_hi) {
    const VitConfig& cfg = params.config;
    Tape<T> tape;  // discarded; inference needs no gradients
    VitForward<T> fwd = vit_forward(tape, image, params);
    const index_t N = cfg.num_patches();

    Var<T> patch_tokens = slice_rows(tape, fwd.tokens, 1, N + 1);
    Var<T> maps = semantic_maps(tape, patch_tokens, params.head_kernel, params.head_variant,
                                cfg.grid(), cfg.grid());
    Tensor<T> pooled = ops::mean_spatial(maps->value);
    Tensor<T> probs =
        ops::softmax_rows(pooled.reshaped({1, cfg.num_classes})).reshaped({cfg.num_classes});

    InferenceOutput out;
    out.probs.resize(static_cast<std::size_t>(cfg.num_classes));
    for (index_t c = 0; c < cfg.num_classes; ++c) {
        out.probs[static_cast<std::size_t>(c)] = static_cast<double>(probs[c]);
    }
    out.ranking.resize(static_cast<std::size_t>(cfg.num_classes));
    std::iota(out.ranking.begin(), out.ranking.end(), index_t(0));
    std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](index_t a, index_t b) {
        return out.probs[static_cast<std::size_t>(a)] > out.probs[static_cast<std::size_t>(b)];
    });
    out.attn_map = aggregate_attention(fwd.attention, layer_lo, layer_hi, cfg.grid(), cfg.grid());
    out.semantic = maps->value.template cast<double>();
    out.patch_tokens = patch_tokens->value.template cast<double>();
    out.cls_token = slice_rows(tape, fwd.tokens, 0, 1)->value.template cast<double>();
    return out;
}

Tensor<double> class_map(const InferenceOutput& out, LocalizeMode mode, index_t cls) {
    const index_t C = out.semantic.dim(0);
    if (cls < 0 || cls >= C) {
        throw ValueError("class_map: class " + std::to_string(cls) + " out of range [0, " +
                         std::to_string(C) + ")");
    }
    const index_t h = out.semantic.dim(1), w = out.semantic.dim(2);
    Tensor<double> s({h, w});
    std::copy(out.semantic.data() + cls * h * w, out.semantic.data() + (cls + 1) * h * w,
              s.data());
    switch (mode) {
        case LocalizeMode::TSCAM:
            return couple(out.attn_map, s);
        case LocalizeMode::TransAttention:
            return out.attn_map;  // class-agnostic by construction
        case LocalizeMode::TransCAM:
            return s;
    }
    throw ConfigError("class_map: unknown mode");
}

LocalizationResult localize_class(const InferenceOutput& out, LocalizeMode mode, index_t cls,
                                  double tau, index_t out_h, index_t out_w) {
    LocalizationResult res;
    res.probs = out.probs;
    res.ranking = out.ranking;
    res.cls = cls;
    res.map = postprocess(class_map(out, mode, cls), out_h, out_w);
    res.box = extract_bbox(res.map, tau);
    return res;
}

template <typename T>
LocalizationResult localize(const Tensor<T>& image, const VitParams<T>& params,
                            LocalizeMode mode, double tau, index_t layer_lo, index_t layer_hi) {
    InferenceOutput out = run_inference(image, params, layer_lo, layer_hi);
    return localize_class(out, mode, out.ranking[0], tau, params.config.image_size,
                          params.config.image_size);
}

#define TSCAM_INSTANTIATE_HEAD(T)                                                              \
    template Var<T> semantic_maps<T>(Tape<T>&, const Var<T>&, const Var<T>&, HeadVariant,      \
                                     index_t, index_t);                                        \
    template Var<T> semantic_loss<T>(Tape<T>&, const Var<T>&, index_t,                    \
                                     Tensor<std::type_identity_t<T>>*);            \
    template Tensor<double> aggregate_attention<T>(const AttentionRecord<T>&, index_t,         \
                                                   index_t, index_t, index_t);                 \
    template InferenceOutput run_inference<T>(const Tensor<T>&, const VitParams<T>&, index_t,  \
                                              index_t);                                        \
    template LocalizationResult localize<T>(const Tensor<T>&, const VitParams<T>&,             \
                                            LocalizeMode, double, index_t, index_t);

TSCAM_INSTANTIATE_HEAD(float)
TSCAM_INSTANTIATE_HEAD(double)

#undef TSCAM_INSTANTIATE_HEAD

}  // namespace tscam
