#include "tscam/vit.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "tscam/rng.hpp"

namespace tscam {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

const char* head_variant_name(HeadVariant v) {
    switch (v) {
        case HeadVariant::Conv2D:
            return "conv2d";
        case HeadVariant::Conv1D:
            return "conv1d";
        case HeadVariant::FC:
            return "fc";
    }
    return "conv2d";
}

HeadVariant head_variant_from_name(const std::string& name) {
    if (name == "conv2d") {
        return HeadVariant::Conv2D;
    }
    if (name == "conv1d") {
        return HeadVariant::Conv1D;
    }
    if (name == "fc") {
        return HeadVariant::FC;
    }
    throw ConfigError("unknown head variant '" + name + "' (expected conv2d, conv1d or fc)");
}

void VitConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || depth <= 0 || heads <= 0 || embed_dim <= 0 ||
        num_classes <= 0) {
        throw ConfigError("vit config extents must be positive");
    }
    if (image_size % patch_size != 0) {
        throw ConfigError("image size " + std::to_string(image_size) +
                          " is not divisible by patch size " + std::to_string(patch_size));
    }
    if (embed_dim % heads != 0) {
        throw ConfigError("embed dim " + std::to_string(embed_dim) +
                          " is not divisible by head count " + std::to_string(heads));
    }
    if (mlp_ratio <= 0.0 || mlp_hidden() <= 0) {
        throw ConfigError("mlp ratio must be positive");
    }
}

nlohmann::json VitConfig::to_json() const {
    return {{"image_size", image_size}, {"patch_size", patch_size}, {"depth", depth},
            {"heads", heads},           {"embed_dim", embed_dim},   {"mlp_ratio", mlp_ratio},
            {"num_classes", num_classes}};
}

VitConfig VitConfig::from_json(const nlohmann::json& j) {
    VitConfig c;
    c.image_size = j.at("image_size").get<index_t>();
    c.patch_size = j.at("patch_size").get<index_t>();
    c.depth = j.at("depth").get<index_t>();
    c.heads = j.at("heads").get<index_t>();
    c.embed_dim = j.at("embed_dim").get<index_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<double>();
    c.num_classes = j.at("num_classes").get<index_t>();
    c.validate();
    return c;
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> VitParams<T>::named_params() const {
    std::vector<std::pair<std::string, Var<T>>> out;
    out.emplace_back("patch_proj", patch_proj);
    out.emplace_back("cls_token", cls_token);
    out.emplace_back("pos_embed", pos_embed);
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        const Block& b = blocks[l];
        out.emplace_back(p + "ln1.weight", b.ln1_weight);
        out.emplace_back(p + "ln1.bias", b.ln1_bias);
        out.emplace_back(p + "qkv.weight", b.qkv_weight);
        out.emplace_back(p + "qkv.bias", b.qkv_bias);
        out.emplace_back(p + "proj.weight", b.proj_weight);
        out.emplace_back(p + "proj.bias", b.proj_bias);
        out.emplace_back(p + "ln2.weight", b.ln2_weight);
        out.emplace_back(p + "ln2.bias", b.ln2_bias);
        out.emplace_back(p + "mlp1.weight", b.mlp1_weight);
        out.emplace_back(p + "mlp1.bias", b.mlp1_bias);
        out.emplace_back(p + "mlp2.weight", b.mlp2_weight);
        out.emplace_back(p + "mlp2.bias", b.mlp2_bias);
    }
    out.emplace_back("norm.weight", norm_weight);
    out.emplace_back("norm.bias", norm_bias);
    out.emplace_back("head.kernel", head_kernel);
    out.emplace_back("head.weight", head_weight);
    out.emplace_back("head.bias", head_bias);
    return out;
}

template <typename T>
void VitParams<T>::zero_grad() {
    for (auto& [name, var] : named_params()) {
        (void)name;
        for (T& v : var->grad.values()) {
            v = T(0);
        }
    }
}

template <typename T>
VitParams<T> VitParams<T>::clone() const {
    VitParams<T> out;
    out.config = config;
    out.head_variant = head_variant;
    auto copy = [](const Var<T>& v) { return make_var(v->value, v->requires_grad); };
    out.patch_proj = copy(patch_proj);
    out.cls_token = copy(cls_token);
    out.pos_embed = copy(pos_embed);
    out.blocks.reserve(blocks.size());
    for (const Block& b : blocks) {
        out.blocks.push_back(Block{copy(b.ln1_weight), copy(b.ln1_bias), copy(b.qkv_weight),
                                   copy(b.qkv_bias), copy(b.proj_weight), copy(b.proj_bias),
                                   copy(b.ln2_weight), copy(b.ln2_bias), copy(b.mlp1_weight),
                                   copy(b.mlp1_bias), copy(b.mlp2_weight), copy(b.mlp2_bias)});
    }
    out.norm_weight = copy(norm_weight);
    out.norm_bias = copy(norm_bias);
    out.head_kernel = copy(head_kernel);
    out.head_weight = copy(head_weight);
    out.head_bias = copy(head_bias);
    return out;
}

template <typename T>
VitParams<T> init_params(const VitConfig& config, HeadVariant variant, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);

    auto trunc = [&rng](std::vector<index_t> shape) {
        Tensor<T> t(std::move(shape));
        for (T& v : t.values()) {
            v = static_cast<T>(rng.trunc_normal(0.0, 0.02));
        }
        return make_var(std::move(t), true);
    };
    auto gauss = [&rng](std::vector<index_t> shape) {
        Tensor<T> t(std::move(shape));
        for (T& v : t.values()) {
            v = static_cast<T>(rng.normal(0.0, 0.02));
        }
        return make_var(std::move(t), true);
    };
    auto zeros = [](std::vector<index_t> shape) {
        return make_var(Tensor<T>(std::move(shape)), true);
    };
    auto ones = [](std::vector<index_t> shape) {
        return make_var(Tensor<T>::full(std::move(shape), T(1)), true);
    };

    const index_t D = config.embed_dim;
    const index_t C = config.num_classes;
    const index_t H = config.mlp_hidden();
    const index_t N = config.num_patches();
    const index_t patch_dim = 3 * config.patch_size * config.patch_size;

    VitParams<T> p;
    p.config = config;
    p.head_variant = variant;
    p.patch_proj = trunc({patch_dim, D});
    p.cls_token = gauss({1, D});
    p.pos_embed = gauss({N + 1, D});
    p.blocks.reserve(static_cast<std::size_t>(config.depth));
    for (index_t l = 0; l < config.depth; ++l) {
        typename VitParams<T>::Block b;
        b.ln1_weight = ones({D});
        b.ln1_bias = zeros({D});
        b.qkv_weight = trunc({D, 3 * D});
        b.qkv_bias = zeros({3 * D});
        b.proj_weight = trunc({D, D});
        b.proj_bias = zeros({D});
        b.ln2_weight = ones({D});
        b.ln2_bias = zeros({D});
        b.mlp1_weight = trunc({D, H});
        b.mlp1_bias = zeros({H});
        b.mlp2_weight = trunc({H, D});
        b.mlp2_bias = zeros({D});
        p.blocks.push_back(std::move(b));
    }
    p.norm_weight = ones({D});
    p.norm_bias = zeros({D});

    // Semantic head: He initialization, fan-in variance scaling.
    std::vector<index_t> kshape;
    switch (variant) {
        case HeadVariant::Conv2D:
            kshape = {C, D, 3, 3};
            break;
        case HeadVariant::Conv1D:
            kshape = {C, D, 3};
            break;
        case HeadVariant::FC:
            kshape = {C, D};
            break;
    }
    index_t fan_in = D;
    for (std::size_t i = 2; i < kshape.size(); ++i) {
        fan_in *= kshape[i];
    }
    const double he_std = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor<T> kernel(kshape);
    for (T& v : kernel.values()) {
        v = static_cast<T>(rng.normal(0.0, he_std));
    }
    p.head_kernel = make_var(std::move(kernel), true);

    p.head_weight = trunc({D, C});
    p.head_bias = zeros({C});
    return p;
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, index_t patch_size) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError("patchify: expected [3,H,W], got " + shape_str(image.shape()));
    }
    const index_t h = image.dim(1), w = image.dim(2), P = patch_size;
    if (P <= 0 || h % P != 0 || w % P != 0) {
        throw ConfigError("patchify: image " + std::to_string(w) + "x" + std::to_string(h) +
                          " is not divisible by patch size " + std::to_string(P));
    }
    const index_t gh = h / P, gw = w / P;
    Tensor<T> patches({gh * gw, 3 * P * P});
    for (index_t gy = 0; gy < gh; ++gy) {
        for (index_t gx = 0; gx < gw; ++gx) {
            T* row = patches.data() + (gy * gw + gx) * (3 * P * P);
            for (index_t c = 0; c < 3; ++c) {
                for (index_t py = 0; py < P; ++py) {
                    for (index_t px = 0; px < P; ++px) {
                        row[(c * P + py) * P + px] = image(c, gy * P + py, gx * P + px);
                    }
                }
            }
        }
    }
    return patches;
}

template <typename T>
Var<T> embed(Tape<T>& tape, const Tensor<T>& patches, const VitParams<T>& params) {
    const index_t N = params.config.num_patches();
    const index_t D = params.config.embed_dim;
    if (patches.rank() != 2 || patches.dim(0) != N ||
        patches.dim(1) != params.patch_proj->value.dim(0)) {
        throw ShapeError("embed: patches " + shape_str(patches.shape()) +
                         " do not match projection " + shape_str(params.patch_proj->value.shape()));
    }
    Var<T> projected = matmul(tape, constant(patches), params.patch_proj);  // [N, D]
    Var<T> tokens = concat_rows(tape, {params.cls_token, projected});       // [N+1, D]
    if (params.pos_embed->value.dim(0) != N + 1 || params.pos_embed->value.dim(1) != D) {
        throw ShapeError("embed: position embedding has shape " +
                         shape_str(params.pos_embed->value.shape()));
    }
    return add(tape, tokens, params.pos_embed);
}

template <typename T>
std::pair<Var<T>, Tensor<T>> block_forward(Tape<T>& tape, const Var<T>& state,
                                           const typename VitParams<T>::Block& block,
                                           index_t heads) {
    const index_t D = state->value.dim(1);
    const index_t Dh = D / heads;

    Var<T> normed = layer_norm(tape, state, block.ln1_weight, block.ln1_bias, T(kLayerNormEps));
    Var<T> qkv = add_bias(tape, matmul(tape, normed, block.qkv_weight), block.qkv_bias);
    Var<T> q = slice_cols(tape, qkv, 0, D);
    Var<T> k = slice_cols(tape, qkv, D, 2 * D);
    Var<T> v = slice_cols(tape, qkv, 2 * D, 3 * D);

    const index_t tokens = state->value.dim(0);
    Tensor<T> mean_attn({tokens, tokens});
    std::vector<Var<T>> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(heads));
    const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(Dh)));
    for (index_t h = 0; h < heads; ++h) {
        Var<T> qh = slice_cols(tape, q, h * Dh, (h + 1) * Dh);
        Var<T> kh = slice_cols(tape, k, h * Dh, (h + 1) * Dh);
        Var<T> vh = slice_cols(tape, v, h * Dh, (h + 1) * Dh);
        Var<T> scores = scale(tape, matmul_nt(tape, qh, kh), inv_sqrt);
        Var<T> attn = softmax_rows(tape, scores);
        for (index_t i = 0; i < mean_attn.size(); ++i) {
            mean_attn[i] += attn->value[i];
        }
        head_outputs.push_back(matmul(tape, attn, vh));
    }
    const T inv_heads = T(1) / static_cast<T>(heads);
    for (T& x : mean_attn.values()) {
        x *= inv_heads;
    }

    Var<T> merged = concat_cols(tape, head_outputs);
    Var<T> projected = add_bias(tape, matmul(tape, merged, block.proj_weight), block.proj_bias);
    Var<T> with_attn = add(tape, state, projected);

    Var<T> normed2 =
        layer_norm(tape, with_attn, block.ln2_weight, block.ln2_bias, T(kLayerNormEps));
    Var<T> hidden = gelu(tape, add_bias(tape, matmul(tape, normed2, block.mlp1_weight),
                                        block.mlp1_bias));
    Var<T> mlp_out = add_bias(tape, matmul(tape, hidden, block.mlp2_weight), block.mlp2_bias);
    Var<T> out = add(tape, with_attn, mlp_out);
    return {out, std::move(mean_attn)};
}

template <typename T>
VitForward<T> vit_forward(Tape<T>& tape, const Tensor<T>& image, const VitParams<T>& params) {
    const index_t expect = params.config.image_size;
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != expect ||
        image.dim(2) != expect) {
        throw ShapeError("vit_forward: image " + shape_str(image.shape()) +
                         " does not match configured size " + std::to_string(expect));
    }
    Tensor<T> patches = patchify(image, params.config.patch_size);
    Var<T> tokens = embed(tape, patches, params);

    VitForward<T> result;
    result.attention.layers.reserve(params.blocks.size());
    result.attention.cls_rows.reserve(params.blocks.size());
    for (const auto& block : params.blocks) {
        auto [next, attn] = block_forward(tape, tokens, block, params.config.heads);
        tokens = next;
        const index_t n = attn.dim(1);
        Tensor<T> cls_row({n});
        std::copy(attn.data(), attn.data() + n, cls_row.data());
        result.attention.layers.push_back(std::move(attn));
        result.attention.cls_rows.push_back(std::move(cls_row));
    }
    result.tokens = layer_norm(tape, tokens, params.norm_weight, params.norm_bias,
                               T(kLayerNormEps));
    return result;
}

template <typename T>
Var<T> classification_loss(Tape<T>& tape, const Var<T>& tokens, const VitParams<T>& params,
                           index_t label, Tensor<std::type_identity_t<T>>* probs_out) {
    const index_t C = params.config.num_classes;
    if (label < 0 || label >= C) {
        throw ValueError("classification_loss: label " + std::to_string(label) +
                         " out of range [0, " + std::to_string(C) + ")");
    }
    Var<T> t_star = slice_rows(tape, tokens, 0, 1);
    Var<T> logits = add_bias(tape, matmul(tape, t_star, params.head_weight), params.head_bias);
    Var<T> flat = reshape(tape, logits, {C});
    Tensor<T> probs;
    Var<T> loss = cross_entropy(tape, flat, label, &probs);
    if (probs_out) {
        *probs_out = probs.reshaped({1, C});
    }
    return loss;
}

template <typename T>
Tensor<T> classify_class_token(const Tensor<T>& t_star, const VitParams<T>& params) {
    if (t_star.rank() != 2 || t_star.dim(0) != 1 ||
        t_star.dim(1) != params.config.embed_dim) {
        throw ShapeError("classify_class_token: expected [1,D], got " + shape_str(t_star.shape()));
    }
    Tensor<T> logits =
        ops::add_bias(ops::matmul(t_star, params.head_weight->value), params.head_bias->value);
    return ops::softmax_rows(logits);
}

std::string ModelSummary::table() const {
    std::size_t name_w = 4;
    for (const auto& row : rows) {
        name_w = std::max(name_w, row.name.size());
    }
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "name" << std::setw(16)
       << "shape" << "params\n";
    for (const auto& row : rows) {
        os << std::left << std::setw(static_cast<int>(name_w) + 2) << row.name << std::setw(16)
           << shape_str(row.shape) << row.count << "\n";
    }
    os << "total " << total << "\n";
    return os.str();
}

template <typename T>
ModelSummary model_summary(const VitParams<T>& params) {
    ModelSummary s;
    for (const auto& [name, var] : params.named_params()) {
        s.rows.push_back({name, var->value.shape(), var->value.size()});
        s.total += var->value.size();
    }
    return s;
}

#define TSCAM_INSTANTIATE_VIT(T)                                                                \
    template struct VitParams<T>;                                                              \
    template VitParams<T> init_params<T>(const VitConfig&, HeadVariant, std::uint64_t);        \
    template Tensor<T> patchify<T>(const Tensor<T>&, index_t);                                 \
    template Var<T> embed<T>(Tape<T>&, const Tensor<T>&, const VitParams<T>&);                 \
    template std::pair<Var<T>, Tensor<T>> block_forward<T>(                                    \
        Tape<T>&, const Var<T>&, const typename VitParams<T>::Block&, index_t);                \
    template VitForward<T> vit_forward<T>(Tape<T>&, const Tensor<T>&, const VitParams<T>&);    \
    template Var<T> classification_loss<T>(Tape<T>&, const Var<T>&, const VitParams<T>&,       \
                                           index_t, Tensor<std::type_identity_t<T>>*);                               \
    template Tensor<T> classify_class_token<T>(const Tensor<T>&, const VitParams<T>&);         \
    template ModelSummary model_summary<T>(const VitParams<T>&);

TSCAM_INSTANTIATE_VIT(float)
TSCAM_INSTANTIATE_VIT(double)

#undef TSCAM_INSTANTIATE_VIT

}  // namespace tscam
