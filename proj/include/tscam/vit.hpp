#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tscam/autograd.hpp"
#include "tscam/tensor.hpp"

namespace tscam {

// Classification layer used for semantic re-allocation. Conv2D is the default.
enum class HeadVariant { Conv2D, Conv1D, FC };

const char* head_variant_name(HeadVariant v);
HeadVariant head_variant_from_name(const std::string& name);

struct VitConfig {
    index_t image_size = 64;  // W == H
    index_t patch_size = 8;   // P
    index_t depth = 4;        // L transformer blocks
    index_t heads = 4;        // K
    index_t embed_dim = 64;   // D
    double mlp_ratio = 4.0;
    index_t num_classes = 4;  // C

    index_t grid() const { return image_size / patch_size; }
    index_t num_patches() const { return grid() * grid(); }   // N
    index_t head_dim() const { return embed_dim / heads; }    // D' = D/K
    index_t mlp_hidden() const { return static_cast<index_t>(embed_dim * mlp_ratio); }

    void validate() const;

    nlohmann::json to_json() const;
    static VitConfig from_json(const nlohmann::json& j);

    bool operator==(const VitConfig&) const = default;
};

template <typename T>
struct VitParams {
    VitConfig config;
    HeadVariant head_variant = HeadVariant::Conv2D;

    Var<T> patch_proj;  // [3*P*P, D]
    Var<T> cls_token;   // [1, D]
    Var<T> pos_embed;   // [N+1, D]

    struct Block {
        Var<T> ln1_weight, ln1_bias;    // [D]
        Var<T> qkv_weight, qkv_bias;    // [D, 3D], [3D]
        Var<T> proj_weight, proj_bias;  // [D, D], [D]
        Var<T> ln2_weight, ln2_bias;    // [D]
        Var<T> mlp1_weight, mlp1_bias;  // [D, hidden], [hidden]
        Var<T> mlp2_weight, mlp2_bias;  // [hidden, D], [D]
    };
    std::vector<Block> blocks;

    Var<T> norm_weight, norm_bias;  // final layer norm [D]

    // Semantic re-allocation head; shape depends on the variant:
    // Conv2D [C,D,3,3], Conv1D [C,D,3], FC [C,D].
    Var<T> head_kernel;

    // Baseline class-token head (single linear layer).
    Var<T> head_weight;  // [D, C]
    Var<T> head_bias;    // [C]

    // Canonical checkpoint order.
    std::vector<std::pair<std::string, Var<T>>> named_params() const;
    void zero_grad();
    VitParams clone() const;
};

template <typename T>
VitParams<T> init_params(const VitConfig& config, HeadVariant variant, std::uint64_t seed);

// Head-averaged attention matrices per layer plus the class-token rows
// extracted from them (row 0).
template <typename T>
struct AttentionRecord {
    std::vector<Tensor<T>> layers;    // each [(N+1),(N+1)], rows sum to 1
    std::vector<Tensor<T>> cls_rows;  // each [N+1]

    index_t depth() const { return static_cast<index_t>(layers.size()); }
};

// [3,H,W] -> [N, 3*P*P]; patches enumerated row-major, flattened channel-major.
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, index_t patch_size);

// Projects patches, prepends the class token, adds the position embedding.
template <typename T>
Var<T> embed(Tape<T>& tape, const Tensor<T>& patches, const VitParams<T>& params);

// Pre-norm residual block. Also returns the head-averaged attention matrix.
template <typename T>
std::pair<Var<T>, Tensor<T>> block_forward(Tape<T>& tape, const Var<T>& state,
                                           const typename VitParams<T>::Block& block,
                                           index_t heads);

template <typename T>
struct VitForward {
    Var<T> tokens;  // [(N+1), D] after the final layer norm
    AttentionRecord<T> attention;
};

template <typename T>
VitForward<T> vit_forward(Tape<T>& tape, const Tensor<T>& image, const VitParams<T>& params);

// Baseline class-token classification loss, -log p_y.
template <typename T>
Var<T> classification_loss(Tape<T>& tape, const Var<T>& tokens, const VitParams<T>& params,
                           index_t label, Tensor<std::type_identity_t<T>>* probs_out = nullptr);

// Inference-only probabilities from the class token, [1, C].
template <typename T>
Tensor<T> classify_class_token(const Tensor<T>& t_star, const VitParams<T>& params);

struct SummaryRow {
    std::string name;
    std::vector<index_t> shape;
    index_t count = 0;
};

struct ModelSummary {
    std::vector<SummaryRow> rows;
    index_t total = 0;

    std::string table() const;
};

template <typename T>
ModelSummary model_summary(const VitParams<T>& params);

}  // namespace tscam
