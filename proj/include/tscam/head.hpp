#pragma once

#include <string>
#include <vector>

#include "tscam/autograd.hpp"
#include "tscam/box.hpp"
#include "tscam/vit.hpp"

namespace tscam {

// Semantic re-allocation: patch tokens [N,D] -> per-class maps [C,h,w].
// Tokens are transposed to [D,N], reshaped row-major to the patch grid, then
// passed through the configured classification layer.
template <typename T>
Var<T> semantic_maps(Tape<T>& tape, const Var<T>& patch_tokens, const Var<T>& kernel,
                     HeadVariant variant, index_t grid_h, index_t grid_w);

// Cross-entropy over spatially mean-pooled class scores. probs_out receives
// the class probability vector p'.
template <typename T>
Var<T> semantic_loss(Tape<T>& tape, const Var<T>& maps, index_t label,
                     Tensor<std::type_identity_t<T>>* probs_out = nullptr);

// Mean of the class-token attention rows over layers [layer_lo, layer_hi]
// (1-based, inclusive), class-token entry dropped, reshaped to the grid.
template <typename T>
Tensor<double> aggregate_attention(const AttentionRecord<T>& record, index_t layer_lo,
                                   index_t layer_hi, index_t grid_h, index_t grid_w);

// Element-wise coupling of the attention map with one class map.
Tensor<double> couple(const Tensor<double>& attn_map, const Tensor<double>& class_map);

// Bilinear upsampling to [out_h, out_w] followed by min-max normalization to
// [0,1]; a constant map normalizes to all zeros.
Tensor<double> postprocess(const Tensor<double>& map, index_t out_h, index_t out_w);

// Binarizes at tau * max, labels components with 8-connectivity and returns
// the tight box of the largest one.
Box extract_bbox(const Tensor<double>& map, double tau);

// [n,D] -> [n,n] cosine similarities; rejects zero rows.
Tensor<double> cosine_similarity_matrix(const Tensor<double>& vectors);

enum class LocalizeMode { TSCAM, TransAttention, TransCAM };

const char* localize_mode_name(LocalizeMode m);
LocalizeMode localize_mode_from_name(const std::string& name);

// One forward pass worth of inference state, shared by all modes and classes.
struct InferenceOutput {
    std::vector<double> probs;      // C entries from the semantic head
    std::vector<index_t> ranking;   // class ids by descending probability
    Tensor<double> attn_map;        // [h,w]
    Tensor<double> semantic;        // [C,h,w]
    Tensor<double> patch_tokens;    // [N,D] final-layer patch embeddings
    Tensor<double> cls_token;       // [1,D]
};

template <typename T>
InferenceOutput run_inference(const Tensor<T>& image, const VitParams<T>& params,
                              index_t layer_lo, index_t layer_hi);

// Raw (pre-postprocess) localization map of one class under a mode.
Tensor<double> class_map(const InferenceOutput& out, LocalizeMode mode, index_t cls);

struct LocalizationResult {
    std::vector<double> probs;
    std::vector<index_t> ranking;
    index_t cls = 0;      // class the map belongs to
    Tensor<double> map;   // [H,W], normalized
    Box box;
};

// Full pipeline for one class (default: the top-scored one).
LocalizationResult localize_class(const InferenceOutput& out, LocalizeMode mode, index_t cls,
                                  double tau, index_t out_h, index_t out_w);

template <typename T>
LocalizationResult localize(const Tensor<T>& image, const VitParams<T>& params,
                            LocalizeMode mode, double tau, index_t layer_lo, index_t layer_hi);

}  // namespace tscam
