#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gcmr/nn_core.hpp"
#include "gcmr/rng.hpp"
#include "gcmr/tensor.hpp"

namespace gcmr {

// G x D token features of one example.
using FeatureGroup = Matrix;

// One labelled input: G raw tokens of width raw_dim. `id` keys per-example random streams.
struct RawExample {
    Matrix tokens;
    int label = 0;
    std::uint64_t id = 0;

    friend bool operator==(const RawExample&, const RawExample&) = default;
};

enum class Activation { identity, tanh };

// Per-token affine map raw_dim -> feature_dim followed by an activation.
struct EncoderParams {
    Matrix weight;  // raw_dim x feature_dim
    Vector bias;    // feature_dim
    Activation activation = Activation::tanh;
    NormKind norm = NormKind::layer;  // normalization applied after pooling
    bool frozen = false;

    std::size_t raw_dim() const { return weight.rows(); }
    std::size_t feature_dim() const { return weight.cols(); }

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Per-token affine map D -> D; masked positions are replaced by mask_token before decoding.
struct DecoderParams {
    Matrix weight;  // D x D
    Vector bias;
    Vector mask_token;

    std::size_t dim() const { return weight.rows(); }

    friend bool operator==(const DecoderParams&, const DecoderParams&) = default;
};

struct MaskPlan {
    std::vector<std::size_t> masked_indices;  // sorted, unique
    std::size_t group_size = 0;
    std::uint64_t seed = 0;
    double ratio = 0.0;

    bool is_masked(std::size_t token) const;
    std::size_t num_visible() const { return group_size - masked_indices.size(); }
};

enum class ReconScope { all_tokens, masked_only };

EncoderParams init_encoder(std::size_t raw_dim, std::size_t feature_dim, Rng& rng,
                           Activation activation = Activation::tanh);
EncoderParams identity_encoder(std::size_t dim);
DecoderParams init_decoder(std::size_t dim, Rng& rng);
DecoderParams identity_decoder(std::size_t dim);

FeatureGroup encode(const Matrix& raw, const EncoderParams& params);

// Number of masked tokens for a group of size g: round(ratio * g).
std::size_t masked_count(std::size_t group_size, double ratio);

// Masks a uniformly random subset of round(ratio * G) tokens chosen by `seed`; visible keeps token order.
std::pair<FeatureGroup, MaskPlan> mask_features(const FeatureGroup& group, double ratio, std::uint64_t seed);

// Scatters visible tokens back, fills masked slots with the mask token, then decodes every token.
FeatureGroup reconstruct(const FeatureGroup& visible, const MaskPlan& plan, const DecoderParams& dec);

// Mean over scored tokens of the squared L2 row error; zero when no token is scored.
double reconstruction_error(const FeatureGroup& reconstruction, const FeatureGroup& target, const MaskPlan& plan,
                            ReconScope scope);

// Mean-pool over tokens, then normalize. Requires G >= 2.
Vector pool_normalize(const FeatureGroup& group, NormKind norm = NormKind::layer);

}  // namespace gcmr
