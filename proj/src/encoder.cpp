#include "gcmr/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gcmr/error.hpp"

namespace gcmr {

bool MaskPlan::is_masked(std::size_t token) const {
    return std::binary_search(masked_indices.begin(), masked_indices.end(), token);
}

EncoderParams init_encoder(std::size_t raw_dim, std::size_t feature_dim, Rng& rng, Activation activation) {
    EncoderParams p{Matrix(raw_dim, feature_dim), Vector(feature_dim, 0.0), activation, NormKind::layer, false};
    const double scale = 1.0 / std::sqrt(static_cast<double>(raw_dim));
    for (double& w : p.weight.values()) w = scale * rng.normal();
    return p;
}

EncoderParams identity_encoder(std::size_t dim) {
    return EncoderParams{Matrix::identity(dim), Vector(dim, 0.0), Activation::identity, NormKind::layer, false};
}

DecoderParams init_decoder(std::size_t dim, Rng& rng) {
    DecoderParams p{Matrix(dim, dim), Vector(dim, 0.0), Vector(dim, 0.0)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& w : p.weight.values()) w = scale * rng.normal();
    return p;
}

DecoderParams identity_decoder(std::size_t dim) {
    return DecoderParams{Matrix::identity(dim), Vector(dim, 0.0), Vector(dim, 0.0)};
}

FeatureGroup encode(const Matrix& raw, const EncoderParams& params) {
    if (raw.rows() < 1) throw InvalidArgument("encode: empty token group");
    if (raw.cols() != params.raw_dim()) {
        throw DimensionMismatch("encode: raw tokens have width " + std::to_string(raw.cols()) + ", encoder expects " +
                                std::to_string(params.raw_dim()));
    }
    FeatureGroup out(raw.rows(), params.feature_dim());
    for (std::size_t r = 0; r < raw.rows(); ++r) {
        Vector z = affine_transposed(params.weight, raw.row(r), params.bias);
        if (params.activation == Activation::tanh) {
            for (double& v : z) v = std::tanh(v);
        }
        std::copy(z.begin(), z.end(), out.row(r).begin());
    }
    return out;
}

std::size_t masked_count(std::size_t group_size, double ratio) {
    return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(group_size)));
}

std::pair<FeatureGroup, MaskPlan> mask_features(const FeatureGroup& group, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0) || ratio >= 1.0) throw InvalidArgument("mask ratio must lie in [0, 1)");
    const std::size_t g = group.rows();
    const std::size_t m = masked_count(g, ratio);
    if (m >= g) {
        throw InvalidArgument("mask ratio " + std::to_string(ratio) + " masks all " + std::to_string(g) + " tokens");
    }
    std::vector<std::size_t> order(g);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    // Partial Fisher-Yates: the first m slots become a uniform m-subset.
    for (std::size_t i = 0; i < m; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(g - i));
        std::swap(order[i], order[j]);
    }
    MaskPlan plan{std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m)), g, seed,
                  ratio};
    std::sort(plan.masked_indices.begin(), plan.masked_indices.end());

    FeatureGroup visible(g - m, group.cols());
    std::size_t out = 0;
    for (std::size_t r = 0; r < g; ++r) {
        if (plan.is_masked(r)) continue;
        std::copy(group.row(r).begin(), group.row(r).end(), visible.row(out++).begin());
    }
    return {std::move(visible), std::move(plan)};
}

FeatureGroup reconstruct(const FeatureGroup& visible, const MaskPlan& plan, const DecoderParams& dec) {
    if (visible.rows() != plan.num_visible()) {
        throw InvalidArgument("reconstruct: " + std::to_string(visible.rows()) + " visible tokens, plan expects " +
                              std::to_string(plan.num_visible()));
    }
    if (visible.cols() != dec.dim()) throw DimensionMismatch("reconstruct: feature width differs from decoder");
    FeatureGroup out(plan.group_size, dec.dim());
    std::size_t next_visible = 0;
    for (std::size_t r = 0; r < plan.group_size; ++r) {
        const std::span<const double> input =
            plan.is_masked(r) ? std::span<const double>(dec.mask_token) : visible.row(next_visible++);
        const Vector y = affine_transposed(dec.weight, input, dec.bias);
        std::copy(y.begin(), y.end(), out.row(r).begin());
    }
    return out;
}

double reconstruction_error(const FeatureGroup& reconstruction, const FeatureGroup& target, const MaskPlan& plan,
                            ReconScope scope) {
    if (reconstruction.rows() != target.rows() || reconstruction.cols() != target.cols()) {
        throw DimensionMismatch("reconstruction and target shapes differ");
    }
    double sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t r = 0; r < target.rows(); ++r) {
        if (scope == ReconScope::masked_only && !plan.is_masked(r)) continue;
        sum += squared_distance(reconstruction.row(r), target.row(r));
        ++scored;
    }
    return scored == 0 ? 0.0 : sum / static_cast<double>(scored);
}

Vector pool_normalize(const FeatureGroup& group, NormKind norm) {
    if (group.rows() < 2) throw InvalidArgument("pool_normalize needs at least 2 tokens");
    Vector pooled(group.cols(), 0.0);
    for (std::size_t r = 0; r < group.rows(); ++r) {
        auto row = group.row(r);
        for (std::size_t c = 0; c < pooled.size(); ++c) pooled[c] += row[c];
    }
    const double inv = 1.0 / static_cast<double>(group.rows());
    for (double& v : pooled) v *= inv;
    return normalize(pooled, norm);
}

}  // namespace gcmr
