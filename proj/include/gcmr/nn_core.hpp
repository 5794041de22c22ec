#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gcmr/tensor.hpp"

namespace gcmr {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kProbabilityFloor = 1e-12;

// Max-subtracted softmax. Throws on empty or non-finite input.
Vector softmax(std::span<const double> logits);

// -log(max(softmax(logits)[label], 1e-12)).
double cross_entropy(std::span<const double> logits, std::size_t label);

// d cross_entropy / d logits = softmax - onehot(label), ignoring the probability floor.
Vector cross_entropy_grad(std::span<const double> logits, std::size_t label);

// Parameter-free layer normalization: (v - mean) / sqrt(var + 1e-5), population variance.
Vector layer_normalize(std::span<const double> v);
Vector layer_normalize_backward(std::span<const double> input, std::span<const double> grad_out);

// v / sqrt(|v|^2 + 1e-5). The alternative feature normalization.
Vector l2_normalize(std::span<const double> v);
Vector l2_normalize_backward(std::span<const double> input, std::span<const double> grad_out);

enum class NormKind { layer, l2 };

Vector normalize(std::span<const double> v, NormKind kind);
Vector normalize_backward(std::span<const double> input, std::span<const double> grad_out, NormKind kind);

struct OptimizerState {
    std::vector<Vector> velocity;  // one accumulator per parameter block
    double momentum = 0.9;
    double base_lr = 1e-3;
    double min_lr = 1e-5;
    int total_epochs = 1;

    // Zeroed velocity matching the given block sizes.
    void reset(std::span<const std::size_t> block_sizes);
};

// min_lr + (base_lr - min_lr) * (1 + cos(pi * epoch / total_epochs)) / 2, epoch in [0, total_epochs].
double cosine_lr(int epoch, const OptimizerState& state);

// velocity <- momentum * velocity + grads; params <- params - lr * velocity.
void sgd_momentum_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                       double momentum, double lr);

}  // namespace gcmr
