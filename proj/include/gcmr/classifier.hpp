#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gcmr/rng.hpp"
#include "gcmr/tensor.hpp"

namespace gcmr {

// Two fully-connected layers: hidden = ReLU(W1^T f + b1) (dropout in training), logits = W2^T hidden + b2.
struct ClassifierParams {
    Matrix w1;  // D x H
    Vector b1;  // H
    Matrix w2;  // H x C
    Vector b2;  // C
    double dropout_rate = 0.1;

    std::size_t input_dim() const { return w1.rows(); }
    std::size_t hidden_dim() const { return w1.cols(); }
    std::size_t num_classes() const { return w2.cols(); }
    std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

    friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

struct ClassifierGrads {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;

    static ClassifierGrads zeros_like(const ClassifierParams& params);
    void scale(double factor);
    bool finite() const;
};

enum class Mode { train, eval };

struct ForwardResult {
    Vector pre_activation;  // W1^T f + b1
    Vector hidden;          // after ReLU and (train mode) inverted dropout
    Vector dropout_scale;   // per-unit multiplier: 0 or 1/(1-p) in train mode, 1 in eval mode
    Vector logits;
};

ClassifierParams init_classifier(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes, Rng& rng,
                                 double dropout_rate = 0.1);

ForwardResult forward(std::span<const double> feature, const ClassifierParams& params, Mode mode,
                      std::uint64_t seed = 0);

// ReLU(W1^T f + b1) with no dropout. Maps features into the hidden space used for distances.
Vector project(std::span<const double> feature, const ClassifierParams& params);

// Accumulates parameter gradients given upstream gradients on the logits and on the projection
// ReLU(W1^T f + b1) (the latter bypasses dropout; pass an empty span when unused).
// Returns the gradient with respect to the input feature.
Vector backward(std::span<const double> feature, const ForwardResult& fwd, std::span<const double> grad_logits,
                std::span<const double> grad_projection, const ClassifierParams& params, ClassifierGrads& grads);

// Gradient of the projection path alone (grad_projection -> W1, b1); returns d/d feature.
Vector backward_projection(std::span<const double> feature, std::span<const double> grad_projection,
                           const ClassifierParams& params, ClassifierGrads& grads);

// Appends one W2 column per novel class: project(mean) scaled to unit L2 norm, bias 0.
// Class ids must continue the existing numbering (C, C+1, ...). Existing values are copied verbatim.
ClassifierParams expand_with_imprinting(const ClassifierParams& params,
                                        const std::vector<std::pair<int, Vector>>& novel_class_means);

// Index of the largest logit; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace gcmr
