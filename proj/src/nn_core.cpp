#include "gcmr/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gcmr/error.hpp"

namespace gcmr {

Vector softmax(std::span<const double> logits) {
    if (logits.empty()) throw InvalidArgument("softmax of empty vector");
    if (!all_finite(logits)) throw NumericalError("softmax input has a non-finite entry");
    const double peak = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        sum += out[i];
    }
    for (double& p : out) p /= sum;
    return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) {
        throw InvalidArgument("label " + std::to_string(label) + " out of range for " +
                              std::to_string(logits.size()) + " logits");
    }
    const Vector p = softmax(logits);
    return -std::log(std::max(p[label], kProbabilityFloor));
}

Vector cross_entropy_grad(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) throw InvalidArgument("label out of range");
    Vector g = softmax(logits);
    g[label] -= 1.0;
    return g;
}

Vector layer_normalize(std::span<const double> v) {
    if (v.size() < 2) throw InvalidArgument("layer_normalize needs at least 2 entries");
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) * inv;
    return out;
}

Vector layer_normalize_backward(std::span<const double> input, std::span<const double> grad_out) {
    if (input.size() != grad_out.size()) throw DimensionMismatch("layer_normalize_backward size mismatch");
    const Vector y = layer_normalize(input);
    const double n = static_cast<double>(input.size());
    double mean = 0.0;
    for (double x : input) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : input) var += (x - mean) * (x - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    double mean_g = 0.0;
    double mean_gy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mean_g += grad_out[i];
        mean_gy += grad_out[i] * y[i];
    }
    mean_g /= n;
    mean_gy /= n;
    Vector dx(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = inv * (grad_out[i] - mean_g - y[i] * mean_gy);
    return dx;
}

Vector l2_normalize(std::span<const double> v) {
    if (v.empty()) throw InvalidArgument("l2_normalize of empty vector");
    const double inv = 1.0 / std::sqrt(dot(v, v) + kLayerNormEps);
    Vector out(v.begin(), v.end());
    for (double& x : out) x *= inv;
    return out;
}

Vector l2_normalize_backward(std::span<const double> input, std::span<const double> grad_out) {
    if (input.size() != grad_out.size()) throw DimensionMismatch("l2_normalize_backward size mismatch");
    const double inv = 1.0 / std::sqrt(dot(input, input) + kLayerNormEps);
    const Vector y = l2_normalize(input);
    const double proj = dot(y, grad_out);
    Vector dx(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = inv * (grad_out[i] - y[i] * proj);
    return dx;
}

Vector normalize(std::span<const double> v, NormKind kind) {
    return kind == NormKind::layer ? layer_normalize(v) : l2_normalize(v);
}

Vector normalize_backward(std::span<const double> input, std::span<const double> grad_out, NormKind kind) {
    return kind == NormKind::layer ? layer_normalize_backward(input, grad_out)
                                   : l2_normalize_backward(input, grad_out);
}

void OptimizerState::reset(std::span<const std::size_t> block_sizes) {
    velocity.clear();
    for (std::size_t n : block_sizes) velocity.emplace_back(n, 0.0);
}

double cosine_lr(int epoch, const OptimizerState& state) {
    if (state.total_epochs <= 0) throw InvalidArgument("cosine_lr needs total_epochs > 0");
    if (epoch < 0 || epoch > state.total_epochs) {
        throw InvalidArgument("epoch " + std::to_string(epoch) + " outside [0, " +
                              std::to_string(state.total_epochs) + "]");
    }
    const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(state.total_epochs);
    return state.min_lr + (state.base_lr - state.min_lr) * (1.0 + std::cos(phase)) / 2.0;
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                       double momentum, double lr) {
    if (params.size() != grads.size() || params.size() != velocity.size()) {
        throw DimensionMismatch("sgd step: params " + std::to_string(params.size()) + ", grads " +
                                std::to_string(grads.size()) + ", velocity " + std::to_string(velocity.size()));
    }
    if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grads[i];
        params[i] -= lr * velocity[i];
    }
}

}  // namespace gcmr
