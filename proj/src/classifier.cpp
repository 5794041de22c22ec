#include "gcmr/classifier.hpp"

#include <cmath>
#include <set>
#include <string>

#include "gcmr/error.hpp"

namespace gcmr {

ClassifierGrads ClassifierGrads::zeros_like(const ClassifierParams& params) {
    return ClassifierGrads{Matrix(params.w1.rows(), params.w1.cols()), Vector(params.b1.size(), 0.0),
                           Matrix(params.w2.rows(), params.w2.cols()), Vector(params.b2.size(), 0.0)};
}

void ClassifierGrads::scale(double factor) {
    for (double& v : w1.values()) v *= factor;
    for (double& v : b1) v *= factor;
    for (double& v : w2.values()) v *= factor;
    for (double& v : b2) v *= factor;
}

bool ClassifierGrads::finite() const {
    return all_finite(w1.values()) && all_finite(b1) && all_finite(w2.values()) && all_finite(b2);
}

ClassifierParams init_classifier(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes, Rng& rng,
                                 double dropout_rate) {
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout_rate must lie in [0, 1)");
    ClassifierParams p{Matrix(input_dim, hidden_dim), Vector(hidden_dim, 0.0), Matrix(hidden_dim, num_classes),
                       Vector(num_classes, 0.0), dropout_rate};
    const double s1 = std::sqrt(2.0 / static_cast<double>(input_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (double& w : p.w1.values()) w = s1 * rng.normal();
    for (double& w : p.w2.values()) w = s2 * rng.normal();
    return p;
}

ForwardResult forward(std::span<const double> feature, const ClassifierParams& params, Mode mode,
                      std::uint64_t seed) {
    if (feature.size() != params.input_dim()) {
        throw DimensionMismatch("classifier expects a " + std::to_string(params.input_dim()) +
                                "-d feature, got " + std::to_string(feature.size()));
    }
    ForwardResult out;
    out.pre_activation = affine_transposed(params.w1, feature, params.b1);
    const std::size_t h = out.pre_activation.size();
    out.dropout_scale.assign(h, 1.0);
    if (mode == Mode::train && params.dropout_rate > 0.0) {
        Rng rng(seed);
        const double keep_scale = 1.0 / (1.0 - params.dropout_rate);
        for (double& s : out.dropout_scale) s = rng.uniform() < params.dropout_rate ? 0.0 : keep_scale;
    }
    out.hidden.resize(h);
    for (std::size_t i = 0; i < h; ++i) {
        const double a = out.pre_activation[i] > 0.0 ? out.pre_activation[i] : 0.0;
        out.hidden[i] = a * out.dropout_scale[i];
    }
    out.logits = affine_transposed(params.w2, out.hidden, params.b2);
    return out;
}

Vector project(std::span<const double> feature, const ClassifierParams& params) {
    if (feature.size() != params.input_dim()) throw DimensionMismatch("project: feature width differs from W1");
    Vector z = affine_transposed(params.w1, feature, params.b1);
    for (double& v : z) v = v > 0.0 ? v : 0.0;
    return z;
}

namespace {

// dz = grad_hidden_pre_relu; accumulates W1/b1 and returns d feature.
Vector first_layer_backward(std::span<const double> feature, std::span<const double> grad_pre,
                            const ClassifierParams& params, ClassifierGrads& grads) {
    const std::size_t d = params.input_dim();
    const std::size_t h = params.hidden_dim();
    Vector grad_feature(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        auto w_row = params.w1.row(i);
        auto g_row = grads.w1.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < h; ++j) {
            g_row[j] += feature[i] * grad_pre[j];
            acc += w_row[j] * grad_pre[j];
        }
        grad_feature[i] = acc;
    }
    for (std::size_t j = 0; j < h; ++j) grads.b1[j] += grad_pre[j];
    return grad_feature;
}

}  // namespace

Vector backward(std::span<const double> feature, const ForwardResult& fwd, std::span<const double> grad_logits,
                std::span<const double> grad_projection, const ClassifierParams& params, ClassifierGrads& grads) {
    const std::size_t h = params.hidden_dim();
    const std::size_t c = params.num_classes();
    if (grad_logits.size() != c) throw DimensionMismatch("backward: logit gradient has wrong length");
    if (!grad_projection.empty() && grad_projection.size() != h) {
        throw DimensionMismatch("backward: projection gradient has wrong length");
    }
    Vector grad_pre(h, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
        auto w_row = params.w2.row(j);
        auto g_row = grads.w2.row(j);
        double acc = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            g_row[k] += fwd.hidden[j] * grad_logits[k];
            acc += w_row[k] * grad_logits[k];
        }
        double upstream = acc * fwd.dropout_scale[j];
        if (!grad_projection.empty()) upstream += grad_projection[j];
        grad_pre[j] = fwd.pre_activation[j] > 0.0 ? upstream : 0.0;
    }
    for (std::size_t k = 0; k < c; ++k) grads.b2[k] += grad_logits[k];
    return first_layer_backward(feature, grad_pre, params, grads);
}

Vector backward_projection(std::span<const double> feature, std::span<const double> grad_projection,
                           const ClassifierParams& params, ClassifierGrads& grads) {
    if (grad_projection.size() != params.hidden_dim()) throw DimensionMismatch("projection gradient length");
    const Vector pre = affine_transposed(params.w1, feature, params.b1);
    Vector grad_pre(pre.size());
    for (std::size_t j = 0; j < pre.size(); ++j) grad_pre[j] = pre[j] > 0.0 ? grad_projection[j] : 0.0;
    return first_layer_backward(feature, grad_pre, params, grads);
}

ClassifierParams expand_with_imprinting(const ClassifierParams& params,
                                        const std::vector<std::pair<int, Vector>>& novel_class_means) {
    if (novel_class_means.empty()) return params;
    std::set<int> seen;
    const auto base = static_cast<int>(params.num_classes());
    const std::size_t h = params.hidden_dim();
    Matrix columns(h, novel_class_means.size());
    for (std::size_t n = 0; n < novel_class_means.size(); ++n) {
        const auto& [cls, mean] = novel_class_means[n];
        if (!seen.insert(cls).second) throw InvalidArgument("duplicate novel class id " + std::to_string(cls));
        if (cls < base) throw InvalidArgument("class id " + std::to_string(cls) + " already has a classifier column");
        if (cls != base + static_cast<int>(n)) {
            throw InvalidArgument("novel class ids must continue the numbering at " + std::to_string(base));
        }
        const Vector p = project(mean, params);
        const double norm = l2_norm(p);
        for (std::size_t j = 0; j < h; ++j) columns(j, n) = norm > 0.0 ? p[j] / norm : 0.0;
    }
    ClassifierParams out = params;
    out.w2 = params.w2.with_appended_cols(columns);
    out.b2.resize(params.b2.size() + novel_class_means.size(), 0.0);
    return out;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

}  // namespace gcmr
