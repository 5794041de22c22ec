#include "gcmr/losses.hpp"

#include <cmath>
#include <string>

#include "gcmr/error.hpp"

namespace gcmr {

namespace {

constexpr std::uint64_t kTagMask = 0x4D41534B;       // "MASK"
constexpr std::uint64_t kTagDropout = 0x44524F50;    // "DROP"
constexpr std::uint64_t kTagMemDropout = 0x4D454D44;  // "MEMD"

void require_unit_interval(double value, const char* field) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw InvalidArgument(std::string(field) + " must lie in [0, 1], got " + std::to_string(value));
    }
}

// Scales dst += factor * src.
void add_scaled(std::span<double> dst, std::span<const double> src, double factor) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

Vector map_to_distance_space(std::span<const double> feature, const DistanceDictionary& dict,
                             const ClassifierParams& params) {
    if (dict.space == DistanceSpace::projected) return project(feature, params);
    return Vector(feature.begin(), feature.end());
}

}  // namespace

void validate(const LossConfig& cfg) {
    require_unit_interval(cfg.c, "loss.c");
    require_unit_interval(cfg.beta, "loss.beta");
    if (!(cfg.mask_ratio >= 0.0 && cfg.mask_ratio < 1.0)) {
        throw InvalidArgument("loss.mask_ratio must lie in [0, 1), got " + std::to_string(cfg.mask_ratio));
    }
}

double alpha_schedule(const LossConfig& cfg, int epoch) {
    if (epoch < 0) throw InvalidArgument("alpha_schedule: negative epoch " + std::to_string(epoch));
    return cfg.c * std::exp(-static_cast<double>(epoch) / 2.0);
}

std::uint64_t mask_seed(std::uint64_t step_seed, std::uint64_t example_id) {
    return derive_seed(step_seed, {kTagMask, example_id});
}

std::uint64_t dropout_seed(std::uint64_t step_seed, std::uint64_t example_id) {
    return derive_seed(step_seed, {kTagDropout, example_id});
}

std::uint64_t memory_dropout_seed(std::uint64_t step_seed, std::size_t memory_row) {
    return derive_seed(step_seed, {kTagMemDropout, memory_row});
}

std::ptrdiff_t DistanceDictionary::row_of(int cls) const {
    for (std::size_t k = 0; k < row_class.size(); ++k) {
        if (row_class[k] == cls) return static_cast<std::ptrdiff_t>(k);
    }
    return -1;
}

DistanceDictionary build_dictionary(const RepresentationMemory& mem,
                                    const std::vector<std::pair<int, Vector>>& provisional_means,
                                    const ClassifierParams& params, DistanceSpace space) {
    DistanceDictionary dict;
    dict.space = space;
    std::vector<Vector> rows;
    auto add = [&](std::span<const double> feature, int cls) {
        if (dict.row_of(cls) >= 0) throw InvalidArgument("class " + std::to_string(cls) + " has two dictionary rows");
        rows.push_back(space == DistanceSpace::projected ? project(feature, params)
                                                         : Vector(feature.begin(), feature.end()));
        dict.row_class.push_back(cls);
    };
    for (std::size_t k = 0; k < mem.size(); ++k) add(mem.rows.row(k), mem.class_ids[k]);
    for (const auto& [cls, mean] : provisional_means) add(mean, cls);
    dict.rows = Matrix::from_rows(rows);
    return dict;
}

Vector distance_vector(std::span<const double> feature, const DistanceDictionary& dict,
                       const ClassifierParams& params) {
    if (dict.rows.rows() == 0) throw InvalidArgument("distance_vector: empty dictionary");
    const Vector mapped = map_to_distance_space(feature, dict, params);
    if (mapped.size() != dict.rows.cols()) {
        throw DimensionMismatch("distance_vector: example maps to " + std::to_string(mapped.size()) +
                                " dims, dictionary rows have " + std::to_string(dict.rows.cols()));
    }
    Vector d(dict.rows.rows());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = squared_distance(mapped, dict.rows.row(k));
    return d;
}

namespace {

// Shared evaluation of E_i; gradients are accumulated only when `grads` is non-null.
IncrementalBreakdown incremental_impl(std::span<const LabeledFeature> batch, const RepresentationMemory& mem,
                                      const DistanceDictionary& dict, const ClassifierParams& params,
                                      const LossConfig& cfg, std::uint64_t seed, Mode mode, ClassifierGrads* grads) {
    if (batch.empty()) throw InvalidArgument("incremental_loss: empty batch");
    const double beta = cfg.beta;
    IncrementalBreakdown out;

    // Distance term: CE over negated squared distances, target = the label's dictionary row.
    std::vector<std::ptrdiff_t> rows(batch.size(), -1);
    std::size_t counted = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        rows[j] = dict.row_of(batch[j].label);
        if (rows[j] < 0 && cfg.novel_rows == NovelRows::provisional) {
            throw InvalidArgument("class " + std::to_string(batch[j].label) + " has no distance dictionary row");
        }
        if (rows[j] >= 0) ++counted;
    }
    if (counted > 0) {
        const double w = beta / static_cast<double>(counted);
        double sum = 0.0;
        for (std::size_t j = 0; j < batch.size(); ++j) {
            if (rows[j] < 0) continue;
            const auto& f = batch[j].feature;
            const Vector mapped = map_to_distance_space(f, dict, params);
            if (mapped.size() != dict.rows.cols()) throw DimensionMismatch("distance space width mismatch");
            Vector neg_d(dict.rows.rows());
            for (std::size_t k = 0; k < neg_d.size(); ++k) neg_d[k] = -squared_distance(mapped, dict.rows.row(k));
            const auto target = static_cast<std::size_t>(rows[j]);
            sum += cross_entropy(neg_d, target);
            if (grads != nullptr && dict.space == DistanceSpace::projected && w != 0.0) {
                // dCE/dd_k = -(p_k - 1[k=target]); dd_k/dm = 2 (m - r_k).
                const Vector g = cross_entropy_grad(neg_d, target);
                Vector grad_mapped(mapped.size(), 0.0);
                for (std::size_t k = 0; k < g.size(); ++k) {
                    auto r = dict.rows.row(k);
                    const double coef = -g[k] * 2.0 * w;
                    for (std::size_t i = 0; i < mapped.size(); ++i) grad_mapped[i] += coef * (mapped[i] - r[i]);
                }
                backward_projection(f, grad_mapped, params, *grads);
            }
        }
        out.distance_term = sum / static_cast<double>(counted);
    }

    // Memory term: every stored class mean must still be classified as its class.
    if (mem.size() > 0) {
        const double w = (1.0 - beta) / static_cast<double>(mem.size());
        double sum = 0.0;
        for (std::size_t k = 0; k < mem.size(); ++k) {
            const auto f = mem.rows.row(k);
            const auto fwd = forward(f, params, mode, memory_dropout_seed(seed, k));
            const auto label = static_cast<std::size_t>(mem.class_ids[k]);
            sum += cross_entropy(fwd.logits, label);
            if (grads != nullptr && w != 0.0) {
                Vector g = cross_entropy_grad(fwd.logits, label);
                for (double& v : g) v *= w;
                backward(f, fwd, g, {}, params, *grads);
            }
        }
        out.memory_term = sum / static_cast<double>(mem.size());
    }

    {
        const double w = (1.0 - beta) / static_cast<double>(batch.size());
        double sum = 0.0;
        for (const auto& ex : batch) {
            if (ex.label < 0) throw InvalidArgument("negative label");
            const auto fwd = forward(ex.feature, params, mode, dropout_seed(seed, ex.id));
            const auto label = static_cast<std::size_t>(ex.label);
            sum += cross_entropy(fwd.logits, label);
            if (grads != nullptr && w != 0.0) {
                Vector g = cross_entropy_grad(fwd.logits, label);
                for (double& v : g) v *= w;
                backward(ex.feature, fwd, g, {}, params, *grads);
            }
        }
        out.classification_term = sum / static_cast<double>(batch.size());
    }

    out.total = beta * out.distance_term + (1.0 - beta) * out.memory_term + (1.0 - beta) * out.classification_term;
    if (!std::isfinite(out.total)) throw NumericalError("incremental loss is not finite");
    return out;
}

}  // namespace

IncrementalBreakdown incremental_loss(std::span<const LabeledFeature> batch, const RepresentationMemory& mem,
                                      const DistanceDictionary& dict, const ClassifierParams& params,
                                      const LossConfig& cfg, std::uint64_t seed, Mode mode) {
    return incremental_impl(batch, mem, dict, params, cfg, seed, mode, nullptr);
}

IncrementalGradient incremental_loss_grad(std::span<const LabeledFeature> batch, const RepresentationMemory& mem,
                                          const DistanceDictionary& dict, const ClassifierParams& params,
                                          const LossConfig& cfg, std::uint64_t seed, Mode mode) {
    IncrementalGradient out{{}, ClassifierGrads::zeros_like(params)};
    out.loss = incremental_impl(batch, mem, dict, params, cfg, seed, mode, &out.grads);
    if (!out.grads.finite()) throw NumericalError("incremental loss gradient is not finite");
    return out;
}

double classification_loss(std::span<const LabeledFeature> batch, const ClassifierParams& params,
                           std::uint64_t seed, Mode mode) {
    return classification_loss_grad(batch, params, seed, mode).loss;
}

ClassificationGradient classification_loss_grad(std::span<const LabeledFeature> batch,
                                                 const ClassifierParams& params, std::uint64_t seed, Mode mode) {
    if (batch.empty()) throw InvalidArgument("classification_loss: empty batch");
    ClassificationGradient out{0.0, ClassifierGrads::zeros_like(params)};
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        if (ex.label < 0) throw InvalidArgument("negative label");
        const auto fwd = forward(ex.feature, params, mode, dropout_seed(seed, ex.id));
        const auto label = static_cast<std::size_t>(ex.label);
        out.loss += cross_entropy(fwd.logits, label);
        Vector g = cross_entropy_grad(fwd.logits, label);
        for (double& v : g) v *= w;
        backward(ex.feature, fwd, g, {}, params, out.grads);
    }
    out.loss *= w;
    if (!std::isfinite(out.loss) || !out.grads.finite()) throw NumericalError("classification loss is not finite");
    return out;
}

namespace {

BaseBreakdown base_impl(std::span<const RawExample> batch, const BaseModel& model, const LossConfig& cfg, int epoch,
                        std::uint64_t seed, Mode mode, BaseGradient* grad) {
    if (batch.empty()) throw InvalidArgument("base_loss: empty batch");
    const auto& enc = model.encoder;
    const auto& dec = model.decoder;
    const auto& cls = model.classifier;
    if (dec.dim() != enc.feature_dim() || cls.input_dim() != enc.feature_dim()) {
        throw DimensionMismatch("encoder, decoder and classifier widths disagree");
    }
    BaseBreakdown out;
    out.alpha = alpha_schedule(cfg, epoch);
    const double n = static_cast<double>(batch.size());
    const double w_rec = out.alpha / n;
    const double w_cls = (1.0 - out.alpha) / n;
    const std::size_t dim = enc.feature_dim();

    for (const auto& ex : batch) {
        if (ex.label < 0) throw InvalidArgument("negative label");
        const FeatureGroup feats = encode(ex.tokens, enc);
        const std::size_t g = feats.rows();
        const auto [visible, plan] = mask_features(feats, cfg.mask_ratio, mask_seed(seed, ex.id));
        const FeatureGroup recon = reconstruct(visible, plan, dec);
        out.reconstruction_term += reconstruction_error(recon, feats, plan, cfg.recon_scope);

        if (g < 2) throw InvalidArgument("base_loss: feature groups need at least 2 tokens");
        Vector pooled(dim, 0.0);
        for (std::size_t r = 0; r < g; ++r) add_scaled(pooled, feats.row(r), 1.0);
        for (double& v : pooled) v /= static_cast<double>(g);
        const Vector fbar = normalize(pooled, enc.norm);
        const auto fwd = forward(fbar, cls, mode, dropout_seed(seed, ex.id));
        const auto label = static_cast<std::size_t>(ex.label);
        out.classification_term += cross_entropy(fwd.logits, label);

        if (grad == nullptr) continue;

        Matrix grad_feats(g, dim);
        std::size_t scored = 0;
        for (std::size_t r = 0; r < g; ++r) {
            if (cfg.recon_scope == ReconScope::all_tokens || plan.is_masked(r)) ++scored;
        }
        if (scored > 0 && w_rec != 0.0) {
            const double coef = w_rec * 2.0 / static_cast<double>(scored);
            std::size_t next_visible = 0;
            for (std::size_t r = 0; r < g; ++r) {
                const bool masked = plan.is_masked(r);
                const std::span<const double> input =
                    masked ? std::span<const double>(dec.mask_token) : visible.row(next_visible);
                if (!masked) ++next_visible;
                if (cfg.recon_scope == ReconScope::masked_only && !masked) continue;
                Vector d_recon(dim);
                for (std::size_t i = 0; i < dim; ++i) d_recon[i] = coef * (recon(r, i) - feats(r, i));
                // target path
                add_scaled(grad_feats.row(r), d_recon, -1.0);
                // decoder path
                Vector d_input(dim, 0.0);
                for (std::size_t a = 0; a < dim; ++a) {
                    auto w_row = dec.weight.row(a);
                    auto gw_row = grad->decoder.weight.row(a);
                    double acc = 0.0;
                    for (std::size_t b = 0; b < dim; ++b) {
                        gw_row[b] += input[a] * d_recon[b];
                        acc += w_row[b] * d_recon[b];
                    }
                    d_input[a] = acc;
                }
                add_scaled(grad->decoder.bias, d_recon, 1.0);
                if (masked) {
                    add_scaled(grad->decoder.mask_token, d_input, 1.0);
                } else {
                    add_scaled(grad_feats.row(r), d_input, 1.0);
                }
            }
        }

        Vector g_logits = cross_entropy_grad(fwd.logits, label);
        for (double& v : g_logits) v *= w_cls;
        const Vector d_fbar = backward(fbar, fwd, g_logits, {}, cls, grad->classifier);
        const Vector d_pooled = normalize_backward(pooled, d_fbar, enc.norm);
        for (std::size_t r = 0; r < g; ++r) add_scaled(grad_feats.row(r), d_pooled, 1.0 / static_cast<double>(g));

        for (std::size_t r = 0; r < g; ++r) {
            auto x = ex.tokens.row(r);
            Vector d_pre(dim);
            for (std::size_t i = 0; i < dim; ++i) {
                const double slope = enc.activation == Activation::tanh ? 1.0 - feats(r, i) * feats(r, i) : 1.0;
                d_pre[i] = grad_feats(r, i) * slope;
            }
            for (std::size_t a = 0; a < x.size(); ++a) add_scaled(grad->encoder.weight.row(a), d_pre, x[a]);
            add_scaled(grad->encoder.bias, d_pre, 1.0);
        }
    }
    out.reconstruction_term /= n;
    out.classification_term /= n;
    out.total = out.alpha * out.reconstruction_term + (1.0 - out.alpha) * out.classification_term;
    if (!std::isfinite(out.total)) throw NumericalError("base loss is not finite");
    return out;
}

}  // namespace

BaseBreakdown base_loss(std::span<const RawExample> batch, const BaseModel& model, const LossConfig& cfg, int epoch,
                        std::uint64_t seed, Mode mode) {
    return base_impl(batch, model, cfg, epoch, seed, mode, nullptr);
}

BaseGradient base_loss_grad(std::span<const RawExample> batch, const BaseModel& model, const LossConfig& cfg,
                            int epoch, std::uint64_t seed, Mode mode) {
    const auto& enc = model.encoder;
    const auto& dec = model.decoder;
    BaseGradient out{{},
                     EncoderGrads{Matrix(enc.weight.rows(), enc.weight.cols()), Vector(enc.bias.size(), 0.0)},
                     DecoderGrads{Matrix(dec.weight.rows(), dec.weight.cols()), Vector(dec.bias.size(), 0.0),
                                  Vector(dec.mask_token.size(), 0.0)},
                     ClassifierGrads::zeros_like(model.classifier)};
    out.loss = base_impl(batch, model, cfg, epoch, seed, mode, &out);
    const bool finite = all_finite(out.encoder.weight.values()) && all_finite(out.encoder.bias) &&
                        all_finite(out.decoder.weight.values()) && all_finite(out.decoder.bias) &&
                        all_finite(out.decoder.mask_token) && out.classifier.finite();
    if (!finite) throw NumericalError("base loss gradient is not finite");
    return out;
}

}  // namespace gcmr
