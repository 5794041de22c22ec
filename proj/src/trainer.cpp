#include "gcmr/trainer.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "gcmr/error.hpp"
#include "gcmr/kernels.hpp"
#include "gcmr/nn_core.hpp"
#include "gcmr/rng.hpp"

namespace gcmr {

namespace {

constexpr std::uint64_t kTagInit = 1;
constexpr std::uint64_t kTagShuffle = 2;
constexpr std::uint64_t kTagStep = 3;

void require(bool ok, const std::string& message) {
    if (!ok) throw InvalidArgument(message);
}

// Epoch-shuffled index batches; the final partial batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

template <class T>
std::vector<T> gather(std::span<const T> items, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(items[i]);
    return out;
}

void step(std::span<double> params, std::span<const double> grads, OptimizerState& opt, std::size_t block,
          double lr) {
    sgd_momentum_step(params, grads, opt.velocity[block], opt.momentum, lr);
}

void step_classifier(ClassifierParams& p, const ClassifierGrads& g, OptimizerState& opt, std::size_t first,
                     double lr) {
    step(p.w1.values(), g.w1.values(), opt, first, lr);
    step(p.b1, g.b1, opt, first + 1, lr);
    step(p.w2.values(), g.w2.values(), opt, first + 2, lr);
    step(p.b2, g.b2, opt, first + 3, lr);
    if (!all_finite(p.w1.values()) || !all_finite(p.b1) || !all_finite(p.w2.values()) || !all_finite(p.b2)) {
        throw NumericalError("classifier parameters became non-finite");
    }
}

// Labels must be exactly first, first+1, ..., each with at least one example.
std::set<int> check_contiguous_labels(std::span<const RawExample> data, int first, const char* what) {
    std::set<int> labels;
    for (const auto& ex : data) labels.insert(ex.label);
    require(!labels.empty(), std::string(what) + ": no examples");
    for (int cls : labels) {
        if (cls < first) {
            throw InvalidArgument(std::string(what) + ": class " + std::to_string(cls) + " collides with an existing class");
        }
    }
    const int last = *labels.rbegin();
    for (int cls = first; cls <= last; ++cls) {
        if (!labels.contains(cls)) {
            throw InvalidArgument(std::string(what) + ": class " + std::to_string(cls) + " has zero examples");
        }
    }
    return labels;
}

ClassFeatures group_by_class(const std::vector<LabeledFeature>& features) {
    ClassFeatures out;
    for (const auto& f : features) out[f.label].push_back(f.feature);
    return out;
}

}  // namespace

void validate(const TrainConfig& cfg) {
    require(cfg.base_epochs >= 0, "train.base_epochs must be >= 0");
    require(cfg.incr_epochs >= 0, "train.incr_epochs must be >= 0");
    require(cfg.base_lr > 0.0, "train.base_lr must be positive");
    require(cfg.incr_lr > 0.0, "train.incr_lr must be positive");
    require(cfg.min_lr > 0.0, "train.min_lr must be positive");
    require(cfg.min_lr <= cfg.base_lr && cfg.min_lr <= cfg.incr_lr, "train.min_lr must not exceed the initial rates");
    require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "train.momentum must lie in [0, 1)");
    require(cfg.batch_size > 0, "train.batch_size must be positive");
    require(cfg.feature_dim >= 2, "model.feature_dim must be >= 2");
    require(cfg.hidden_dim >= 1, "model.hidden_dim must be >= 1");
    require(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0, "model.dropout_rate must lie in [0, 1)");
    validate(cfg.loss);
}

SessionState train_base(std::span<const RawExample> base_data, const TrainConfig& cfg,
                        const EpochObserver& observer) {
    validate(cfg);
    const auto labels = check_contiguous_labels(base_data, 0, "base session");
    const std::size_t raw_dim = base_data.front().tokens.cols();
    for (const auto& ex : base_data) {
        if (ex.tokens.cols() != raw_dim) throw DimensionMismatch("base session: ragged raw token width");
        require(ex.tokens.rows() >= 2, "base session: examples need at least 2 tokens");
    }

    Rng init(derive_seed(cfg.seed, {kTagInit}));
    BaseModel model{init_encoder(raw_dim, cfg.feature_dim, init, cfg.encoder_activation),
                    init_decoder(cfg.feature_dim, init),
                    init_classifier(cfg.feature_dim, cfg.hidden_dim, labels.size(), init, cfg.dropout_rate)};
    model.encoder.norm = cfg.norm;

    if (cfg.base_epochs > 0) {
        OptimizerState opt{{}, cfg.momentum, cfg.base_lr, cfg.min_lr, cfg.base_epochs};
        const std::size_t blocks[] = {model.encoder.weight.size(), model.encoder.bias.size(),
                                      model.decoder.weight.size(), model.decoder.bias.size(),
                                      model.decoder.mask_token.size(), model.classifier.w1.size(),
                                      model.classifier.b1.size(), model.classifier.w2.size(),
                                      model.classifier.b2.size()};
        opt.reset(blocks);
        for (int epoch = 0; epoch < cfg.base_epochs; ++epoch) {
            const double lr = cosine_lr(epoch, opt);
            const auto batches = make_batches(base_data.size(), cfg.batch_size,
                                              derive_seed(cfg.seed, {kTagShuffle, 0, static_cast<std::uint64_t>(epoch)}));
            BaseBreakdown sums;
            for (std::size_t b = 0; b < batches.size(); ++b) {
                const auto batch = gather(base_data, batches[b]);
                const auto seed = derive_seed(cfg.seed, {kTagStep, 0, static_cast<std::uint64_t>(epoch), b});
                const auto g = base_loss_grad(batch, model, cfg.loss, epoch, seed);
                const double nb = static_cast<double>(batch.size());
                sums.total += nb * g.loss.total;
                sums.reconstruction_term += nb * g.loss.reconstruction_term;
                sums.classification_term += nb * g.loss.classification_term;
                sums.alpha = g.loss.alpha;
                if (cfg.finetune_base) {
                    step(model.encoder.weight.values(), g.encoder.weight.values(), opt, 0, lr);
                    step(model.encoder.bias, g.encoder.bias, opt, 1, lr);
                    step(model.decoder.weight.values(), g.decoder.weight.values(), opt, 2, lr);
                    step(model.decoder.bias, g.decoder.bias, opt, 3, lr);
                    step(model.decoder.mask_token, g.decoder.mask_token, opt, 4, lr);
                    if (!all_finite(model.encoder.weight.values()) || !all_finite(model.decoder.weight.values())) {
                        throw NumericalError("encoder/decoder parameters became non-finite");
                    }
                }
                step_classifier(model.classifier, g.classifier, opt, 5, lr);
            }
            if (observer) {
                const double n = static_cast<double>(base_data.size());
                observer(EpochRecord{0, epoch, lr, {{"alpha", sums.alpha}},
                                     {{"total", sums.total / n},
                                      {"reconstruction", sums.reconstruction_term / n},
                                      {"classification", sums.classification_term / n}}});
            }
        }
    }

    model.encoder.frozen = true;
    SessionState state;
    state.session = 0;
    state.encoder = std::move(model.encoder);
    state.decoder = std::move(model.decoder);
    state.classifier = std::move(model.classifier);
    const auto features = kernels::extract_features_serial(base_data, state.encoder);
    state.memory = init_representation_memory(group_by_class(features));
    state.weight_memory = build_weight_memory(state.classifier, state.memory, 0);
    return state;
}

SessionState train_incremental(const SessionState& state, std::span<const RawExample> session_data,
                               const TrainConfig& cfg, const EpochObserver& observer) {
    validate(cfg);
    require(state.memory.size() > 0, "incremental session: representation memory is empty");
    require(state.encoder.frozen, "incremental session: encoder must be frozen");
    const int first = static_cast<int>(state.classifier.num_classes());
    check_contiguous_labels(session_data, first, "incremental session");
    const int session = state.session + 1;

    const auto features = kernels::extract_features_serial(session_data, state.encoder);
    const ClassFeatures by_class = group_by_class(features);
    std::vector<std::pair<int, Vector>> means;
    for (const auto& [cls, list] : by_class) means.emplace_back(cls, class_mean(list));

    SessionState next = state;
    next.session = session;
    next.classifier = expand_with_imprinting(state.weight_memory.classifier_snapshot, means);

    if (cfg.incr_epochs > 0) {
        OptimizerState opt{{}, cfg.momentum, cfg.incr_lr, cfg.min_lr, cfg.incr_epochs};
        const std::size_t blocks[] = {next.classifier.w1.size(), next.classifier.b1.size(),
                                      next.classifier.w2.size(), next.classifier.b2.size()};
        opt.reset(blocks);
        const std::vector<std::pair<int, Vector>> none;
        const auto& provisional = cfg.loss.novel_rows == NovelRows::provisional ? means : none;
        const auto s = static_cast<std::uint64_t>(session);
        for (int epoch = 0; epoch < cfg.incr_epochs; ++epoch) {
            const double lr = cosine_lr(epoch, opt);
            const auto e = static_cast<std::uint64_t>(epoch);
            const DistanceDictionary dict =
                build_dictionary(next.memory, provisional, next.classifier, cfg.loss.distance_space);
            const auto batches = make_batches(features.size(), cfg.batch_size, derive_seed(cfg.seed, {kTagShuffle, s, e}));
            IncrementalBreakdown sums;
            for (std::size_t b = 0; b < batches.size(); ++b) {
                const auto batch = gather(std::span<const LabeledFeature>(features), batches[b]);
                const auto seed = derive_seed(cfg.seed, {kTagStep, s, e, b});
                const double nb = static_cast<double>(batch.size());
                if (cfg.memory_regularization) {
                    const auto g = incremental_loss_grad(batch, next.memory, dict, next.classifier, cfg.loss, seed);
                    sums.total += nb * g.loss.total;
                    sums.distance_term += nb * g.loss.distance_term;
                    sums.memory_term += nb * g.loss.memory_term;
                    sums.classification_term += nb * g.loss.classification_term;
                    step_classifier(next.classifier, g.grads, opt, 0, lr);
                } else {
                    const auto g = classification_loss_grad(batch, next.classifier, seed);
                    sums.total += nb * g.loss;
                    sums.classification_term += nb * g.loss;
                    step_classifier(next.classifier, g.grads, opt, 0, lr);
                }
            }
            if (observer) {
                const double n = static_cast<double>(features.size());
                EpochRecord rec{session, epoch, lr, {}, {}};
                if (cfg.memory_regularization) {
                    rec.weights = {{"beta", cfg.loss.beta}};
                    rec.breakdown = {{"total", sums.total / n},
                                     {"distance", sums.distance_term / n},
                                     {"memory", sums.memory_term / n},
                                     {"classification", sums.classification_term / n}};
                } else {
                    rec.breakdown = {{"total", sums.total / n}, {"classification", sums.classification_term / n}};
                }
                observer(rec);
            }
        }
    }

    next.memory = update_representation_memory(state.memory, by_class, session);
    next.weight_memory = build_weight_memory(next.classifier, next.memory, session);
    return next;
}

ProtocolResult run_protocol(std::span<const SessionData> stream, const TrainConfig& cfg,
                            const EpochObserver& epoch_observer, const SessionObserver& session_observer,
                            int eval_threads) {
    require(!stream.empty(), "protocol: empty session stream");
    ProtocolResult result;
    std::vector<RawExample> cumulative_test;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        result.final_state = t == 0 ? train_base(stream[0].train, cfg, epoch_observer)
                                    : train_incremental(result.final_state, stream[t].train, cfg, epoch_observer);
        cumulative_test.insert(cumulative_test.end(), stream[t].test.begin(), stream[t].test.end());
        auto report = evaluate_session(result.final_state, cumulative_test, result.reports, eval_threads);
        if (session_observer) session_observer(result.final_state, report);
        result.reports.push_back(std::move(report));
    }
    return result;
}

}  // namespace gcmr
