#include "gcmr/kernels.hpp"

#include <cstdlib>
#include <exception>
#include <string>

#include <omp.h>

namespace gcmr::kernels {

namespace {

LabeledFeature featurize(const RawExample& ex, const EncoderParams& encoder) {
    return LabeledFeature{pool_normalize(encode(ex.tokens, encoder), encoder.norm), ex.label, ex.id};
}

int predict_one(const LabeledFeature& f, const ClassifierParams& params) {
    return static_cast<int>(argmax(forward(f.feature, params, Mode::eval).logits));
}

// Runs body(i) for i in [0, n) across threads; the first exception is rethrown on the caller.
template <class Body>
void parallel_for(std::size_t n, int threads, Body body) {
    std::exception_ptr error;
    const auto count = static_cast<long long>(n);
#pragma omp parallel for num_threads(threads) schedule(static)
    for (long long i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(gcmr_kernel_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace

int configured_threads() {
    const char* env = std::getenv("GCMR_THREADS");
    if (env == nullptr) return 1;
    try {
        const int n = std::stoi(env);
        return n > 0 ? n : 1;
    } catch (...) {
        return 1;
    }
}

std::vector<LabeledFeature> extract_features_serial(std::span<const RawExample> examples,
                                                    const EncoderParams& encoder) {
    std::vector<LabeledFeature> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(featurize(ex, encoder));
    return out;
}

std::vector<LabeledFeature> extract_features_parallel(std::span<const RawExample> examples,
                                                      const EncoderParams& encoder, int threads) {
    std::vector<LabeledFeature> out(examples.size());
    parallel_for(examples.size(), threads, [&](std::size_t i) { out[i] = featurize(examples[i], encoder); });
    return out;
}

std::vector<int> predict_serial(std::span<const LabeledFeature> features, const ClassifierParams& params) {
    std::vector<int> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(predict_one(f, params));
    return out;
}

std::vector<int> predict_parallel(std::span<const LabeledFeature> features, const ClassifierParams& params,
                                  int threads) {
    std::vector<int> out(features.size());
    parallel_for(features.size(), threads, [&](std::size_t i) { out[i] = predict_one(features[i], params); });
    return out;
}

}  // namespace gcmr::kernels
