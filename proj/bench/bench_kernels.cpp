// Serial vs OpenMP timings for the evaluation kernels.
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include <omp.h>

#include "gcmr/data_io.hpp"
#include "gcmr/kernels.hpp"

using namespace gcmr;

namespace {

template <class Fn>
double best_ms(int reps, Fn fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t per_class = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 100;
    SyntheticSpec s;
    s.token_dim = 64;
    s.group_size = 16;
    s.num_classes = 40;
    s.examples_per_class = per_class;
    s.seed = 1;
    const auto data = generate_synthetic(s);
    Rng rng(2);
    const auto encoder = init_encoder(64, 128, rng);
    const auto classifier = init_classifier(128, 64, 40, rng, 0.1);

    const auto ref_features = kernels::extract_features_serial(data.examples, encoder);
    const auto ref_preds = kernels::predict_serial(ref_features, classifier);
    const double extract_serial = best_ms(5, [&] { kernels::extract_features_serial(data.examples, encoder); });
    const double predict_serial = best_ms(5, [&] { kernels::predict_serial(ref_features, classifier); });

    std::printf("examples %zu, G=%zu, D=%zu -> %zu, max threads %d\n", data.examples.size(), s.group_size, s.token_dim,
                encoder.feature_dim(), omp_get_max_threads());
    std::printf("kernel    threads  ms        speedup  identical\n");
    std::printf("extract   serial   %-9.2f 1.00     yes\n", extract_serial);
    std::printf("predict   serial   %-9.2f 1.00     yes\n", predict_serial);
    for (int threads : {1, 2, 4, 8}) {
        std::vector<LabeledFeature> feats;
        const double e = best_ms(5, [&] { feats = kernels::extract_features_parallel(data.examples, encoder, threads); });
        bool same = feats.size() == ref_features.size();
        for (std::size_t i = 0; same && i < feats.size(); ++i) same = bit_equal(feats[i].feature, ref_features[i].feature);
        std::vector<int> preds;
        const double p = best_ms(5, [&] { preds = kernels::predict_parallel(ref_features, classifier, threads); });
        std::printf("extract   %-8d %-9.2f %-8.2f %s\n", threads, e, extract_serial / e, same ? "yes" : "NO");
        std::printf("predict   %-8d %-9.2f %-8.2f %s\n", threads, p, predict_serial / p, preds == ref_preds ? "yes" : "NO");
    }
    return 0;
}
