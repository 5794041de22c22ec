#include "gcmr/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "gcmr/error.hpp"
#include "gcmr/rng.hpp"

namespace gcmr {

GradcheckInstance make_gradcheck_instance(std::uint64_t seed, std::size_t feature_dim, std::size_t hidden_dim,
                                          std::size_t num_classes, std::size_t memory_rows, double beta) {
    if (feature_dim < 2 || hidden_dim < 1) throw InvalidArgument("gradcheck: dims too small");
    if (num_classes < memory_rows + 1) throw InvalidArgument("gradcheck: need more classes than memory rows");
    Rng rng(seed);
    GradcheckInstance inst;
    inst.loss.beta = beta;
    inst.loss.c = 0.3;
    inst.loss.mask_ratio = 0.5;
    inst.step_seed = rng.next_u64();
    constexpr std::size_t kTokens = 4;
    inst.model.encoder = init_encoder(feature_dim, feature_dim, rng);
    for (double& b : inst.model.encoder.bias) b = 0.1 * rng.normal();
    inst.model.decoder = init_decoder(feature_dim, rng);
    for (double& b : inst.model.decoder.bias) b = 0.1 * rng.normal();
    for (double& m : inst.model.decoder.mask_token) m = 0.5 * rng.normal();
    inst.model.classifier = init_classifier(feature_dim, hidden_dim, num_classes, rng, 0.1);
    for (double& b : inst.model.classifier.b1) b = 0.1 + 0.1 * rng.normal();
    for (double& b : inst.model.classifier.b2) b = 0.1 * rng.normal();

    auto random_feature = [&] {
        Vector v(feature_dim);
        for (double& x : v) x = rng.normal();
        return layer_normalize(v);
    };
    ClassFeatures mem_features;
    for (std::size_t k = 0; k < memory_rows; ++k) mem_features[static_cast<int>(k)] = {random_feature()};
    inst.memory = init_representation_memory(mem_features);

    // Batch labels cover one old class and every novel class.
    std::vector<std::pair<int, Vector>> provisional;
    for (std::size_t cls = memory_rows; cls < num_classes; ++cls) provisional.emplace_back(static_cast<int>(cls), random_feature());
    const std::size_t batch_size = num_classes - memory_rows + 1;
    for (std::size_t j = 0; j < batch_size; ++j) {
        const int label = j == 0 ? 0 : static_cast<int>(memory_rows + j - 1);
        inst.batch.push_back(LabeledFeature{random_feature(), label, j});
        Matrix tokens(kTokens, feature_dim);
        for (double& x : tokens.values()) x = rng.normal();
        inst.raw_batch.push_back(RawExample{std::move(tokens), static_cast<int>(j % num_classes), j});
    }
    inst.dictionary = build_dictionary(inst.memory, provisional, inst.model.classifier, DistanceSpace::projected);
    return inst;
}

namespace {

double rel_error(double analytic, double numeric) { return std::abs(analytic - numeric) / (std::abs(numeric) + 1e-8); }

// Central difference of f at every entry of block; returns the worst error against analytic.
double check_block(std::span<double> block, std::span<const double> analytic, double h,
                   const std::function<double()>& f) {
    double worst = 0.0;
    for (std::size_t i = 0; i < block.size(); ++i) {
        const double saved = block[i];
        block[i] = saved + h;
        const double up = f();
        block[i] = saved - h;
        const double down = f();
        block[i] = saved;
        worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck(const GradcheckInstance& inst, double h, bool corrupt) {
    std::vector<GradcheckRow> rows;

    ClassifierParams cls = inst.model.classifier;
    auto incremental = [&] {
        return incremental_loss(inst.batch, inst.memory, inst.dictionary, cls, inst.loss, inst.step_seed).total;
    };
    IncrementalGradient ig = incremental_loss_grad(inst.batch, inst.memory, inst.dictionary, cls, inst.loss, inst.step_seed);
    if (corrupt) ig.grads.w2(0, 0) += 1e-2 + std::abs(ig.grads.w2(0, 0));
    rows.push_back({"incremental", "W1", cls.w1.size(), check_block(cls.w1.values(), ig.grads.w1.values(), h, incremental)});
    rows.push_back({"incremental", "b1", cls.b1.size(), check_block(cls.b1, ig.grads.b1, h, incremental)});
    rows.push_back({"incremental", "W2", cls.w2.size(), check_block(cls.w2.values(), ig.grads.w2.values(), h, incremental)});
    rows.push_back({"incremental", "b2", cls.b2.size(), check_block(cls.b2, ig.grads.b2, h, incremental)});

    BaseModel model = inst.model;
    auto base = [&] { return base_loss(inst.raw_batch, model, inst.loss, inst.epoch, inst.step_seed).total; };
    BaseGradient bg = base_loss_grad(inst.raw_batch, model, inst.loss, inst.epoch, inst.step_seed);
    if (corrupt) bg.encoder.weight(0, 0) += 1e-2 + std::abs(bg.encoder.weight(0, 0));
    rows.push_back({"base", "encoder.W", model.encoder.weight.size(),
                    check_block(model.encoder.weight.values(), bg.encoder.weight.values(), h, base)});
    rows.push_back({"base", "encoder.b", model.encoder.bias.size(), check_block(model.encoder.bias, bg.encoder.bias, h, base)});
    rows.push_back({"base", "decoder.W", model.decoder.weight.size(),
                    check_block(model.decoder.weight.values(), bg.decoder.weight.values(), h, base)});
    rows.push_back({"base", "decoder.b", model.decoder.bias.size(), check_block(model.decoder.bias, bg.decoder.bias, h, base)});
    rows.push_back({"base", "decoder.mask", model.decoder.mask_token.size(),
                    check_block(model.decoder.mask_token, bg.decoder.mask_token, h, base)});
    rows.push_back({"base", "W1", model.classifier.w1.size(),
                    check_block(model.classifier.w1.values(), bg.classifier.w1.values(), h, base)});
    rows.push_back({"base", "b1", model.classifier.b1.size(), check_block(model.classifier.b1, bg.classifier.b1, h, base)});
    rows.push_back({"base", "W2", model.classifier.w2.size(),
                    check_block(model.classifier.w2.values(), bg.classifier.w2.values(), h, base)});
    rows.push_back({"base", "b2", model.classifier.b2.size(), check_block(model.classifier.b2, bg.classifier.b2, h, base)});
    return rows;
}

}  // namespace gcmr
