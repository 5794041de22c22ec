#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gcmr/classifier.hpp"
#include "gcmr/encoder.hpp"
#include "gcmr/memory.hpp"
#include "gcmr/nn_core.hpp"

namespace gcmr {

// Space in which example-to-memory distances are measured.
enum class DistanceSpace { projected, raw };

// How novel-class labels get a distance row while their classes are not yet in memory.
enum class NovelRows { provisional, ignore };

struct LossConfig {
    double c = 0.3;     // alpha at epoch 0
    double beta = 0.7;  // distance vs. classification balance
    double mask_ratio = 0.75;
    ReconScope recon_scope = ReconScope::all_tokens;
    DistanceSpace distance_space = DistanceSpace::projected;
    NovelRows novel_rows = NovelRows::provisional;

    friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

// Throws InvalidArgument naming the offending field. c = 0 is accepted for degenerate checks.
void validate(const LossConfig& cfg);

struct LabeledFeature {
    Vector feature;  // pool_normalize output
    int label = 0;
    std::uint64_t id = 0;
};

// Memory rows (projected through the live classifier, or raw) plus provisional novel-class rows.
struct DistanceDictionary {
    Matrix rows;
    std::vector<int> row_class;
    DistanceSpace space = DistanceSpace::projected;

    // Row index holding `cls`, or -1.
    std::ptrdiff_t row_of(int cls) const;
};

struct IncrementalBreakdown {
    double total = 0.0;
    double distance_term = 0.0;
    double memory_term = 0.0;
    double classification_term = 0.0;
};

struct IncrementalGradient {
    IncrementalBreakdown loss;
    ClassifierGrads grads;
};

struct ClassificationGradient {
    double loss = 0.0;
    ClassifierGrads grads;
};

struct BaseModel {
    EncoderParams encoder;
    DecoderParams decoder;
    ClassifierParams classifier;
};

struct BaseBreakdown {
    double total = 0.0;
    double alpha = 0.0;
    double reconstruction_term = 0.0;
    double classification_term = 0.0;
};

struct EncoderGrads {
    Matrix weight;
    Vector bias;
};

struct DecoderGrads {
    Matrix weight;
    Vector bias;
    Vector mask_token;
};

struct BaseGradient {
    BaseBreakdown loss;
    EncoderGrads encoder;
    DecoderGrads decoder;
    ClassifierGrads classifier;
};

// c * exp(-epoch / 2).
double alpha_schedule(const LossConfig& cfg, int epoch);

// Per-example random streams used by the losses; exposed so tests can reproduce them.
std::uint64_t mask_seed(std::uint64_t step_seed, std::uint64_t example_id);
std::uint64_t dropout_seed(std::uint64_t step_seed, std::uint64_t example_id);
std::uint64_t memory_dropout_seed(std::uint64_t step_seed, std::size_t memory_row);

DistanceDictionary build_dictionary(const RepresentationMemory& mem,
                                    const std::vector<std::pair<int, Vector>>& provisional_means,
                                    const ClassifierParams& params, DistanceSpace space);

// d(k) = |map(f) - rows[k]|^2, map = project() in projected space and identity in raw space.
Vector distance_vector(std::span<const double> feature, const DistanceDictionary& dict,
                       const ClassifierParams& params);

// E_i = beta * mean_j CE(-d_j, row(y_j)) + (1 - beta) * mean_k CE(forward(M_e[k]), class_k)
//     + (1 - beta) * mean_j CE(forward(f_j), y_j).
IncrementalBreakdown incremental_loss(std::span<const LabeledFeature> batch, const RepresentationMemory& mem,
                                      const DistanceDictionary& dict, const ClassifierParams& params,
                                      const LossConfig& cfg, std::uint64_t seed, Mode mode = Mode::train);

IncrementalGradient incremental_loss_grad(std::span<const LabeledFeature> batch, const RepresentationMemory& mem,
                                          const DistanceDictionary& dict, const ClassifierParams& params,
                                          const LossConfig& cfg, std::uint64_t seed, Mode mode = Mode::train);

// mean_j CE(forward(f_j), y_j): the objective with memory regularization switched off.
double classification_loss(std::span<const LabeledFeature> batch, const ClassifierParams& params,
                           std::uint64_t seed, Mode mode = Mode::train);
ClassificationGradient classification_loss_grad(std::span<const LabeledFeature> batch,
                                                 const ClassifierParams& params, std::uint64_t seed,
                                                 Mode mode = Mode::train);

// E_b = alpha * mean_j recon_j + (1 - alpha) * mean_j CE(forward(pool_normalize(encode(x_j))), y_j).
BaseBreakdown base_loss(std::span<const RawExample> batch, const BaseModel& model, const LossConfig& cfg, int epoch,
                        std::uint64_t seed, Mode mode = Mode::train);

BaseGradient base_loss_grad(std::span<const RawExample> batch, const BaseModel& model, const LossConfig& cfg,
                            int epoch, std::uint64_t seed, Mode mode = Mode::train);

}  // namespace gcmr
