#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gcmr/losses.hpp"

namespace gcmr {

// Random small problem for checking analytic gradients of both composite losses.
struct GradcheckInstance {
    BaseModel model;
    std::vector<RawExample> raw_batch;
    std::vector<LabeledFeature> batch;
    RepresentationMemory memory;
    DistanceDictionary dictionary;
    LossConfig loss;
    int epoch = 1;
    std::uint64_t step_seed = 0;
};

// D = feature dim, H = hidden dim, C = classes (C >= memory_rows + 1). Raw tokens are G=4 x D.
GradcheckInstance make_gradcheck_instance(std::uint64_t seed, std::size_t feature_dim, std::size_t hidden_dim,
                                          std::size_t num_classes, std::size_t memory_rows = 3, double beta = 0.7);

struct GradcheckRow {
    std::string loss;
    std::string block;
    std::size_t entries = 0;
    double max_rel_error = 0.0;
};

// Central differences with step h against the analytic gradients; error = |a - fd| / (|fd| + 1e-8).
// `corrupt` perturbs one analytic entry (negative control).
std::vector<GradcheckRow> run_gradcheck(const GradcheckInstance& inst, double h = 1e-5, bool corrupt = false);

}  // namespace gcmr
