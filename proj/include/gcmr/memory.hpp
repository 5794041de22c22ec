#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "gcmr/classifier.hpp"
#include "gcmr/tensor.hpp"

namespace gcmr {

// class id -> normalized features of that class's training examples
using ClassFeatures = std::map<int, std::vector<Vector>>;

// Class-mean feature per class, appended session by session and never recomputed.
struct RepresentationMemory {
    Matrix rows;                 // C x D
    std::vector<int> class_ids;  // row k holds class_ids[k]
    std::vector<int> session_of;

    std::size_t size() const { return class_ids.size(); }
    std::size_t dim() const { return rows.cols(); }

    friend bool operator==(const RepresentationMemory&, const RepresentationMemory&) = default;
};

// Snapshot of the trained classifier plus the memory projected through its first layer.
struct WeightMemory {
    ClassifierParams classifier_snapshot;
    Matrix projected_means;  // C x H
    int session = 0;

    friend bool operator==(const WeightMemory&, const WeightMemory&) = default;
};

struct MemoryBudget {
    std::uint64_t representation = 0;
    std::uint64_t projected = 0;
    std::uint64_t classifier = 0;
    std::uint64_t total = 0;

    friend bool operator==(const MemoryBudget&, const MemoryBudget&) = default;
};

Vector class_mean(const std::vector<Vector>& features);

RepresentationMemory init_representation_memory(const ClassFeatures& class_features);

RepresentationMemory update_representation_memory(const RepresentationMemory& mem,
                                                  const ClassFeatures& new_class_features, int session);

WeightMemory build_weight_memory(const ClassifierParams& params, const RepresentationMemory& mem, int session);

// Byte sizes at the given storage precision (4 or 8 bytes per value).
MemoryBudget memory_budget_bytes(const RepresentationMemory& mem, const WeightMemory& wmem, int precision);
MemoryBudget memory_budget_bytes(std::size_t classes, std::size_t feature_dim, std::size_t hidden_dim,
                                 std::size_t classifier_params, int precision);

}  // namespace gcmr
