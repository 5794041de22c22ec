#include "gcmr/memory.hpp"

#include <string>

#include "gcmr/error.hpp"

namespace gcmr {

Vector class_mean(const std::vector<Vector>& features) {
    if (features.empty()) throw InvalidArgument("class mean of an empty class");
    Vector mean(features.front().size(), 0.0);
    for (const auto& f : features) {
        if (f.size() != mean.size()) throw DimensionMismatch("ragged feature dimensions within a class");
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f[i];
    }
    for (double& v : mean) v /= static_cast<double>(features.size());
    return mean;
}

namespace {

RepresentationMemory append_classes(RepresentationMemory mem, const ClassFeatures& features, int session) {
    std::vector<Vector> rows;
    for (const auto& [cls, list] : features) {
        for (int existing : mem.class_ids) {
            if (existing == cls) throw InvalidArgument("class " + std::to_string(cls) + " is already in memory");
        }
        if (list.empty()) throw InvalidArgument("class " + std::to_string(cls) + " has no examples");
        rows.push_back(class_mean(list));
        const std::size_t width = mem.rows.rows() > 0 ? mem.dim() : rows.front().size();
        if (rows.back().size() != width) {
            throw DimensionMismatch("class " + std::to_string(cls) + " features do not match memory width");
        }
        mem.class_ids.push_back(cls);
        mem.session_of.push_back(session);
    }
    mem.rows = mem.rows.with_appended_rows(Matrix::from_rows(rows));
    return mem;
}

}  // namespace

RepresentationMemory init_representation_memory(const ClassFeatures& class_features) {
    return append_classes(RepresentationMemory{}, class_features, 0);
}

RepresentationMemory update_representation_memory(const RepresentationMemory& mem,
                                                  const ClassFeatures& new_class_features, int session) {
    return append_classes(mem, new_class_features, session);
}

WeightMemory build_weight_memory(const ClassifierParams& params, const RepresentationMemory& mem, int session) {
    if (mem.size() > 0 && mem.dim() != params.input_dim()) {
        throw DimensionMismatch("memory width " + std::to_string(mem.dim()) + " differs from classifier input " +
                                std::to_string(params.input_dim()));
    }
    WeightMemory w{params, Matrix(mem.size(), params.hidden_dim()), session};
    for (std::size_t k = 0; k < mem.size(); ++k) {
        const Vector p = project(mem.rows.row(k), params);
        std::copy(p.begin(), p.end(), w.projected_means.row(k).begin());
    }
    return w;
}

MemoryBudget memory_budget_bytes(std::size_t classes, std::size_t feature_dim, std::size_t hidden_dim,
                                 std::size_t classifier_params, int precision) {
    if (precision != 4 && precision != 8) throw InvalidArgument("precision must be 4 or 8 bytes");
    const auto p = static_cast<std::uint64_t>(precision);
    MemoryBudget b;
    b.representation = static_cast<std::uint64_t>(classes) * feature_dim * p;
    b.projected = static_cast<std::uint64_t>(classes) * hidden_dim * p;
    b.classifier = static_cast<std::uint64_t>(classifier_params) * p;
    b.total = b.representation + b.projected + b.classifier;
    return b;
}

MemoryBudget memory_budget_bytes(const RepresentationMemory& mem, const WeightMemory& wmem, int precision) {
    return memory_budget_bytes(mem.size(), mem.dim(), wmem.projected_means.cols(),
                               wmem.classifier_snapshot.parameter_count(), precision);
}

}  // namespace gcmr
