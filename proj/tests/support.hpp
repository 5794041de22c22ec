#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gcmr/classifier.hpp"
#include "gcmr/losses.hpp"
#include "gcmr/rng.hpp"
#include "gcmr/tensor.hpp"

#include "oracle.hpp"

namespace testing {

inline gcmr::Vector random_vector(gcmr::Rng& rng, std::size_t n, double scale = 1.0) {
    gcmr::Vector v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

inline gcmr::Matrix random_matrix(gcmr::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    gcmr::Matrix m(r, c);
    for (double& x : m.values()) x = scale * rng.normal();
    return m;
}

inline oracle::Mat to_mat(const gcmr::Matrix& m) {
    oracle::Mat out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
    return out;
}

inline oracle::Vec to_vec(std::span<const double> v) { return {v.begin(), v.end()}; }

inline oracle::Head to_head(const gcmr::ClassifierParams& p) {
    return {to_mat(p.w1), p.b1, to_mat(p.w2), p.b2, p.dropout_rate};
}

inline gcmr::ClassifierParams random_classifier(gcmr::Rng& rng, std::size_t d, std::size_t h, std::size_t c,
                                                double dropout = 0.0) {
    gcmr::ClassifierParams p;
    p.w1 = random_matrix(rng, d, h, 0.7);
    p.b1 = random_vector(rng, h, 0.3);
    for (double& b : p.b1) b += 0.2;
    p.w2 = random_matrix(rng, h, c, 0.7);
    p.b2 = random_vector(rng, c, 0.3);
    p.dropout_rate = dropout;
    return p;
}

// Scratch directory under the build tree, wiped on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("gcmr_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
