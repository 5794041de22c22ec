#pragma once

#include <span>
#include <vector>

#include "gcmr/classifier.hpp"
#include "gcmr/encoder.hpp"
#include "gcmr/losses.hpp"

// Data-parallel loops over examples. Each *_parallel kernel writes one slot per example and has a
// *_serial twin kept as the reference; both must agree bit for bit.
namespace gcmr::kernels {

// Threads for evaluation-side kernels: GCMR_THREADS if set to a positive integer, otherwise 1.
int configured_threads();

std::vector<LabeledFeature> extract_features_serial(std::span<const RawExample> examples,
                                                    const EncoderParams& encoder);
std::vector<LabeledFeature> extract_features_parallel(std::span<const RawExample> examples,
                                                      const EncoderParams& encoder, int threads);

// Eval-mode argmax of the logits (ties to the lowest index).
std::vector<int> predict_serial(std::span<const LabeledFeature> features, const ClassifierParams& params);
std::vector<int> predict_parallel(std::span<const LabeledFeature> features, const ClassifierParams& params,
                                  int threads);

}  // namespace gcmr::kernels
