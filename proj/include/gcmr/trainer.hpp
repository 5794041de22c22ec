#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcmr/encoder.hpp"
#include "gcmr/eval_report.hpp"
#include "gcmr/losses.hpp"
#include "gcmr/session_state.hpp"

namespace gcmr {

struct TrainConfig {
    int base_epochs = 50;
    int incr_epochs = 50;
    double base_lr = 0.001;
    double incr_lr = 0.002;
    double min_lr = 1e-5;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    // model shape
    std::size_t feature_dim = 768;
    std::size_t hidden_dim = 256;
    double dropout_rate = 0.1;
    Activation encoder_activation = Activation::tanh;
    NormKind norm = NormKind::layer;
    LossConfig loss;
    std::uint64_t seed = 0;
    bool memory_regularization = true;
    bool finetune_base = true;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Throws InvalidArgument naming the offending field.
void validate(const TrainConfig& cfg);

struct EpochRecord {
    int session = 0;
    int epoch = 0;
    double lr = 0.0;
    std::vector<std::pair<std::string, double>> weights;    // alpha or beta
    std::vector<std::pair<std::string, double>> breakdown;  // example-weighted epoch means
};

using EpochObserver = std::function<void(const EpochRecord&)>;

// Session 0: joint encoder/decoder/classifier training on E_b, then freeze the encoder and build both memories.
SessionState train_base(std::span<const RawExample> base_data, const TrainConfig& cfg,
                        const EpochObserver& observer = {});

// Session t+1: imprint novel columns onto the weight-memory classifier, train the classifier on E_i
// (or plain cross-entropy with memory regularization off), then extend both memories.
SessionState train_incremental(const SessionState& state, std::span<const RawExample> session_data,
                               const TrainConfig& cfg, const EpochObserver& observer = {});

struct SessionData {
    std::vector<RawExample> train;
    std::vector<RawExample> test;  // test examples of the classes introduced in this session
};

struct ProtocolResult {
    std::vector<SessionReport> reports;
    SessionState final_state;
};

using SessionObserver = std::function<void(const SessionState&, const SessionReport&)>;

// Runs every session and evaluates on the cumulative test set after each one.
ProtocolResult run_protocol(std::span<const SessionData> stream, const TrainConfig& cfg,
                            const EpochObserver& epoch_observer = {}, const SessionObserver& session_observer = {},
                            int eval_threads = 1);

}  // namespace gcmr
