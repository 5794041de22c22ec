#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcmr/encoder.hpp"
#include "gcmr/session_state.hpp"
#include "gcmr/trainer.hpp"

namespace gcmr {

// Labelled raw token groups; every example is group_size x raw_dim.
struct Dataset {
    std::size_t group_size = 0;
    std::size_t raw_dim = 0;
    std::vector<RawExample> examples;

    std::vector<int> labels() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct ProtocolSpec {
    std::size_t total_classes = 100;
    std::size_t base_classes = 60;
    std::size_t n_way = 5;
    std::size_t k_shot = 5;
    std::uint64_t seed = 0;
    std::size_t test_per_class = 20;

    friend bool operator==(const ProtocolSpec&, const ProtocolSpec&) = default;
};

void validate(const ProtocolSpec& spec);

struct SessionSplit {
    int session = 0;
    std::vector<int> classes;       // original class ids, in new-label order
    std::vector<std::size_t> train;  // dataset indices
    std::vector<std::size_t> test;
};

struct FscilSplit {
    std::vector<int> class_order;  // class_order[new_label] = original class id
    std::vector<SessionSplit> sessions;

    std::size_t incremental_sessions() const { return sessions.empty() ? 0 : sessions.size() - 1; }
};

// Shuffles classes by seed; the first base_classes form session 0 (all non-test examples), the rest are grouped
// n_way at a time with exactly k_shot training examples each. Every class keeps test_per_class test examples.
FscilSplit fscil_split(const ProtocolSpec& spec, std::span<const int> labels);

// Builds per-session train/test sets, relabelling classes to 0..C-1 in introduction order.
std::vector<SessionData> materialize(const Dataset& data, const FscilSplit& split);

struct SyntheticSpec {
    std::size_t token_dim = 16;  // D
    std::size_t group_size = 8;  // G
    std::size_t num_classes = 20;
    double class_mean_norm = 4.0;
    double within_class_sigma = 1.0;
    std::size_t examples_per_class = 30;
    std::uint64_t seed = 0;

    friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

void validate(const SyntheticSpec& spec);

// Each class gets a G x D template drawn uniformly on the sphere of radius class_mean_norm; examples add
// iid N(0, sigma^2) noise per entry. Values are rounded to 32-bit floats so feature files round-trip exactly.
Dataset generate_synthetic(const SyntheticSpec& spec);
Dataset generate_from_templates(const std::vector<Matrix>& templates, double sigma, std::size_t examples_per_class,
                                std::uint64_t seed);

// CSV with header `label,f0,...,f{D-1}` (one single-token example per line) or
// `label,token,f0,...` (tokens 0..G-1 of one example on consecutive lines).
Dataset parse_features_csv(std::string_view text);
std::string features_csv(const Dataset& data);

// Binary container: "GCMR", u16 version, u8 kind, u8 float width, little-endian body, trailing CRC32.
inline constexpr std::uint16_t kFormatVersion = 1;

std::string encode_dataset(const Dataset& data, int precision = 4);
Dataset decode_dataset(std::string_view bytes);
std::string encode_checkpoint(const SessionState& state);
SessionState decode_checkpoint(std::string_view bytes);

// Dispatches on content: the binary magic, otherwise CSV.
Dataset load_features(const std::filesystem::path& path);
void save_dataset(const Dataset& data, const std::filesystem::path& path, int precision = 4);
void save_checkpoint(const SessionState& state, const std::filesystem::path& path);
SessionState load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// One JSON object per epoch: {session, epoch, lr, alpha_or_beta_terms, loss_breakdown}.
std::string epoch_record_json(const EpochRecord& record);

class RunLog {
public:
    explicit RunLog(const std::filesystem::path& path);
    void append(const EpochRecord& record);

private:
    std::ofstream out_;
};

}  // namespace gcmr
