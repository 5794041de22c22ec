#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gcmr/encoder.hpp"
#include "gcmr/memory.hpp"
#include "gcmr/session_state.hpp"

namespace gcmr {

struct SessionReport {
    int session = 0;
    std::size_t num_classes = 0;
    std::size_t num_test = 0;
    double acc_all = 0.0;
    double acc_base = 0.0;   // over session-0 classes
    double acc_novel = 0.0;  // over classes introduced in sessions >= 1; 0 when there are none
    std::map<int, double> per_class_acc;
    std::map<int, std::size_t> per_class_count;
    MemoryBudget memory_budget;
    double avg_acc_so_far = 0.0;

    friend bool operator==(const SessionReport&, const SessionReport&) = default;
};

struct Summary {
    double avg_acc = 0.0;
    double final_acc = 0.0;
    double base_acc_drop = 0.0;  // acc_base(session 0) - acc_base(last session)

    friend bool operator==(const Summary&, const Summary&) = default;
};

enum class ReportFormat { json, csv };

// Aggregates precomputed predictions. `previous` holds reports for sessions 0..session-1.
SessionReport evaluate_predictions(std::span<const int> labels, std::span<const int> predictions,
                                   const std::set<int>& base_classes, int session, std::size_t num_classes,
                                   std::span<const SessionReport> previous = {});

// Eval-mode argmax over the current classifier for every test example.
SessionReport evaluate_session(const SessionState& state, std::span<const RawExample> test_set,
                               std::span<const SessionReport> previous = {}, int threads = 1);

Summary aggregate(std::span<const SessionReport> reports);

nlohmann::ordered_json to_json(const SessionReport& report);
SessionReport session_report_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const Summary& summary);

nlohmann::ordered_json run_report_json(const std::string& run_name, std::span<const SessionReport> reports,
                                       const Summary& summary);

// CSV: one row per run with per-session accuracy (%), Avg acc. (%) and the final memory budget in bytes.
std::string csv_header(std::size_t sessions);
std::string csv_row(const std::string& run_name, std::span<const SessionReport> reports, const Summary& summary);

// JSON overwrites `path`. CSV appends a row, writing the header only when the file is new or empty;
// an existing file with a different header is rejected.
void write_report(std::span<const SessionReport> reports, const Summary& summary, const std::filesystem::path& path,
                  ReportFormat format, const std::string& run_name = "run");

}  // namespace gcmr
