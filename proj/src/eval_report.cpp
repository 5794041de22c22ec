#include "gcmr/eval_report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gcmr/error.hpp"
#include "gcmr/kernels.hpp"

namespace gcmr {

SessionReport evaluate_predictions(std::span<const int> labels, std::span<const int> predictions,
                                   const std::set<int>& base_classes, int session, std::size_t num_classes,
                                   std::span<const SessionReport> previous) {
    if (labels.size() != predictions.size()) throw DimensionMismatch("labels and predictions differ in length");
    SessionReport r;
    r.session = session;
    r.num_classes = num_classes;
    r.num_test = labels.size();
    std::map<int, std::size_t> correct;
    std::size_t all_correct = 0, base_total = 0, base_correct = 0, novel_total = 0, novel_correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw InvalidArgument("test label " + std::to_string(y) + " is not among the " +
                                  std::to_string(num_classes) + " classes seen so far");
        }
        const bool hit = predictions[i] == y;
        ++r.per_class_count[y];
        correct[y] += hit ? 1 : 0;
        all_correct += hit ? 1 : 0;
        if (base_classes.contains(y)) {
            ++base_total;
            base_correct += hit ? 1 : 0;
        } else {
            ++novel_total;
            novel_correct += hit ? 1 : 0;
        }
    }
    for (const auto& [cls, count] : r.per_class_count) {
        r.per_class_acc[cls] = static_cast<double>(correct[cls]) / static_cast<double>(count);
    }
    auto frac = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    r.acc_all = frac(all_correct, labels.size());
    r.acc_base = frac(base_correct, base_total);
    r.acc_novel = frac(novel_correct, novel_total);
    double sum = r.acc_all;
    for (const auto& p : previous) sum += p.acc_all;
    r.avg_acc_so_far = sum / static_cast<double>(previous.size() + 1);
    return r;
}

SessionReport evaluate_session(const SessionState& state, std::span<const RawExample> test_set,
                               std::span<const SessionReport> previous, int threads) {
    const auto features = threads > 1 ? kernels::extract_features_parallel(test_set, state.encoder, threads)
                                      : kernels::extract_features_serial(test_set, state.encoder);
    const auto predictions = threads > 1 ? kernels::predict_parallel(features, state.classifier, threads)
                                         : kernels::predict_serial(features, state.classifier);
    std::vector<int> labels;
    labels.reserve(test_set.size());
    for (const auto& ex : test_set) labels.push_back(ex.label);
    std::set<int> base;
    for (std::size_t k = 0; k < state.memory.size(); ++k) {
        if (state.memory.session_of[k] == 0) base.insert(state.memory.class_ids[k]);
    }
    auto report = evaluate_predictions(labels, predictions, base, state.session, state.classifier.num_classes(),
                                       previous);
    report.memory_budget = memory_budget_bytes(state.memory, state.weight_memory, 4);
    return report;
}

Summary aggregate(std::span<const SessionReport> reports) {
    if (reports.empty()) throw InvalidArgument("aggregate: no reports");
    Summary s;
    double sum = 0.0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (reports[i].session != static_cast<int>(i)) {
            throw InvalidArgument("aggregate: expected session " + std::to_string(i) + ", found " +
                                  std::to_string(reports[i].session));
        }
        sum += reports[i].acc_all;
    }
    s.avg_acc = sum / static_cast<double>(reports.size());
    s.final_acc = reports.back().acc_all;
    s.base_acc_drop = reports.front().acc_base - reports.back().acc_base;
    return s;
}

nlohmann::ordered_json to_json(const SessionReport& r) {
    nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
    for (const auto& [cls, acc] : r.per_class_acc) {
        per_class[std::to_string(cls)] = {{"acc", acc}, {"count", r.per_class_count.at(cls)}};
    }
    return {{"session", r.session},
            {"num_classes", r.num_classes},
            {"num_test", r.num_test},
            {"acc_all", r.acc_all},
            {"acc_base", r.acc_base},
            {"acc_novel", r.acc_novel},
            {"avg_acc_so_far", r.avg_acc_so_far},
            {"memory_budget",
             {{"representation", r.memory_budget.representation},
              {"projected", r.memory_budget.projected},
              {"classifier", r.memory_budget.classifier},
              {"total", r.memory_budget.total}}},
            {"per_class", per_class}};
}

SessionReport session_report_from_json(const nlohmann::ordered_json& j) {
    SessionReport r;
    r.session = j.at("session").get<int>();
    r.num_classes = j.at("num_classes").get<std::size_t>();
    r.num_test = j.at("num_test").get<std::size_t>();
    r.acc_all = j.at("acc_all").get<double>();
    r.acc_base = j.at("acc_base").get<double>();
    r.acc_novel = j.at("acc_novel").get<double>();
    r.avg_acc_so_far = j.at("avg_acc_so_far").get<double>();
    const auto& mb = j.at("memory_budget");
    r.memory_budget = {mb.at("representation").get<std::uint64_t>(), mb.at("projected").get<std::uint64_t>(),
                       mb.at("classifier").get<std::uint64_t>(), mb.at("total").get<std::uint64_t>()};
    for (const auto& [key, value] : j.at("per_class").items()) {
        const int cls = std::stoi(key);
        r.per_class_acc[cls] = value.at("acc").get<double>();
        r.per_class_count[cls] = value.at("count").get<std::size_t>();
    }
    return r;
}

nlohmann::ordered_json to_json(const Summary& s) {
    return {{"avg_acc", s.avg_acc}, {"final_acc", s.final_acc}, {"base_acc_drop", s.base_acc_drop}};
}

nlohmann::ordered_json run_report_json(const std::string& run_name, std::span<const SessionReport> reports,
                                       const Summary& summary) {
    nlohmann::ordered_json sessions = nlohmann::ordered_json::array();
    for (const auto& r : reports) sessions.push_back(to_json(r));
    return {{"run", run_name}, {"sessions", sessions}, {"summary", to_json(summary)}};
}

namespace {

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
    return buf;
}

}  // namespace

std::string csv_header(std::size_t sessions) {
    std::string h = "run";
    for (std::size_t i = 0; i < sessions; ++i) h += ",session_" + std::to_string(i);
    h += ",avg_acc,memory_bytes";
    return h;
}

std::string csv_row(const std::string& run_name, std::span<const SessionReport> reports, const Summary& summary) {
    std::string row = run_name;
    for (const auto& r : reports) row += "," + percent(r.acc_all);
    row += "," + percent(summary.avg_acc);
    row += "," + std::to_string(reports.empty() ? 0 : reports.back().memory_budget.total);
    return row;
}

void write_report(std::span<const SessionReport> reports, const Summary& summary, const std::filesystem::path& path,
                  ReportFormat format, const std::string& run_name) {
    if (format == ReportFormat::json) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + path.string() + " for writing");
        out << run_report_json(run_name, reports, summary).dump(2) << '\n';
        if (!out) throw Error("failed writing " + path.string());
        return;
    }
    const std::string header = csv_header(reports.size());
    bool need_header = true;
    if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
        std::ifstream in(path);
        std::string existing;
        std::getline(in, existing);
        if (existing != header) {
            throw InvalidArgument("cannot append to " + path.string() + ": it has " + existing +
                                  " but this run needs " + header);
        }
        need_header = false;
    }
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    if (need_header) out << header << '\n';
    out << csv_row(run_name, reports, summary) << '\n';
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace gcmr
