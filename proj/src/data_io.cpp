#include "gcmr/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "gcmr/error.hpp"
#include "gcmr/rng.hpp"

namespace gcmr {

namespace {

constexpr std::uint64_t kTagClassOrder = 0x434C5353;  // "CLSS"
constexpr std::uint64_t kTagClassExamples = 0x4558504C;
constexpr std::uint64_t kTagTemplate = 0x54504C54;
constexpr std::uint64_t kTagNoise = 0x4E4F4953;

void require(bool ok, const std::string& message) {
    if (!ok) throw InvalidArgument(message);
}

double to_float32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(ex.label);
    return out;
}

void validate(const ProtocolSpec& spec) {
    require(spec.base_classes >= 1, "protocol.base_classes must be >= 1");
    require(spec.base_classes <= spec.total_classes, "protocol.base_classes must not exceed protocol.total_classes");
    require(spec.n_way >= 1, "protocol.n_way must be >= 1");
    require(spec.k_shot >= 1, "protocol.k_shot must be >= 1");
    require((spec.total_classes - spec.base_classes) % spec.n_way == 0,
            "protocol: total_classes - base_classes (" + std::to_string(spec.total_classes - spec.base_classes) +
                ") is not divisible by n_way (" + std::to_string(spec.n_way) + ")");
}

FscilSplit fscil_split(const ProtocolSpec& spec, std::span<const int> labels) {
    validate(spec);
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    require(by_class.size() == spec.total_classes, "protocol: data has " + std::to_string(by_class.size()) +
                                                       " classes, spec declares " +
                                                       std::to_string(spec.total_classes));
    const std::size_t needed = spec.k_shot + spec.test_per_class;
    for (const auto& [cls, idx] : by_class) {
        require(idx.size() >= needed && idx.size() > spec.test_per_class,
                "protocol: class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                    " examples, needs at least " + std::to_string(needed));
    }

    FscilSplit split;
    for (const auto& [cls, idx] : by_class) split.class_order.push_back(cls);
    Rng order_rng(derive_seed(spec.seed, {kTagClassOrder}));
    order_rng.shuffle(std::span<int>(split.class_order));

    const std::size_t sessions = 1 + (spec.total_classes - spec.base_classes) / spec.n_way;
    split.sessions.resize(sessions);
    for (std::size_t pos = 0; pos < split.class_order.size(); ++pos) {
        const int cls = split.class_order[pos];
        const std::size_t t = pos < spec.base_classes ? 0 : 1 + (pos - spec.base_classes) / spec.n_way;
        auto& s = split.sessions[t];
        s.session = static_cast<int>(t);
        s.classes.push_back(cls);
        std::vector<std::size_t> idx = by_class[cls];
        Rng rng(derive_seed(spec.seed, {kTagClassExamples, static_cast<std::uint64_t>(static_cast<std::int64_t>(cls))}));
        rng.shuffle(std::span<std::size_t>(idx));
        const auto test_end = static_cast<std::ptrdiff_t>(spec.test_per_class);
        s.test.insert(s.test.end(), idx.begin(), idx.begin() + test_end);
        const auto train_end = t == 0 ? idx.end() : idx.begin() + test_end + static_cast<std::ptrdiff_t>(spec.k_shot);
        s.train.insert(s.train.end(), idx.begin() + test_end, train_end);
    }
    return split;
}

std::vector<SessionData> materialize(const Dataset& data, const FscilSplit& split) {
    std::map<int, int> new_label;
    for (std::size_t i = 0; i < split.class_order.size(); ++i) new_label[split.class_order[i]] = static_cast<int>(i);
    auto relabel = [&](std::size_t idx) {
        if (idx >= data.examples.size()) throw InvalidArgument("split refers to a missing example");
        RawExample ex = data.examples[idx];
        ex.label = new_label.at(ex.label);
        ex.id = idx;
        return ex;
    };
    std::vector<SessionData> out;
    for (const auto& s : split.sessions) {
        SessionData sd;
        for (std::size_t i : s.train) sd.train.push_back(relabel(i));
        for (std::size_t i : s.test) sd.test.push_back(relabel(i));
        out.push_back(std::move(sd));
    }
    return out;
}

void validate(const SyntheticSpec& spec) {
    require(spec.token_dim >= 1, "synthetic.token_dim must be >= 1");
    require(spec.group_size >= 2, "synthetic.group_size must be >= 2");
    require(spec.num_classes >= 1, "synthetic.num_classes must be >= 1");
    require(spec.examples_per_class >= 1, "synthetic.examples_per_class must be >= 1");
    require(std::isfinite(spec.class_mean_norm) && spec.class_mean_norm >= 0.0,
            "synthetic.class_mean_norm must be finite and >= 0");
    require(std::isfinite(spec.within_class_sigma) && spec.within_class_sigma > 0.0,
            "synthetic.within_class_sigma must be > 0");
}

Dataset generate_from_templates(const std::vector<Matrix>& templates, double sigma, std::size_t examples_per_class,
                                std::uint64_t seed) {
    require(!templates.empty(), "synthetic: no class templates");
    require(sigma >= 0.0 && std::isfinite(sigma), "synthetic: sigma must be finite and >= 0");
    Dataset data{templates.front().rows(), templates.front().cols(), {}};
    for (std::size_t cls = 0; cls < templates.size(); ++cls) {
        const Matrix& tpl = templates[cls];
        if (tpl.rows() != data.group_size || tpl.cols() != data.raw_dim) {
            throw DimensionMismatch("synthetic: templates differ in shape");
        }
        Rng rng(derive_seed(seed, {kTagNoise, cls}));
        for (std::size_t e = 0; e < examples_per_class; ++e) {
            RawExample ex{Matrix(tpl.rows(), tpl.cols()), static_cast<int>(cls), data.examples.size()};
            auto dst = ex.tokens.values();
            auto src = tpl.values();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = to_float32(src[i] + sigma * rng.normal());
            data.examples.push_back(std::move(ex));
        }
    }
    return data;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    std::vector<Matrix> templates;
    for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
        Rng rng(derive_seed(spec.seed, {kTagTemplate, cls}));
        Matrix tpl(spec.group_size, spec.token_dim);
        double norm2 = 0.0;
        for (double& v : tpl.values()) {
            v = rng.normal();
            norm2 += v * v;
        }
        const double scale = norm2 > 0.0 ? spec.class_mean_norm / std::sqrt(norm2) : 0.0;
        for (double& v : tpl.values()) v *= scale;
        templates.push_back(std::move(tpl));
    }
    return generate_from_templates(templates, spec.within_class_sigma, spec.examples_per_class, spec.seed);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
}

long long parse_int(std::string_view s, std::uint64_t line) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw FormatError(FormatErrorKind::malformed, line, "expected an integer, got '" + std::string(s) + "'");
    }
    return v;
}

double parse_double(std::string_view s, std::uint64_t line) {
    // std::from_chars for double is not available on every supported toolchain.
    const std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size() || !std::isfinite(v)) {
        throw FormatError(FormatErrorKind::malformed, line, "expected a finite number, got '" + tmp + "'");
    }
    return v;
}

}  // namespace

Dataset parse_features_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        lines.push_back(trim(text.substr(start, nl - start)));
        start = nl + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw FormatError(FormatErrorKind::truncated, 1, "CSV has no header");

    const auto header = split_fields(lines[0]);
    if (header.empty() || trim(header[0]) != "label") {
        throw FormatError(FormatErrorKind::malformed, 1, "CSV header must start with 'label'");
    }
    const bool grouped = header.size() > 1 && trim(header[1]) == "token";
    const std::size_t first_feature = grouped ? 2 : 1;
    const std::size_t dim = header.size() - first_feature;
    if (dim == 0) throw FormatError(FormatErrorKind::malformed, 1, "CSV header declares no feature columns");
    for (std::size_t i = 0; i < dim; ++i) {
        if (trim(header[first_feature + i]) != "f" + std::to_string(i)) {
            throw FormatError(FormatErrorKind::malformed, 1, "expected column f" + std::to_string(i));
        }
    }

    Dataset data;
    data.raw_dim = dim;
    std::vector<Vector> tokens;
    int current_label = 0;
    std::size_t line_of_example = 0;
    auto flush = [&](std::uint64_t line) {
        if (tokens.empty()) return;
        if (data.group_size == 0) data.group_size = tokens.size();
        if (tokens.size() != data.group_size) {
            throw FormatError(FormatErrorKind::dimension_mismatch, line,
                              "example has " + std::to_string(tokens.size()) + " tokens, earlier examples have " +
                                  std::to_string(data.group_size));
        }
        data.examples.push_back(RawExample{Matrix::from_rows(tokens), current_label, data.examples.size()});
        tokens.clear();
    };
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::uint64_t line_no = li + 1;
        if (lines[li].empty()) continue;
        const auto fields = split_fields(lines[li]);
        if (fields.size() != header.size()) {
            throw FormatError(FormatErrorKind::dimension_mismatch, line_no,
                              "row has " + std::to_string(fields.size()) + " fields, header has " +
                                  std::to_string(header.size()));
        }
        const long long label = parse_int(trim(fields[0]), line_no);
        if (label < INT32_MIN || label > INT32_MAX) throw FormatError(FormatErrorKind::malformed, line_no, "label out of range");
        Vector row(dim);
        for (std::size_t i = 0; i < dim; ++i) row[i] = parse_double(trim(fields[first_feature + i]), line_no);
        if (!grouped) {
            tokens.push_back(std::move(row));
            current_label = static_cast<int>(label);
            flush(line_no);
            continue;
        }
        const long long token = parse_int(trim(fields[1]), line_no);
        if (token == 0) {
            flush(line_of_example);
            current_label = static_cast<int>(label);
            line_of_example = line_no;
        } else if (token != static_cast<long long>(tokens.size()) || static_cast<int>(label) != current_label) {
            throw FormatError(FormatErrorKind::malformed, line_no,
                              "token " + std::to_string(token) + " does not continue the current example");
        }
        tokens.push_back(std::move(row));
    }
    flush(lines.size());
    if (data.examples.empty()) throw FormatError(FormatErrorKind::truncated, lines.size(), "CSV has no examples");
    return data;
}

std::string features_csv(const Dataset& data) {
    std::ostringstream out;
    out.precision(17);
    const bool grouped = data.group_size != 1;
    out << "label" << (grouped ? ",token" : "");
    for (std::size_t i = 0; i < data.raw_dim; ++i) out << ",f" << i;
    out << '\n';
    for (const auto& ex : data.examples) {
        for (std::size_t r = 0; r < ex.tokens.rows(); ++r) {
            out << ex.label;
            if (grouped) out << ',' << r;
            for (double v : ex.tokens.row(r)) out << ',' << v;
            out << '\n';
        }
    }
    return out.str();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

Dataset load_features(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.rfind("GCMR", 0) == 0) return decode_dataset(bytes);
    return parse_features_csv(bytes);
}

void save_dataset(const Dataset& data, const std::filesystem::path& path, int precision) {
    write_file(path, encode_dataset(data, precision));
}

void save_checkpoint(const SessionState& state, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(state));
}

SessionState load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string epoch_record_json(const EpochRecord& record) {
    nlohmann::ordered_json weights = nlohmann::ordered_json::object();
    for (const auto& [k, v] : record.weights) weights[k] = v;
    nlohmann::ordered_json breakdown = nlohmann::ordered_json::object();
    for (const auto& [k, v] : record.breakdown) breakdown[k] = v;
    nlohmann::ordered_json j{{"session", record.session},
                             {"epoch", record.epoch},
                             {"lr", record.lr},
                             {"alpha_or_beta_terms", weights},
                             {"loss_breakdown", breakdown}};
    return j.dump();
}

RunLog::RunLog(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot open log " + path.string());
}

void RunLog::append(const EpochRecord& record) {
    out_ << epoch_record_json(record) << '\n';
    out_.flush();
}

}  // namespace gcmr
