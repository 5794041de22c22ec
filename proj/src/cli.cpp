#include "gcmr/cli.hpp"

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "gcmr/error.hpp"
#include "gcmr/gradcheck.hpp"
#include "gcmr/kernels.hpp"

namespace gcmr::cli {

namespace {

using nlohmann::json;

// Reads the keys of one config section, rejecting anything unread.
class Section {
public:
    Section(const json& doc, std::string prefix) : doc_(doc), prefix_(std::move(prefix)) {
        if (!doc_.is_object()) throw ConfigError(where() + " must be an object");
    }

    template <class T>
    void read(const char* key, T& value) {
        seen_.insert(key);
        if (!doc_.contains(key)) return;
        try {
            value = doc_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key) + " has the wrong type");
        }
    }

    template <class Enum>
    void read_enum(const char* key, Enum& value, std::initializer_list<std::pair<const char*, Enum>> names) {
        std::string s;
        read(key, s);
        if (!doc_.contains(key)) return;
        for (const auto& [n, v] : names) {
            if (s == n) {
                value = v;
                return;
            }
        }
        throw ConfigError(field(key) + " has unknown value '" + s + "'");
    }

    void mark(const char* key) { seen_.insert(key); }

    bool has(const char* key) const { return doc_.contains(key); }

    void finish() const {
        for (const auto& [key, v] : doc_.items()) {
            if (!seen_.contains(key)) throw ConfigError("unknown config key " + field(key.c_str()));
        }
    }

    std::string field(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

private:
    std::string where() const { return prefix_.empty() ? "config" : prefix_; }

    const json& doc_;
    std::string prefix_;
    std::set<std::string> seen_;
};

template <class Fn>
void checked(Fn&& fn) {
    try {
        fn();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
    RunConfig cfg;
    Section top(doc, "");
    int version = 0;
    top.read("version", version);
    if (!top.has("version")) throw ConfigError("config is missing 'version'");
    if (version != kConfigVersion) {
        throw ConfigError("config version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kConfigVersion) + ")");
    }
    top.read("name", cfg.name);
    const json empty = json::object();
    auto section = [&](const char* key) -> const json& {
        top.mark(key);
        return doc.contains(key) ? doc.at(key) : empty;
    };

    TrainConfig& t = cfg.train;
    {
        Section s(section("train"), "train");
        s.read("base_epochs", t.base_epochs);
        s.read("incr_epochs", t.incr_epochs);
        s.read("base_lr", t.base_lr);
        s.read("incr_lr", t.incr_lr);
        s.read("min_lr", t.min_lr);
        s.read("momentum", t.momentum);
        s.read("batch_size", t.batch_size);
        s.read("seed", t.seed);
        s.read("memory_regularization", t.memory_regularization);
        s.read("finetune_base", t.finetune_base);
        s.finish();
    }
    {
        Section s(section("model"), "model");
        s.read("feature_dim", t.feature_dim);
        s.read("hidden_dim", t.hidden_dim);
        s.read("dropout_rate", t.dropout_rate);
        s.read_enum("activation", t.encoder_activation,
                    {{"tanh", Activation::tanh}, {"identity", Activation::identity}});
        s.read_enum("norm", t.norm, {{"layer", NormKind::layer}, {"l2", NormKind::l2}});
        s.finish();
    }
    {
        LossConfig& l = t.loss;
        Section s(section("loss"), "loss");
        s.read("c", l.c);
        s.read("beta", l.beta);
        s.read("mask_ratio", l.mask_ratio);
        s.read_enum("recon_scope", l.recon_scope,
                    {{"all_tokens", ReconScope::all_tokens}, {"masked_only", ReconScope::masked_only}});
        s.read_enum("distance_space", l.distance_space,
                    {{"projected", DistanceSpace::projected}, {"raw", DistanceSpace::raw}});
        s.read_enum("novel_rows", l.novel_rows, {{"provisional", NovelRows::provisional}, {"ignore", NovelRows::ignore}});
        s.finish();
        if (!(l.c > 0.0)) throw ConfigError("loss.c must be > 0");
    }
    {
        ProtocolSpec& p = cfg.protocol;
        Section s(section("protocol"), "protocol");
        s.read("total_classes", p.total_classes);
        s.read("base_classes", p.base_classes);
        s.read("n_way", p.n_way);
        s.read("k_shot", p.k_shot);
        s.read("seed", p.seed);
        s.read("test_per_class", p.test_per_class);
        s.finish();
    }
    {
        SyntheticSpec& y = cfg.synthetic;
        Section s(section("synthetic"), "synthetic");
        s.read("token_dim", y.token_dim);
        s.read("group_size", y.group_size);
        s.read("num_classes", y.num_classes);
        s.read("class_mean_norm", y.class_mean_norm);
        s.read("within_class_sigma", y.within_class_sigma);
        s.read("examples_per_class", y.examples_per_class);
        s.read("seed", y.seed);
        s.finish();
    }
    {
        Section s(section("paths"), "paths");
        s.read("data", cfg.data_path);
        s.read("out", cfg.out_dir);
        s.finish();
    }
    top.finish();
    checked([&] { validate(cfg.train); });
    checked([&] { validate(cfg.protocol); });
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(doc);
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
    const TrainConfig& t = cfg.train;
    const LossConfig& l = t.loss;
    return {{"version", kConfigVersion},
            {"name", cfg.name},
            {"train",
             {{"base_epochs", t.base_epochs},
              {"incr_epochs", t.incr_epochs},
              {"base_lr", t.base_lr},
              {"incr_lr", t.incr_lr},
              {"min_lr", t.min_lr},
              {"momentum", t.momentum},
              {"batch_size", t.batch_size},
              {"seed", t.seed},
              {"memory_regularization", t.memory_regularization},
              {"finetune_base", t.finetune_base}}},
            {"model",
             {{"feature_dim", t.feature_dim},
              {"hidden_dim", t.hidden_dim},
              {"dropout_rate", t.dropout_rate},
              {"activation", t.encoder_activation == Activation::tanh ? "tanh" : "identity"},
              {"norm", t.norm == NormKind::layer ? "layer" : "l2"}}},
            {"loss",
             {{"c", l.c},
              {"beta", l.beta},
              {"mask_ratio", l.mask_ratio},
              {"recon_scope", l.recon_scope == ReconScope::all_tokens ? "all_tokens" : "masked_only"},
              {"distance_space", l.distance_space == DistanceSpace::projected ? "projected" : "raw"},
              {"novel_rows", l.novel_rows == NovelRows::provisional ? "provisional" : "ignore"}}},
            {"protocol",
             {{"total_classes", cfg.protocol.total_classes},
              {"base_classes", cfg.protocol.base_classes},
              {"n_way", cfg.protocol.n_way},
              {"k_shot", cfg.protocol.k_shot},
              {"seed", cfg.protocol.seed},
              {"test_per_class", cfg.protocol.test_per_class}}},
            {"synthetic",
             {{"token_dim", cfg.synthetic.token_dim},
              {"group_size", cfg.synthetic.group_size},
              {"num_classes", cfg.synthetic.num_classes},
              {"class_mean_norm", cfg.synthetic.class_mean_norm},
              {"within_class_sigma", cfg.synthetic.within_class_sigma},
              {"examples_per_class", cfg.synthetic.examples_per_class},
              {"seed", cfg.synthetic.seed}}},
            {"paths", {{"data", cfg.data_path}, {"out", cfg.out_dir}}}};
}

namespace {

int cmd_synth(const std::string& spec_path, const std::string& out_path, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = load_run_config(spec_path);
        validate(cfg.synthetic);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const InvalidArgument& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    try {
        const Dataset data = generate_synthetic(cfg.synthetic);
        save_dataset(data, out_path);
        out << "wrote " << data.examples.size() << " examples (" << cfg.synthetic.num_classes << " classes, "
            << data.group_size << "x" << data.raw_dim << " tokens) to " << out_path << '\n';
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kOk;
}

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * v);
    return buf;
}

struct RunFlags {
    std::string config, data, out;
    bool no_memory_reg = false;
    bool no_base_finetune = false;
    std::optional<double> beta;
};

int cmd_run(const RunFlags& flags, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    std::vector<std::string> overrides;
    std::vector<std::string> path_overrides;  // logged but kept out of the report so output dirs can differ
    try {
        cfg = load_run_config(flags.config);
        if (flags.no_memory_reg) {
            cfg.train.memory_regularization = false;
            overrides.push_back("train.memory_regularization=false (--no-memory-reg)");
            cfg.name += "-no-memory-reg";
        }
        if (flags.no_base_finetune) {
            cfg.train.finetune_base = false;
            overrides.push_back("train.finetune_base=false (--no-base-finetune)");
            cfg.name += "-no-base-finetune";
        }
        if (flags.beta) {
            cfg.train.loss.beta = *flags.beta;
            std::ostringstream s;
            s << "loss.beta=" << *flags.beta << " (--beta)";
            overrides.push_back(s.str());
            std::ostringstream n;
            n << "-beta" << *flags.beta;
            cfg.name += n.str();
        }
        if (!flags.data.empty()) {
            if (!cfg.data_path.empty()) path_overrides.push_back("paths.data=" + flags.data + " (--data)");
            cfg.data_path = flags.data;
        }
        if (!flags.out.empty()) {
            if (!cfg.out_dir.empty()) path_overrides.push_back("paths.out=" + flags.out + " (--out)");
            cfg.out_dir = flags.out;
        }
        if (cfg.data_path.empty()) throw ConfigError("no dataset: pass --data or set paths.data");
        if (cfg.out_dir.empty()) throw ConfigError("no output directory: pass --out or set paths.out");
        checked([&] { validate(cfg.train); });
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    for (const auto& o : overrides) err << "override: " << o << '\n';
    for (const auto& o : path_overrides) err << "override: " << o << '\n';

    std::vector<SessionData> stream;
    try {
        const Dataset data = load_features(cfg.data_path);
        if (data.group_size < 2) {
            throw InvalidArgument("feature groups need at least 2 tokens; single-vector CSV rows cannot drive training");
        }
        stream = materialize(data, fscil_split(cfg.protocol, data.labels()));
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    }

    const std::filesystem::path dir(cfg.out_dir);
    std::vector<SessionReport> reports;
    try {
        std::filesystem::create_directories(dir);
        RunLog log(dir / "log.jsonl");
        auto on_epoch = [&](const EpochRecord& r) { log.append(r); };
        auto on_session = [&](const SessionState& s, const SessionReport&) {
            save_checkpoint(s, dir / ("checkpoint_session_" + std::to_string(s.session) + ".gcmr"));
        };
        reports = run_protocol(stream, cfg.train, on_epoch, on_session, kernels::configured_threads()).reports;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const InvalidArgument& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }

    const Summary summary = aggregate(reports);
    try {
        auto j = run_report_json(cfg.name, reports, summary);
        nlohmann::ordered_json ov = nlohmann::ordered_json::array();
        for (const auto& o : overrides) ov.push_back(o);
        j["overrides"] = ov;
        RunConfig recorded = cfg;
        recorded.data_path.clear();
        recorded.out_dir.clear();
        j["config"] = to_json(recorded);
        write_file(dir / "report.json", j.dump(2) + "\n");
        std::filesystem::remove(dir / "report.csv");
        write_report(reports, summary, dir / "report.csv", ReportFormat::csv, cfg.name);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }

    out << "session classes acc_all acc_base acc_novel\n";
    for (const auto& r : reports) {
        out << std::setw(7) << r.session << ' ' << std::setw(7) << r.num_classes << ' ' << fmt_pct(r.acc_all) << "  "
            << fmt_pct(r.acc_base) << "   " << fmt_pct(r.acc_novel) << '\n';
    }
    out << "avg_acc " << fmt_pct(summary.avg_acc) << "  final_acc " << fmt_pct(summary.final_acc)
        << "  base_acc_drop " << fmt_pct(summary.base_acc_drop) << '\n';
    return kOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& dims, bool corrupt, std::ostream& out, std::ostream& err) {
    std::size_t d = 0, h = 0, c = 0;
    {
        char extra = 0;
        if (std::sscanf(dims.c_str(), "%zu,%zu,%zu%c", &d, &h, &c, &extra) != 3) {
            err << "config error: --dims expects D,H,C\n";
            return kConfigError;
        }
    }
    if (d < 2 || h < 1 || c < 4 || d * h * c > 10000) {
        err << "config error: --dims needs D >= 2, H >= 1, C >= 4 and D*H*C <= 10000\n";
        return kConfigError;
    }
    const auto rows = run_gradcheck(make_gradcheck_instance(seed, d, h, c), 1e-5, corrupt);
    bool pass = true;
    out << "loss        block         entries  max_rel_err  status\n";
    for (const auto& r : rows) {
        const bool ok = r.max_rel_error < 1e-4;
        pass = pass && ok;
        char line[128];
        std::snprintf(line, sizeof line, "%-11s %-13s %7zu  %.3e    %s\n", r.loss.c_str(), r.block.c_str(), r.entries,
                      r.max_rel_error, ok ? "pass" : "FAIL");
        out << line;
    }
    out << (pass ? "gradcheck passed\n" : "gradcheck FAILED\n");
    return pass ? kOk : kCheckFailed;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& format, std::ostream& out, std::ostream& err) {
    struct Run {
        std::string name;
        std::vector<SessionReport> reports;
        Summary summary;
    };
    std::vector<Run> loaded;
    for (const auto& dir : runs) {
        try {
            const auto j = nlohmann::ordered_json::parse(read_file(std::filesystem::path(dir) / "report.json"));
            Run r;
            r.name = j.at("run").get<std::string>();
            for (const auto& s : j.at("sessions")) r.reports.push_back(session_report_from_json(s));
            r.summary = aggregate(r.reports);
            loaded.push_back(std::move(r));
        } catch (const std::exception& e) {
            err << "data error: cannot read report in " << dir << ": " << e.what() << '\n';
            return kDataError;
        }
    }
    for (const auto& r : loaded) {
        if (r.reports.size() != loaded.front().reports.size()) {
            err << "config error: run '" << r.name << "' has " << r.reports.size() << " sessions but '"
                << loaded.front().name << "' has " << loaded.front().reports.size()
                << "; runs must share one protocol to be compared\n";
            return kConfigError;
        }
    }
    if (format == "csv") {
        out << csv_header(loaded.front().reports.size()) << '\n';
        for (const auto& r : loaded) out << csv_row(r.name, r.reports, r.summary) << '\n';
    } else {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : loaded) {
            nlohmann::ordered_json acc = nlohmann::ordered_json::array();
            for (const auto& s : r.reports) acc.push_back(s.acc_all);
            arr.push_back({{"run", r.name},
                           {"session_acc", acc},
                           {"avg_acc", r.summary.avg_acc},
                           {"base_acc_drop", r.summary.base_acc_drop},
                           {"memory_bytes", r.reports.back().memory_budget.total}});
        }
        out << arr.dump(2) << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"few-shot class-incremental training with class-mean memory"};
    app.require_subcommand(1);

    std::string synth_spec, synth_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic token-group dataset");
    synth->add_option("--spec", synth_spec, "config file with a synthetic section")->required();
    synth->add_option("--out", synth_out, "output dataset file")->required();

    RunFlags run_flags;
    double beta = 0.0;
    auto* run = app.add_subcommand("run", "run the full incremental protocol");
    run->add_option("--config", run_flags.config)->required();
    run->add_option("--data", run_flags.data, "binary dataset or CSV features");
    run->add_option("--out", run_flags.out, "output directory");
    run->add_flag("--no-memory-reg", run_flags.no_memory_reg, "plain cross-entropy in incremental sessions");
    run->add_flag("--no-base-finetune", run_flags.no_base_finetune, "keep the encoder at its initialization");
    auto* beta_opt = run->add_option("--beta", beta, "override loss.beta");

    std::uint64_t gc_seed = 0;
    std::string gc_dims = "8,4,5";
    bool gc_corrupt = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
    gradcheck->add_option("--seed", gc_seed);
    gradcheck->add_option("--dims", gc_dims, "D,H,C");
    gradcheck->add_flag("--corrupt-gradient", gc_corrupt, "negative control: perturb one analytic entry");

    std::vector<std::string> report_runs;
    std::string report_format = "csv";
    auto* report = app.add_subcommand("report", "merge run reports into one comparison table");
    report->add_option("--runs", report_runs, "run directories")->required();
    report->add_option("--format", report_format)->check(CLI::IsMember({"csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return kConfigError;
    }

    try {
        if (*synth) return cmd_synth(synth_spec, synth_out, out, err);
        if (*run) {
            if (*beta_opt) run_flags.beta = beta;
            return cmd_run(run_flags, out, err);
        }
        if (*gradcheck) return cmd_gradcheck(gc_seed, gc_dims, gc_corrupt, out, err);
        if (*report) return cmd_report(report_runs, report_format, out, err);
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kConfigError;
}

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"gcmr"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return main(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace gcmr::cli
