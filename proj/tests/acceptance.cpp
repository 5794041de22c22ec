// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "gcmr/cli.hpp"
#include "gcmr/data_io.hpp"
#include "gcmr/gradcheck.hpp"
#include "gcmr/trainer.hpp"
#include "loss_cases.hpp"

using namespace gcmr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// Central differences over every entry of block against analytic, worst relative error.
double fd_block(std::span<double> block, std::span<const double> analytic, const std::function<double()>& loss) {
    constexpr double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < block.size(); ++i) {
        const double keep = block[i];
        block[i] = keep + h;
        const double up = loss();
        block[i] = keep - h;
        const double down = loss();
        block[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8));
    }
    return worst;
}

Outcome gradients() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t entries = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto inst = make_gradcheck_instance(1000 + seed, 8, 4, 5, 3, 0.7);

        ClassifierParams cls = inst.model.classifier;
        const auto ig = incremental_loss_grad(inst.batch, inst.memory, inst.dictionary, cls, inst.loss, inst.step_seed).grads;
        auto inc = [&] { return incremental_loss(inst.batch, inst.memory, inst.dictionary, cls, inst.loss, inst.step_seed).total; };
        worst = std::max({worst, fd_block(cls.w1.values(), ig.w1.values(), inc), fd_block(cls.b1, ig.b1, inc),
                          fd_block(cls.w2.values(), ig.w2.values(), inc), fd_block(cls.b2, ig.b2, inc)});

        BaseModel m = inst.model;
        const auto bg = base_loss_grad(inst.raw_batch, m, inst.loss, inst.epoch, inst.step_seed);
        auto base = [&] { return base_loss(inst.raw_batch, m, inst.loss, inst.epoch, inst.step_seed).total; };
        worst = std::max({worst, fd_block(m.encoder.weight.values(), bg.encoder.weight.values(), base),
                          fd_block(m.encoder.bias, bg.encoder.bias, base),
                          fd_block(m.decoder.weight.values(), bg.decoder.weight.values(), base),
                          fd_block(m.decoder.bias, bg.decoder.bias, base),
                          fd_block(m.decoder.mask_token, bg.decoder.mask_token, base),
                          fd_block(m.classifier.w1.values(), bg.classifier.w1.values(), base),
                          fd_block(m.classifier.b1, bg.classifier.b1, base),
                          fd_block(m.classifier.w2.values(), bg.classifier.w2.values(), base),
                          fd_block(m.classifier.b2, bg.classifier.b2, base)});
        entries += 2 * cls.w1.size() + 2 * cls.b1.size() + 2 * cls.w2.size() + 2 * cls.b2.size() +
                   m.encoder.weight.size() + m.encoder.bias.size() + m.decoder.weight.size() + m.decoder.bias.size() +
                   m.decoder.mask_token.size();
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 10.0,
            fmt("20 instances, %.0f entries, max rel err %.2e, %.2f s", static_cast<double>(entries), worst, secs)};
}

Outcome degeneracies() {
    Rng rng(2);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const auto c = testing::make_incremental(rng, 8, 4, 3, 2, 6, 0.1);
        LossConfig cfg;
        cfg.beta = 1.0;
        const auto one = incremental_loss(c.batch, c.mem, c.dict, c.params, cfg, 40 + t);
        cfg.beta = 0.0;
        const auto zero = incremental_loss(c.batch, c.mem, c.dict, c.params, cfg, 40 + t);
        worst = std::max({worst, std::abs(one.total - one.distance_term),
                          std::abs(zero.total - (zero.memory_term + zero.classification_term))});

        const auto m = testing::make_model(rng, 6, 8, 4, 5, 0.1);
        const auto batch = testing::make_raw(rng, 5, 4, 6, 5);
        LossConfig base_cfg;
        base_cfg.c = 0.0;
        const auto b = base_loss(batch, m, base_cfg, t % 7, 80 + t);
        worst = std::max(worst, std::abs(b.total - b.classification_term));
    }
    return {worst <= 1e-12, fmt("150 equalities, max abs gap %.2e", worst)};
}

Outcome schedule() {
    LossConfig cfg;
    cfg.c = 0.3;
    bool ok = alpha_schedule(cfg, 0) == cfg.c;
    const double gap = std::abs(alpha_schedule(cfg, 2) - cfg.c / std::exp(1.0));
    ok = ok && gap <= 1e-12;
    bool decreasing = true;
    for (int e = 0; e + 1 < 100; ++e) decreasing = decreasing && alpha_schedule(cfg, e + 1) < alpha_schedule(cfg, e);
    return {ok && decreasing, fmt("alpha(0)=%.3f, |alpha(2)-c/e|=%.1e, decreasing=%.0f", alpha_schedule(cfg, 0), gap,
                                  decreasing ? 1.0 : 0.0)};
}

std::vector<int> balanced_labels(std::size_t classes, std::size_t per_class) {
    std::vector<int> out;
    for (std::size_t c = 0; c < classes; ++c) out.insert(out.end(), per_class, static_cast<int>(c));
    return out;
}

Outcome protocol_shape() {
    ProtocolSpec small{100, 60, 5, 5, 1, 5};
    ProtocolSpec large{200, 100, 10, 5, 1, 5};
    const auto a = fscil_split(small, balanced_labels(100, 15));
    const auto b = fscil_split(large, balanced_labels(200, 15));

    SyntheticSpec s;
    s.token_dim = 4;
    s.group_size = 4;
    s.num_classes = 100;
    s.examples_per_class = 15;
    s.seed = 4;
    const auto data = generate_synthetic(s);
    TrainConfig cfg;
    cfg.base_epochs = 1;
    cfg.incr_epochs = 1;
    cfg.feature_dim = 4;
    cfg.hidden_dim = 4;
    cfg.base_lr = cfg.incr_lr = 0.01;
    std::vector<std::size_t> rows;
    run_protocol(materialize(data, fscil_split(small, data.labels())), cfg, {},
                 [&](const SessionState& st, const SessionReport&) { rows.push_back(st.memory.size()); });
    bool steps = rows.size() == 9;
    for (std::size_t t = 0; steps && t < rows.size(); ++t) steps = rows[t] == 60 + 5 * t;
    const bool ok = a.incremental_sessions() == 8 && b.incremental_sessions() == 10 && steps;
    return {ok, fmt("100/60/5: %.0f sessions, 200/100/10: %.0f sessions, memory rows %.0f..%.0f",
                    static_cast<double>(a.incremental_sessions()), static_cast<double>(b.incremental_sessions()),
                    rows.empty() ? 0.0 : static_cast<double>(rows.front()),
                    rows.empty() ? 0.0 : static_cast<double>(rows.back()))};
}

Outcome memory_budget() {
    const auto b = memory_budget_bytes(1000, 768, 256, 0, 4);
    const double three_mb = 3.0 * 1000 * 1000;
    const bool ok = b.representation == 3'072'000 && std::abs(static_cast<double>(b.representation) - three_mb) <= 0.1 * three_mb;
    return {ok, fmt("representation %.0f bytes", static_cast<double>(b.representation))};
}

// Stream used for the behavioral checks: 20 classes, 12 base + 4 x 2-way 5-shot, D=32, G=8.
std::vector<SessionData> forgetting_stream(std::uint64_t seed) {
    SyntheticSpec s;
    s.token_dim = 32;
    s.group_size = 8;
    s.num_classes = 20;
    s.class_mean_norm = 12.0;
    s.within_class_sigma = 1.0;
    s.examples_per_class = 40;
    s.seed = 100 + seed;
    ProtocolSpec p{20, 12, 2, 5, 200 + seed, 20};
    const auto data = generate_synthetic(s);
    return materialize(data, fscil_split(p, data.labels()));
}

TrainConfig forgetting_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.base_epochs = 20;
    cfg.incr_epochs = 20;
    cfg.base_lr = 0.01;
    cfg.incr_lr = 0.01;
    cfg.batch_size = 16;
    cfg.feature_dim = 32;
    cfg.hidden_dim = 16;
    cfg.seed = 300 + seed;
    return cfg;
}

Outcome invariants() {
    const auto t0 = Clock::now();
    std::vector<SessionState> states;
    run_protocol(forgetting_stream(0), forgetting_config(0), {},
                 [&](const SessionState& s, const SessionReport&) { states.push_back(s); });
    bool ok = states.size() == 5;
    for (const auto& s : states) {
        ok = ok && bit_equal(s.encoder.weight, states[0].encoder.weight) && bit_equal(s.encoder.bias, states[0].encoder.bias);
        const auto& snap = s.weight_memory.classifier_snapshot;
        ok = ok && bit_equal(snap.w1, s.classifier.w1) && bit_equal(snap.b1, s.classifier.b1) &&
             bit_equal(snap.w2, s.classifier.w2) && bit_equal(snap.b2, s.classifier.b2);
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 60.0, fmt("%.0f sessions checked, %.2f s", static_cast<double>(states.size()), secs)};
}

Outcome forgetting() {
    const auto t0 = Clock::now();
    int wins = 0;
    double drop_on = 0, drop_off = 0, base = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto stream = forgetting_stream(seed);
        auto cfg = forgetting_config(seed);
        const auto on = run_protocol(stream, cfg).reports;
        cfg.memory_regularization = false;
        const auto off = run_protocol(stream, cfg).reports;
        const double d_on = on.front().acc_base - on.back().acc_base;
        const double d_off = off.front().acc_base - off.back().acc_base;
        wins += d_on < d_off;
        drop_on += d_on / 10;
        drop_off += d_off / 10;
        base += on.front().acc_base / 10;
    }
    const double secs = seconds_since(t0);
    const bool ok = wins >= 8 && (drop_off - drop_on) * 100.0 >= 5.0 && secs < 120.0;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d/10 pairs, mean drop on %.1f vs off %.1f points, base acc %.3f, %.1f s", wins,
                  100 * drop_on, 100 * drop_off, base, secs);
    return {ok, buf};
}

Outcome imprinting() {
    Rng rng(8);
    int checked = 0, held = 0;
    for (int t = 0; t < 50; ++t) {
        auto p = testing::random_classifier(rng, 10, 6, 4, 0.1);
        std::fill(p.b2.begin(), p.b2.end(), 0.0);
        std::vector<std::pair<int, Vector>> means;
        for (int n = 0; n < 5; ++n) means.emplace_back(4 + n, layer_normalize(testing::random_vector(rng, 10)));
        const auto out = expand_with_imprinting(p, means);
        for (int n = 0; n < 5; ++n) {
            if (l2_norm(project(means[n].second, p)) == 0.0) continue;  // dead projection: no direction to imprint
            const auto z = forward(means[n].second, out, Mode::eval).logits;
            const auto best = std::max_element(z.begin() + 4, z.end()) - z.begin();
            ++checked;
            held += best == 4 + n;
        }
    }
    return {checked > 0 && held == checked, fmt("%.0f/%.0f novel means score their own column highest", held, checked)};
}

std::string read_all(const fs::path& p) { return read_file(p); }

Outcome determinism() {
    const auto t0 = Clock::now();
    const auto dir = fs::temp_directory_path() / "gcmr_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string config = R"({
      "version": 1, "name": "determinism",
      "train": {"base_epochs": 20, "incr_epochs": 20, "base_lr": 0.01, "incr_lr": 0.01, "batch_size": 16, "seed": 11},
      "model": {"feature_dim": 32, "hidden_dim": 16},
      "protocol": {"total_classes": 20, "base_classes": 12, "n_way": 2, "k_shot": 5, "seed": 3, "test_per_class": 20},
      "synthetic": {"token_dim": 32, "group_size": 8, "num_classes": 20, "class_mean_norm": 12.0,
                    "within_class_sigma": 1.0, "examples_per_class": 40, "seed": 5}
    })";
    std::ofstream(dir / "cfg.json") << config;
    std::ostringstream sink;
    const auto cfg = (dir / "cfg.json").string();
    const auto data = (dir / "data.gcmr").string();
    if (cli::main({"synth", "--spec", cfg, "--out", data}, sink, sink) != 0) return {false, "synth failed"};
    std::ostringstream out_a, out_b;
    const int a = cli::main({"run", "--config", cfg, "--data", data, "--out", (dir / "a").string()}, out_a, sink);
    const int b = cli::main({"run", "--config", cfg, "--data", data, "--out", (dir / "b").string()}, out_b, sink);
    if (a != 0 || b != 0) return {false, "run failed"};
    std::size_t files = 0, same = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        ++files;
        const auto twin = dir / "b" / entry.path().filename();
        same += fs::exists(twin) && read_all(entry.path()) == read_all(twin);
    }
    std::size_t files_b = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(dir / "b")) ++files_b;
    const double secs = seconds_since(t0);
    const bool ok = files > 0 && same == files && files_b == files && out_a.str() == out_b.str() && secs < 120.0;
    return {ok, fmt("%.0f/%.0f output files byte-identical, %.1f s", static_cast<double>(same), static_cast<double>(files), secs)};
}

Outcome oracle_equivalence() {
    const auto t0 = Clock::now();
    Rng rng(10);
    double worst = 0.0;
    auto track = [&](double got, double want) { worst = std::max(worst, oracle::rel_err(got, want)); };
    for (int t = 0; t < 100; ++t) {
        const auto z = testing::random_vector(rng, 2 + rng.below(8), 3.0);
        const auto p = softmax(z);
        const auto ref = oracle::softmax(testing::to_vec(z));
        for (std::size_t k = 0; k < z.size(); ++k) track(p[k], ref[k]);
        const auto y = rng.below(z.size());
        track(cross_entropy(z, y), oracle::cross_entropy(testing::to_vec(z), y));

        const double beta = rng.uniform();
        const auto space = t % 2 == 0 ? DistanceSpace::projected : DistanceSpace::raw;
        const auto c = testing::make_incremental(rng, 6, 4, 3, 2, 5, 0.2, space);
        const auto problem = testing::to_oracle(c, beta);
        for (const auto& ex : c.batch) {
            const auto d = distance_vector(ex.feature, c.dict, c.params);
            const auto mapped = problem.projected ? oracle::project(problem.head, ex.feature) : testing::to_vec(ex.feature);
            for (std::size_t k = 0; k < d.size(); ++k) track(d[k], oracle::sq_dist(mapped, problem.dict_rows[k]));
        }
        LossConfig cfg;
        cfg.beta = beta;
        cfg.distance_space = space;
        const auto inc = incremental_loss(c.batch, c.mem, c.dict, c.params, cfg, 500 + t);
        const auto inc_ref = testing::oracle_incremental(c, beta, 500 + t);
        track(inc.total, inc_ref.total);
        track(inc.distance_term, inc_ref.distance);
        track(inc.memory_term, inc_ref.memory);
        track(inc.classification_term, inc_ref.classification);

        const auto m = testing::make_model(rng, 5, 6, 4, 3, 0.1);
        const auto batch = testing::make_raw(rng, 3, 4, 5, 3);
        LossConfig base_cfg;
        base_cfg.c = 0.5 * rng.uniform();
        const int epoch = static_cast<int>(rng.below(6));
        const auto b = base_loss(batch, m, base_cfg, epoch, 900 + t);
        const auto b_ref = testing::oracle_base(m, batch, base_cfg, epoch, 900 + t);
        track(b.total, b_ref.total);
        track(b.reconstruction_term, b_ref.recon);
        track(b.classification_term, b_ref.classification);
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-10 && secs < 10.0, fmt("100 instances, max rel err %.2e, %.2f s", worst, secs)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradients},
        {"loss decomposition", degeneracies},
        {"alpha schedule", schedule},
        {"protocol shape", protocol_shape},
        {"memory budget", memory_budget},
        {"frozen encoder and snapshot", invariants},
        {"forgetting mitigation", forgetting},
        {"imprinting maximum", imprinting},
        {"determinism", determinism},
        {"oracle equivalence", oracle_equivalence},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
