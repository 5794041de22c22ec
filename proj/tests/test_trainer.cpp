#include "doctest.h"

#include "gcmr/data_io.hpp"
#include "gcmr/error.hpp"
#include "gcmr/trainer.hpp"
#include "support.hpp"

using namespace gcmr;

namespace {

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.base_epochs = 5;
    cfg.incr_epochs = 5;
    cfg.base_lr = 0.02;
    cfg.incr_lr = 0.02;
    cfg.batch_size = 16;
    cfg.feature_dim = 12;
    cfg.hidden_dim = 8;
    cfg.seed = 3;
    return cfg;
}

std::vector<SessionData> synthetic_stream(std::size_t total, std::size_t base, std::size_t way, std::uint64_t seed,
                                          std::size_t per_class = 30, double norm = 10.0, double sigma = 1.0) {
    SyntheticSpec s;
    s.token_dim = 8;
    s.group_size = 4;
    s.num_classes = total;
    s.class_mean_norm = norm;
    s.within_class_sigma = sigma;
    s.examples_per_class = per_class;
    s.seed = seed;
    ProtocolSpec p;
    p.total_classes = total;
    p.base_classes = base;
    p.n_way = way;
    p.k_shot = 5;
    p.test_per_class = 10;
    p.seed = seed;
    const auto data = generate_synthetic(s);
    return materialize(data, fscil_split(p, data.labels()));
}

}  // namespace

TEST_CASE("train config validation names the field") {
    auto cfg = small_config();
    CHECK_NOTHROW(validate(cfg));
    cfg.batch_size = 0;
    CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("train.batch_size"), InvalidArgument);
    cfg = small_config();
    cfg.momentum = 1.0;
    CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("train.momentum"), InvalidArgument);
    cfg = small_config();
    cfg.loss.beta = -1;
    CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("loss.beta"), InvalidArgument);
}

TEST_CASE("train_base with zero epochs still builds both memories") {
    const auto stream = synthetic_stream(6, 6, 1, 1);
    auto cfg = small_config();
    cfg.base_epochs = 0;
    const auto s = train_base(stream[0].train, cfg);
    CHECK(s.session == 0);
    CHECK(s.encoder.frozen);
    CHECK(s.memory.size() == 6);
    CHECK(s.weight_memory.projected_means.rows() == 6);
    CHECK(s.weight_memory.classifier_snapshot == s.classifier);
}

TEST_CASE("train_base separates well-separated clusters") {
    // class templates of norm 12 against sigma 0.3 noise: pooled means sit far more than 6 sigma apart
    const auto stream = synthetic_stream(4, 4, 1, 9, 40, 12.0, 0.3);
    auto cfg = small_config();
    cfg.base_epochs = 50;
    cfg.base_lr = 0.01;
    const auto s = train_base(stream[0].train, cfg);
    const auto r = evaluate_session(s, stream[0].test);
    CHECK(r.acc_all >= 0.95);
}

TEST_CASE("train_base is deterministic and logs one record per epoch") {
    const auto stream = synthetic_stream(5, 5, 1, 2);
    const auto cfg = small_config();
    std::vector<EpochRecord> log;
    const auto a = train_base(stream[0].train, cfg, [&](const EpochRecord& r) { log.push_back(r); });
    const auto b = train_base(stream[0].train, cfg);
    CHECK(a == b);
    CHECK(bit_equal(a.classifier.w1, b.classifier.w1));
    REQUIRE(log.size() == 5);
    CHECK(log[0].weights[0].first == "alpha");
    CHECK(log[0].weights[0].second == doctest::Approx(cfg.loss.c));
    CHECK(log[0].breakdown.size() == 3);
    CHECK(log[0].lr == cfg.base_lr);
    auto other = cfg;
    other.seed = 4;
    CHECK_FALSE(train_base(stream[0].train, other) == a);
}

TEST_CASE("train_base without finetuning keeps the initial encoder") {
    const auto stream = synthetic_stream(5, 5, 1, 2);
    auto cfg = small_config();
    cfg.finetune_base = false;
    const auto a = train_base(stream[0].train, cfg);
    cfg.base_epochs = 0;
    const auto untouched = train_base(stream[0].train, cfg);
    CHECK(bit_equal(a.encoder.weight, untouched.encoder.weight));
    CHECK(bit_equal(a.decoder.weight, untouched.decoder.weight));
    CHECK_FALSE(bit_equal(a.classifier.w2, untouched.classifier.w2));
}

TEST_CASE("train_base errors") {
    auto stream = synthetic_stream(5, 5, 1, 2);
    const auto cfg = small_config();
    auto gap = stream[0].train;
    std::erase_if(gap, [](const RawExample& e) { return e.label == 2; });
    CHECK_THROWS_WITH_AS(train_base(gap, cfg), doctest::Contains("zero examples"), InvalidArgument);
    CHECK_THROWS_AS(train_base(std::vector<RawExample>{}, cfg), InvalidArgument);
}

TEST_CASE("train_incremental") {
    const auto stream = synthetic_stream(10, 6, 2, 5);
    const auto cfg = small_config();
    const auto base = train_base(stream[0].train, cfg);

    SUBCASE("zero epochs leaves exactly the imprinted expansion") {
        auto zero = cfg;
        zero.incr_epochs = 0;
        const auto next = train_incremental(base, stream[1].train, zero);
        ClassFeatures by_class;
        for (const auto& ex : stream[1].train) by_class[ex.label].push_back(pool_normalize(encode(ex.tokens, base.encoder), base.encoder.norm));
        std::vector<std::pair<int, Vector>> means;
        for (const auto& [c, list] : by_class) means.emplace_back(c, class_mean(list));
        CHECK(next.classifier == expand_with_imprinting(base.weight_memory.classifier_snapshot, means));
        CHECK(next.memory.size() == 8);
    }

    SUBCASE("memory regularization off logs only the classification term") {
        auto off = cfg;
        off.memory_regularization = false;
        std::vector<EpochRecord> log;
        train_incremental(base, stream[1].train, off, [&](const EpochRecord& r) { log.push_back(r); });
        REQUIRE(log.size() == 5);
        for (const auto& r : log) {
            REQUIRE(r.breakdown.size() == 2);
            CHECK(r.breakdown[0].first == "total");
            CHECK(r.breakdown[1].first == "classification");
            CHECK(r.breakdown[0].second == r.breakdown[1].second);
            CHECK(r.weights.empty());
        }
        // beta is irrelevant once the regularizer is off
        auto off2 = off;
        off2.loss.beta = 0.1;
        CHECK(train_incremental(base, stream[1].train, off) == train_incremental(base, stream[1].train, off2));
    }

    SUBCASE("memory regularization on logs all three terms") {
        std::vector<EpochRecord> log;
        train_incremental(base, stream[1].train, cfg, [&](const EpochRecord& r) { log.push_back(r); });
        REQUIRE(log.size() == 5);
        CHECK(log[0].breakdown.size() == 4);
        CHECK(log[0].weights[0].first == "beta");
        CHECK(log[0].session == 1);
    }

    SUBCASE("encoder untouched, snapshot equals classifier") {
        const auto next = train_incremental(base, stream[1].train, cfg);
        CHECK(next.encoder == base.encoder);
        CHECK(bit_equal(next.encoder.weight, base.encoder.weight));
        CHECK(next.weight_memory.classifier_snapshot == next.classifier);
        CHECK(next.weight_memory.session == 1);
    }

    SUBCASE("errors") {
        CHECK_THROWS_AS(train_incremental(base, stream[0].train, cfg), InvalidArgument);
        CHECK_THROWS_AS(train_incremental(base, std::vector<RawExample>{}, cfg), InvalidArgument);
        CHECK_THROWS_AS(train_incremental(base, stream[2].train, cfg), InvalidArgument);  // skips classes 6, 7
    }
}

TEST_CASE("run_protocol") {
    auto cfg = small_config();

    SUBCASE("base only yields one report") {
        const auto stream = synthetic_stream(5, 5, 1, 1);
        CHECK(run_protocol(stream, cfg).reports.size() == 1);
    }

    SUBCASE("12 base + 4 x 2-way: class counts and invariants") {
        const auto stream = synthetic_stream(20, 12, 2, 8);
        std::vector<SessionState> states;
        const auto result = run_protocol(stream, cfg, {}, [&](const SessionState& s, const SessionReport&) { states.push_back(s); });
        REQUIRE(result.reports.size() == 5);
        for (std::size_t t = 0; t < 5; ++t) {
            CHECK(result.reports[t].num_classes == 12 + 2 * t);
            CHECK(states[t].memory.size() == 12 + 2 * t);
            CHECK(states[t].weight_memory.classifier_snapshot == states[t].classifier);
            CHECK(bit_equal(states[t].encoder.weight, states[0].encoder.weight));
            CHECK(bit_equal(states[t].encoder.bias, states[0].encoder.bias));
            if (t > 0) {
                for (std::size_t k = 0; k < states[t - 1].memory.size(); ++k) {
                    CHECK(bit_equal(states[t].memory.rows.row(k), states[t - 1].memory.rows.row(k)));
                }
            }
        }
        CHECK(result.final_state == states.back());
        const auto again = run_protocol(stream, cfg);
        CHECK(again.reports == result.reports);
        CHECK(again.final_state == result.final_state);
    }

    SUBCASE("100 classes, 60 base, 5-way: 9 reports, memory 60..100") {
        cfg.base_epochs = 1;
        cfg.incr_epochs = 1;
        const auto stream = synthetic_stream(100, 60, 5, 2, 15);
        std::vector<std::size_t> rows;
        const auto result = run_protocol(stream, cfg, {}, [&](const SessionState& s, const SessionReport&) { rows.push_back(s.memory.size()); });
        CHECK(result.reports.size() == 9);
        for (std::size_t t = 0; t < rows.size(); ++t) CHECK(rows[t] == 60 + 5 * t);
    }
}
