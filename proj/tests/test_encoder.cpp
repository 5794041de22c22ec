#include "doctest.h"

#include <cmath>

#include "gcmr/encoder.hpp"
#include "gcmr/error.hpp"
#include "support.hpp"

using namespace gcmr;

TEST_CASE("encode") {
    Rng rng(1);
    const auto raw = testing::random_matrix(rng, 5, 6);

    SUBCASE("identity configuration passes tokens through") { CHECK(bit_equal(encode(raw, identity_encoder(6)), raw)); }

    SUBCASE("zero input with zero bias gives zero output") {
        const auto enc = init_encoder(6, 4, rng);
        EncoderParams zero_bias = enc;
        std::fill(zero_bias.bias.begin(), zero_bias.bias.end(), 0.0);
        const auto out = encode(Matrix(5, 6), zero_bias);
        for (double v : out.values()) CHECK(v == 0.0);
    }

    SUBCASE("row-wise recomputation") {
        auto enc = init_encoder(6, 4, rng);
        enc.bias = testing::random_vector(rng, 4, 0.2);
        const auto out = encode(raw, enc);
        const auto w = testing::to_mat(enc.weight);
        for (std::size_t r = 0; r < raw.rows(); ++r) {
            auto ref = oracle::affine_t(w, testing::to_vec(raw.row(r)), enc.bias);
            for (std::size_t i = 0; i < 4; ++i) CHECK(oracle::rel_err(out(r, i), std::tanh(ref[i])) < 1e-12);
        }
    }

    SUBCASE("dimension mismatch") { CHECK_THROWS_AS(encode(raw, identity_encoder(5)), DimensionMismatch); }
}

TEST_CASE("mask_features") {
    Rng rng(2);
    const auto group = testing::random_matrix(rng, 16, 3);

    SUBCASE("G=16 at 0.75 masks 12 and keeps 4") {
        const auto [visible, plan] = mask_features(group, 0.75, 9);
        CHECK(plan.masked_indices.size() == 12);
        CHECK(visible.rows() == 4);
        CHECK(plan.num_visible() == 4);
        std::size_t out = 0;
        for (std::size_t r = 0; r < 16; ++r) {
            if (plan.is_masked(r)) continue;
            CHECK(bit_equal(visible.row(out++), group.row(r)));
        }
    }

    SUBCASE("ratio 0 masks nothing") {
        const auto [visible, plan] = mask_features(group, 0.0, 9);
        CHECK(plan.masked_indices.empty());
        CHECK(bit_equal(visible, group));
    }

    SUBCASE("same seed, same plan") {
        const auto a = mask_features(group, 0.75, 77).second;
        const auto b = mask_features(group, 0.75, 77).second;
        CHECK(a.masked_indices == b.masked_indices);
        CHECK(mask_features(group, 0.75, 78).second.masked_indices != a.masked_indices);
    }

    SUBCASE("matches the reference draw order") {
        for (std::uint64_t s = 0; s < 50; ++s) {
            CHECK(mask_features(group, 0.75, s).second.masked_indices == oracle::mask_indices(16, 0.75, s));
        }
    }

    SUBCASE("errors") {
        CHECK_THROWS_AS(mask_features(group, -0.1, 1), InvalidArgument);
        CHECK_THROWS_AS(mask_features(group, 1.0, 1), InvalidArgument);
        CHECK_THROWS_AS(mask_features(Matrix(2, 3), 0.75, 1), InvalidArgument);  // round(1.5) = 2 masks both
    }
}

TEST_CASE("each token is masked with frequency close to the ratio") {
    const Matrix group(8, 2);
    std::vector<int> hits(8, 0);
    const int trials = 10000;
    for (int s = 0; s < trials; ++s) {
        for (auto i : mask_features(group, 0.75, static_cast<std::uint64_t>(s)).second.masked_indices) ++hits[i];
    }
    for (int h : hits) CHECK(std::abs(static_cast<double>(h) / trials - 0.75) <= 0.02);
}

TEST_CASE("reconstruct") {
    Rng rng(4);
    const auto group = testing::random_matrix(rng, 6, 4);

    SUBCASE("identity decoder at ratio 0 is the identity") {
        const auto [visible, plan] = mask_features(group, 0.0, 3);
        const auto rec = reconstruct(visible, plan, identity_decoder(4));
        CHECK(bit_equal(rec, group));
        CHECK(reconstruction_error(rec, group, plan, ReconScope::all_tokens) == 0.0);
    }

    SUBCASE("zero decoder weights put the bias on masked rows") {
        DecoderParams dec = init_decoder(4, rng);
        std::fill(dec.weight.values().begin(), dec.weight.values().end(), 0.0);
        dec.bias = {0.5, -1.0, 2.0, 0.25};
        const auto [visible, plan] = mask_features(group, 5.0 / 6.0, 3);
        REQUIRE(plan.masked_indices.size() == 5);
        const auto rec = reconstruct(visible, plan, dec);
        for (auto r : plan.masked_indices) CHECK(bit_equal(rec.row(r), dec.bias));
    }

    SUBCASE("error matches elementwise recomputation") {
        const DecoderParams dec = init_decoder(4, rng);
        const auto [visible, plan] = mask_features(group, 0.5, 3);
        const auto rec = reconstruct(visible, plan, dec);
        for (auto scope : {ReconScope::all_tokens, ReconScope::masked_only}) {
            double sum = 0;
            std::size_t n = 0;
            for (std::size_t r = 0; r < 6; ++r) {
                if (scope == ReconScope::masked_only && !plan.is_masked(r)) continue;
                for (std::size_t c = 0; c < 4; ++c) sum += (rec(r, c) - group(r, c)) * (rec(r, c) - group(r, c));
                ++n;
            }
            CHECK(oracle::rel_err(reconstruction_error(rec, group, plan, scope), sum / static_cast<double>(n)) < 1e-12);
        }
    }

    SUBCASE("inconsistent plan") {
        const auto [visible, plan] = mask_features(group, 0.5, 3);
        MaskPlan bad = plan;
        bad.group_size = 7;
        CHECK_THROWS_AS(reconstruct(visible, bad, identity_decoder(4)), InvalidArgument);
    }
}

TEST_CASE("pool_normalize") {
    Rng rng(6);
    SUBCASE("identical tokens") {
        const auto v = testing::random_vector(rng, 5);
        const auto group = Matrix::from_rows({v, v, v});
        const auto out = pool_normalize(group);
        const auto ref = layer_normalize(v);
        for (std::size_t i = 0; i < 5; ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-14));
    }
    SUBCASE("v and -v pool to zero") {
        auto v = testing::random_vector(rng, 5);
        auto neg = v;
        for (double& x : neg) x = -x;
        for (double x : pool_normalize(Matrix::from_rows({v, neg}))) CHECK(x == 0.0);
    }
    SUBCASE("random group against mean-then-normalize") {
        for (auto kind : {NormKind::layer, NormKind::l2}) {
            const auto group = testing::random_matrix(rng, 7, 9, 2.0);
            oracle::Vec mean(9, 0.0);
            for (std::size_t r = 0; r < 7; ++r) {
                for (std::size_t c = 0; c < 9; ++c) mean[c] += group(r, c) / 7.0;
            }
            const auto ref = kind == NormKind::layer ? oracle::layer_norm(mean) : oracle::l2_norm(mean);
            const auto out = pool_normalize(group, kind);
            for (std::size_t i = 0; i < 9; ++i) CHECK(oracle::rel_err(out[i], ref[i]) < 1e-10);
        }
    }
    SUBCASE("needs two tokens") { CHECK_THROWS_AS(pool_normalize(Matrix(1, 4)), InvalidArgument); }
}
