#include <doctest.h>

#include <cmath>

#include "kgram/analysis.hpp"
#include "kgram/training.hpp"
#include "test_util.hpp"

using namespace kgram;

TEST_CASE("normerror: orthogonal windows at k=1 and the 3^-k bound") {
    NormErrorResult r = normerror_bruteforce(2, 1);
    CHECK(r.min_distance == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(r.min_distance >= 1.0 / 3.0);

    NormErrorResult r4 = normerror_bruteforce(2, 4);
    CHECK(r4.min_distance >= std::pow(3.0, -4));
    CHECK(r4.pairs_checked == 16 * 15 / 2);

    for (int S : {2, 3})
        for (int k = 1; k <= 3; ++k) CHECK(normerror_bruteforce(S, k).min_distance >= std::pow(3.0, -k));

    CHECK_THROWS_AS(normerror_bruteforce(5, 2), Error);
    CHECK_THROWS_AS(normerror_bruteforce(2, 7), Error);
}

TEST_CASE("attention stats on the two-layer construction") {
    auto [spec, w] = build_theorem1(2, recommended_kappa(1, 16, 1e-3), 16);
    AttentionStats stats = attention_stats(spec, w, 2, 1, 6, 16, 99, 10);
    const auto& l1 = stats.find(1, 1);
    for (int n = 2; n <= 16; ++n) {
        CHECK(l1.mean[(n - 1) * 16 + (n - 2)] >= 1.0 - 1e-3);
        CHECK(l1.stddev[(n - 1) * 16 + (n - 2)] <= 1e-6);
    }
    // mean rows sum to one
    for (int n = 1; n <= 16; ++n) {
        double s = 0;
        for (int i = 1; i <= 16; ++i) s += l1.mean[(n - 1) * 16 + (i - 1)];
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
    // layer 1 is position-only; layer 2 is content-driven
    CHECK(assumption1_score(stats, 1) <= 1e-6);
    CHECK(assumption1_score(stats, 2) > 0.1);
    // the exported slice peaks at the previous position
    auto slice = stats.mean_slice(1, 1);
    int argmax = 0;
    for (size_t i = 0; i < slice.size(); ++i)
        if (slice[i] > slice[argmax]) argmax = static_cast<int>(i);
    CHECK(argmax + 1 == 9);
}

TEST_CASE("identical sequences give exactly zero std") {
    auto [spec, w] = build_theorem1(2, 50.0, 8);
    Sequence s = test::seq_of(2, {0, 1, 1, 0, 1, 0, 0, 1});
    AttentionStats stats = attention_stats_over(spec, w, {s, s}, 4);
    for (const auto& e : stats.entries)
        for (double v : e.stddev) CHECK(v == 0.0);
    CHECK(assumption1_score(stats, 1) == 0.0);
}

TEST_CASE("attention stats CSV has the long-form header") {
    auto [spec, w] = build_theorem1(2, 50.0, 8);
    AttentionStats stats = attention_stats(spec, w, 2, 1, 2, 8, 3, 4);
    std::string csv = stats.to_csv();
    CHECK(csv.rfind("layer,head,n,i,mean,std\n", 0) == 0);
}

TEST_CASE("precision sweep: f64 errors shrink along the ladder, f32 hits a floor") {
    double k0 = recommended_kappa(1, 24, 1.0);
    std::vector<double> ladder = {k0, 2 * k0, 4 * k0, 8 * k0};
    auto f64 = precision_sweep("t4", 2, 1, 24, ladder, Precision::f64, 5, 7);
    REQUIRE(f64.size() == 4);
    for (size_t i = 1; i < f64.size(); ++i) CHECK(f64[i].max_abs_err <= f64[i - 1].max_abs_err + 1e-14);

    auto f32 = precision_sweep("t4", 2, 1, 24, ladder, Precision::f32, 5, 7);
    for (const auto& p : f32) CHECK(std::isfinite(p.max_abs_err));
    // reported, not asserted: the f32 floor
    MESSAGE("f32 errors: ", f32[0].max_abs_err, " ", f32[1].max_abs_err, " ", f32[2].max_abs_err, " ",
            f32[3].max_abs_err);
    CHECK(sweep_to_csv(f64).rfind("kappa,precision,max_abs_err\n", 0) == 0);
}

TEST_CASE("induction head audit on constructions and random weights") {
    const int T = 32;
    for (int k : {1, 2}) {
        auto [s2, w2] = build_theorem2(2, k, recommended_kappa(k, T, 1e-3), T);
        InductionHeadAudit a2 = induction_head_audit(s2, w2, 2, k, 25, T, 5, 2);
        CHECK(a2.n_scored > 0);
        CHECK(a2.pass_rate == 1.0);
        CHECK(a2.mean_tv <= 1e-3);

        auto [s4, w4] = build_theorem4(2, k, recommended_kappa(k, T, 1e-3), T);
        InductionHeadAudit a4 = induction_head_audit(s4, w4, 2, k, 25, T, 6, 3);
        CHECK(a4.pass_rate == 1.0);
        CHECK(a4.mean_tv <= 1e-3);
    }

    // a randomly initialized model has no reason to pass
    TrainConfig cfg = TrainConfig::defaults(2, 1, 2, 16, T);
    WeightSet rw = init_weights(cfg.spec, 17);
    InductionHeadAudit ar = induction_head_audit(cfg.spec, rw, 2, 1, 25, T, 7, 2);
    CHECK(ar.pass_rate < 0.2);
}
