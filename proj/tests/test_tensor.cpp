#include <doctest.h>

#include <cmath>

#include "kgram/random.hpp"
#include "kgram/tensor.hpp"
#include "test_util.hpp"

using namespace kgram;
using namespace kgram::ops;

namespace {

// Independent triple-loop oracle for the BLAS-backed matmul.
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b, long m, long k,
                                  long n) {
    std::vector<double> c(m * n, 0.0);
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j)
            for (long l = 0; l < k; ++l) c[i * n + j] += a[i * k + l] * b[l * n + j];
    return c;
}

Tensor random_tensor(std::vector<long> shape, uint64_t seed, bool rg = false) {
    Tensor t(shape, rg);
    Rng rng(seed, "random_tensor");
    for (double& v : t.mutable_data()) v = rng.gaussian();
    return t;
}

}  // namespace

TEST_CASE("matmul identity and hand examples") {
    Tensor i2 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor r = matmul(i2, i2);
    CHECK(r.data() == std::vector<double>{1, 0, 0, 1});

    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.data() == std::vector<double>{3, 7});
}

TEST_CASE("matmul against triple-loop oracle") {
    Tensor a = random_tensor({5, 4}, 1);
    Tensor b = random_tensor({4, 3}, 2);
    Tensor c = matmul(a, b);
    auto expect = matmul_oracle(a.data(), b.data(), 5, 4, 3);
    // the BLAS kernel may fuse multiplies, so allow ulp-level drift
    CHECK(test::max_abs_diff(c.data(), expect) < 1e-14);

    // and the transposed variant
    Tensor bt = Tensor::from_data({3, 4}, [&] {
        std::vector<double> v(12);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 3; ++j) v[j * 4 + i] = b.data()[i * 3 + j];
        return v;
    }());
    Tensor c2 = matmul_nt(a, bt);
    CHECK(test::max_abs_diff(c2.data(), expect) < 1e-15);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a({2, 3});
    Tensor b({2, 3});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), Error);
}

TEST_CASE("row_softmax examples and oracle") {
    Tensor a = Tensor::from_data({1, 3}, {0, 0, 0});
    Tensor p = row_softmax(a, false);
    for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    // causal 2x2: first row forced to (1, 0)
    Tensor b = Tensor::from_data({2, 2}, {0, 123, 0, 0});
    Tensor pb = row_softmax(b, true);
    CHECK(pb.data()[0] == 1.0);
    CHECK(pb.data()[1] == 0.0);
    CHECK(pb.data()[2] == doctest::Approx(0.5).epsilon(1e-14));

    // exp/sum oracle
    Tensor c = Tensor::from_data({1, 3}, {10, 0, 0});
    Tensor pc = row_softmax(c, false);
    double z = std::exp(10.0) + 2.0;
    CHECK(std::abs(pc.data()[0] - std::exp(10.0) / z) < 1e-12);
    CHECK(std::abs(pc.data()[1] - 1.0 / z) < 1e-12);
}

TEST_CASE("row_softmax row of -inf is an error") {
    double ninf = -std::numeric_limits<double>::infinity();
    Tensor a = Tensor::from_data({1, 2}, {ninf, ninf});
    CHECK_THROWS_AS(row_softmax(a, false), Error);
}

TEST_CASE("row_softmax rows sum to 1 and are causal") {
    Tensor a = random_tensor({6, 6}, 3);
    Tensor p = row_softmax(a, true);
    for (int i = 0; i < 6; ++i) {
        double s = 0;
        for (int j = 0; j < 6; ++j) {
            s += p.data()[i * 6 + j];
            if (j > i) CHECK(p.data()[i * 6 + j] == 0.0);
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("layernorm_standard examples") {
    Tensor v = Tensor::from_data({2}, {1, -1});
    CHECK(test::max_abs_diff(layernorm_standard(v).data(), {1, -1}) < 1e-14);

    CHECK_THROWS_AS(layernorm_standard(Tensor::from_data({2}, {3, 3})), Error);

    Tensor w = Tensor::from_data({4}, {0, 1, 2, 3});
    Tensor out = layernorm_standard(w);
    double mu = 1.5, sg = std::sqrt(1.25);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(out.data()[i] - (i - mu) / sg) < 1e-12);
    double m = 0, var = 0;
    for (double x : out.data()) m += x;
    for (double x : out.data()) var += x * x;
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(var / 4 - 1.0) < 1e-12);
}

TEST_CASE("layernorm_l2 examples and scale invariance") {
    CHECK(test::max_abs_diff(layernorm_l2(Tensor::from_data({2}, {3, 4})).data(), {0.6, 0.8}) < 1e-15);
    CHECK(test::max_abs_diff(layernorm_l2(Tensor::from_data({3}, {0, 1, 0})).data(), {0, 1, 0}) == 0.0);
    CHECK_THROWS_AS(layernorm_l2(Tensor::from_data({3}, {0, 0, 0})), Error);

    Tensor v = random_tensor({8}, 4);
    Tensor u = layernorm_l2(v);
    double n = 0, vnorm = 0;
    for (double x : u.data()) n += x * x;
    for (double x : v.data()) vnorm += x * x;
    vnorm = std::sqrt(vnorm);
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-12);
    for (int i = 0; i < 8; ++i) CHECK(std::abs(u.data()[i] * vnorm - v.data()[i]) < 1e-12);

    // scale invariance for c > 0
    for (double c : {0.25, 7.5, 3e4}) {
        Tensor vc(std::vector<long>{8});
        for (int i = 0; i < 8; ++i) vc.mutable_data()[i] = c * v.data()[i];
        CHECK(test::max_abs_diff(layernorm_l2(vc).data(), u.data()) < 1e-12);
    }
}

TEST_CASE("relu forward and subgradient") {
    Tensor a = Tensor::from_data({3}, {-1, 0, 2});
    CHECK(relu(a).data() == std::vector<double>{0, 0, 2});

    Tensor neg_out = relu(Tensor::from_data({4}, {-5, -1, -0.25, -1e9}));
    for (double v : neg_out.data()) CHECK(v == 0.0);

    Tensor x = Tensor::from_data({2}, {-1, 2}, true);
    Tensor loss = sum(relu(x));
    loss.backward();
    CHECK(x.grad() == std::vector<double>{0, 1});
}

TEST_CASE("cross_entropy examples") {
    // perfect one-hot
    Tensor p = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    CHECK(cross_entropy_mean(p, {0, 1}, 1).item() == 0.0);

    // uniform over S=2
    Tensor u = Tensor::from_data({3, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
    CHECK(cross_entropy_mean(u, {0, 1, 0}, 1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    // random 3x2 vs per-position hand sum
    Tensor r = Tensor::from_data({3, 2}, {0.3, 0.7, 0.9, 0.1, 0.4, 0.6});
    std::vector<int> tg = {1, 0, 0};
    double expect = -(std::log(0.7) + std::log(0.9) + std::log(0.4)) / 3.0;
    CHECK(cross_entropy_mean(r, tg, 1).item() == doctest::Approx(expect).epsilon(1e-15));

    // zero probability names the position
    Tensor z = Tensor::from_data({2, 2}, {1, 0, 1, 0});
    CHECK_THROWS_WITH_AS(cross_entropy_mean(z, {0, 1}, 1), doctest::Contains("position 2"), Error);
}

TEST_CASE("grad_check on sum of entries") {
    Tensor w = random_tensor({4, 3}, 5, true);
    auto loss = [&]() { return sum(w); };
    GradCheckOptions opts;
    opts.tol = 1e-10;
    GradCheckReport rep = grad_check({{"w", w}}, loss, opts);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-10);
}

TEST_CASE("grad_check across a composition of primitives") {
    // matmul -> relu -> matmul -> softmax -> cross-entropy, plus a layer norm
    Tensor w1 = random_tensor({6, 4}, 7, true);
    Tensor w2 = random_tensor({5, 6}, 8, true);
    Tensor gain = Tensor::from_data({6}, std::vector<double>(6, 1.0), true);
    Tensor shift = Tensor::from_data({6}, std::vector<double>(6, 0.0), true);
    Tensor x = random_tensor({3, 4}, 9);
    std::vector<int> tg = {1, 0, 3};
    auto loss = [&]() {
        Tensor h = layernorm_rows(relu(matmul_nt(x, w1)), gain, shift);
        Tensor logits = matmul_nt(h, w2);
        return cross_entropy_mean(row_softmax(logits, false), tg, 1);
    };
    GradCheckReport rep = grad_check({{"w1", w1}, {"w2", w2}, {"gain", gain}, {"shift", shift}}, loss, {});
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("rel_score and rel_value match direct computation and gradients") {
    const long T = 5, d = 3, Tm = 6;
    Tensor q = random_tensor({T, d}, 11, true);
    Tensor pk = random_tensor({Tm, d}, 12, true);
    Tensor s = rel_score(q, pk);
    for (long n = 0; n < T; ++n)
        for (long i = 0; i <= n; ++i) {
            double expect = 0;
            for (long j = 0; j < d; ++j) expect += q.data()[n * d + j] * pk.data()[(n - i) * d + j];
            CHECK(std::abs(s.data()[n * T + i] - expect) < 1e-14);
        }

    Tensor att = row_softmax(random_tensor({T, T}, 13), true);
    Tensor pv = random_tensor({Tm, d}, 14, true);
    Tensor out = rel_value(att, pv);
    for (long n = 0; n < T; ++n)
        for (long j = 0; j < d; ++j) {
            double expect = 0;
            for (long i = 0; i <= n; ++i) expect += att.data()[n * T + i] * pv.data()[(n - i) * d + j];
            CHECK(std::abs(out.data()[n * d + j] - expect) < 1e-14);
        }

    auto loss = [&]() {
        Tensor sc = rel_score(q, pk);
        Tensor a = row_softmax(sc, true);
        return sum(relu(rel_value(a, pv)));
    };
    GradCheckReport rep = grad_check({{"q", q}, {"pk", pk}, {"pv", pv}}, loss, {});
    CHECK(rep.pass);
}
