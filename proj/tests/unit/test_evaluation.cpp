#include "calibkit/error.hpp"
#include "calibkit/evaluation.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace calibkit;

namespace {

constexpr auto C1 = LabelValue::Class1;
constexpr auto C2 = LabelValue::Class2;

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::OutOfRange;
}

Matrix perfect_ordering() {
    Matrix t(4, 3);
    t << 0.1, 0.2, 0.3,  //
        0.4, 0.5, 0.6,   //
        0.2, 0.7, 0.9,   //
        0.0, 0.05, 0.5;
    return t;
}

}  // namespace

TEST_CASE("bca") {
    std::vector<LabelValue> truth(10, C1), pred;
    truth.resize(20, C2);
    for (int i = 0; i < 10; ++i) pred.push_back(i < 9 ? C1 : C2);
    for (int i = 0; i < 10; ++i) pred.push_back(i < 7 ? C2 : C1);
    const Metrics m = bca(truth, pred);
    CHECK(m.a1 == doctest::Approx(0.9));
    CHECK(m.a2 == doctest::Approx(0.7));
    CHECK(m.bca == doctest::Approx(0.8));
    CHECK_FALSE(m.degenerate);

    CHECK(bca(truth, truth).bca == 1.0);
    CHECK(bca(truth, std::vector<LabelValue>(20, C1)).bca == 0.5);

    // Swapping class identities on both sides leaves BCA unchanged.
    auto swap = [](std::vector<LabelValue> v) {
        for (auto& l : v) l = l == C1 ? C2 : C1;
        return v;
    };
    CHECK(bca(swap(truth), swap(pred)).bca == doctest::Approx(m.bca));

    CHECK(kind_of([&] { bca(truth, std::vector<LabelValue>(3, C1)); }) == ErrorKind::LengthMismatch);
    CHECK(kind_of([] {
              bca(std::vector<LabelValue>(2, LabelValue::Unknown), std::vector<LabelValue>(2, C1));
          }) == ErrorKind::NoLabeledSamples);
}

TEST_CASE("bca with a class missing from the pool") {
    const std::vector<LabelValue> truth{C2, C2, C2, C2};
    // Nothing assigned to Class1: its term counts as 1.
    const Metrics clean = bca(truth, std::vector<LabelValue>{C2, C2, C2, C2});
    CHECK(clean.degenerate);
    CHECK(clean.bca == 1.0);
    // Something wrongly assigned to Class1: BCA is the Class2 accuracy.
    const Metrics dirty = bca(truth, std::vector<LabelValue>{C2, C1, C2, C2});
    CHECK(dirty.degenerate);
    CHECK(dirty.bca == doctest::Approx(0.75));
}

TEST_CASE("aupc") {
    const std::vector<CurvePoint> ones{{0, 1.0}, {5, 1.0}, {10, 1.0}};
    CHECK(aupc(ones) == doctest::Approx(1.0));
    const std::vector<CurvePoint> half{{0, 0.5}, {50, 0.5}};
    CHECK(aupc(half) == doctest::Approx(0.5));
    const std::vector<CurvePoint> ramp{{0, 0.5}, {10, 1.0}};
    CHECK(aupc(ramp) == doctest::Approx(0.75));

    const std::vector<CurvePoint> low{{0, 0.5}, {5, 0.6}, {10, 0.55}};
    const std::vector<CurvePoint> high{{0, 0.6}, {5, 0.6}, {10, 0.7}};
    CHECK(aupc(high) >= aupc(low));

    CHECK(kind_of([] { aupc(std::vector<CurvePoint>{{0, 0.5}}); }) == ErrorKind::TooFewPoints);
    CHECK(kind_of([] { aupc(std::vector<CurvePoint>{{5, 0.5}, {5, 0.6}}); }) == ErrorKind::InvalidParameter);
}

TEST_CASE("friedman golden values") {
    const FriedmanResult r = friedman_test(perfect_ordering());
    CHECK(r.chi2 == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(r.df == 2);
    CHECK(std::abs(r.p - 0.0183) <= 1e-3);
    CHECK(r.p == doctest::Approx(std::exp(-4.0)).epsilon(1e-10));
    CHECK(r.mean_ranks == (Vector(3) << 1, 2, 3).finished());

    const FriedmanResult tied = friedman_test(Matrix::Constant(5, 3, 0.7));
    CHECK(tied.chi2 == 0.0);
    CHECK(tied.p == 1.0);

    CHECK(kind_of([] { friedman_test(Matrix::Ones(1, 3)); }) == ErrorKind::DegenerateTable);
    CHECK(kind_of([] { friedman_test(Matrix::Ones(4, 1)); }) == ErrorKind::DegenerateTable);
}

// Exact permutation p over every within-block reordering, for b * k <= 12.
double exact_friedman_p(const Matrix& t) {
    const int b = static_cast<int>(t.rows()), k = static_cast<int>(t.cols());
    const double observed = friedman_test(t).chi2;
    std::vector<std::vector<int>> perms;
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    do perms.push_back(idx);
    while (std::next_permutation(idx.begin(), idx.end()));
    std::vector<std::size_t> choice(b, 0);
    std::size_t hits = 0, total = 0;
    while (true) {
        Matrix m(b, k);
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < k; ++j) m(i, j) = t(i, perms[choice[i]][j]);
        hits += friedman_test(m).chi2 >= observed - 1e-12;
        ++total;
        int i = 0;
        while (i < b && ++choice[i] == perms.size()) choice[i++] = 0;
        if (i == b) break;
    }
    return static_cast<double>(hits) / total;
}

TEST_CASE("friedman against the exact permutation distribution") {
    // Six of the 1296 reorderings reach the maximal statistic.
    const double exact = exact_friedman_p(perfect_ordering());
    CHECK(exact == doctest::Approx(6.0 / 1296.0));
    CHECK(exact < 0.05);
    CHECK(friedman_test(perfect_ordering()).p < 0.05);
    CHECK(exact_friedman_p(Matrix::Constant(4, 3, 1.0)) == 1.0);

    Matrix noise(4, 3);
    noise << 0.1, 0.2, 0.3, 0.6, 0.5, 0.4, 0.8, 0.9, 0.7, 0.1, 0.2, 0.3;
    CHECK(exact_friedman_p(noise) > 0.5);
    CHECK(friedman_test(noise).p > 0.5);
}

TEST_CASE("friedman matches a direct rank-sum computation with ties") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> level(0, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const int b = 6 + trial % 5, k = 3 + trial % 3;
        Matrix t(b, k);
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < k; ++j) t(i, j) = level(rng);

        std::vector<double> R(k, 0.0);
        double tie_sum = 0.0;
        for (int i = 0; i < b; ++i) {
            std::vector<double> row_vals;
            for (int j = 0; j < k; ++j) row_vals.push_back(t(i, j));
            const auto r = oracle::ranks(row_vals);
            for (int j = 0; j < k; ++j) R[j] += r[j];
            for (int v = 0; v <= 3; ++v) {
                const double c = std::count(row_vals.begin(), row_vals.end(), v);
                tie_sum += c * c * c - c;
            }
        }
        double sum_sq = 0;
        for (double x : R) sum_sq += x * x;
        const double raw = 12.0 / (b * k * (k + 1)) * sum_sq - 3.0 * b * (k + 1);
        const double correction = 1.0 - tie_sum / (b * (k * k * k - k));
        const FriedmanResult f = friedman_test(t);
        if (correction <= 0) {
            CHECK(f.chi2 == 0.0);
            continue;
        }
        CHECK(f.chi2 == doctest::Approx(raw / correction).epsilon(1e-10));
        CHECK(f.df == k - 1);

        // Rank-based: a monotone transform leaves the statistic alone.
        const Matrix squashed = t.unaryExpr([](double v) { return std::exp(v) + 3.0; });
        CHECK(friedman_test(squashed).chi2 == doctest::Approx(f.chi2).epsilon(1e-12));
    }
}

TEST_CASE("chi-square tail") {
    CHECK(chi2_upper_tail(8.0, 2) == doctest::Approx(std::exp(-4.0)).epsilon(1e-10));
    CHECK(chi2_upper_tail(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(chi2_upper_tail(0.0, 3) == 1.0);
    CHECK(normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(normal_two_sided_p(0.0) == 1.0);
}

TEST_CASE("dunn post-hoc") {
    const auto pairs = dunn_posthoc(perfect_ordering());
    REQUIRE(pairs.size() == 3);
    double extreme = 0;
    for (const auto& c : pairs)
        if ((c.first == 0 && c.second == 2) || (c.first == 2 && c.second == 0)) extreme = std::abs(c.z);
    CHECK(std::abs(extreme - 2.828) <= 1e-3);
    CHECK(extreme == doctest::Approx(2.0 / std::sqrt(0.5)));
    for (const auto& c : pairs)
        if (std::abs(c.z) == extreme) CHECK(c.raw_p == doctest::Approx(0.0047).epsilon(0.02));

    for (const auto& c : dunn_posthoc(Matrix::Constant(4, 3, 2.0))) {
        CHECK(c.z == 0.0);
        CHECK(c.raw_p == 1.0);
    }
    CHECK(dunn_posthoc(Matrix::Random(6, 5)).size() == 10);
}

TEST_CASE("fdr adjustment") {
    const std::vector<double> in{0.01, 0.02, 0.03};
    CHECK(fdr_adjust(in) == std::vector<double>{0.03, 0.03, 0.03});
    CHECK(fdr_adjust(std::vector<double>{0.2}) == std::vector<double>{0.2});
    CHECK(fdr_adjust(std::vector<double>(4, 0.3)) == std::vector<double>(4, 0.3));
    CHECK(fdr_adjust(std::vector<double>{}).empty());

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p(8);
        for (auto& v : p) v = u(rng) * u(rng);
        const auto adj = fdr_adjust(p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(adj[i] >= p[i]);
            CHECK(adj[i] <= 1.0);
            for (std::size_t j = 0; j < p.size(); ++j)
                if (p[i] < p[j]) CHECK(adj[i] <= adj[j]);
        }
        // Step-up: min over every p at least as large of m * p / rank.
        std::vector<double> sorted = p;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < p.size(); ++i) {
            double best = 1.0;
            for (std::size_t r = 0; r < sorted.size(); ++r)
                if (sorted[r] >= p[i]) best = std::min(best, sorted.size() * sorted[r] / (r + 1.0));
            CHECK(adj[i] == doctest::Approx(best).epsilon(1e-12));
        }
    }
    CHECK(kind_of([] { fdr_adjust(std::vector<double>{0.5, 1.2}); }) == ErrorKind::OutOfRange);
    CHECK(kind_of([] { fdr_adjust(std::vector<double>{-0.1}); }) == ErrorKind::OutOfRange);
}

TEST_CASE("compare_treatments") {
    const StatReport r = compare_treatments(perfect_ordering(), {"A", "B", "C"});
    CHECK(r.treatments.size() == 3);
    CHECK(r.friedman.df == 2);
    REQUIRE(r.pairwise.size() == 3);
    for (const auto& c : r.pairwise) CHECK(c.adjusted_p >= c.raw_p);
    CHECK(kind_of([] { compare_treatments(perfect_ordering(), {"A"}); }) == ErrorKind::LengthMismatch);
}
