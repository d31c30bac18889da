#include "calibkit/active.hpp"
#include "calibkit/domain.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace calibkit;

TEST_CASE("select_uncertain") {
    const std::vector<double> s{0.5, -0.1, 0.9, 0.05};
    CHECK(select_uncertain(s, 2) == std::vector<std::size_t>{3, 1});

    const std::vector<double> flat(6, 0.4);
    CHECK(select_uncertain(flat, 3) == std::vector<std::size_t>{0, 1, 2});

    CHECK(select_uncertain(s, 10) == std::vector<std::size_t>{3, 1, 0, 2});
    CHECK(select_uncertain(std::vector<double>{}, 3).empty());

    // Positive rescaling does not change the choice.
    std::vector<double> scaled;
    for (double v : s) scaled.push_back(v * 37.0);
    CHECK(select_uncertain(scaled, 3) == select_uncertain(s, 3));

    const std::vector<double> ties{-0.2, 0.2, 0.1, -0.1};
    CHECK(select_uncertain(ties, 3) == std::vector<std::size_t>{2, 3, 0});
}

TEST_CASE("select_random") {
    const std::vector<std::size_t> pool{4, 8, 15, 16, 23};
    std::mt19937_64 rng(1);
    auto all = select_random(pool, 5, rng);
    std::sort(all.begin(), all.end());
    CHECK(all == pool);

    std::mt19937_64 a(99), b(99);
    CHECK(select_random(pool, 3, a) == select_random(pool, 3, b));

    std::mt19937_64 r(7);
    for (int trial = 0; trial < 100; ++trial) {
        const auto pick = select_random(pool, 3, r);
        CHECK(std::set<std::size_t>(pick.begin(), pick.end()).size() == 3);
        for (auto i : pick) CHECK(std::find(pool.begin(), pool.end(), i) != pool.end());
    }

    const std::vector<std::size_t> four{0, 1, 2, 3};
    std::vector<int> counts(4, 0);
    std::mt19937_64 f(2024);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[select_random(four, 1, f)[0]];
    for (int c : counts) CHECK(std::abs(static_cast<double>(c) / draws - 0.25) <= 0.01);
}

TEST_CASE("queries never repeat after installation") {
    DomainData d{"t", Matrix::Random(30, 2), std::vector<LabelValue>(30, LabelValue::Class2)};
    CalibrationState st(hide_labels(d));
    std::mt19937_64 rng(5);
    std::set<std::size_t> seen;
    for (int it = 0; it < 6; ++it) {
        std::vector<double> scores;
        for (std::size_t row : st.unlabeled()) scores.push_back(d.features(static_cast<Eigen::Index>(row), 0));
        std::vector<std::size_t> rows;
        if (it % 2 == 0) {
            for (auto pos : select_uncertain(scores, 5)) rows.push_back(st.unlabeled()[pos]);
        } else {
            rows = select_random(st.unlabeled(), 5, rng);
        }
        for (auto r : rows) CHECK(seen.insert(r).second);
        st.install_labels(it, rows, std::vector<LabelValue>(rows.size(), LabelValue::Class2));
    }
    CHECK(st.unlabeled().empty());
}
