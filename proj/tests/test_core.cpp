#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <optional>
#include <vector>

#include "coev/core.hpp"
#include "coev/rng.hpp"

using namespace coev;

namespace {

ExecutionMatrix make_matrix(const std::vector<std::vector<int>>& rows) {
    std::vector<std::string> code_ids, ut_ids;
    for (std::size_t i = 0; i < rows.size(); ++i) code_ids.push_back("c" + std::to_string(i));
    for (std::size_t j = 0; j < rows.at(0).size(); ++j) ut_ids.push_back("u" + std::to_string(j));
    ExecutionMatrix m(code_ids, ut_ids);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m.set(i, j, rows[i][j] != 0);
    return m;
}

// Independent brute-force oracle: re-sum the matrix with plain loops and pick
// extrema by linear scan with explicit tie rules.
struct BruteStats {
    std::vector<int> col_sums, row_sums;
    std::optional<std::size_t> worst, best;
};

BruteStats brute_force(const ExecutionMatrix& m) {
    BruteStats b;
    b.col_sums.assign(m.cols(), 0);
    b.row_sums.assign(m.rows(), 0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (m.at(i, j)) {
                ++b.col_sums[j];
                ++b.row_sums[i];
            }
    const int n = static_cast<int>(m.rows());
    for (std::size_t j = 0; j < m.cols(); ++j) {
        const int c = b.col_sums[j];
        if (c == 0 || c == n) continue;
        if (!b.worst || c < b.col_sums[*b.worst]) b.worst = j;
        if (!b.best || c > b.col_sums[*b.best]) b.best = j;
    }
    return b;
}

ExecutionMatrix random_matrix(Rng& rng) {
    const std::size_t rows = 1 + rng.below(32);
    const std::size_t cols = 1 + rng.below(32);
    std::vector<std::vector<int>> grid(rows, std::vector<int>(cols, 0));
    for (auto& row : grid)
        for (auto& cell : row) cell = rng.bernoulli(rng.unit()) ? 1 : 0;
    return make_matrix(grid);
}

} // namespace

TEST_CASE("compute_pass_stats on hand-checked matrices") {
    SUBCASE("2x2 saturated") {
        auto s = compute_pass_stats(make_matrix({{1, 1}, {1, 1}}));
        CHECK(s.ut_counts == std::vector<int>{2, 2});
        CHECK(s.code_counts == std::vector<int>{2, 2});
        for (const auto& r : s.ut_rates) CHECK(r.value() == 1.0);
        for (const auto& r : s.code_rates) CHECK(r.value() == 1.0);
    }
    SUBCASE("asymmetric 2x2") {
        auto s = compute_pass_stats(make_matrix({{1, 0}, {1, 1}}));
        CHECK(s.ut_counts == std::vector<int>{2, 1});
        CHECK(s.code_counts == std::vector<int>{1, 2});
        CHECK(s.ut_rates[0].value() == 1.0);
        CHECK(s.ut_rates[1].value() == 0.5);
        CHECK(s.code_rates[0].value() == 0.5);
        CHECK(s.code_rates[1].value() == 1.0);
    }
    SUBCASE("3x4 all-zero") {
        auto s = compute_pass_stats(make_matrix({{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}}));
        for (int c : s.ut_counts) CHECK(c == 0);
        for (int c : s.code_counts) CHECK(c == 0);
        for (const auto& r : s.ut_rates) CHECK(r.value() == 0.0);
    }
    SUBCASE("empty matrix rejected") {
        CHECK_THROWS_AS(compute_pass_stats(ExecutionMatrix{}), ConfigError);
        CHECK_THROWS_AS(compute_pass_stats(ExecutionMatrix({"c0"}, {})), ConfigError);
    }
}

TEST_CASE("non-trivial extrema with tie rules") {
    // Rates out of 4 codes: columns passed by 0, 1, 2, 4 of them.
    auto m = make_matrix({
        {0, 1, 1, 1},
        {0, 0, 1, 1},
        {0, 0, 0, 1},
        {0, 0, 0, 1},
    });
    auto s = compute_pass_stats(m);
    CHECK(non_trivial_worst_ut(s) == std::size_t{1});
    CHECK(non_trivial_best_ut(s) == std::size_t{2});

    SUBCASE("absent when every rate is 0 or 1") {
        auto sat = compute_pass_stats(make_matrix({{0, 1, 1}, {0, 1, 1}}));
        CHECK_FALSE(non_trivial_worst_ut(sat).has_value());
        CHECK_FALSE(non_trivial_best_ut(sat).has_value());
    }
    SUBCASE("ties break to the lowest index") {
        // Columns at rates 1/4, 1/4, 2/4 -> worst picks 0; 3/4, 3/4, 1/4 -> best picks 0.
        auto tw = compute_pass_stats(make_matrix({{1, 0, 1}, {0, 1, 1}, {0, 0, 0}, {0, 0, 0}}));
        CHECK(non_trivial_worst_ut(tw) == std::size_t{0});
        auto tb = compute_pass_stats(make_matrix({{1, 1, 1}, {1, 1, 0}, {1, 1, 0}, {0, 0, 0}}));
        CHECK(non_trivial_best_ut(tb) == std::size_t{0});
    }
}

TEST_CASE("bon_tie_set") {
    PassStats s;
    s.code_counts = {3, 5, 5, 2};
    CHECK(bon_tie_set(s) == std::vector<std::size_t>{1, 2});
    s.code_counts = {0, 0, 0};
    CHECK(bon_tie_set(s) == std::vector<std::size_t>{0, 1, 2});
    s.code_counts = {7};
    CHECK(bon_tie_set(s) == std::vector<std::size_t>{0});
}

TEST_CASE("is_saturated") {
    CHECK(is_saturated(make_matrix({{1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}})));
    auto one_zero = make_matrix({{1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}});
    one_zero.set(2, 3, false);
    CHECK_FALSE(is_saturated(one_zero));
    CHECK(is_saturated(make_matrix({{1}})));
}

TEST_CASE("random matrices match the brute-force oracle") {
    Rng rng(20240811);
    for (int iter = 0; iter < 500; ++iter) {
        auto m = random_matrix(rng);
        auto s = compute_pass_stats(m);
        auto b = brute_force(m);
        REQUIRE(s.ut_counts == b.col_sums);
        REQUIRE(s.code_counts == b.row_sums);

        // Conservation: both sum to the number of true entries.
        long long ut_total = 0, code_total = 0, ones = 0;
        for (int c : s.ut_counts) ut_total += c;
        for (int c : s.code_counts) code_total += c;
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) ones += m.at(i, j) ? 1 : 0;
        REQUIRE(ut_total == ones);
        REQUIRE(code_total == ones);

        REQUIRE(non_trivial_worst_ut(s) == b.worst);
        REQUIRE(non_trivial_best_ut(s) == b.best);

        // Extrema absent iff no interior rate exists.
        bool has_interior = false;
        for (const auto& r : s.ut_rates) has_interior = has_interior || r.interior();
        REQUIRE(non_trivial_worst_ut(s).has_value() == has_interior);
        if (b.worst && b.best && *b.worst != *b.best)
            REQUIRE(s.ut_rates[*b.worst].value() <= s.ut_rates[*b.best].value());

        // Tie set is exactly the argmax rows.
        auto tie = bon_tie_set(s);
        REQUIRE_FALSE(tie.empty());
        const int maxc = *std::max_element(s.code_counts.begin(), s.code_counts.end());
        for (std::size_t i = 0; i < s.code_counts.size(); ++i) {
            const bool in_tie = std::find(tie.begin(), tie.end(), i) != tie.end();
            REQUIRE(in_tie == (s.code_counts[i] == maxc));
        }
    }
}

TEST_CASE("bon_tie_set invariance under count shifts and column duplication") {
    Rng rng(7);
    for (int iter = 0; iter < 200; ++iter) {
        auto m = random_matrix(rng);
        auto s = compute_pass_stats(m);
        auto tie = bon_tie_set(s);

        PassStats shifted = s;
        const int delta = static_cast<int>(rng.below(9));
        for (int& c : shifted.code_counts) c += delta;
        REQUIRE(bon_tie_set(shifted) == tie);

        // Duplicate every UT column.
        std::vector<std::string> uts2;
        for (const auto& id : m.ut_ids()) {
            uts2.push_back(id + "-a");
            uts2.push_back(id + "-b");
        }
        ExecutionMatrix doubled(m.code_ids(), uts2);
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) {
                doubled.set(i, 2 * j, m.at(i, j));
                doubled.set(i, 2 * j + 1, m.at(i, j));
            }
        REQUIRE(bon_tie_set(compute_pass_stats(doubled)) == tie);
    }
}

TEST_CASE("rate comparisons are exact") {
    CHECK(Rate{1, 3} == Rate{2, 6});
    CHECK(Rate{1, 3} < Rate{1, 2});
    CHECK_FALSE(Rate{1, 2} < Rate{2, 4});
    CHECK(Rate{0, 5}.zero());
    CHECK(Rate{5, 5}.one());
    CHECK(Rate{1, 16}.interior());
    CHECK_FALSE(Rate{0, 16}.interior());
}
