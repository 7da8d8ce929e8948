#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coev/errors.hpp"

namespace coev {

// A coding task. Held-out evaluation tests are deliberately NOT part of this
// type: pipeline stages receive a Problem and therefore cannot read them.
// They live in runner-level EvalSuite and feed metrics only.
struct Problem {
    std::string id;
    std::string statement;
};

struct CodeProvenance {
    enum class Kind { FromPlan, Regenerated, Fixed };

    Kind kind = Kind::FromPlan;
    std::string plan_id;  // FromPlan
    int round = 0;        // Regenerated / Fixed
    std::string ut_id;    // Fixed

    static CodeProvenance from_plan(std::string plan) {
        return {Kind::FromPlan, std::move(plan), 0, {}};
    }
    static CodeProvenance regenerated(int round) {
        return {Kind::Regenerated, {}, round, {}};
    }
    static CodeProvenance fixed(int round, std::string ut) {
        return {Kind::Fixed, {}, round, std::move(ut)};
    }

    bool operator==(const CodeProvenance&) const = default;
};

struct CodeCandidate {
    std::string id;
    std::string source; // program body
    CodeProvenance provenance;

    bool operator==(const CodeCandidate&) const = default;
};

struct UtProvenance {
    enum class Kind { RandomSource, AttackSource, Refreshed, ReplacedTrivial };

    Kind kind = Kind::RandomSource;
    std::string idea_id;        // AttackSource / Refreshed / ReplacedTrivial
    int round = 0;              // Refreshed / ReplacedTrivial
    std::string replaced_ut_id; // Refreshed

    static UtProvenance random_source() { return {Kind::RandomSource, {}, 0, {}}; }
    static UtProvenance attack_source(std::string idea) {
        return {Kind::AttackSource, std::move(idea), 0, {}};
    }
    static UtProvenance refreshed(int round, std::string replaced, std::string idea) {
        return {Kind::Refreshed, std::move(idea), round, std::move(replaced)};
    }
    static UtProvenance replaced_trivial(int round, std::string idea) {
        return {Kind::ReplacedTrivial, std::move(idea), round, {}};
    }

    bool operator==(const UtProvenance&) const = default;
};

struct ConsistencyVotes {
    int agree = 0;
    int total = 0;

    bool operator==(const ConsistencyVotes&) const = default;
};

struct UnitTest {
    std::string id;
    std::string input;
    std::string expected_output; // canonical form (sandbox normalize_output)
    UtProvenance provenance;
    ConsistencyVotes votes;

    bool operator==(const UnitTest&) const = default;
};

using CodePool = std::vector<CodeCandidate>;
using UtPool = std::vector<UnitTest>;

// Boolean pass/fail matrix over (candidate, unit test) pairs, row-major.
class ExecutionMatrix {
public:
    ExecutionMatrix() = default;
    ExecutionMatrix(std::vector<std::string> code_ids, std::vector<std::string> ut_ids)
        : code_ids_(std::move(code_ids)),
          ut_ids_(std::move(ut_ids)),
          entries_(code_ids_.size() * ut_ids_.size(), 0) {}

    std::size_t rows() const { return code_ids_.size(); }
    std::size_t cols() const { return ut_ids_.size(); }
    bool empty() const { return rows() == 0 || cols() == 0; }

    bool at(std::size_t i, std::size_t j) const { return entries_[i * cols() + j] != 0; }
    void set(std::size_t i, std::size_t j, bool pass) {
        entries_[i * cols() + j] = pass ? 1 : 0;
    }

    const std::vector<std::string>& code_ids() const { return code_ids_; }
    const std::vector<std::string>& ut_ids() const { return ut_ids_; }
    const std::vector<std::uint8_t>& bits() const { return entries_; }

    bool operator==(const ExecutionMatrix&) const = default;

private:
    std::vector<std::string> code_ids_;
    std::vector<std::string> ut_ids_;
    std::vector<std::uint8_t> entries_;
};

// Exact pass rate count/dim. Comparisons cross-multiply so interior tests and
// arg-extrema ties never depend on floating-point rounding.
struct Rate {
    int count = 0;
    int dim = 0;

    bool interior() const { return count > 0 && count < dim; }
    bool zero() const { return count == 0; }
    bool one() const { return count == dim; }
    double value() const { return dim == 0 ? 0.0 : static_cast<double>(count) / dim; }

    friend bool operator<(const Rate& a, const Rate& b) {
        return static_cast<std::int64_t>(a.count) * b.dim <
               static_cast<std::int64_t>(b.count) * a.dim;
    }
    friend bool operator==(const Rate& a, const Rate& b) {
        return static_cast<std::int64_t>(a.count) * b.dim ==
               static_cast<std::int64_t>(b.count) * a.dim;
    }
};

struct PassStats {
    std::vector<int> ut_counts;    // per-column sums
    std::vector<int> code_counts;  // per-row sums
    std::vector<Rate> ut_rates;    // count / N_c
    std::vector<Rate> code_rates;  // count / N_t
};

inline PassStats compute_pass_stats(const ExecutionMatrix& matrix) {
    if (matrix.empty())
        throw ConfigError("compute_pass_stats: matrix has an empty dimension");
    const std::size_t n_codes = matrix.rows();
    const std::size_t n_uts = matrix.cols();
    PassStats stats;
    stats.ut_counts.assign(n_uts, 0);
    stats.code_counts.assign(n_codes, 0);
    for (std::size_t i = 0; i < n_codes; ++i) {
        for (std::size_t j = 0; j < n_uts; ++j) {
            if (matrix.at(i, j)) {
                ++stats.ut_counts[j];
                ++stats.code_counts[i];
            }
        }
    }
    stats.ut_rates.reserve(n_uts);
    for (int c : stats.ut_counts) stats.ut_rates.push_back({c, static_cast<int>(n_codes)});
    stats.code_rates.reserve(n_codes);
    for (int c : stats.code_counts) stats.code_rates.push_back({c, static_cast<int>(n_uts)});
    return stats;
}

// Index of the minimum pass rate strictly inside (0,1); absent when every
// rate is 0 or 1. Ties break toward the lowest column index.
inline std::optional<std::size_t> non_trivial_worst_ut(const PassStats& stats) {
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < stats.ut_rates.size(); ++j) {
        const Rate& r = stats.ut_rates[j];
        if (!r.interior()) continue;
        if (!best || r < stats.ut_rates[*best]) best = j;
    }
    return best;
}

// Mirror of non_trivial_worst_ut with argmax over interior rates.
inline std::optional<std::size_t> non_trivial_best_ut(const PassStats& stats) {
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < stats.ut_rates.size(); ++j) {
        const Rate& r = stats.ut_rates[j];
        if (!r.interior()) continue;
        if (!best || stats.ut_rates[*best] < r) best = j;
    }
    return best;
}

// All code indices tied at the maximum pass count; never empty.
inline std::vector<std::size_t> bon_tie_set(const PassStats& stats) {
    if (stats.code_counts.empty())
        throw ConfigError("bon_tie_set: no code candidates");
    int max_count = stats.code_counts[0];
    for (int c : stats.code_counts) max_count = c > max_count ? c : max_count;
    std::vector<std::size_t> tied;
    for (std::size_t i = 0; i < stats.code_counts.size(); ++i)
        if (stats.code_counts[i] == max_count) tied.push_back(i);
    return tied;
}

inline bool is_saturated(const ExecutionMatrix& matrix) {
    for (std::size_t i = 0; i < matrix.rows(); ++i)
        for (std::size_t j = 0; j < matrix.cols(); ++j)
            if (!matrix.at(i, j)) return false;
    return true;
}

} // namespace coev
