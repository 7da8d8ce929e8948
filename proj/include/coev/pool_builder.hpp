#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coev/core.hpp"
#include "coev/gateway.hpp"
#include "coev/ideation.hpp"
#include "coev/rng.hpp"
#include "coev/sandbox.hpp"

namespace coev {

// Seeded shuffled walk over [0, size) that reshuffles on each wrap, so pools
// larger than the source cycle with replacement but stay deterministic.
class IndexCycler {
public:
    IndexCycler(std::size_t size, std::uint64_t seed) : rng_(seed), size_(size) {
        if (size_ == 0) throw ConfigError("IndexCycler over an empty collection");
        reshuffle();
    }

    std::size_t next() {
        if (cursor_ >= order_.size()) reshuffle();
        return order_[cursor_++];
    }

private:
    void reshuffle() {
        order_.resize(size_);
        for (std::size_t i = 0; i < size_; ++i) order_[i] = i;
        shuffle(order_, rng_);
        cursor_ = 0;
    }

    Rng rng_;
    std::size_t size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

struct IdGen {
    std::size_t code = 0;
    std::size_t ut = 0;
    std::string next_code() { return detail::seq_id('c', code++); }
    std::string next_ut() { return detail::seq_id('u', ut++); }
};

struct PoolBuildConfig {
    int n_codes = 16;
    int n_uts = 16;
    int k_samples = 4;        // expected-output samples per proposed input
    int agree_threshold = 3;  // minimum agreeing samples to keep a UT
    int retry_budget = 3;     // proposal attempts per source before giving up / backfilling
    SamplingParams sampling;
    SamplingParams output_sampling; // expected-output sampling may differ per stage
};

inline CodeCandidate generate_code_from_plan(Gateway& gateway, const Problem& problem,
                                             const Plan& plan, const SamplingParams& sampling,
                                             std::string id, CodeProvenance provenance) {
    ChatRequest request{"code_from_plan",
                        {{"statement", problem.statement}, {"plan", plan.text}},
                        1,
                        sampling};
    std::string source = gateway.complete_text(request);
    return {std::move(id), std::move(source), std::move(provenance)};
}

// Each selected plan is used once to prompt for one candidate; the cycler
// reuses plans when the pool is larger than the plan set.
inline CodePool build_code_pool(Gateway& gateway, const Problem& problem, const PlanPool& plans,
                                int n_codes, IndexCycler& plan_cycler, IdGen& ids,
                                const SamplingParams& sampling = {}) {
    if (plans.plans.empty()) throw ConfigError("build_code_pool: no plans");
    if (n_codes < 1) throw ConfigError("build_code_pool: n_codes must be >= 1");

    CodePool pool;
    std::vector<int> missing;
    for (int slot = 0; slot < n_codes; ++slot) {
        const Plan& plan = plans.plans[plan_cycler.next()];
        try {
            pool.push_back(generate_code_from_plan(gateway, problem, plan, sampling,
                                                   ids.next_code(),
                                                   CodeProvenance::from_plan(plan.id)));
        } catch (const ProviderError&) {
            missing.push_back(slot);
        }
    }
    if (!missing.empty()) {
        std::string what = "code pool under-filled; missing slots:";
        for (int s : missing) what += " " + std::to_string(s);
        throw PartialPoolError(what, missing);
    }
    return pool;
}

enum class UtSource { Random, Attack };

inline std::string propose_ut_input(Gateway& gateway, const Problem& problem, UtSource source,
                                    const AttackIdea* idea, const SamplingParams& sampling = {}) {
    if (source == UtSource::Attack && idea == nullptr)
        throw ConfigError("attack-source input proposal requires an attack idea");
    ChatRequest request;
    if (source == UtSource::Random) {
        request = {"random_input", {{"statement", problem.statement}}, 1, sampling};
    } else {
        request = {"ut_input_from_attack",
                   {{"statement", problem.statement}, {"attack_idea", idea->text}},
                   1,
                   sampling};
    }
    return gateway.complete_text(request);
}

// Output self-consistency: sample k expected outputs, canonicalize, and keep
// the input only when some answer reaches the agreement threshold. Ties
// between two qualifying answers cannot happen when threshold > k/2; below
// that the first sampled answer among the most frequent wins.
inline std::optional<UnitTest> validate_ut_output(Gateway& gateway, const Problem& problem,
                                                  const std::string& input, int k_samples,
                                                  int agree_threshold, std::string id,
                                                  UtProvenance provenance,
                                                  const SamplingParams& sampling = {}) {
    if (k_samples < 1 || agree_threshold < 1 || agree_threshold > k_samples)
        throw ConfigError("validate_ut_output: need k_samples >= agree_threshold >= 1");
    ChatRequest request{"ut_output",
                        {{"statement", problem.statement}, {"input", input}},
                        k_samples,
                        sampling};
    auto completion = gateway.complete(request);

    std::vector<std::string> order; // canonical answers in first-seen order
    std::map<std::string, int> votes;
    for (const auto& text : completion.texts) {
        const std::string canonical = normalize_output(extract_fenced_block(text));
        if (votes.emplace(canonical, 0).second) order.push_back(canonical);
        ++votes[canonical];
    }
    std::string winner;
    int best = 0;
    for (const auto& answer : order) {
        if (votes[answer] > best) {
            best = votes[answer];
            winner = answer;
        }
    }
    if (best < agree_threshold) return std::nullopt;
    return UnitTest{std::move(id), input, winner, std::move(provenance),
                    ConsistencyVotes{best, k_samples}};
}

namespace detail {

// Propose + validate one UT slot from a single source, re-proposing new
// inputs up to the retry budget.
inline std::optional<UnitTest> fill_ut_slot(Gateway& gateway, const Problem& problem,
                                            UtSource source, const AttackIdeaPool& ideas,
                                            IndexCycler* attack_cycler,
                                            const PoolBuildConfig& config, IdGen& ids) {
    const int attempts = std::max(1, config.retry_budget);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        const AttackIdea* idea = nullptr;
        if (source == UtSource::Attack)
            idea = &ideas.ideas.at(attack_cycler->next());
        const std::string input =
            propose_ut_input(gateway, problem, source, idea, config.sampling);
        auto provenance = source == UtSource::Random ? UtProvenance::random_source()
                                                     : UtProvenance::attack_source(idea->id);
        auto ut = validate_ut_output(gateway, problem, input, config.k_samples,
                                     config.agree_threshold, ids.next_ut(),
                                     std::move(provenance), config.output_sampling);
        if (ut) return ut;
    }
    return std::nullopt;
}

} // namespace detail

// Half the slots from random valid inputs, half from attack ideas; slots that
// fail self-consistency within the budget backfill from the other source.
inline UtPool build_ut_pool(Gateway& gateway, const Problem& problem, const AttackIdeaPool& ideas,
                            int n_uts, IndexCycler& attack_cycler, const PoolBuildConfig& config,
                            IdGen& ids) {
    if (n_uts < 2 || n_uts % 2 != 0)
        throw ConfigError("build_ut_pool: n_uts must be even and >= 2");
    if (ideas.ideas.empty()) throw ConfigError("build_ut_pool: no attack ideas");

    UtPool pool;
    std::vector<int> missing;
    for (int slot = 0; slot < n_uts; ++slot) {
        const UtSource primary = slot < n_uts / 2 ? UtSource::Random : UtSource::Attack;
        const UtSource fallback = primary == UtSource::Random ? UtSource::Attack : UtSource::Random;
        auto ut = detail::fill_ut_slot(gateway, problem, primary, ideas, &attack_cycler, config, ids);
        if (!ut)
            ut = detail::fill_ut_slot(gateway, problem, fallback, ideas, &attack_cycler, config, ids);
        if (ut)
            pool.push_back(std::move(*ut));
        else
            missing.push_back(slot);
    }
    if (!missing.empty()) {
        std::string what = "ut pool under-filled; missing slots:";
        for (int s : missing) what += " " + std::to_string(s);
        throw PartialPoolError(what, missing);
    }
    return pool;
}

} // namespace coev
