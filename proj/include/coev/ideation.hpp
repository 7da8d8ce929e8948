#pragma once

#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "coev/core.hpp"
#include "coev/gateway.hpp"
#include "coev/text.hpp"

namespace coev {

struct Hint {
    std::string id;
    std::string text;
    bool operator==(const Hint&) const = default;
};

struct HintSet {
    std::vector<Hint> hints;
};

struct Plan {
    std::string id;
    std::string text;
    std::vector<std::size_t> subset; // indices into the generating HintSet
    bool operator==(const Plan&) const = default;
};

struct PlanPool {
    std::vector<Plan> plans;
};

struct AttackIdea {
    std::string id;
    std::string text;
    std::string source_plan_id;
    bool operator==(const AttackIdea&) const = default;
};

struct AttackIdeaPool {
    std::vector<AttackIdea> ideas;
};

struct IdeationConfig {
    int n_hints = 5;
    int plans_per_subset = 1;
    int ideas_per_plan = 2;
    SamplingParams sampling;
};

namespace detail {
inline std::string seq_id(char prefix, std::size_t n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%03zu", prefix, n);
    return buf;
}
} // namespace detail

// One hint per sampled completion; duplicates collapse under fold_key.
inline HintSet generate_hints(Gateway& gateway, const Problem& problem, int n_hints,
                              const SamplingParams& sampling = {}) {
    if (n_hints < 1) throw ConfigError("n_hints must be >= 1");
    ChatRequest request{"hint_generation", {{"statement", problem.statement}}, n_hints, sampling};

    HintSet set;
    for (int attempt = 0; attempt < 2 && set.hints.empty(); ++attempt) {
        auto completion = gateway.complete(request);
        std::set<std::string> seen;
        for (const auto& text : completion.texts) {
            const std::string hint = trim(extract_fenced_block(text));
            if (hint.empty()) continue;
            if (!seen.insert(fold_key(hint)).second) continue;
            set.hints.push_back({detail::seq_id('h', set.hints.size()), hint});
        }
    }
    if (set.hints.empty())
        throw ProviderError("hint generation produced no usable hints after retry");
    return set;
}

// All subsets of size 1 and 2 in index-lexicographic order:
// {0},{1},...,{n-1},{0,1},{0,2},...,{n-2,n-1}.
inline std::vector<std::vector<std::size_t>> enumerate_hint_subsets(std::size_t n_hints) {
    if (n_hints < 1) throw ConfigError("enumerate_hint_subsets: need at least one hint");
    std::vector<std::vector<std::size_t>> subsets;
    for (std::size_t i = 0; i < n_hints; ++i) subsets.push_back({i});
    for (std::size_t i = 0; i < n_hints; ++i)
        for (std::size_t j = i + 1; j < n_hints; ++j) subsets.push_back({i, j});
    return subsets;
}

inline PlanPool expand_plans(Gateway& gateway, const Problem& problem, const HintSet& hints,
                             const std::vector<std::vector<std::size_t>>& subsets,
                             int plans_per_subset = 1, const SamplingParams& sampling = {}) {
    if (subsets.empty()) throw ConfigError("expand_plans: no hint subsets");
    if (plans_per_subset < 1) throw ConfigError("plans_per_subset must be >= 1");

    PlanPool pool;
    for (const auto& subset : subsets) {
        std::string joined;
        for (std::size_t idx : subset) {
            if (!joined.empty()) joined += "\n";
            joined += "- " + hints.hints.at(idx).text;
        }
        ChatRequest request{"plan_expansion",
                            {{"statement", problem.statement}, {"hints", joined}},
                            plans_per_subset,
                            sampling};
        auto completion = gateway.complete(request);
        for (const auto& text : completion.texts) {
            pool.plans.push_back(
                {detail::seq_id('p', pool.plans.size()), trim(extract_fenced_block(text)), subset});
        }
    }
    return pool;
}

inline AttackIdeaPool derive_attack_ideas(Gateway& gateway, const Problem& problem,
                                          const PlanPool& plans, int ideas_per_plan = 2,
                                          const SamplingParams& sampling = {}) {
    if (plans.plans.empty()) throw ConfigError("derive_attack_ideas: no plans");
    if (ideas_per_plan < 1) throw ConfigError("ideas_per_plan must be >= 1");

    AttackIdeaPool pool;
    std::set<std::string> seen;
    for (const auto& plan : plans.plans) {
        ChatRequest request{"attack_idea",
                            {{"statement", problem.statement}, {"plan", plan.text}},
                            ideas_per_plan,
                            sampling};
        auto completion = gateway.complete(request);
        for (const auto& text : completion.texts) {
            const std::string idea = trim(extract_fenced_block(text));
            if (idea.empty() || !seen.insert(fold_key(idea)).second) continue;
            pool.ideas.push_back({detail::seq_id('a', pool.ideas.size()), idea, plan.id});
        }
    }
    return pool;
}

struct IdeationResult {
    HintSet hints;
    PlanPool plans;
    AttackIdeaPool ideas;
};

inline IdeationResult run_ideation(Gateway& gateway, const Problem& problem,
                                   const IdeationConfig& config) {
    IdeationResult result;
    result.hints = generate_hints(gateway, problem, config.n_hints, config.sampling);
    const auto subsets = enumerate_hint_subsets(result.hints.hints.size());
    result.plans = expand_plans(gateway, problem, result.hints, subsets, config.plans_per_subset,
                                config.sampling);
    result.ideas = derive_attack_ideas(gateway, problem, result.plans, config.ideas_per_plan,
                                       config.sampling);
    return result;
}

} // namespace coev
