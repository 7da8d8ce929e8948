#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coev/core.hpp"
#include "coev/gateway.hpp"
#include "coev/pool_builder.hpp"
#include "coev/sandbox.hpp"

namespace coev {

struct SelfPlayConfig {
    int n_codes = 16;
    int n_uts = 16;
    int t_max = 5;
    PoolBuildConfig pool;
    SamplingParams sampling;
};

// Append-only history. Replacement events carry the full new member so the
// final pools can be replayed from round 0 without a provider.
struct Event {
    enum class Kind {
        RoundStart,
        Terminated,
        StepSkipped,
        CodeReplaced,  // step 1: all-failing candidate regenerated
        CodeRepaired,  // step 3: failing candidate repaired
        UtRefreshed,   // step 2: suspicious UT regenerated
        UtReplaced,    // step 4: trivial UT replaced
        KeptOriginal,  // replacement failed validation; old member retained
        ProviderFailure,
    };

    Kind kind;
    int round = 0;
    int step = 0; // 1..4; 0 for round-level events
    std::string reason;
    int slot = -1;
    std::string old_id;
    std::optional<CodeCandidate> new_code;
    std::optional<UnitTest> new_ut;
};

inline const char* to_string(Event::Kind kind) {
    switch (kind) {
        case Event::Kind::RoundStart: return "round_start";
        case Event::Kind::Terminated: return "terminated";
        case Event::Kind::StepSkipped: return "step_skipped";
        case Event::Kind::CodeReplaced: return "code_replaced";
        case Event::Kind::CodeRepaired: return "code_repaired";
        case Event::Kind::UtRefreshed: return "ut_refreshed";
        case Event::Kind::UtReplaced: return "ut_replaced";
        case Event::Kind::KeptOriginal: return "kept_original";
        case Event::Kind::ProviderFailure: return "provider_failure";
    }
    return "unknown";
}

struct SelfPlayState {
    CodePool codes;
    UtPool uts;
    ExecutionMatrix matrix;
    PassStats stats;
    int round = 0;
    std::vector<Event> history;
};

// Execution-matrix-driven loop: each round cleans all-failing codes, breaks
// the most suspicious code/UT coupling, repairs codes against the most
// trustworthy discriminative UT, and replaces zero-discrimination UTs, with
// a matrix refresh after every mutating step.
class SelfPlayEngine {
public:
    SelfPlayEngine(Gateway& gateway, Executor& executor, const Problem& problem,
                   const PlanPool& plans, const AttackIdeaPool& ideas, SelfPlayConfig config,
                   std::uint64_t seed, IdGen& ids)
        : gateway_(gateway),
          executor_(executor),
          problem_(problem),
          plans_(plans),
          ideas_(ideas),
          config_(std::move(config)),
          ids_(ids),
          plan_cycler_(plans.plans.size(), derive_seed(seed, "plan-cycle")),
          attack_cycler_(ideas.ideas.empty() ? 1 : ideas.ideas.size(),
                         derive_seed(seed, "attack-cycle")) {
        if (ideas_.ideas.empty()) throw ConfigError("self-play requires a non-empty attack idea pool");
    }

    using RoundCallback = std::function<void(const SelfPlayState&)>;
    void set_round_callback(RoundCallback cb) { on_round_end_ = std::move(cb); }

    SelfPlayState initialize() {
        SelfPlayState state;
        state.codes = build_code_pool(gateway_, problem_, plans_, config_.n_codes, plan_cycler_,
                                      ids_, config_.sampling);
        state.uts = build_ut_pool(gateway_, problem_, ideas_, config_.n_uts, attack_cycler_,
                                  config_.pool, ids_);
        refresh(state);
        return state;
    }

    // Step 1: remove all-failing candidates and regenerate them from plans.
    // A provider failure aborts the whole step with the state unchanged.
    bool step_clean_codes(SelfPlayState& state) {
        std::vector<std::size_t> failing;
        for (std::size_t i = 0; i < state.codes.size(); ++i)
            if (state.stats.code_rates[i].zero()) failing.push_back(i);
        if (failing.empty()) {
            log_skip(state, 1, "no all-failing code");
            return false;
        }
        std::vector<CodeCandidate> replacements;
        try {
            for (std::size_t k = 0; k < failing.size(); ++k) {
                const Plan& plan = plans_.plans[plan_cycler_.next()];
                replacements.push_back(generate_code_from_plan(
                    gateway_, problem_, plan, config_.sampling, ids_.next_code(),
                    CodeProvenance::regenerated(state.round)));
            }
        } catch (const ProviderError& e) {
            state.history.push_back({Event::Kind::ProviderFailure, state.round, 1, e.what(),
                                     -1, {}, std::nullopt, std::nullopt});
            return false;
        }
        for (std::size_t k = 0; k < failing.size(); ++k) {
            const std::size_t slot = failing[k];
            state.history.push_back({Event::Kind::CodeReplaced, state.round, 1, "pass rate 0",
                                     static_cast<int>(slot), state.codes[slot].id,
                                     replacements[k], std::nullopt});
            state.codes[slot] = std::move(replacements[k]);
        }
        refresh(state);
        return true;
    }

    // Step 2: regenerate the interior-minimum-pass-rate UT, giving the model
    // the suspicious test and the code(s) it passes as a negative reference.
    bool step_break_coupling(SelfPlayState& state) {
        const auto worst = non_trivial_worst_ut(state.stats);
        if (!worst) {
            log_skip(state, 2, "no non-trivial UT");
            return false;
        }
        const std::size_t slot = *worst;
        const UnitTest& suspect = state.uts[slot];

        std::string passing_sources;
        for (std::size_t i = 0; i < state.codes.size(); ++i) {
            if (!state.matrix.at(i, slot)) continue;
            if (!passing_sources.empty()) passing_sources += "\n---\n";
            passing_sources += state.codes[i].source;
        }

        auto replacement = regenerate_ut(state, suspect, passing_sources);
        if (!replacement) return false;
        state.history.push_back({Event::Kind::UtRefreshed, state.round, 2,
                                 "interior minimum pass rate", static_cast<int>(slot), suspect.id,
                                 std::nullopt, *replacement});
        state.uts[slot] = std::move(*replacement);
        refresh(state);
        return true;
    }

    // Step 3: repair every candidate failing the interior-maximum-pass-rate
    // UT. One repair attempt per candidate; the repaired version stands even
    // if it still fails.
    bool step_fix_codes(SelfPlayState& state) {
        const auto best = non_trivial_best_ut(state.stats);
        if (!best) {
            log_skip(state, 3, "no non-trivial UT");
            return false;
        }
        const std::size_t j = *best;
        const UnitTest& ut = state.uts[j];
        bool mutated = false;
        for (std::size_t i = 0; i < state.codes.size(); ++i) {
            if (state.matrix.at(i, j)) continue;
            const CodeCandidate& buggy = state.codes[i];
            const auto outcome = executor_.run(buggy.source, ut.input);
            const std::string actual =
                outcome.ok() ? outcome.text : std::string("error: ") + to_string(outcome.reason);
            ChatRequest request{"fix_code",
                                {{"statement", problem_.statement},
                                 {"code", buggy.source},
                                 {"ut_input", ut.input},
                                 {"ut_expected", ut.expected_output},
                                 {"actual", actual}},
                                1,
                                config_.sampling};
            try {
                CodeCandidate fixed{ids_.next_code(), gateway_.complete_text(request),
                                    CodeProvenance::fixed(state.round, ut.id)};
                state.history.push_back({Event::Kind::CodeRepaired, state.round, 3,
                                         "fails UT " + ut.id, static_cast<int>(i), buggy.id,
                                         fixed, std::nullopt});
                state.codes[i] = std::move(fixed);
                mutated = true;
            } catch (const ProviderError& e) {
                state.history.push_back({Event::Kind::ProviderFailure, state.round, 3, e.what(),
                                         static_cast<int>(i), buggy.id, std::nullopt, std::nullopt});
            }
        }
        if (mutated) refresh(state);
        return mutated;
    }

    // Step 4: replace every UT passed by all candidates or by none. On a
    // fully saturated matrix the step is a no-op; the loop is about to
    // terminate and discarding the pool that achieved saturation would only
    // destroy the stopping condition.
    bool step_replace_trivial_uts(SelfPlayState& state) {
        if (is_saturated(state.matrix)) {
            log_skip(state, 4, "matrix saturated");
            return false;
        }
        std::vector<std::size_t> trivial;
        for (std::size_t j = 0; j < state.uts.size(); ++j)
            if (!state.stats.ut_rates[j].interior()) trivial.push_back(j);
        if (trivial.empty()) {
            log_skip(state, 4, "no trivial UT");
            return false;
        }
        bool mutated = false;
        for (std::size_t j : trivial) {
            const UnitTest& old = state.uts[j];
            auto replacement = generate_ut_from_attack(state, old.id);
            if (!replacement) continue;
            state.history.push_back({Event::Kind::UtReplaced, state.round, 4,
                                     state.stats.ut_rates[j].zero() ? "pass rate 0" : "pass rate 1",
                                     static_cast<int>(j), old.id, std::nullopt, *replacement});
            state.uts[j] = std::move(*replacement);
            mutated = true;
        }
        if (mutated) refresh(state);
        return mutated;
    }

    // Rounds 1..t_max with a saturation check at the top of each round.
    void run(SelfPlayState& state) {
        for (int round = 1; round <= config_.t_max; ++round) {
            state.round = round;
            state.history.push_back({Event::Kind::RoundStart, round, 0, {}, -1, {},
                                     std::nullopt, std::nullopt});
            if (is_saturated(state.matrix)) {
                state.history.push_back({Event::Kind::Terminated, round, 0, "matrix saturated",
                                         -1, {}, std::nullopt, std::nullopt});
                return;
            }
            step_clean_codes(state);
            step_break_coupling(state);
            step_fix_codes(state);
            step_replace_trivial_uts(state);
            if (on_round_end_) on_round_end_(state);
        }
        state.history.push_back({Event::Kind::Terminated, config_.t_max, 0, "iteration budget",
                                 -1, {}, std::nullopt, std::nullopt});
    }

    void refresh(SelfPlayState& state) {
        state.matrix = executor_.build_matrix(state.codes, state.uts);
        state.stats = compute_pass_stats(state.matrix);
    }

private:
    void log_skip(SelfPlayState& state, int step, std::string reason) {
        state.history.push_back({Event::Kind::StepSkipped, state.round, step, std::move(reason),
                                 -1, {}, std::nullopt, std::nullopt});
    }

    // Shared validation path for steps 2 and 4: propose an input, run output
    // self-consistency, keep the original member if the budget is exhausted.
    std::optional<UnitTest> regenerate_ut(SelfPlayState& state, const UnitTest& suspect,
                                          const std::string& passing_sources) {
        const int attempts = std::max(1, config_.pool.retry_budget);
        for (int attempt = 0; attempt < attempts; ++attempt) {
            const AttackIdea& idea = ideas_.ideas[attack_cycler_.next()];
            try {
                ChatRequest request{"refresh_ut",
                                    {{"statement", problem_.statement},
                                     {"ut_input", suspect.input},
                                     {"ut_expected", suspect.expected_output},
                                     {"passing_code", passing_sources},
                                     {"attack_idea", idea.text}},
                                    1,
                                    config_.sampling};
                const std::string input = gateway_.complete_text(request);
                auto ut = validate_ut_output(gateway_, problem_, input, config_.pool.k_samples,
                                             config_.pool.agree_threshold, ids_.next_ut(),
                                             UtProvenance::refreshed(state.round, suspect.id, idea.id),
                                             config_.pool.output_sampling);
                if (ut) return ut;
            } catch (const ProviderError& e) {
                state.history.push_back({Event::Kind::ProviderFailure, state.round, 2, e.what(),
                                         -1, suspect.id, std::nullopt, std::nullopt});
                return std::nullopt;
            }
        }
        state.history.push_back({Event::Kind::KeptOriginal, state.round, 2,
                                 "replacement failed self-consistency", -1, suspect.id,
                                 std::nullopt, std::nullopt});
        return std::nullopt;
    }

    std::optional<UnitTest> generate_ut_from_attack(SelfPlayState& state,
                                                    const std::string& old_ut_id) {
        const int attempts = std::max(1, config_.pool.retry_budget);
        for (int attempt = 0; attempt < attempts; ++attempt) {
            const AttackIdea& idea = ideas_.ideas[attack_cycler_.next()];
            try {
                const std::string input = propose_ut_input(gateway_, problem_, UtSource::Attack,
                                                           &idea, config_.sampling);
                auto ut = validate_ut_output(gateway_, problem_, input, config_.pool.k_samples,
                                             config_.pool.agree_threshold, ids_.next_ut(),
                                             UtProvenance::replaced_trivial(state.round, idea.id),
                                             config_.pool.output_sampling);
                if (ut) return ut;
            } catch (const ProviderError& e) {
                state.history.push_back({Event::Kind::ProviderFailure, state.round, 4, e.what(),
                                         -1, old_ut_id, std::nullopt, std::nullopt});
                return std::nullopt;
            }
        }
        state.history.push_back({Event::Kind::KeptOriginal, state.round, 4,
                                 "replacement failed self-consistency", -1, old_ut_id,
                                 std::nullopt, std::nullopt});
        return std::nullopt;
    }

    Gateway& gateway_;
    Executor& executor_;
    const Problem& problem_;
    const PlanPool& plans_;
    const AttackIdeaPool& ideas_;
    SelfPlayConfig config_;
    IdGen& ids_;
    IndexCycler plan_cycler_;
    IndexCycler attack_cycler_;
    RoundCallback on_round_end_;
};

// Reconstruct the final pools by re-applying logged replacements to the
// round-0 pools. No provider or executor involved.
inline std::pair<CodePool, UtPool> replay_history(CodePool codes, UtPool uts,
                                                  const std::vector<Event>& history) {
    for (const Event& event : history) {
        switch (event.kind) {
            case Event::Kind::CodeReplaced:
            case Event::Kind::CodeRepaired:
                if (event.slot >= 0 && event.new_code)
                    codes.at(static_cast<std::size_t>(event.slot)) = *event.new_code;
                break;
            case Event::Kind::UtRefreshed:
            case Event::Kind::UtReplaced:
                if (event.slot >= 0 && event.new_ut)
                    uts.at(static_cast<std::size_t>(event.slot)) = *event.new_ut;
                break;
            default:
                break;
        }
    }
    return {std::move(codes), std::move(uts)};
}

} // namespace coev
