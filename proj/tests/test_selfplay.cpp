#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "coev/selfplay.hpp"
#include "selfplay_fixture.hpp"

using namespace coev;

namespace {

const Problem kProblem{"table", "Read a key; print the mapped value."};

struct Rig {
    std::shared_ptr<ScriptedProvider> provider;
    Gateway gateway;
    Executor executor;
    PlanPool plans = fixture::one_plan();
    AttackIdeaPool ideas = fixture::one_idea();
    IdGen ids;
    SelfPlayEngine engine;
    SelfPlayState state;

    Rig(std::vector<ScriptEntry> entries, const fixture::MatrixScenario& scenario,
        SelfPlayConfig config)
        : provider(std::make_shared<ScriptedProvider>(std::move(entries))),
          gateway(TemplateSet::builtin(), provider, RetryPolicy{2, std::chrono::milliseconds(1), 2.0}),
          executor(ExecLimits{}),
          engine(gateway, executor, kProblem, plans, ideas, config, 7, ids) {
        state.codes = scenario.codes;
        state.uts = scenario.uts;
        ids.code = scenario.codes.size();
        ids.ut = scenario.uts.size();
        engine.refresh(state);
        state.round = 1;
    }
};

SelfPlayConfig tight_config(int k = 2, int thresh = 2, int budget = 1) {
    SelfPlayConfig config;
    config.pool.k_samples = k;
    config.pool.agree_threshold = thresh;
    config.pool.retry_budget = budget;
    return config;
}

int count_events(const SelfPlayState& state, Event::Kind kind) {
    int n = 0;
    for (const auto& e : state.history)
        if (e.kind == kind) ++n;
    return n;
}

} // namespace

TEST_CASE("step 1: code cleaning") {
    SUBCASE("all-failing row is replaced, pool size preserved") {
        // Rates per row: 0, 1/2, 1 over two UTs.
        auto scenario = fixture::scenario_from({{0, 0}, {1, 0}, {1, 1}});
        // Replacement: a program answering both UTs correctly.
        auto good = fixture::table_program({{"0", "o0"}, {"1", "o1"}});
        Rig rig({{"", "code_from_plan", {"```\n" + good + "\n```"}}}, scenario, tight_config());

        REQUIRE(rig.engine.step_clean_codes(rig.state));
        REQUIRE(rig.state.codes.size() == 3);
        CHECK(rig.state.codes[0].id == "c003");
        CHECK(rig.state.codes[0].provenance.kind == CodeProvenance::Kind::Regenerated);
        CHECK(rig.state.codes[0].provenance.round == 1);
        CHECK(rig.state.stats.code_counts == std::vector<int>{2, 1, 2});
        CHECK(count_events(rig.state, Event::Kind::CodeReplaced) == 1);
    }
    SUBCASE("no zero row is a no-op") {
        auto scenario = fixture::scenario_from({{1, 0}, {1, 1}});
        Rig rig({}, scenario, tight_config());
        auto before = rig.state.matrix;
        CHECK_FALSE(rig.engine.step_clean_codes(rig.state));
        CHECK(rig.state.matrix == before);
        CHECK(count_events(rig.state, Event::Kind::StepSkipped) == 1);
    }
    SUBCASE("all rows zero regenerates the entire pool") {
        auto scenario = fixture::scenario_from({{0, 0}, {0, 0}});
        auto good = fixture::table_program({{"0", "o0"}, {"1", "o1"}});
        Rig rig({{"", "code_from_plan", {"```\n" + good + "\n```"}},
                 {"", "code_from_plan", {"```\n" + good + "\n```"}}},
                scenario, tight_config());
        REQUIRE(rig.engine.step_clean_codes(rig.state));
        CHECK(count_events(rig.state, Event::Kind::CodeReplaced) == 2);
        CHECK(is_saturated(rig.state.matrix));
    }
    SUBCASE("provider failure aborts the step with state unchanged") {
        auto scenario = fixture::scenario_from({{0, 0}, {1, 1}});
        Rig rig({}, scenario, tight_config()); // empty script -> exhaustion
        auto codes_before = rig.state.codes;
        CHECK_FALSE(rig.engine.step_clean_codes(rig.state));
        CHECK(rig.state.codes == codes_before);
        CHECK(count_events(rig.state, Event::Kind::ProviderFailure) == 1);
    }
}

TEST_CASE("step 2: breaking spurious coupling") {
    SUBCASE("interior argmin UT is refreshed and re-validated") {
        // Column rates: u0 2/3, u1 1/3 -> worst is u1.
        auto scenario = fixture::scenario_from({{1, 0}, {1, 0}, {0, 1}});
        Rig rig({{"", "refresh_ut", {"9"}},
                 {"", "ut_output", {"o9", "o9"}}},
                scenario, tight_config());
        REQUIRE(rig.engine.step_break_coupling(rig.state));
        CHECK(rig.state.uts[1].input == "9");
        CHECK(rig.state.uts[1].expected_output == "o9");
        CHECK(rig.state.uts[1].provenance.kind == UtProvenance::Kind::Refreshed);
        CHECK(rig.state.uts[1].provenance.replaced_ut_id == "u1");
        CHECK(rig.state.uts[1].votes == ConsistencyVotes{2, 2});
        // None of the table programs know key "9": the new column is all-fail.
        CHECK(rig.state.stats.ut_counts[1] == 0);
        CHECK(count_events(rig.state, Event::Kind::UtRefreshed) == 1);
    }
    SUBCASE("skip when every rate is 0 or 1") {
        auto scenario = fixture::scenario_from({{1, 0}, {1, 0}});
        Rig rig({}, scenario, tight_config());
        CHECK_FALSE(rig.engine.step_break_coupling(rig.state));
        CHECK(count_events(rig.state, Event::Kind::StepSkipped) == 1);
    }
    SUBCASE("failed self-consistency keeps the original UT") {
        auto scenario = fixture::scenario_from({{1, 0}, {1, 1}});
        auto original = scenario.uts[1];
        // Three proposal attempts, all disagreeing.
        Rig rig({{"", "refresh_ut", {"7"}}, {"", "ut_output", {"a", "b"}},
                 {"", "refresh_ut", {"7"}}, {"", "ut_output", {"a", "b"}},
                 {"", "refresh_ut", {"7"}}, {"", "ut_output", {"a", "b"}}},
                scenario, tight_config(2, 2, 3));
        CHECK_FALSE(rig.engine.step_break_coupling(rig.state));
        CHECK(rig.state.uts[1] == original);
        CHECK(count_events(rig.state, Event::Kind::KeptOriginal) == 1);
    }
}

TEST_CASE("step 3: code fixing") {
    SUBCASE("every candidate failing the best non-trivial UT is repaired") {
        // Column rates: u0 3/4 (best interior), u1 2/4.
        auto scenario = fixture::scenario_from({{1, 1}, {1, 1}, {1, 0}, {0, 0}});
        auto fixed = fixture::table_program({{"0", "o0"}, {"1", "o1"}});
        Rig rig({{"", "fix_code", {"```\n" + fixed + "\n```"}}}, scenario, tight_config());
        REQUIRE(rig.engine.step_fix_codes(rig.state));
        CHECK(count_events(rig.state, Event::Kind::CodeRepaired) == 1);
        CHECK(rig.state.codes[3].provenance.kind == CodeProvenance::Kind::Fixed);
        CHECK(rig.state.codes[3].provenance.ut_id == "u0");
        CHECK(rig.state.stats.code_counts[3] == 2);
        CHECK(rig.state.codes.size() == 4);
    }
    SUBCASE("skip when no interior UT exists") {
        auto scenario = fixture::scenario_from({{1, 1}, {1, 1}});
        Rig rig({}, scenario, tight_config());
        CHECK_FALSE(rig.engine.step_fix_codes(rig.state));
        CHECK(count_events(rig.state, Event::Kind::StepSkipped) == 1);
    }
    SUBCASE("a repair that still fails is retained, no re-repair in the step") {
        auto scenario = fixture::scenario_from({{1, 1}, {1, 0}});
        // The "repair" still answers u1 wrong.
        auto still_bad = fixture::table_program({{"0", "o0"}, {"1", "nope"}});
        Rig rig({{"", "fix_code", {"```\n" + still_bad + "\n```"}}}, scenario, tight_config());
        REQUIRE(rig.engine.step_fix_codes(rig.state));
        CHECK(rig.state.codes[1].source + "\n" == still_bad); // fence extraction drops the final newline
        CHECK(rig.state.stats.code_counts[1] == 1);
        CHECK(count_events(rig.state, Event::Kind::CodeRepaired) == 1);
    }
    SUBCASE("per-candidate provider failure keeps that candidate") {
        auto scenario = fixture::scenario_from({{1, 1}, {1, 0}, {0, 1}});
        // u0 is best (2/3); only c2 fails it; script is empty -> failure logged.
        Rig rig({}, scenario, tight_config());
        auto before = rig.state.codes[2];
        CHECK_FALSE(rig.engine.step_fix_codes(rig.state));
        CHECK(rig.state.codes[2] == before);
        CHECK(count_events(rig.state, Event::Kind::ProviderFailure) == 1);
    }
}

TEST_CASE("step 4: replacing zero-discrimination UTs") {
    SUBCASE("rate-0 and rate-1 columns are both replaced") {
        // Column rates: u0 0/2, u1 1/2, u2 2/2.
        auto scenario = fixture::scenario_from({{0, 1, 1}, {0, 0, 1}});
        Rig rig({{"", "ut_input_from_attack", {"7"}}, {"", "ut_output", {"o7", "o7"}},
                 {"", "ut_input_from_attack", {"8"}}, {"", "ut_output", {"o8", "o8"}}},
                scenario, tight_config());
        REQUIRE(rig.engine.step_replace_trivial_uts(rig.state));
        CHECK(count_events(rig.state, Event::Kind::UtReplaced) == 2);
        CHECK(rig.state.uts[0].input == "7");
        CHECK(rig.state.uts[0].provenance.kind == UtProvenance::Kind::ReplacedTrivial);
        CHECK(rig.state.uts[1].input == "1"); // interior column untouched
        CHECK(rig.state.uts[2].input == "8");
        CHECK(rig.state.uts.size() == 3);
    }
    SUBCASE("all interior is a no-op") {
        auto scenario = fixture::scenario_from({{1, 0}, {0, 1}});
        Rig rig({}, scenario, tight_config());
        CHECK_FALSE(rig.engine.step_replace_trivial_uts(rig.state));
        CHECK(count_events(rig.state, Event::Kind::StepSkipped) == 1);
    }
    SUBCASE("saturated matrix skips instead of discarding the pool") {
        auto scenario = fixture::scenario_from({{1, 1}, {1, 1}});
        Rig rig({}, scenario, tight_config());
        CHECK_FALSE(rig.engine.step_replace_trivial_uts(rig.state));
        REQUIRE(count_events(rig.state, Event::Kind::StepSkipped) == 1);
        CHECK(rig.state.history.back().reason == "matrix saturated");
    }
    SUBCASE("failed validation keeps the old UT in its slot") {
        auto scenario = fixture::scenario_from({{0, 1}, {0, 1}});
        auto original = scenario.uts[0];
        Rig rig({{"", "ut_input_from_attack", {"7"}}, {"", "ut_output", {"a", "b"}}},
                scenario, tight_config(2, 2, 1));
        // u1 (rate 1) also needs a replacement attempt; script exhausts there,
        // which logs a provider failure and keeps u1 too.
        CHECK_FALSE(rig.engine.step_replace_trivial_uts(rig.state));
        CHECK(rig.state.uts[0] == original);
        CHECK(count_events(rig.state, Event::Kind::KeptOriginal) == 1);
    }
}

TEST_CASE("pool sizes are invariant across every step") {
    auto scenario = fixture::scenario_from({{0, 1, 0}, {1, 1, 0}, {0, 0, 0}});
    auto good = fixture::table_program({{"0", "o0"}, {"1", "o1"}, {"2", "o2"}});
    std::vector<ScriptEntry> entries = {
        {"", "code_from_plan", {"```\n" + good + "\n```"}},
        {"", "code_from_plan", {"```\n" + good + "\n```"}},
        {"", "refresh_ut", {"9"}},
        {"", "ut_output", {"o9", "o9"}},
        {"", "fix_code", {"```\n" + good + "\n```"}},
        {"", "ut_input_from_attack", {"5"}},
        {"", "ut_output", {"o5", "o5"}},
        {"", "ut_input_from_attack", {"6"}},
        {"", "ut_output", {"o6", "o6"}},
    };
    Rig rig(entries, scenario, tight_config());
    const auto n_codes = rig.state.codes.size();
    const auto n_uts = rig.state.uts.size();
    rig.engine.step_clean_codes(rig.state);
    CHECK(rig.state.codes.size() == n_codes);
    rig.engine.step_break_coupling(rig.state);
    CHECK(rig.state.uts.size() == n_uts);
    rig.engine.step_fix_codes(rig.state);
    CHECK(rig.state.codes.size() == n_codes);
    rig.engine.step_replace_trivial_uts(rig.state);
    CHECK(rig.state.uts.size() == n_uts);
}

TEST_CASE("run loop") {
    SUBCASE("t_max = 0 returns the round-0 state") {
        auto scenario = fixture::scenario_from({{1, 0}, {0, 1}});
        auto config = tight_config();
        config.t_max = 0;
        Rig rig({}, scenario, config);
        rig.state.round = 0;
        auto codes_before = rig.state.codes;
        rig.engine.run(rig.state);
        CHECK(rig.state.codes == codes_before);
        CHECK(count_events(rig.state, Event::Kind::RoundStart) == 0);
    }
    SUBCASE("round-0 saturation terminates with zero rounds of work") {
        auto scenario = fixture::scenario_from({{1, 1}, {1, 1}});
        Rig rig({}, scenario, tight_config());
        rig.state.round = 0;
        rig.engine.run(rig.state);
        CHECK(count_events(rig.state, Event::Kind::RoundStart) == 1);
        REQUIRE(count_events(rig.state, Event::Kind::Terminated) == 1);
        CHECK(rig.state.history.back().reason == "matrix saturated");
        CHECK(count_events(rig.state, Event::Kind::CodeReplaced) == 0);
    }
    SUBCASE("budget exhaustion is recorded") {
        auto scenario = fixture::scenario_from({{1, 0}, {0, 1}});
        auto config = tight_config(2, 2, 1);
        config.t_max = 2;
        // Each round: steps 1 and 4 skip; steps 2 and 3 try and hit provider
        // failures on the empty script; state never changes.
        Rig rig({}, scenario, config);
        rig.state.round = 0;
        rig.engine.run(rig.state);
        REQUIRE(count_events(rig.state, Event::Kind::Terminated) == 1);
        CHECK(rig.state.history.back().reason == "iteration budget");
    }
}

TEST_CASE("codes still failing everything at round end carry this round's provenance") {
    // Replacement is also all-failing: the invariant from the loop contract.
    auto scenario = fixture::scenario_from({{0, 0}, {1, 1}});
    auto bad = fixture::table_program({{"0", "wrong"}});
    auto config = tight_config();
    config.t_max = 1;
    Rig rig({{"", "code_from_plan", {"```\n" + bad + "\n```"}}}, scenario, config);
    rig.state.round = 0;
    rig.engine.run(rig.state);
    for (std::size_t i = 0; i < rig.state.codes.size(); ++i) {
        if (rig.state.stats.code_rates[i].zero()) {
            CHECK(rig.state.codes[i].provenance.kind == CodeProvenance::Kind::Regenerated);
            CHECK(rig.state.codes[i].provenance.round == 1);
        }
    }
}

TEST_CASE("history replay reconstructs the final pools") {
    auto scenario = fixture::scenario_from({{0, 1, 0}, {1, 1, 0}, {0, 0, 0}});
    auto good = fixture::table_program({{"0", "o0"}, {"1", "o1"}, {"2", "o2"}});
    std::vector<ScriptEntry> entries = {
        {"", "code_from_plan", {"```\n" + good + "\n```"}},
        {"", "code_from_plan", {"```\n" + good + "\n```"}},
        {"", "refresh_ut", {"9"}},
        {"", "ut_output", {"o9", "o9"}},
        {"", "fix_code", {"```\n" + good + "\n```"}},
        {"", "ut_input_from_attack", {"5"}},
        {"", "ut_output", {"o5", "o5"}},
    };
    auto config = tight_config();
    config.t_max = 2;
    Rig rig(entries, scenario, config);
    const auto round0_codes = rig.state.codes;
    const auto round0_uts = rig.state.uts;
    rig.state.round = 0;
    rig.engine.run(rig.state);

    auto [replayed_codes, replayed_uts] = replay_history(round0_codes, round0_uts, rig.state.history);
    CHECK(replayed_codes == rig.state.codes);
    CHECK(replayed_uts == rig.state.uts);
}
