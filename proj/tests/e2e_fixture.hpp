#pragma once

// Scripted end-to-end scenario: "echo max of list" with four candidates
// (two correct, one off-by-one, one crashing) and four unit tests (three
// correct, one wrong-output test that the off-by-one candidate passes).
// The script walks the pipeline through one self-play round:
//   step 1 evicts the crashing candidate,
//   step 2 refreshes the spurious test so the off-by-one stops scoring,
//   step 3 repairs the off-by-one,
// after which the matrix saturates and consensus selection runs on a
// four-way tie of correct programs.

#include <string>
#include <vector>

#include "coev/gateway.hpp"
#include "coev/runner.hpp"

namespace fixture_e2e {

inline const std::string kCorrectA =
    "import sys\n"
    "data = sys.stdin.read().split()\n"
    "n = int(data[0])\n"
    "print(max(map(int, data[1:1+n])))";

inline const std::string kCorrectB =
    "import sys\n"
    "data = sys.stdin.read().split()\n"
    "n = int(data[0])\n"
    "vals = sorted(map(int, data[1:1+n]))\n"
    "print(vals[-1])";

inline const std::string kOffByOne =
    "import sys\n"
    "data = sys.stdin.read().split()\n"
    "n = int(data[0])\n"
    "print(max(map(int, data[1:1+n])) + 1)";

inline const std::string kCrashing =
    "import sys\n"
    "raise RuntimeError('boom')";

inline const std::string kCorrectC =
    "import sys\n"
    "data = sys.stdin.read().split()\n"
    "n = int(data[0])\n"
    "best = None\n"
    "for v in map(int, data[1:1+n]):\n"
    "    if best is None or v > best:\n"
    "        best = v\n"
    "print(best)";

inline const std::string kCorrectD =
    "import sys\n"
    "data = sys.stdin.read().split()\n"
    "n = int(data[0])\n"
    "print(max(int(x) for x in data[1:1+n]))";

// Distinct from every pipeline candidate; used only as the metrics oracle.
inline const std::string kReference =
    "import sys\n"
    "from functools import reduce\n"
    "data = sys.stdin.read().split()\n"
    "n = int(data[0])\n"
    "print(reduce(lambda a, b: a if a > b else b, map(int, data[1:1+n])))";

inline coev::Problem problem() {
    return {"e2e1",
            "Read an integer n on the first line and n space-separated integers on the "
            "second line; print the maximum of the n integers."};
}

// Eval inputs/outputs are deliberately distinctive byte sequences so the
// firewall instrumentation (criterion: no eval bytes in any prompt) probes
// leakage rather than substring coincidences.
inline coev::EvalSuite eval_suite() {
    coev::EvalSuite eval;
    eval.tests = {{"7\n103 9021 47 311 9020 6 12", "9021"}, {"3\n-412 -73 -99", "-73"}};
    eval.reference_solution = kReference;
    return eval;
}

inline coev::RunConfig config() {
    coev::RunConfig config;
    config.n_codes = 4;
    config.n_uts = 4;
    config.t_max = 5;
    config.probe_count = 2;
    config.ideation.n_hints = 2;
    config.ideation.plans_per_subset = 1;
    config.ideation.ideas_per_plan = 1;
    config.pool.k_samples = 4;
    config.pool.agree_threshold = 3;
    config.pool.retry_budget = 3;
    config.seed = 424242;
    return config;
}

inline std::vector<coev::ScriptEntry> script() {
    using coev::ScriptEntry;
    auto fence = [](const std::string& src) { return "```python\n" + src + "\n```"; };
    std::vector<ScriptEntry> entries;
    auto pos = [&](std::string template_id, std::vector<std::string> texts) {
        entries.push_back({"", std::move(template_id), std::move(texts)});
    };

    // Stage 1: ideation. Two hints -> three subsets -> three plans -> 3 ideas.
    pos("hint_generation", {"track the running maximum", "sort the values"});
    pos("plan_expansion", {"Scan the list once, keeping the largest value seen."});
    pos("plan_expansion", {"Sort ascending and return the last element."});
    pos("plan_expansion", {"Scan while comparing against the current best."});
    pos("attack_idea", {"all elements equal"});
    pos("attack_idea", {"all values negative"});
    pos("attack_idea", {"maximum at the first position"});

    // Stage 2 init: four candidates.
    pos("code_from_plan", {fence(kCorrectA)});
    pos("code_from_plan", {fence(kCorrectB)});
    pos("code_from_plan", {fence(kOffByOne)});
    pos("code_from_plan", {fence(kCrashing)});

    // Four unit tests: slots 0-1 random, slots 2-3 attack. The last one is
    // self-consistent on a wrong answer (true max 3, agreed answer 4), which
    // is exactly the output the off-by-one candidate produces.
    pos("random_input", {"5\n1 2 3 4 5"});
    pos("ut_output", {"5", "5", "5", "5"});
    pos("random_input", {"3\n7 7 7"});
    pos("ut_output", {"7", "7", "7", "7"});
    pos("ut_input_from_attack", {"4\n-1 -2 -3 -4"});
    pos("ut_output", {"-1", "-1", "-1", "-1"});
    pos("ut_input_from_attack", {"3\n1 2 3"});
    pos("ut_output", {"4", "4", "4", "3"});

    // Round 1, step 1: the crashing candidate fails everything -> regenerate.
    pos("code_from_plan", {fence(kCorrectC)});
    // Step 2: refresh the suspicious low-pass test; the replacement validates.
    pos("refresh_ut", {"2\n9 9"});
    pos("ut_output", {"9", "9", "9", "9"});
    // Step 3: repair the one candidate failing the best non-trivial test.
    pos("fix_code", {fence(kCorrectD)});
    // Step 4 is skipped: the matrix is saturated.

    // Stage 3: two probe inputs for consensus selection.
    pos("random_input", {"3\n4 5 6"});
    pos("random_input", {"1\n-7"});
    return entries;
}

} // namespace fixture_e2e
