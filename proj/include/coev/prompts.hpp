#pragma once

#include <string_view>
#include <utility>
#include <vector>

// Default prompt templates. These are editable assets, not fixed content:
// any template can be overridden by placing <template_id>.txt in the
// directory passed to TemplateSet::load_overrides. Placeholders use
// {identifier} syntax; unknown braces pass through verbatim.

namespace coev::prompts {

inline constexpr std::string_view kHintGeneration = R"(You are exploring solution strategies for a programming problem.

Problem:
{statement}

Propose one high-level algorithmic hint for solving this problem: a strategy,
data structure, or key observation. Do not write code and do not write a full
solution. Reply with the hint as a single short paragraph and nothing else.)";

inline constexpr std::string_view kPlanExpansion = R"(You are designing a solution for a programming problem.

Problem:
{statement}

Strategy hints to follow:
{hints}

Expand these hints into one detailed, self-contained natural-language solution
plan: the algorithm, the data structures, and how edge cases are handled.
Do not write code. Reply with the plan only.)";

inline constexpr std::string_view kCodeFromPlan = R"(Write a complete program for the following problem.

Problem:
{statement}

Follow this solution plan:
{plan}

The program must read from standard input and write the answer to standard
output. Reply with a single fenced code block containing the full program and
nothing else.)";

inline constexpr std::string_view kAttackIdea = R"(You are reviewing a proposed solution plan for a programming problem.

Problem:
{statement}

Plan under review:
{plan}

Identify one potential failure mode, hidden edge case, or implementation
pitfall of this plan, phrased as a concrete test idea that could expose it.
Reply with a short description of the single test idea and nothing else.)";

inline constexpr std::string_view kUtInputFromAttack = R"(Construct one test input for the following problem.

Problem:
{statement}

The input should realize this test idea:
{attack_idea}

Reply with only the raw input text, exactly as it would be fed to the program
on standard input. A fenced code block around the input is allowed.)";

inline constexpr std::string_view kRandomInput = R"(Construct one random valid test input for the following problem.

Problem:
{statement}

The input must satisfy every format constraint stated in the problem. Reply
with only the raw input text, exactly as it would be fed to the program on
standard input. A fenced code block around the input is allowed.)";

inline constexpr std::string_view kUtOutput = R"(Solve the following problem for the given input.

Problem:
{statement}

Input:
{input}

Work out the answer carefully, then reply with only the exact output the
correct program would print for this input. No explanation.)";

inline constexpr std::string_view kRefreshUt = R"(A generated test for the following problem is suspected of agreeing with a
wrong program rather than with the problem itself.

Problem:
{statement}

Suspicious test input:
{ut_input}

Its claimed expected output:
{ut_expected}

Program(s) that pass this test while failing most others:
{passing_code}

Produce one new, different test input targeting this idea:
{attack_idea}

The new input must be valid for the problem and should avoid reproducing the
suspicious agreement above. Reply with only the raw input text. A fenced code
block around the input is allowed.)";

inline constexpr std::string_view kFixCode = R"(A program for the following problem fails one test.

Problem:
{statement}

Current program:
{code}

Failing test input:
{ut_input}

Expected output:
{ut_expected}

What the program actually produced:
{actual}

Repair the program so it handles this test and stays correct on the rest of
the problem. Reply with a single fenced code block containing the full fixed
program and nothing else.)";

inline const std::vector<std::pair<std::string_view, std::string_view>>& builtin_templates() {
    static const std::vector<std::pair<std::string_view, std::string_view>> templates = {
        {"hint_generation", kHintGeneration},
        {"plan_expansion", kPlanExpansion},
        {"code_from_plan", kCodeFromPlan},
        {"attack_idea", kAttackIdea},
        {"ut_input_from_attack", kUtInputFromAttack},
        {"random_input", kRandomInput},
        {"ut_output", kUtOutput},
        {"refresh_ut", kRefreshUt},
        {"fix_code", kFixCode},
    };
    return templates;
}

} // namespace coev::prompts
