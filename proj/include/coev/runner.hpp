#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coev/consensus.hpp"
#include "coev/core.hpp"
#include "coev/gateway.hpp"
#include "coev/ideation.hpp"
#include "coev/pool_builder.hpp"
#include "coev/sandbox.hpp"
#include "coev/selfplay.hpp"

namespace coev {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Problems and held-out evaluation data

struct EvalTest {
    std::string input;
    std::string output;
};

// Ground-truth material, stored apart from Problem so pipeline stages cannot
// touch it. Consumed exclusively by compute_metrics.
struct EvalSuite {
    std::vector<EvalTest> tests;
    std::string reference_solution; // optional oracle program

    bool has_tests() const { return !tests.empty(); }
};

struct ProblemSet {
    std::vector<Problem> problems;
    std::map<std::string, EvalSuite> eval; // keyed by problem id
};

// Line-delimited JSON: {"id", "statement", "eval_tests"?: [{"input","output"}],
// "reference_solution"?: "..."}.
inline ProblemSet load_problems(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open problem file: " + path.string());
    ProblemSet set;
    std::set<std::string> ids;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) continue;
        json record = json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object() || !record.contains("id") ||
            !record.contains("statement"))
            throw ConfigError("malformed problem record at line " + std::to_string(line_number));
        Problem problem{record["id"].get<std::string>(), record["statement"].get<std::string>()};
        if (problem.id.empty())
            throw ConfigError("empty problem id at line " + std::to_string(line_number));
        if (!ids.insert(problem.id).second)
            throw ConfigError("duplicate problem id '" + problem.id + "' at line " +
                              std::to_string(line_number));
        EvalSuite eval;
        if (record.contains("eval_tests")) {
            if (!record["eval_tests"].is_array())
                throw ConfigError("eval_tests must be an array at line " + std::to_string(line_number));
            for (const auto& t : record["eval_tests"])
                eval.tests.push_back({t.at("input").get<std::string>(),
                                      t.at("output").get<std::string>()});
        }
        if (record.contains("reference_solution"))
            eval.reference_solution = record["reference_solution"].get<std::string>();
        if (eval.has_tests() || !eval.reference_solution.empty())
            set.eval.emplace(problem.id, std::move(eval));
        set.problems.push_back(std::move(problem));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    int n_codes = 16;
    int n_uts = 16;
    int t_max = 5;
    int probe_count = 8;
    IdeationConfig ideation;
    PoolBuildConfig pool;
    ExecLimits limits;
    MatchPolicy match; // exact by default; per-problem float tolerance opt-in
    SamplingParams sampling;
    std::uint64_t seed = 1;
    int max_inflight = 8;
    int executor_workers = 0;    // 0: hardware concurrency
    int problem_parallelism = 1; // forced to 1 under a scripted provider
    std::string out_dir;
    std::string templates_dir;

    void validate() const {
        if (n_codes < 1 || n_uts < 1) throw ConfigError("pool sizes must be >= 1");
        if (n_uts % 2 != 0) throw ConfigError("n_uts must be even (half random, half attack)");
        if (t_max < 0) throw ConfigError("t_max must be >= 0");
        if (probe_count < 1) throw ConfigError("probe_count must be >= 1");
        if (pool.k_samples < pool.agree_threshold || pool.agree_threshold < 1)
            throw ConfigError("need k_samples >= agree_threshold >= 1");
    }

    SelfPlayConfig selfplay_config() const {
        SelfPlayConfig config;
        config.n_codes = n_codes;
        config.n_uts = n_uts;
        config.t_max = t_max;
        config.pool = pool;
        config.pool.n_codes = n_codes;
        config.pool.n_uts = n_uts;
        config.sampling = sampling;
        return config;
    }
};

// ---------------------------------------------------------------------------
// JSON serialization of domain types (log schema v1)

inline json to_json(const Usage& usage) {
    return {{"prompt_tokens", usage.prompt_tokens},
            {"completion_tokens", usage.completion_tokens},
            {"call_count", usage.call_count}};
}

inline json to_json(const CodeProvenance& p) {
    switch (p.kind) {
        case CodeProvenance::Kind::FromPlan:
            return {{"kind", "from_plan"}, {"plan_id", p.plan_id}};
        case CodeProvenance::Kind::Regenerated:
            return {{"kind", "regenerated"}, {"round", p.round}};
        case CodeProvenance::Kind::Fixed:
            return {{"kind", "fixed"}, {"round", p.round}, {"ut_id", p.ut_id}};
    }
    return {};
}

inline CodeProvenance code_provenance_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "from_plan") return CodeProvenance::from_plan(j.at("plan_id").get<std::string>());
    if (kind == "regenerated") return CodeProvenance::regenerated(j.at("round").get<int>());
    if (kind == "fixed")
        return CodeProvenance::fixed(j.at("round").get<int>(), j.at("ut_id").get<std::string>());
    throw ConfigError("unknown code provenance kind: " + kind);
}

inline json to_json(const CodeCandidate& c) {
    return {{"id", c.id}, {"source", c.source}, {"provenance", to_json(c.provenance)}};
}

inline CodeCandidate code_from_json(const json& j) {
    return {j.at("id").get<std::string>(), j.at("source").get<std::string>(),
            code_provenance_from_json(j.at("provenance"))};
}

inline json to_json(const UtProvenance& p) {
    switch (p.kind) {
        case UtProvenance::Kind::RandomSource:
            return {{"kind", "random_source"}};
        case UtProvenance::Kind::AttackSource:
            return {{"kind", "attack_source"}, {"idea_id", p.idea_id}};
        case UtProvenance::Kind::Refreshed:
            return {{"kind", "refreshed"},
                    {"round", p.round},
                    {"replaced_ut_id", p.replaced_ut_id},
                    {"idea_id", p.idea_id}};
        case UtProvenance::Kind::ReplacedTrivial:
            return {{"kind", "replaced_trivial"}, {"round", p.round}, {"idea_id", p.idea_id}};
    }
    return {};
}

inline UtProvenance ut_provenance_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "random_source") return UtProvenance::random_source();
    if (kind == "attack_source") return UtProvenance::attack_source(j.at("idea_id").get<std::string>());
    if (kind == "refreshed")
        return UtProvenance::refreshed(j.at("round").get<int>(),
                                       j.at("replaced_ut_id").get<std::string>(),
                                       j.at("idea_id").get<std::string>());
    if (kind == "replaced_trivial")
        return UtProvenance::replaced_trivial(j.at("round").get<int>(),
                                              j.at("idea_id").get<std::string>());
    throw ConfigError("unknown ut provenance kind: " + kind);
}

inline json to_json(const UnitTest& ut) {
    return {{"id", ut.id},
            {"input", ut.input},
            {"expected_output", ut.expected_output},
            {"provenance", to_json(ut.provenance)},
            {"votes", {{"agree", ut.votes.agree}, {"total", ut.votes.total}}}};
}

inline UnitTest ut_from_json(const json& j) {
    return {j.at("id").get<std::string>(), j.at("input").get<std::string>(),
            j.at("expected_output").get<std::string>(), ut_provenance_from_json(j.at("provenance")),
            ConsistencyVotes{j.at("votes").at("agree").get<int>(),
                             j.at("votes").at("total").get<int>()}};
}

// Row-major bit string plus the id axes.
inline json to_json(const ExecutionMatrix& m) {
    std::string bits;
    bits.reserve(m.rows() * m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) bits.push_back(m.at(i, j) ? '1' : '0');
    return {{"code_ids", m.code_ids()}, {"ut_ids", m.ut_ids()}, {"bits", bits}};
}

inline ExecutionMatrix matrix_from_json(const json& j) {
    ExecutionMatrix m(j.at("code_ids").get<std::vector<std::string>>(),
                      j.at("ut_ids").get<std::vector<std::string>>());
    const std::string bits = j.at("bits").get<std::string>();
    if (bits.size() != m.rows() * m.cols())
        throw ConfigError("matrix bit string does not match its dimensions");
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t k = 0; k < m.cols(); ++k) m.set(i, k, bits[i * m.cols() + k] == '1');
    return m;
}

inline json to_json(const PassStats& stats) {
    return {{"ut_counts", stats.ut_counts}, {"code_counts", stats.code_counts}};
}

inline json to_json(const Event& event) {
    json j{{"kind", to_string(event.kind)}, {"round", event.round}, {"step", event.step}};
    if (!event.reason.empty()) j["reason"] = event.reason;
    if (event.slot >= 0) j["slot"] = event.slot;
    if (!event.old_id.empty()) j["old_id"] = event.old_id;
    if (event.new_code) j["new_code"] = to_json(*event.new_code);
    if (event.new_ut) j["new_ut"] = to_json(*event.new_ut);
    return j;
}

inline Event event_from_json(const json& j) {
    Event event;
    const std::string kind = j.at("kind").get<std::string>();
    static const std::map<std::string, Event::Kind> kinds = {
        {"round_start", Event::Kind::RoundStart},
        {"terminated", Event::Kind::Terminated},
        {"step_skipped", Event::Kind::StepSkipped},
        {"code_replaced", Event::Kind::CodeReplaced},
        {"code_repaired", Event::Kind::CodeRepaired},
        {"ut_refreshed", Event::Kind::UtRefreshed},
        {"ut_replaced", Event::Kind::UtReplaced},
        {"kept_original", Event::Kind::KeptOriginal},
        {"provider_failure", Event::Kind::ProviderFailure},
    };
    auto it = kinds.find(kind);
    if (it == kinds.end()) throw ConfigError("unknown event kind: " + kind);
    event.kind = it->second;
    event.round = j.at("round").get<int>();
    event.step = j.at("step").get<int>();
    event.reason = j.value("reason", "");
    event.slot = j.value("slot", -1);
    event.old_id = j.value("old_id", "");
    if (j.contains("new_code")) event.new_code = code_from_json(j["new_code"]);
    if (j.contains("new_ut")) event.new_ut = ut_from_json(j["new_ut"]);
    return event;
}

inline json to_json(const ExecutionOutcome& o) {
    if (o.ok()) return {{"output", o.text}};
    return {{"error", to_string(o.reason)}};
}

inline json to_json(const Signature& sig) {
    json outcomes = json::array();
    for (const auto& o : sig.outcomes) outcomes.push_back(to_json(o));
    return {{"code_id", sig.code_id}, {"outcomes", outcomes}};
}

inline json to_json(const RunConfig& config) {
    return {{"n_codes", config.n_codes},
            {"n_uts", config.n_uts},
            {"t_max", config.t_max},
            {"probe_count", config.probe_count},
            {"n_hints", config.ideation.n_hints},
            {"plans_per_subset", config.ideation.plans_per_subset},
            {"ideas_per_plan", config.ideation.ideas_per_plan},
            {"k_samples", config.pool.k_samples},
            {"agree_threshold", config.pool.agree_threshold},
            {"retry_budget", config.pool.retry_budget},
            {"wall_timeout_ms", config.limits.wall_timeout.count()},
            {"max_output_bytes", config.limits.max_output_bytes},
            {"interpreter_cmd", config.limits.interpreter_cmd},
            {"source_filename", config.limits.source_filename},
            {"temperature", config.sampling.temperature},
            {"top_p", config.sampling.top_p},
            {"top_k", config.sampling.top_k},
            {"max_tokens", config.sampling.max_tokens},
            {"seed", config.seed},
            {"max_inflight", config.max_inflight},
            {"executor_workers", config.executor_workers},
            {"problem_parallelism", config.problem_parallelism},
            {"float_tolerance",
             config.match.float_tolerance ? json(*config.match.float_tolerance) : json()},
            {"templates_dir", config.templates_dir}};
}

// ---------------------------------------------------------------------------
// Pipeline results and metrics

struct Metrics {
    std::optional<double> code_acc;
    std::optional<double> ut_acc;
    std::optional<double> bon_acc;    // 0/1 per problem
    std::optional<double> signal_acc; // 0/1 per problem; needs an external pool
    int ut_rank = 0;

    json to_json() const {
        json j{{"ut_rank", ut_rank}};
        if (code_acc) j["code_acc"] = *code_acc;
        if (ut_acc) j["ut_acc"] = *ut_acc;
        if (bon_acc) j["bon_acc"] = *bon_acc;
        if (signal_acc) j["signal_acc"] = *signal_acc;
        return j;
    }
};

struct RoundSnapshot {
    int round = 0;
    CodePool codes;
    UtPool uts;
    ExecutionMatrix matrix;
    PassStats stats;
};

struct RunResult {
    std::string problem_id;
    bool ok = false;
    std::string failure;       // stage + reason when !ok
    IdeationResult ideation;
    std::vector<RoundSnapshot> rounds; // round 0 plus one per completed round
    SelfPlayState final_state;
    std::vector<std::size_t> tie_set;  // pool indices
    ProbeSet probes;
    std::vector<Signature> signatures; // in processing order
    ClusterSet clusters;
    std::string chosen_code_id;
    std::string chosen_source;
    Usage usage;
    std::optional<Metrics> metrics;
};

// Stages 1-3 end to end: ideation, pool initialization, matrix-driven
// self-play, then consensus selection over the BoN tie set (skipped when the
// tie set is a singleton).
inline RunResult run_pipeline(const Problem& problem, const RunConfig& config, Gateway& gateway,
                              Executor& executor) {
    config.validate();
    RunResult result;
    result.problem_id = problem.id;
    const Usage usage_before = gateway.usage();
    auto usage_delta = [&] {
        const Usage total = gateway.usage();
        return Usage{total.prompt_tokens - usage_before.prompt_tokens,
                     total.completion_tokens - usage_before.completion_tokens,
                     total.call_count - usage_before.call_count};
    };

    IdGen ids;
    try {
        result.ideation = run_ideation(gateway, problem, config.ideation);
    } catch (const std::exception& e) {
        result.failure = std::string("ideation: ") + e.what();
        result.usage = usage_delta();
        return result;
    }

    SelfPlayEngine engine(gateway, executor, problem, result.ideation.plans,
                          result.ideation.ideas, config.selfplay_config(), config.seed, ids);
    engine.set_round_callback([&](const SelfPlayState& state) {
        result.rounds.push_back({state.round, state.codes, state.uts, state.matrix, state.stats});
    });

    SelfPlayState state;
    try {
        state = engine.initialize();
        result.rounds.push_back({0, state.codes, state.uts, state.matrix, state.stats});
    } catch (const std::exception& e) {
        result.failure = std::string("pool initialization: ") + e.what();
        result.usage = usage_delta();
        return result;
    }

    try {
        engine.run(state);
    } catch (const EnvironmentError& e) {
        result.final_state = std::move(state);
        result.failure = std::string("self-play: ") + e.what();
        result.usage = usage_delta();
        return result;
    }
    result.final_state = std::move(state);

    result.tie_set = bon_tie_set(result.final_state.stats);
    try {
        if (result.tie_set.size() == 1) {
            const auto& chosen = result.final_state.codes[result.tie_set[0]];
            result.chosen_code_id = chosen.id;
            result.chosen_source = chosen.source;
        } else {
            const auto order = processing_order(result.final_state.stats, result.tie_set);
            result.probes = generate_probe_inputs(gateway, problem, config.probe_count, 3,
                                                  config.sampling);
            std::vector<const CodeCandidate*> tied;
            for (std::size_t pool_index : order)
                tied.push_back(&result.final_state.codes[pool_index]);
            result.signatures = compute_signatures(executor, tied, result.probes);
            auto selection = select_final(result.signatures);
            result.clusters = std::move(selection.clusters);
            result.chosen_code_id = selection.chosen_code_id;
            for (const auto& code : result.final_state.codes)
                if (code.id == result.chosen_code_id) result.chosen_source = code.source;
        }
    } catch (const std::exception& e) {
        result.failure = std::string("selection: ") + e.what();
        result.usage = usage_delta();
        return result;
    }

    result.usage = usage_delta();
    result.ok = true;
    return result;
}

namespace detail {

inline bool passes_all(Executor& executor, const std::string& source,
                       const std::vector<EvalTest>& tests) {
    for (const auto& t : tests) {
        const auto outcome = executor.run(source, t.input);
        if (!outcome.ok() || !executor.matches(outcome.text, normalize_output(t.output)))
            return false;
    }
    return true;
}

} // namespace detail

// Held-out evaluation. The only function in the pipeline allowed to read
// EvalSuite. The UT-accuracy oracle is the reference solution when present,
// else the eval pairs restricted to matching inputs.
inline Metrics compute_metrics(const CodePool& final_codes, const UtPool& final_uts,
                               const std::string& chosen_source, const Problem&,
                               const EvalSuite& eval, Executor& executor,
                               const CodePool* external_pool = nullptr) {
    if (!eval.has_tests()) throw ConfigError("compute_metrics requires eval_tests");
    Metrics metrics;

    int passing = 0;
    for (const auto& code : final_codes)
        if (detail::passes_all(executor, code.source, eval.tests)) ++passing;
    metrics.code_acc = static_cast<double>(passing) / static_cast<double>(final_codes.size());

    metrics.bon_acc = detail::passes_all(executor, chosen_source, eval.tests) ? 1.0 : 0.0;

    int with_oracle = 0, matching = 0;
    if (!eval.reference_solution.empty()) {
        for (const auto& ut : final_uts) {
            const auto oracle = executor.run(eval.reference_solution, ut.input);
            if (!oracle.ok()) continue;
            ++with_oracle;
            if (outputs_match(oracle.text, ut.expected_output)) ++matching;
        }
    } else {
        std::map<std::string, std::string> expected_by_input;
        for (const auto& t : eval.tests) expected_by_input[t.input] = normalize_output(t.output);
        for (const auto& ut : final_uts) {
            auto it = expected_by_input.find(ut.input);
            if (it == expected_by_input.end()) continue;
            ++with_oracle;
            if (outputs_match(it->second, ut.expected_output)) ++matching;
        }
    }
    if (with_oracle > 0)
        metrics.ut_acc = static_cast<double>(matching) / static_cast<double>(with_oracle);

    if (external_pool && !external_pool->empty()) {
        auto matrix = executor.build_matrix(*external_pool, final_uts);
        auto stats = compute_pass_stats(matrix);
        const std::size_t winner = bon_tie_set(stats).front(); // ties: lowest index
        metrics.signal_acc =
            detail::passes_all(executor, (*external_pool)[winner].source, eval.tests) ? 1.0 : 0.0;
    }

    std::set<std::string> unique_inputs;
    for (const auto& ut : final_uts) unique_inputs.insert(ut.input);
    metrics.ut_rank = static_cast<int>(unique_inputs.size());
    return metrics;
}

// ---------------------------------------------------------------------------
// Run logs

inline json run_log_json(const RunResult& result, const RunConfig& config) {
    json rounds = json::array();
    for (const auto& snap : result.rounds)
        rounds.push_back({{"round", snap.round},
                          {"codes", [&] {
                               json a = json::array();
                               for (const auto& c : snap.codes) a.push_back(to_json(c));
                               return a;
                           }()},
                          {"uts", [&] {
                               json a = json::array();
                               for (const auto& u : snap.uts) a.push_back(to_json(u));
                               return a;
                           }()},
                          {"matrix", to_json(snap.matrix)},
                          {"stats", to_json(snap.stats)}});

    json events = json::array();
    for (const auto& event : result.final_state.history) events.push_back(to_json(event));

    json hints = json::array();
    for (const auto& h : result.ideation.hints.hints) hints.push_back({{"id", h.id}, {"text", h.text}});
    json plans = json::array();
    for (const auto& p : result.ideation.plans.plans)
        plans.push_back({{"id", p.id}, {"text", p.text}, {"subset", p.subset}});
    json ideas = json::array();
    for (const auto& a : result.ideation.ideas.ideas)
        ideas.push_back({{"id", a.id}, {"text", a.text}, {"source_plan_id", a.source_plan_id}});

    json signatures = json::array();
    for (const auto& sig : result.signatures) signatures.push_back(to_json(sig));
    json clusters = json::array();
    for (const auto& cluster : result.clusters.clusters) {
        json members = json::array();
        for (std::size_t pos : cluster.members)
            members.push_back({{"code_id", result.signatures[pos].code_id},
                               {"s_ind", result.clusters.member_scores[pos]}});
        clusters.push_back(
            {{"members", members}, {"quarantine", cluster.quarantine}, {"s_cls", cluster.score}});
    }

    json tie = json::array();
    for (std::size_t index : result.tie_set) tie.push_back(result.final_state.codes[index].id);

    json j{{"schema_version", 1},
           {"problem_id", result.problem_id},
           {"ok", result.ok},
           {"config", to_json(config)},
           {"ideation", {{"hints", hints}, {"plans", plans}, {"attack_ideas", ideas}}},
           {"rounds", rounds},
           {"events", events},
           {"tie_set", tie},
           {"probes", result.probes.inputs},
           {"signatures", signatures},
           {"clusters", clusters},
           {"chosen_code_id", result.chosen_code_id},
           {"usage", to_json(result.usage)}};
    if (!result.failure.empty()) j["failure"] = result.failure;
    if (result.metrics) j["metrics"] = result.metrics->to_json();
    return j;
}

// One structured log per problem. Timestamp-free by design: identical runs
// produce byte-identical files.
inline std::filesystem::path emit_run_log(const RunResult& result, const RunConfig& config,
                                          const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    const auto path = out_dir / (result.problem_id + ".json");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EnvironmentError("cannot write run log: " + path.string());
    out << run_log_json(result, config).dump(2) << "\n";
    if (!out) throw EnvironmentError("error writing run log: " + path.string());
    return path;
}

// Run-level summary with aggregate metrics (mean of per-problem values over
// the problems where each metric is defined).
inline json run_summary_json(const std::vector<RunResult>& results, const RunConfig& config,
                             std::string generated_at = "") {
    double code_sum = 0, ut_sum = 0, bon_sum = 0, signal_sum = 0, rank_sum = 0;
    int code_n = 0, ut_n = 0, bon_n = 0, signal_n = 0, rank_n = 0;
    Usage usage;
    int ok_count = 0;
    json per_problem = json::array();
    for (const auto& r : results) {
        usage += r.usage;
        if (r.ok) ++ok_count;
        json entry{{"problem_id", r.problem_id}, {"ok", r.ok}, {"chosen_code_id", r.chosen_code_id}};
        if (r.metrics) {
            entry["metrics"] = r.metrics->to_json();
            if (r.metrics->code_acc) { code_sum += *r.metrics->code_acc; ++code_n; }
            if (r.metrics->ut_acc) { ut_sum += *r.metrics->ut_acc; ++ut_n; }
            if (r.metrics->bon_acc) { bon_sum += *r.metrics->bon_acc; ++bon_n; }
            if (r.metrics->signal_acc) { signal_sum += *r.metrics->signal_acc; ++signal_n; }
            rank_sum += r.metrics->ut_rank;
            ++rank_n;
        }
        per_problem.push_back(std::move(entry));
    }
    json aggregate;
    if (code_n) aggregate["code_acc"] = code_sum / code_n;
    if (ut_n) aggregate["ut_acc"] = ut_sum / ut_n;
    if (bon_n) aggregate["bon_acc"] = bon_sum / bon_n;
    if (signal_n) aggregate["signal_acc"] = signal_sum / signal_n;
    if (rank_n) aggregate["ut_rank"] = rank_sum / rank_n;

    json j{{"schema_version", 1},
           {"config", to_json(config)},
           {"problems", per_problem},
           {"problem_count", results.size()},
           {"ok_count", ok_count},
           {"aggregate_metrics", aggregate},
           {"usage", to_json(usage)}};
    if (!generated_at.empty()) j["generated_at"] = generated_at;
    return j;
}

inline std::filesystem::path emit_run_summary(const std::vector<RunResult>& results,
                                              const RunConfig& config,
                                              const std::filesystem::path& out_dir,
                                              std::string generated_at = "") {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    const auto path = out_dir / "run_summary.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EnvironmentError("cannot write run summary: " + path.string());
    out << run_summary_json(results, config, std::move(generated_at)).dump(2) << "\n";
    return path;
}

// Minimal view of a problem log, enough to recompute metrics or replay.
struct LoadedRunLog {
    std::string problem_id;
    bool ok = false;
    CodePool round0_codes, final_codes;
    UtPool round0_uts, final_uts;
    std::vector<Event> events;
    std::string chosen_code_id;
    std::string chosen_source;
};

inline LoadedRunLog load_run_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open run log: " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed run log: " + path.string());
    LoadedRunLog log;
    log.problem_id = j.at("problem_id").get<std::string>();
    log.ok = j.at("ok").get<bool>();
    const auto& rounds = j.at("rounds");
    if (rounds.empty()) throw ConfigError("run log has no round snapshots: " + path.string());
    for (const auto& c : rounds.front().at("codes")) log.round0_codes.push_back(code_from_json(c));
    for (const auto& u : rounds.front().at("uts")) log.round0_uts.push_back(ut_from_json(u));
    for (const auto& c : rounds.back().at("codes")) log.final_codes.push_back(code_from_json(c));
    for (const auto& u : rounds.back().at("uts")) log.final_uts.push_back(ut_from_json(u));
    for (const auto& e : j.at("events")) log.events.push_back(event_from_json(e));
    log.chosen_code_id = j.at("chosen_code_id").get<std::string>();
    for (const auto& code : log.final_codes)
        if (code.id == log.chosen_code_id) log.chosen_source = code.source;
    return log;
}

// Scripts on disk: JSON array of {"key"?, "template"?, "texts": [...]}.
inline std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open script file: " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_array())
        throw ConfigError("script file must be a JSON array: " + path.string());
    std::vector<ScriptEntry> entries;
    for (const auto& e : j) {
        ScriptEntry entry;
        entry.key = e.value("key", "");
        entry.template_id = e.value("template", "");
        entry.texts = e.at("texts").get<std::vector<std::string>>();
        entries.push_back(std::move(entry));
    }
    return entries;
}

} // namespace coev
