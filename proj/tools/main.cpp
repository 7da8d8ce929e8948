// coev: co-evolve candidate programs and self-generated unit tests with
// execution-matrix pass-count signals, then select by output consensus.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "coev/gateway_http.hpp"
#include "coev/runner.hpp"
#include "coev/theory.hpp"

namespace fs = std::filesystem;
using namespace coev;

namespace {

struct ProviderOptions {
    std::string kind = "scripted"; // scripted | http
    std::string script_path;
    HttpProviderConfig http;
};

std::shared_ptr<Provider> make_provider(const ProviderOptions& opts) {
    if (opts.kind == "scripted") {
        if (opts.script_path.empty())
            throw ConfigError("scripted provider requires --script");
        return std::make_shared<ScriptedProvider>(load_script(opts.script_path));
    }
    if (opts.kind == "http") {
        if (opts.http.endpoint.empty())
            throw ConfigError("http provider requires --endpoint");
        return std::make_shared<HttpProvider>(opts.http);
    }
    throw ConfigError("unknown provider kind: " + opts.kind);
}

Gateway make_gateway(const RunConfig& config, const ProviderOptions& opts) {
    TemplateSet templates = TemplateSet::builtin();
    if (!config.templates_dir.empty()) templates.load_overrides(config.templates_dir);
    return Gateway(std::move(templates), make_provider(opts), RetryPolicy{}, config.max_inflight);
}

CodePool load_candidate_pool(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open candidate pool: " + path.string());
    CodePool pool;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) continue;
        json record = json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.contains("id") || !record.contains("source"))
            throw ConfigError("malformed candidate at line " + std::to_string(line_number));
        pool.push_back({record["id"].get<std::string>(), record["source"].get<std::string>(),
                        CodeProvenance::from_plan("external")});
    }
    if (pool.empty()) throw ConfigError("candidate pool is empty: " + path.string());
    return pool;
}

std::string now_utc() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EnvironmentError("cannot write: " + path);
    out << content;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> values;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stoi(item));
    return values;
}

void add_sampling_options(CLI::App* cmd, SamplingParams& sampling) {
    cmd->add_option("--temperature", sampling.temperature, "Sampling temperature");
    cmd->add_option("--top-p", sampling.top_p, "Nucleus sampling mass");
    cmd->add_option("--top-k", sampling.top_k, "Top-k cutoff (0 disables)");
    cmd->add_option("--max-tokens", sampling.max_tokens, "Completion token cap");
}

void add_limit_options(CLI::App* cmd, RunConfig& config) {
    cmd->add_option_function<long long>(
           "--timeout-ms",
           [&config](long long ms) { config.limits.wall_timeout = std::chrono::milliseconds(ms); },
           "Wall-clock timeout per execution (ms)")
        ->default_val(2000);
    cmd->add_option("--max-output-bytes", config.limits.max_output_bytes,
                    "Stdout cap per execution");
    cmd->add_option("--interpreter", config.limits.interpreter_cmd,
                    "Interpreter command with one {file} placeholder");
    cmd->add_option("--source-filename", config.limits.source_filename,
                    "Filename for candidate sources in the work dir");
    cmd->add_option_function<double>(
        "--float-tolerance",
        [&config](double tol) { config.match.float_tolerance = tol; },
        "Numeric output judging tolerance (default: exact text match)");
}

void add_provider_options(CLI::App* cmd, ProviderOptions& provider) {
    cmd->add_option("--provider", provider.kind, "Completion provider: scripted or http")
        ->check(CLI::IsMember({"scripted", "http"}));
    cmd->add_option("--script", provider.script_path, "Scripted-provider response file (JSON)");
    cmd->add_option("--endpoint", provider.http.endpoint,
                    "Chat-completion URL, e.g. https://host/v1/chat/completions");
    cmd->add_option("--model", provider.http.model, "Model name sent to the endpoint");
    cmd->add_option("--api-key-env", provider.http.api_key_env,
                    "Environment variable holding the API key");
    cmd->add_option("--system-prompt", provider.http.system_prompt, "Optional system message");
}

int cmd_run(const RunConfig& config_in, const ProviderOptions& provider_opts,
            const std::string& problems_path, const std::string& external_pool_path) {
    RunConfig config = config_in;
    config.validate();
    if (config.out_dir.empty()) throw ConfigError("run requires --out");

    auto problems = load_problems(problems_path);
    CodePool external_pool;
    if (!external_pool_path.empty()) external_pool = load_candidate_pool(external_pool_path);

    TemplateSet templates = TemplateSet::builtin();
    if (!config.templates_dir.empty()) templates.load_overrides(config.templates_dir);
    auto shared_provider = make_provider(provider_opts);

    int parallelism = std::max(1, config.problem_parallelism);
    if (parallelism > 1 && shared_provider->deterministic()) {
        std::fprintf(stderr,
                     "[coev] scripted provider: forcing --problem-parallelism 1 to keep the "
                     "script cursor deterministic\n");
        parallelism = 1;
    }
    parallelism = std::min<int>(parallelism, static_cast<int>(problems.problems.size()));

    std::vector<RunResult> results(problems.problems.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        // One executor per worker; one gateway per problem so per-problem
        // usage counters never interleave.
        Executor executor(config.limits, "", config.executor_workers);
        executor.set_match_policy(config.match);
        for (;;) {
            const std::size_t index = next.fetch_add(1);
            if (index >= problems.problems.size()) return;
            const Problem& problem = problems.problems[index];
            {
                std::lock_guard<std::mutex> lock(log_mutex);
                std::fprintf(stderr, "[coev] running %s\n", problem.id.c_str());
            }
            Gateway gateway(templates, shared_provider, RetryPolicy{}, config.max_inflight);
            RunResult result = run_pipeline(problem, config, gateway, executor);
            auto eval_it = problems.eval.find(problem.id);
            if (result.ok && eval_it != problems.eval.end() && eval_it->second.has_tests()) {
                result.metrics = compute_metrics(result.final_state.codes, result.final_state.uts,
                                                 result.chosen_source, problem, eval_it->second,
                                                 executor,
                                                 external_pool.empty() ? nullptr : &external_pool);
            }
            emit_run_log(result, config, config.out_dir);
            {
                std::lock_guard<std::mutex> lock(log_mutex);
                std::fprintf(stderr, "[coev] %s: %s chosen=%s\n", problem.id.c_str(),
                             result.ok ? "ok" : ("FAILED (" + result.failure + ")").c_str(),
                             result.chosen_code_id.empty() ? "-" : result.chosen_code_id.c_str());
            }
            results[index] = std::move(result);
        }
    };
    if (parallelism <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < parallelism; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    emit_run_summary(results, config, config.out_dir, now_utc());
    const auto ok_count = static_cast<std::size_t>(
        std::count_if(results.begin(), results.end(), [](const auto& r) { return r.ok; }));
    std::fprintf(stderr, "[coev] %zu/%zu problems completed; logs in %s\n", ok_count,
                 results.size(), config.out_dir.c_str());
    return ok_count == results.size() ? 0 : 1;
}

int cmd_theory_posterior(int m, double q1, double q0, double prior, long long trials,
                         std::uint64_t seed, const std::string& csv_path) {
    BinomialChannel ch{m, q1, q0, prior};
    auto sim = simulate_posterior(ch, trials, seed);
    std::ostringstream csv;
    csv << "s,closed_posterior,empirical_posterior,samples\n";
    for (int s = 0; s <= m; ++s) {
        const auto point = posterior_odds(s, ch);
        csv << s << "," << point.posterior << ",";
        if (auto emp = sim.empirical(s)) csv << *emp;
        csv << "," << sim.total[s] << "\n";
    }
    write_text(csv_path, csv.str());
    return 0;
}

int cmd_theory_thresholds(double eps1, double eps2, double scan_step,
                          const std::string& csv_path) {
    auto t = advantage_thresholds(eps1, eps2);
    std::ostringstream csv;
    csv << "# rho_c_star=" << t.rho_c_star << " rho_t_star=" << t.rho_t_star << "\n";
    csv << "rho,delta_u,delta_c\n";
    for (double rho = 0.0; rho <= 1.0 + 1e-9; rho += scan_step)
        csv << rho << "," << t.delta_u(rho) << "," << t.delta_c(rho) << "\n";
    write_text(csv_path, csv.str());
    return 0;
}

int cmd_theory_fixed_ratio(double q1, double q0, double eta, const std::string& m_list,
                           double prior, const std::string& csv_path) {
    auto fr = fixed_ratio_rate(eta, q1, q0);
    std::ostringstream csv;
    csv << "# D(eta)=" << fr.rate;
    if (fr.eta_star) csv << " eta_star=" << *fr.eta_star;
    csv << "\n";
    csv << "m,s,log_odds,posterior\n";
    for (int m : parse_int_list(m_list)) {
        const int s = static_cast<int>(std::ceil(eta * m));
        auto point = posterior_odds(std::min(s, m), BinomialChannel{m, q1, q0, prior});
        csv << m << "," << s << "," << point.log_odds << "," << point.posterior << "\n";
    }
    write_text(csv_path, csv.str());
    return 0;
}

int cmd_theory_separation(double alpha, double beta, int alphabet, int n, long long trials,
                          std::uint64_t seed, const std::string& r_list,
                          const std::string& csv_path) {
    std::ostringstream csv;
    csv << "R,largest_cluster_correct_fraction\n";
    for (int r : parse_int_list(r_list)) {
        SignatureModelParams params{alpha, beta, r, n, alphabet};
        csv << r << "," << simulate_signature_separation(params, trials, seed) << "\n";
    }
    write_text(csv_path, csv.str());
    return 0;
}

int cmd_theory_round0(double rho_c, double rho_t, double eps1, double eps2, int n_codes, int n_uts,
                      long long trials, std::uint64_t seed, const std::string& csv_path) {
    GenerativeParams params{rho_c, rho_t, eps1, eps2};
    auto sim = simulate_round0_matrix(params, n_codes, n_uts, trials, seed);
    std::ostringstream csv;
    auto emit = [&csv](const char* name, const std::vector<long long>& hist) {
        csv << name;
        for (long long v : hist) csv << "," << v;
        csv << "\n";
    };
    csv << "histogram,counts_by_pass_count...\n";
    emit("ut_pass_given_correct", sim.ut_hist_correct);
    emit("ut_pass_given_wrong", sim.ut_hist_wrong);
    emit("code_pass_given_correct", sim.code_hist_correct);
    emit("code_pass_given_wrong", sim.code_hist_wrong);
    auto t = advantage_thresholds(eps1, eps2);
    csv << "# mean gap identities: Nc*delta_u=" << n_codes * t.delta_u(rho_c)
        << " Nt*delta_c=" << n_uts * t.delta_c(rho_t) << "\n";
    write_text(csv_path, csv.str());
    return 0;
}

// Consensus-only reranking of an externally supplied candidate pool.
int cmd_select(const std::string& candidates_path, const std::string& probes_path,
               const std::string& problems_path, const std::string& problem_id, int probe_count,
               const RunConfig& config, const ProviderOptions& provider_opts,
               const std::string& out_path) {
    CodePool pool = load_candidate_pool(candidates_path);
    ProbeSet probes;
    if (!probes_path.empty()) {
        std::ifstream in(probes_path, std::ios::binary);
        if (!in) throw ConfigError("cannot open probes file: " + probes_path);
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_array())
            throw ConfigError("probes file must be a JSON array of input strings");
        probes.inputs = j.get<std::vector<std::string>>();
    } else {
        if (problems_path.empty())
            throw ConfigError("select needs --probes-file, or --problems to generate probes");
        auto problems = load_problems(problems_path);
        const Problem* problem = nullptr;
        for (const auto& p : problems.problems)
            if (problem_id.empty() || p.id == problem_id) {
                problem = &p;
                break;
            }
        if (!problem) throw ConfigError("problem not found: " + problem_id);
        Gateway gateway = make_gateway(config, provider_opts);
        probes = generate_probe_inputs(gateway, *problem, probe_count, 3, config.sampling);
    }

    Executor executor(config.limits, "", config.executor_workers);
    executor.set_match_policy(config.match);
    std::vector<const CodeCandidate*> candidates;
    for (const auto& code : pool) candidates.push_back(&code);
    auto signatures = compute_signatures(executor, candidates, probes);
    auto selection = select_final(signatures);

    json clusters = json::array();
    for (const auto& cluster : selection.clusters.clusters) {
        json members = json::array();
        for (std::size_t pos : cluster.members)
            members.push_back({{"code_id", signatures[pos].code_id},
                               {"s_ind", selection.clusters.member_scores[pos]}});
        clusters.push_back(
            {{"members", members}, {"quarantine", cluster.quarantine}, {"s_cls", cluster.score}});
    }
    json out{{"chosen_code_id", selection.chosen_code_id},
             {"probes", probes.inputs},
             {"clusters", clusters}};
    write_text(out_path, out.dump(2) + "\n");
    return 0;
}

// Recompute metrics from persisted run logs.
int cmd_metrics(const std::string& log_dir, const std::string& problems_path,
                const std::string& external_pool_path, const RunConfig& config,
                const std::string& out_path) {
    auto problems = load_problems(problems_path);
    CodePool external_pool;
    if (!external_pool_path.empty()) external_pool = load_candidate_pool(external_pool_path);
    Executor executor(config.limits, "", config.executor_workers);
    executor.set_match_policy(config.match);

    json out = json::array();
    for (const auto& problem : problems.problems) {
        const auto path = fs::path(log_dir) / (problem.id + ".json");
        if (!fs::exists(path)) continue;
        auto log = load_run_log(path);
        auto eval_it = problems.eval.find(problem.id);
        json entry{{"problem_id", problem.id}, {"ok", log.ok}};
        if (log.ok && eval_it != problems.eval.end() && eval_it->second.has_tests()) {
            auto metrics = compute_metrics(log.final_codes, log.final_uts, log.chosen_source,
                                           problem, eval_it->second, executor,
                                           external_pool.empty() ? nullptr : &external_pool);
            entry["metrics"] = metrics.to_json();
        }
        out.push_back(std::move(entry));
    }
    write_text(out_path, out.dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"co-evolving code and unit-test pools with execution-matrix signals"};
    app.require_subcommand(1);

    RunConfig config;
    ProviderOptions provider;
    std::string problems_path, external_pool_path;

    // --- run ---------------------------------------------------------------
    auto* run = app.add_subcommand("run", "Run the full pipeline over a problem file");
    run->add_option("--problems", problems_path, "Line-delimited JSON problem file")->required();
    run->add_option("--out", config.out_dir, "Output directory for run logs")->required();
    run->add_option("--n-codes", config.n_codes, "Code pool size");
    run->add_option("--n-uts", config.n_uts, "Unit-test pool size (even)");
    run->add_option("--t-max", config.t_max, "Self-play iteration budget");
    run->add_option("--probes", config.probe_count, "Consensus probe count");
    run->add_option("--n-hints", config.ideation.n_hints, "Hints sampled per problem");
    run->add_option("--plans-per-subset", config.ideation.plans_per_subset, "Plans per hint subset");
    run->add_option("--ideas-per-plan", config.ideation.ideas_per_plan, "Attack ideas per plan");
    run->add_option("--k-samples", config.pool.k_samples, "Output samples per proposed UT input");
    run->add_option("--agree-threshold", config.pool.agree_threshold,
                    "Agreeing samples required to keep a UT");
    run->add_option("--retry-budget", config.pool.retry_budget,
                    "Proposal attempts per source per UT slot");
    run->add_option("--seed", config.seed, "Master seed");
    run->add_option("--max-inflight", config.max_inflight, "Max concurrent provider calls");
    run->add_option("--workers", config.executor_workers, "Executor worker threads (0 = auto)");
    run->add_option("--problem-parallelism", config.problem_parallelism,
                    "Problems run concurrently (scripted provider forces 1)");
    run->add_option("--templates-dir", config.templates_dir, "Prompt template overrides");
    run->add_option("--external-pool", external_pool_path,
                    "External candidate pool (JSONL) for the signal metric");
    add_sampling_options(run, config.sampling);
    add_limit_options(run, config);
    add_provider_options(run, provider);

    // --- theory ------------------------------------------------------------
    auto* theory = app.add_subcommand("theory", "Closed-form and Monte Carlo model checks");
    theory->require_subcommand(1);
    int m = 16;
    double q1 = 0.8, q0 = 0.3, prior = 0.5;
    long long trials = 200000;
    std::uint64_t seed = 1;
    std::string csv_path = "-";

    auto* posterior = theory->add_subcommand("posterior", "Support-count posterior, closed form vs Monte Carlo");
    posterior->add_option("--m", m, "Evaluator count");
    posterior->add_option("--q1", q1, "Support probability for a correct object");
    posterior->add_option("--q0", q0, "Support probability for a wrong object");
    posterior->add_option("--prior", prior, "Prior probability of correctness");
    posterior->add_option("--trials", trials, "Monte Carlo trials");
    posterior->add_option("--seed", seed, "RNG seed");
    posterior->add_option("--csv", csv_path, "Output path ('-' = stdout)");

    double eps1 = 0.2, eps2 = 0.1, scan_step = 0.01;
    auto* thresholds = theory->add_subcommand("thresholds", "Advantage thresholds and sign scan");
    thresholds->add_option("--eps1", eps1, "Wrong-code pass rate on correct tests");
    thresholds->add_option("--eps2", eps2, "Wrong-code pass rate on wrong tests");
    thresholds->add_option("--scan-step", scan_step, "Prior scan step");
    thresholds->add_option("--csv", csv_path, "Output path ('-' = stdout)");

    double eta = 0.8;
    std::string m_list = "8,16,32,64";
    auto* fixed = theory->add_subcommand("fixed-ratio", "Posterior at a fixed support ratio");
    fixed->add_option("--q1", q1, "Support probability for a correct object");
    fixed->add_option("--q0", q0, "Support probability for a wrong object");
    fixed->add_option("--eta", eta, "Fixed support ratio");
    fixed->add_option("--prior", prior, "Prior probability of correctness");
    fixed->add_option("--m-list", m_list, "Comma-separated evaluator counts");
    fixed->add_option("--csv", csv_path, "Output path ('-' = stdout)");

    double alpha = 0.3, beta = 0.5;
    int alphabet = 4, n_candidates = 200;
    std::string r_list = "1,2,4,8";
    long long sep_trials = 1000;
    auto* separation = theory->add_subcommand("separation", "Signature-separation Monte Carlo");
    separation->add_option("--alpha", alpha, "P(candidate correct)");
    separation->add_option("--beta", beta, "Per-coordinate wrong-output probability bound");
    separation->add_option("--alphabet", alphabet, "Output alphabet size");
    separation->add_option("--n", n_candidates, "Candidates per trial");
    separation->add_option("--trials", sep_trials, "Trials per probe count");
    separation->add_option("--seed", seed, "RNG seed");
    separation->add_option("--r-list", r_list, "Comma-separated probe counts");
    separation->add_option("--csv", csv_path, "Output path ('-' = stdout)");

    double rho_c = 0.3, rho_t = 0.3;
    int n_c = 16, n_t = 16;
    long long r0_trials = 2000;
    auto* round0 = theory->add_subcommand("round0", "Round-0 pass-count histograms");
    round0->add_option("--rho-c", rho_c, "Correct-code prior");
    round0->add_option("--rho-t", rho_t, "Correct-test prior");
    round0->add_option("--eps1", eps1, "Wrong-code pass rate on correct tests");
    round0->add_option("--eps2", eps2, "Wrong-code pass rate on wrong tests");
    round0->add_option("--n-c", n_c, "Code pool size");
    round0->add_option("--n-t", n_t, "Test pool size");
    round0->add_option("--trials", r0_trials, "Sampled matrices");
    round0->add_option("--seed", seed, "RNG seed");
    round0->add_option("--csv", csv_path, "Output path ('-' = stdout)");

    // --- select ------------------------------------------------------------
    std::string candidates_path, probes_path, problem_id, out_path;
    auto* select = app.add_subcommand("select",
                                      "Consensus-only selection over an external candidate pool");
    select->add_option("--candidates", candidates_path, "Candidate pool (JSONL: id, source)")
        ->required();
    select->add_option("--probes-file", probes_path, "Probe inputs (JSON array of strings)");
    select->add_option("--problems", problems_path, "Problem file (to generate probes)");
    select->add_option("--problem-id", problem_id, "Problem id within --problems");
    select->add_option("--probes", config.probe_count, "Probe count when generating");
    select->add_option("--out", out_path, "Output path ('-' = stdout)");
    select->add_option("--workers", config.executor_workers, "Executor worker threads");
    add_limit_options(select, config);
    add_provider_options(select, provider);
    add_sampling_options(select, config.sampling);

    // --- metrics -----------------------------------------------------------
    std::string log_dir;
    auto* metrics = app.add_subcommand("metrics", "Recompute metrics from run logs");
    metrics->add_option("--log", log_dir, "Run log directory")->required();
    metrics->add_option("--problems", problems_path, "Problem file with eval data")->required();
    metrics->add_option("--external-pool", external_pool_path, "External pool for the signal metric");
    metrics->add_option("--out", out_path, "Output path ('-' = stdout)");
    metrics->add_option("--workers", config.executor_workers, "Executor worker threads");
    add_limit_options(metrics, config);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config, provider, problems_path, external_pool_path);
        if (posterior->parsed())
            return cmd_theory_posterior(m, q1, q0, prior, trials, seed, csv_path);
        if (thresholds->parsed()) return cmd_theory_thresholds(eps1, eps2, scan_step, csv_path);
        if (fixed->parsed()) return cmd_theory_fixed_ratio(q1, q0, eta, m_list, prior, csv_path);
        if (separation->parsed())
            return cmd_theory_separation(alpha, beta, alphabet, n_candidates, sep_trials, seed,
                                         r_list, csv_path);
        if (round0->parsed())
            return cmd_theory_round0(rho_c, rho_t, eps1, eps2, n_c, n_t, r0_trials, seed, csv_path);
        if (select->parsed())
            return cmd_select(candidates_path, probes_path, problems_path, problem_id,
                              config.probe_count, config, provider, out_path);
        if (metrics->parsed())
            return cmd_metrics(log_dir, problems_path, external_pool_path, config, out_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
