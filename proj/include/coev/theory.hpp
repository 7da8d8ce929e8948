#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "coev/errors.hpp"
#include "coev/rng.hpp"

namespace coev {

// Generative model of a round-0 execution matrix: a correct code always
// passes a correct test and always fails a wrong-output test; an incorrect
// code passes a correct test w.p. eps1 and a wrong-output test w.p. eps2.
struct GenerativeParams {
    double rho_c; // prior that a sampled candidate is correct
    double rho_t; // prior that a sampled test is correct
    double eps1;
    double eps2;

    void validate() const {
        for (double v : {rho_c, rho_t, eps1, eps2})
            if (!(v >= 0.0 && v <= 1.0))
                throw ConfigError("GenerativeParams fields must lie in [0,1]");
    }
};

struct MarginalPassProbs {
    double theta1; // P(pass | test correct)
    double theta0; // P(pass | test wrong)
    double phi1;   // P(pass | code correct)
    double phi0;   // P(pass | code wrong)
};

inline MarginalPassProbs marginal_pass_probs(const GenerativeParams& p) {
    p.validate();
    return {
        p.rho_c + (1.0 - p.rho_c) * p.eps1,
        (1.0 - p.rho_c) * p.eps2,
        p.rho_t,
        p.eps1 * p.rho_t + p.eps2 * (1.0 - p.rho_t),
    };
}

// Attraction advantages and the priors at which they turn positive.
struct AdvantageThresholds {
    double eps1, eps2;
    double rho_c_star; // Delta_U > 0  iff  rho_c > rho_c_star
    double rho_t_star; // Delta_C > 0  iff  rho_t > rho_t_star

    double delta_u(double rho_c) const { return rho_c + (1.0 - rho_c) * (eps1 - eps2); }
    double delta_c(double rho_t) const { return rho_t * (1.0 - eps1) - eps2 * (1.0 - rho_t); }
};

inline AdvantageThresholds advantage_thresholds(double eps1, double eps2) {
    if (!(eps1 >= 0.0 && eps1 <= 1.0 && eps2 >= 0.0 && eps2 <= 1.0))
        throw ConfigError("advantage_thresholds: eps must lie in [0,1]");
    if (1.0 + eps2 - eps1 == 0.0 || 1.0 - eps1 + eps2 == 0.0)
        throw ConfigError("advantage_thresholds: degenerate eps pair");
    return {eps1, eps2, (eps2 - eps1) / (1.0 + eps2 - eps1), eps2 / (1.0 - eps1 + eps2)};
}

// Support counts: S | correct ~ Binomial(m, q1), S | wrong ~ Binomial(m, q0).
struct BinomialChannel {
    int m;
    double q1;
    double q0;
    double prior;

    void validate() const {
        if (m < 1) throw ConfigError("BinomialChannel: m must be >= 1");
        if (!(q1 > 0.0 && q1 < 1.0 && q0 > 0.0 && q0 < 1.0))
            throw ConfigError("BinomialChannel: q must lie strictly inside (0,1)");
        if (!(prior > 0.0 && prior < 1.0))
            throw ConfigError("BinomialChannel: prior must lie strictly inside (0,1)");
    }

    double log_likelihood_ratio() const { return std::log(q1 * (1.0 - q0) / (q0 * (1.0 - q1))); }
};

struct PosteriorPoint {
    double log_odds;
    double odds;
    double posterior;
};

// log OR(s) = log(prior odds) + m*log((1-q1)/(1-q0)) + s*log r, all in log
// space; the posterior is the stable sigmoid of the log odds.
inline PosteriorPoint posterior_odds(int support, const BinomialChannel& ch) {
    ch.validate();
    if (support < 0 || support > ch.m)
        throw ConfigError("posterior_odds: support count outside [0, m]");
    const double log_odds = std::log(ch.prior / (1.0 - ch.prior)) +
                            ch.m * std::log((1.0 - ch.q1) / (1.0 - ch.q0)) +
                            support * ch.log_likelihood_ratio();
    const double posterior =
        log_odds >= 0.0 ? 1.0 / (1.0 + std::exp(-log_odds))
                        : std::exp(log_odds) / (1.0 + std::exp(log_odds));
    return {log_odds, std::exp(log_odds), posterior};
}

struct FixedRatioRate {
    double rate;
    std::optional<double> eta_star;
};

// D(eta): per-evaluator log-odds growth at support ratio eta. eta_star is the
// unique zero of D, strictly between q0 and q1; undefined when q1 == q0
// (D is identically zero there).
inline FixedRatioRate fixed_ratio_rate(double eta, double q1, double q0) {
    if (!(q1 > 0.0 && q1 < 1.0 && q0 > 0.0 && q0 < 1.0))
        throw ConfigError("fixed_ratio_rate: q must lie strictly inside (0,1)");
    const double rate = eta * std::log(q1 / q0) + (1.0 - eta) * std::log((1.0 - q1) / (1.0 - q0));
    if (q1 == q0) return {rate, std::nullopt};
    const double log_r = std::log(q1 * (1.0 - q0) / (q0 * (1.0 - q1)));
    return {rate, std::log((1.0 - q0) / (1.0 - q1)) / log_r};
}

namespace detail {

// Fixed chunking so results are invariant to worker count: chunk t always
// draws from substream derive_seed(seed, "chunk-<t>") and reduction runs in
// chunk order.
template <typename ChunkResult, typename Body>
std::vector<ChunkResult> run_chunked(long long trials, std::uint64_t seed, int workers,
                                     int chunk_count, Body body) {
    if (trials < 1) throw ConfigError("simulation needs at least one trial");
    chunk_count = static_cast<int>(std::min<long long>(chunk_count, trials));
    std::vector<ChunkResult> results(chunk_count);
    std::vector<long long> sizes(chunk_count, trials / chunk_count);
    for (long long r = 0; r < trials % chunk_count; ++r) ++sizes[static_cast<std::size_t>(r)];

    const int n_workers = workers > 0
        ? workers
        : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::atomic<int> next{0};
    auto run_worker = [&] {
        for (;;) {
            const int t = next.fetch_add(1);
            if (t >= chunk_count) return;
            Rng rng(derive_seed(seed, "chunk-" + std::to_string(t)));
            body(results[t], sizes[t], rng);
        }
    };
    if (n_workers <= 1 || chunk_count <= 1) {
        run_worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < std::min(n_workers, chunk_count); ++w) pool.emplace_back(run_worker);
        for (auto& t : pool) t.join();
    }
    return results;
}

inline int binomial_draw(Rng& rng, int m, double q) {
    int s = 0;
    for (int i = 0; i < m; ++i) s += rng.bernoulli(q) ? 1 : 0;
    return s;
}

} // namespace detail

struct PosteriorSimResult {
    int m = 0;
    std::vector<long long> total;   // samples per support count
    std::vector<long long> correct; // correct-hypothesis samples per support count

    std::optional<double> empirical(int s) const {
        if (total[s] == 0) return std::nullopt;
        return static_cast<double>(correct[s]) / static_cast<double>(total[s]);
    }
};

inline PosteriorSimResult simulate_posterior(const BinomialChannel& ch, long long trials,
                                             std::uint64_t seed, int workers = 0) {
    ch.validate();
    struct Chunk {
        std::vector<long long> total, correct;
    };
    auto chunks = detail::run_chunked<Chunk>(
        trials, seed, workers, 32, [&](Chunk& chunk, long long n, Rng& rng) {
            chunk.total.assign(ch.m + 1, 0);
            chunk.correct.assign(ch.m + 1, 0);
            for (long long t = 0; t < n; ++t) {
                const bool correct = rng.bernoulli(ch.prior);
                const int s = detail::binomial_draw(rng, ch.m, correct ? ch.q1 : ch.q0);
                ++chunk.total[s];
                if (correct) ++chunk.correct[s];
            }
        });
    PosteriorSimResult result;
    result.m = ch.m;
    result.total.assign(ch.m + 1, 0);
    result.correct.assign(ch.m + 1, 0);
    for (const auto& chunk : chunks)
        for (int s = 0; s <= ch.m; ++s) {
            result.total[s] += chunk.total[s];
            result.correct[s] += chunk.correct[s];
        }
    return result;
}

// Worst-case wrong-code output model for the signature-separation claim:
// every wrong code puts mass beta on one shared wrong symbol and spreads the
// rest uniformly over the remaining alphabet (the correct symbol included),
// so the per-coordinate max-probability bound holds with equality. beta = 0
// means collisions are impossible (an effectively infinite alphabet).
struct SignatureModelParams {
    double alpha; // P(candidate is correct)
    double beta;  // per-coordinate max probability of any fixed wrong output
    int probe_count;
    int candidate_count;
    int value_alphabet_size;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0))
            throw ConfigError("SignatureModelParams: alpha must lie in (0,1]");
        if (!(beta >= 0.0 && beta < 1.0))
            throw ConfigError("SignatureModelParams: beta must lie in [0,1)");
        if (probe_count < 1 || candidate_count < 1)
            throw ConfigError("SignatureModelParams: counts must be >= 1");
        if (beta > 0.0) {
            if (value_alphabet_size < 2)
                throw ConfigError("SignatureModelParams: alphabet too small");
            if ((1.0 - beta) / (value_alphabet_size - 1) > beta + 1e-12)
                throw ConfigError(
                    "SignatureModelParams: off-mode mass would exceed beta; grow the alphabet");
        }
    }
};

// Fraction of trials in which the strictly largest signature cluster is the
// correct signature.
inline double simulate_signature_separation(const SignatureModelParams& params, long long trials,
                                            std::uint64_t seed, int workers = 0) {
    params.validate();
    struct Chunk {
        long long successes = 0;
        long long trials = 0;
    };
    auto chunks = detail::run_chunked<Chunk>(
        trials, seed, workers, 32, [&](Chunk& chunk, long long n, Rng& rng) {
            // Symbol 0 is the correct output, symbol 1 the shared wrong mode.
            std::vector<int> sig(params.probe_count);
            std::unordered_map<std::string, int> wrong_counts;
            std::string key;
            for (long long t = 0; t < n; ++t) {
                wrong_counts.clear();
                int correct_count = 0;
                long long unique_tag = 0;
                for (int i = 0; i < params.candidate_count; ++i) {
                    if (rng.bernoulli(params.alpha)) {
                        ++correct_count;
                        continue;
                    }
                    bool hits_correct_everywhere = true;
                    key.clear();
                    for (int r = 0; r < params.probe_count; ++r) {
                        int symbol;
                        if (params.beta == 0.0) {
                            symbol = static_cast<int>(2 + (unique_tag++)); // never collides
                        } else if (rng.bernoulli(params.beta)) {
                            symbol = 1;
                        } else {
                            // uniform over the alphabet minus the mode symbol
                            const int k = static_cast<int>(rng.below(
                                static_cast<std::uint64_t>(params.value_alphabet_size - 1)));
                            symbol = k == 0 ? 0 : k + 1;
                        }
                        sig[r] = symbol;
                        if (symbol != 0) hits_correct_everywhere = false;
                        key += std::to_string(symbol);
                        key.push_back(',');
                    }
                    if (hits_correct_everywhere)
                        ++correct_count; // indistinguishable from the true signature
                    else
                        ++wrong_counts[key];
                }
                int largest_wrong = 0;
                for (const auto& [k, c] : wrong_counts) largest_wrong = std::max(largest_wrong, c);
                if (correct_count > largest_wrong) ++chunk.successes;
                ++chunk.trials;
            }
        });
    long long successes = 0, total = 0;
    for (const auto& chunk : chunks) {
        successes += chunk.successes;
        total += chunk.trials;
    }
    return static_cast<double>(successes) / static_cast<double>(total);
}

struct Round0SimResult {
    std::vector<long long> ut_hist_correct, ut_hist_wrong;     // indexed by p_ut = 0..N_c
    std::vector<long long> code_hist_correct, code_hist_wrong; // indexed by p_code = 0..N_t
    long long trials = 0;

    static std::optional<double> mean(const std::vector<long long>& hist) {
        long long n = 0, weighted = 0;
        for (std::size_t v = 0; v < hist.size(); ++v) {
            n += hist[v];
            weighted += hist[v] * static_cast<long long>(v);
        }
        if (n == 0) return std::nullopt;
        return static_cast<double>(weighted) / static_cast<double>(n);
    }
};

// Sample whole round-0 matrices under the generative model and histogram the
// pass counts conditioned on correctness.
inline Round0SimResult simulate_round0_matrix(const GenerativeParams& params, int n_codes,
                                              int n_uts, long long trials, std::uint64_t seed,
                                              int workers = 0) {
    params.validate();
    if (n_codes < 1 || n_uts < 1) throw ConfigError("simulate_round0_matrix: pool sizes >= 1");
    struct Chunk {
        std::vector<long long> uc, uw, cc, cw;
    };
    auto chunks = detail::run_chunked<Chunk>(
        trials, seed, workers, 32, [&](Chunk& chunk, long long n, Rng& rng) {
            chunk.uc.assign(n_codes + 1, 0);
            chunk.uw.assign(n_codes + 1, 0);
            chunk.cc.assign(n_uts + 1, 0);
            chunk.cw.assign(n_uts + 1, 0);
            std::vector<bool> code_ok(n_codes), ut_ok(n_uts);
            std::vector<int> ut_pass(n_uts), code_pass(n_codes);
            for (long long t = 0; t < n; ++t) {
                for (int i = 0; i < n_codes; ++i) code_ok[i] = rng.bernoulli(params.rho_c);
                for (int j = 0; j < n_uts; ++j) ut_ok[j] = rng.bernoulli(params.rho_t);
                std::fill(ut_pass.begin(), ut_pass.end(), 0);
                std::fill(code_pass.begin(), code_pass.end(), 0);
                for (int i = 0; i < n_codes; ++i) {
                    for (int j = 0; j < n_uts; ++j) {
                        bool pass;
                        if (code_ok[i])
                            pass = ut_ok[j]; // correct code: passes exactly the correct tests
                        else
                            pass = rng.bernoulli(ut_ok[j] ? params.eps1 : params.eps2);
                        if (pass) {
                            ++ut_pass[j];
                            ++code_pass[i];
                        }
                    }
                }
                for (int j = 0; j < n_uts; ++j)
                    ++(ut_ok[j] ? chunk.uc : chunk.uw)[ut_pass[j]];
                for (int i = 0; i < n_codes; ++i)
                    ++(code_ok[i] ? chunk.cc : chunk.cw)[code_pass[i]];
            }
        });
    Round0SimResult result;
    result.ut_hist_correct.assign(n_codes + 1, 0);
    result.ut_hist_wrong.assign(n_codes + 1, 0);
    result.code_hist_correct.assign(n_uts + 1, 0);
    result.code_hist_wrong.assign(n_uts + 1, 0);
    result.trials = trials;
    for (const auto& chunk : chunks) {
        for (int v = 0; v <= n_codes; ++v) {
            result.ut_hist_correct[v] += chunk.uc[v];
            result.ut_hist_wrong[v] += chunk.uw[v];
        }
        for (int v = 0; v <= n_uts; ++v) {
            result.code_hist_correct[v] += chunk.cc[v];
            result.code_hist_wrong[v] += chunk.cw[v];
        }
    }
    return result;
}

} // namespace coev
