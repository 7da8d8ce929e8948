#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "coev/core.hpp"
#include "coev/gateway.hpp"
#include "coev/sandbox.hpp"

namespace coev {

struct ProbeSet {
    std::vector<std::string> inputs; // no expected outputs, ever
};

// Per-candidate vector of canonical outputs (or an execution error) on the
// probe inputs.
struct Signature {
    std::string code_id;
    std::vector<ExecutionOutcome> outcomes;

    bool all_err() const {
        for (const auto& o : outcomes)
            if (o.ok()) return false;
        return true;
    }
};

struct Cluster {
    std::vector<std::size_t> members; // positions in the processing order
    bool quarantine = false;          // holds all-ERR signatures only
    long long score = 0;              // S_cls
};

struct ClusterSet {
    std::vector<Cluster> clusters;        // in creation order
    std::vector<long long> member_scores; // S_ind per candidate position
};

inline ProbeSet generate_probe_inputs(Gateway& gateway, const Problem& problem, int probe_count,
                                      int dedup_retries = 3, const SamplingParams& sampling = {}) {
    if (probe_count < 1) throw ConfigError("probe_count must be >= 1");
    ProbeSet probes;
    std::set<std::string> seen;
    for (int slot = 0; slot < probe_count; ++slot) {
        std::string input;
        for (int attempt = 0; attempt <= dedup_retries; ++attempt) {
            ChatRequest request{"random_input", {{"statement", problem.statement}}, 1, sampling};
            input = gateway.complete_text(request);
            if (seen.insert(input).second) break;
            // budget exhausted: keep the duplicate
        }
        probes.inputs.push_back(std::move(input));
    }
    return probes;
}

inline Signature compute_signature(Executor& executor, const CodeCandidate& code,
                                   const ProbeSet& probes) {
    Signature sig;
    sig.code_id = code.id;
    sig.outcomes.reserve(probes.inputs.size());
    for (const auto& input : probes.inputs) sig.outcomes.push_back(executor.run(code.source, input));
    return sig;
}

// Signatures for a whole candidate list, fanning (candidate, probe) pairs out
// over the executor's worker budget. Output order matches the input order.
inline std::vector<Signature> compute_signatures(Executor& executor,
                                                 const std::vector<const CodeCandidate*>& codes,
                                                 const ProbeSet& probes) {
    std::vector<Signature> signatures(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        signatures[i].code_id = codes[i]->id;
        signatures[i].outcomes.resize(probes.inputs.size());
    }
    struct Job {
        std::size_t candidate, probe;
    };
    std::vector<Job> jobs;
    jobs.reserve(codes.size() * probes.inputs.size());
    for (std::size_t i = 0; i < codes.size(); ++i)
        for (std::size_t r = 0; r < probes.inputs.size(); ++r) jobs.push_back({i, r});

    std::atomic<std::size_t> next{0};
    std::exception_ptr fault;
    std::mutex fault_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= jobs.size()) return;
            try {
                signatures[jobs[k].candidate].outcomes[jobs[k].probe] =
                    executor.run(codes[jobs[k].candidate]->source, probes.inputs[jobs[k].probe]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fault_mutex);
                if (!fault) fault = std::current_exception();
                return;
            }
        }
    };
    const int n_workers = std::min<int>(executor.workers(), static_cast<int>(jobs.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (fault) std::rethrow_exception(fault);
    return signatures;
}

// Signatures agree wherever both produced a valid output; execution errors
// are missing evidence, not conflicts.
inline bool observed_compatible(const Signature& a, const Signature& b) {
    if (a.outcomes.size() != b.outcomes.size())
        throw ConfigError("observed_compatible: signature length mismatch");
    for (std::size_t r = 0; r < a.outcomes.size(); ++r) {
        if (!a.outcomes[r].ok() || !b.outcomes[r].ok()) continue;
        if (a.outcomes[r].text != b.outcomes[r].text) return false;
    }
    return true;
}

// Number of probe positions where both outputs are valid and equal.
inline int pair_agreement(const Signature& a, const Signature& b) {
    if (a.outcomes.size() != b.outcomes.size())
        throw ConfigError("pair_agreement: signature length mismatch");
    int agreements = 0;
    for (std::size_t r = 0; r < a.outcomes.size(); ++r)
        if (a.outcomes[r].ok() && b.outcomes[r].ok() && a.outcomes[r].text == b.outcomes[r].text)
            ++agreements;
    return agreements;
}

// Fixed deterministic processing order over the tie set: descending final
// pass count, ties by pool index.
inline std::vector<std::size_t> processing_order(const PassStats& stats,
                                                 const std::vector<std::size_t>& tie_set) {
    std::vector<std::size_t> order = tie_set;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (stats.code_counts[a] != stats.code_counts[b])
            return stats.code_counts[a] > stats.code_counts[b];
        return a < b;
    });
    return order;
}

// Greedy conservative clustering: a candidate joins the first existing
// cluster it is compatible with EVERY member of, else starts a new cluster.
// All-ERR signatures carry zero evidence and are quarantined in a dedicated
// cluster instead of vacuously joining (or absorbing) real ones.
inline ClusterSet build_clusters(const std::vector<Signature>& signatures) {
    ClusterSet set;
    set.member_scores.assign(signatures.size(), 0);
    std::size_t quarantine_index = signatures.size(); // sentinel: none yet
    for (std::size_t pos = 0; pos < signatures.size(); ++pos) {
        if (signatures[pos].all_err()) {
            if (quarantine_index == signatures.size()) {
                quarantine_index = set.clusters.size();
                set.clusters.push_back({{}, true, 0});
            }
            set.clusters[quarantine_index].members.push_back(pos);
            continue;
        }
        bool placed = false;
        for (auto& cluster : set.clusters) {
            if (cluster.quarantine) continue;
            bool compatible_with_all = true;
            for (std::size_t member : cluster.members) {
                if (!observed_compatible(signatures[pos], signatures[member])) {
                    compatible_with_all = false;
                    break;
                }
            }
            if (compatible_with_all) {
                cluster.members.push_back(pos);
                placed = true;
                break;
            }
        }
        if (!placed) set.clusters.push_back({{pos}, false, 0});
    }
    return set;
}

// S_ind(c) = sum of pair agreements with the other members of c's cluster;
// S_cls(G) = sum of S_ind over members (ordered pairs counted twice).
inline void score_clusters(ClusterSet& set, const std::vector<Signature>& signatures) {
    for (auto& cluster : set.clusters) {
        cluster.score = 0;
        for (std::size_t a : cluster.members) {
            long long ind = 0;
            for (std::size_t b : cluster.members) {
                if (a == b) continue;
                ind += pair_agreement(signatures[a], signatures[b]);
            }
            set.member_scores[a] = ind;
            cluster.score += ind;
        }
    }
}

struct SelectionResult {
    std::vector<Signature> signatures; // in processing order
    ClusterSet clusters;
    std::size_t chosen_cluster = 0;
    std::size_t chosen_position = 0; // into signatures / the supplied order
    std::string chosen_code_id;
};

// Most reliable cluster (argmax S_cls, ties to the earliest-created), then
// the most reliable candidate within it (argmax S_ind, ties to the earliest
// position in the processing order).
inline SelectionResult select_final(const std::vector<Signature>& signatures) {
    if (signatures.empty()) throw ConfigError("select_final: empty tie set");
    SelectionResult result;
    result.signatures = signatures;
    result.clusters = build_clusters(signatures);
    score_clusters(result.clusters, signatures);

    const auto& clusters = result.clusters.clusters;
    std::size_t best_cluster = 0;
    for (std::size_t m = 1; m < clusters.size(); ++m)
        if (clusters[m].score > clusters[best_cluster].score) best_cluster = m;

    const auto& members = clusters[best_cluster].members;
    std::size_t best_member = members.front();
    for (std::size_t member : members)
        if (result.clusters.member_scores[member] > result.clusters.member_scores[best_member])
            best_member = member;
    // members are in insertion order == processing order, so the first max wins;
    // positions in a cluster are increasing, making the tie rule "lowest order index".

    result.chosen_cluster = best_cluster;
    result.chosen_position = best_member;
    result.chosen_code_id = signatures[best_member].code_id;
    return result;
}

} // namespace coev
