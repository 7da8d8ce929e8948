#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "coev/core.hpp"
#include "coev/errors.hpp"
#include "coev/rng.hpp"
#include "coev/text.hpp"

namespace coev {

struct ExecLimits {
    std::chrono::milliseconds wall_timeout{2000};
    std::size_t max_output_bytes = 1 << 20;
    // Whitespace-split command line; exactly one "{file}" token is replaced
    // with the path of the candidate source. No shell is involved.
    std::string interpreter_cmd = "python3 {file}";
    std::string source_filename = "main.py";
};

struct ExecutionOutcome {
    enum class Kind { Output, Err };
    enum class ErrReason { Timeout, NonzeroExit, LaunchFailure, OutputOverflow };

    Kind kind = Kind::Err;
    std::string text;                            // canonical, Kind::Output only
    ErrReason reason = ErrReason::NonzeroExit;   // Kind::Err only

    static ExecutionOutcome output(std::string canonical) {
        return {Kind::Output, std::move(canonical), ErrReason::NonzeroExit};
    }
    static ExecutionOutcome err(ErrReason reason) { return {Kind::Err, {}, reason}; }

    bool ok() const { return kind == Kind::Output; }

    bool operator==(const ExecutionOutcome&) const = default;
};

inline const char* to_string(ExecutionOutcome::ErrReason r) {
    switch (r) {
        case ExecutionOutcome::ErrReason::Timeout: return "timeout";
        case ExecutionOutcome::ErrReason::NonzeroExit: return "nonzero_exit";
        case ExecutionOutcome::ErrReason::LaunchFailure: return "launch_failure";
        case ExecutionOutcome::ErrReason::OutputOverflow: return "output_overflow";
    }
    return "unknown";
}

// Canonical output form: valid UTF-8 (replacement on bad bytes), CRLF -> LF,
// no trailing whitespace on any line, no trailing blank lines.
inline std::string normalize_output(std::string_view raw) {
    std::string text = sanitize_utf8(raw);
    std::string out;
    out.reserve(text.size());
    std::size_t line_start = 0;
    auto flush_line = [&](std::size_t end) {
        std::size_t e = end;
        while (e > line_start && (text[e - 1] == ' ' || text[e - 1] == '\t' || text[e - 1] == '\r'))
            --e;
        out.append(text, line_start, e - line_start);
        out.push_back('\n');
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\n') {
            flush_line(i);
            line_start = i + 1;
        }
    }
    if (line_start < text.size()) flush_line(text.size());
    // Every line above appended one '\n'; stripping the trailing run removes
    // the final line break plus any trailing blank lines.
    while (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

inline bool outputs_match(const std::string& a, const std::string& b) { return a == b; }

// Optional numeric judging. Exact canonical equality is the default; a
// per-problem float tolerance can be switched on where a task legitimately
// prints reals. Tokens must align one-to-one; a pair matches if the strings
// are equal or both parse as finite numbers within the tolerance
// (absolute, or relative for large magnitudes).
struct MatchPolicy {
    std::optional<double> float_tolerance;
};

inline bool outputs_match(const std::string& a, const std::string& b,
                          const MatchPolicy& policy) {
    if (!policy.float_tolerance) return outputs_match(a, b);
    auto tokens = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (is_space(c)) {
                if (!cur.empty()) out.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) out.push_back(std::move(cur));
        return out;
    };
    const auto ta = tokens(a), tb = tokens(b);
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i] == tb[i]) continue;
        char* end_a = nullptr;
        char* end_b = nullptr;
        const double va = std::strtod(ta[i].c_str(), &end_a);
        const double vb = std::strtod(tb[i].c_str(), &end_b);
        const bool numeric = end_a && *end_a == '\0' && end_b && *end_b == '\0' &&
                             std::isfinite(va) && std::isfinite(vb);
        if (!numeric) return false;
        const double tol = *policy.float_tolerance;
        if (std::abs(va - vb) > tol * std::max(1.0, std::max(std::abs(va), std::abs(vb))))
            return false;
    }
    return true;
}

namespace detail {

inline void ignore_sigpipe_once() {
    static std::once_flag flag;
    std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

inline std::vector<std::string> split_command(const std::string& cmd) {
    std::vector<std::string> argv;
    std::string cur;
    for (char c : cmd) {
        if (is_space(c)) {
            if (!cur.empty()) argv.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) argv.push_back(std::move(cur));
    return argv;
}

inline void set_nonblocking(int fd) {
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL, 0) | O_NONBLOCK);
}

} // namespace detail

// Runs one program under the limits. Isolation is a fresh working directory
// and process boundaries; this is a trust boundary, not a security boundary.
inline ExecutionOutcome run_program(const std::string& source, const std::string& input,
                                    const ExecLimits& limits,
                                    const std::filesystem::path& work_dir) {
    namespace fs = std::filesystem;
    detail::ignore_sigpipe_once();

    auto argv_tokens = detail::split_command(limits.interpreter_cmd);
    int placeholder_count = 0;
    for (const auto& t : argv_tokens)
        if (t == "{file}") ++placeholder_count;
    if (argv_tokens.empty() || placeholder_count != 1)
        throw ConfigError("interpreter_cmd must contain exactly one {file} placeholder");

    std::error_code ec;
    fs::create_directories(work_dir, ec);
    if (ec) throw EnvironmentError("cannot create work dir: " + work_dir.string());
    const fs::path source_path = work_dir / limits.source_filename;
    {
        std::ofstream out(source_path, std::ios::binary);
        if (!out) throw EnvironmentError("cannot write source file: " + source_path.string());
        out << source;
    }
    for (auto& t : argv_tokens)
        if (t == "{file}") t = source_path.string();

    int stdin_pipe[2], stdout_pipe[2], status_pipe[2];
    if (::pipe(stdin_pipe) != 0 || ::pipe(stdout_pipe) != 0 || ::pipe(status_pipe) != 0)
        throw EnvironmentError("pipe() failed");
    ::fcntl(status_pipe[1], F_SETFD, FD_CLOEXEC);

    const pid_t pid = ::fork();
    if (pid < 0) throw EnvironmentError("fork() failed");

    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(stdin_pipe[0], STDIN_FILENO);
        ::dup2(stdout_pipe[1], STDOUT_FILENO);
        const int devnull = ::open("/dev/null", O_WRONLY);
        if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
        ::close(stdin_pipe[0]);
        ::close(stdin_pipe[1]);
        ::close(stdout_pipe[0]);
        ::close(stdout_pipe[1]);
        ::close(status_pipe[0]);
        if (::chdir(work_dir.c_str()) != 0) { /* run from the current dir instead */ }

        std::vector<char*> argv;
        argv.reserve(argv_tokens.size() + 1);
        for (auto& t : argv_tokens) argv.push_back(t.data());
        argv.push_back(nullptr);
        ::execvp(argv[0], argv.data());
        const int err = errno;
        (void)!::write(status_pipe[1], &err, sizeof(err));
        ::_exit(127);
    }

    // Both sides set the process group so the timeout kill below can never
    // race the child's own setpgid.
    ::setpgid(pid, pid);
    ::close(stdin_pipe[0]);
    ::close(stdout_pipe[1]);
    ::close(status_pipe[1]);
    detail::set_nonblocking(stdin_pipe[1]);
    detail::set_nonblocking(stdout_pipe[0]);
    detail::set_nonblocking(status_pipe[0]);

    std::string captured;
    int exec_errno = 0;
    bool timed_out = false, overflow = false;
    std::size_t written = 0;
    bool stdin_open = true, stdout_open = true, status_open = true;

    const auto deadline = std::chrono::steady_clock::now() + limits.wall_timeout;
    char buf[16384];

    while (stdout_open || status_open || stdin_open) {
        const auto now = std::chrono::steady_clock::now();
        if (!timed_out && now >= deadline) {
            timed_out = true;
            if (::kill(-pid, SIGKILL) != 0) ::kill(pid, SIGKILL);
        }
        const int wait_ms = timed_out
            ? 50
            : static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;

        struct pollfd fds[3];
        int nfds = 0;
        int stdin_idx = -1, stdout_idx = -1, status_idx = -1;
        if (stdin_open) {
            stdin_idx = nfds;
            fds[nfds++] = {stdin_pipe[1], POLLOUT, 0};
        }
        if (stdout_open) {
            stdout_idx = nfds;
            fds[nfds++] = {stdout_pipe[0], POLLIN, 0};
        }
        if (status_open) {
            status_idx = nfds;
            fds[nfds++] = {status_pipe[0], POLLIN, 0};
        }
        const int rc = ::poll(fds, static_cast<nfds_t>(nfds), wait_ms);
        if (rc < 0 && errno != EINTR) break;

        if (stdin_idx >= 0 && (fds[stdin_idx].revents & (POLLOUT | POLLERR | POLLHUP))) {
            if (written >= input.size() || (fds[stdin_idx].revents & (POLLERR | POLLHUP))) {
                ::close(stdin_pipe[1]);
                stdin_open = false;
            } else {
                const ssize_t n = ::write(stdin_pipe[1], input.data() + written, input.size() - written);
                if (n > 0) {
                    written += static_cast<std::size_t>(n);
                    if (written >= input.size()) {
                        ::close(stdin_pipe[1]);
                        stdin_open = false;
                    }
                } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
                    ::close(stdin_pipe[1]);
                    stdin_open = false;
                }
            }
        }
        if (stdout_idx >= 0 && (fds[stdout_idx].revents & (POLLIN | POLLHUP | POLLERR))) {
            const ssize_t n = ::read(stdout_pipe[0], buf, sizeof(buf));
            if (n > 0) {
                captured.append(buf, static_cast<std::size_t>(n));
                if (captured.size() > limits.max_output_bytes && !overflow) {
                    overflow = true;
                    if (::kill(-pid, SIGKILL) != 0) ::kill(pid, SIGKILL);
                }
            } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
                ::close(stdout_pipe[0]);
                stdout_open = false;
            }
        }
        if (status_idx >= 0 && (fds[status_idx].revents & (POLLIN | POLLHUP | POLLERR))) {
            const ssize_t n = ::read(status_pipe[0], &exec_errno, sizeof(exec_errno));
            if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR) || n == sizeof(exec_errno)) {
                ::close(status_pipe[0]);
                status_open = false;
            }
        }
    }

    int wstatus = 0;
    ::waitpid(pid, &wstatus, 0);
    std::error_code cleanup_ec;
    std::filesystem::remove_all(work_dir, cleanup_ec);

    if (exec_errno != 0) {
        if (exec_errno == ENOENT)
            throw EnvironmentError("interpreter not found: " + argv_tokens[0]);
        return ExecutionOutcome::err(ExecutionOutcome::ErrReason::LaunchFailure);
    }
    if (timed_out) return ExecutionOutcome::err(ExecutionOutcome::ErrReason::Timeout);
    if (overflow) return ExecutionOutcome::err(ExecutionOutcome::ErrReason::OutputOverflow);
    if (!WIFEXITED(wstatus) || WEXITSTATUS(wstatus) != 0)
        return ExecutionOutcome::err(ExecutionOutcome::ErrReason::NonzeroExit);
    return ExecutionOutcome::output(normalize_output(captured));
}

// Executes candidates under limits with a content-addressed memo cache, so a
// matrix refresh only re-runs rows/columns that actually changed.
class Executor {
public:
    explicit Executor(ExecLimits limits, std::string scratch_root = "", int workers = 0)
        : limits_(std::move(limits)),
          workers_(workers > 0 ? workers
                               : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))) {
        namespace fs = std::filesystem;
        fs::path root = scratch_root.empty() ? fs::temp_directory_path() : fs::path(scratch_root);
        std::error_code ec;
        fs::create_directories(root, ec);
        scratch_ = root / ("coev-exec-" + std::to_string(::getpid()) + "-" +
                           std::to_string(instance_counter_.fetch_add(1)));
        fs::create_directories(scratch_, ec);
        if (ec) throw EnvironmentError("cannot create scratch dir: " + scratch_.string());
    }

    ~Executor() {
        std::error_code ec;
        std::filesystem::remove_all(scratch_, ec);
    }

    Executor(const Executor&) = delete;
    Executor& operator=(const Executor&) = delete;

    const ExecLimits& limits() const { return limits_; }

    void set_match_policy(MatchPolicy policy) { match_policy_ = policy; }
    bool matches(const std::string& actual, const std::string& expected) const {
        return outputs_match(actual, expected, match_policy_);
    }

    int workers() const { return workers_; }

    // Memoized by (source hash, input hash). Repeat calls never re-run.
    ExecutionOutcome run(const std::string& source, const std::string& input) {
        const Key key{fnv1a64(source), fnv1a64(input)};
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        auto outcome = run_uncached(source, input);
        std::lock_guard<std::mutex> lock(mutex_);
        return cache_.emplace(key, std::move(outcome)).first->second;
    }

    ExecutionOutcome run_uncached(const std::string& source, const std::string& input) {
        const auto dir = scratch_ / ("job-" + std::to_string(job_counter_.fetch_add(1)));
        return run_program(source, input, limits_, dir);
    }

    ExecutionMatrix build_matrix(const CodePool& codes, const UtPool& uts) {
        if (codes.empty() || uts.empty())
            throw ConfigError("build_matrix: both pools must be non-empty");
        std::vector<std::string> code_ids, ut_ids;
        for (const auto& c : codes) code_ids.push_back(c.id);
        for (const auto& t : uts) ut_ids.push_back(t.id);
        ExecutionMatrix matrix(code_ids, ut_ids);

        struct Job {
            std::size_t i, j;
        };
        std::vector<Job> jobs;
        jobs.reserve(codes.size() * uts.size());
        for (std::size_t i = 0; i < codes.size(); ++i)
            for (std::size_t j = 0; j < uts.size(); ++j) jobs.push_back({i, j});

        std::vector<ExecutionOutcome> outcomes(jobs.size());
        std::exception_ptr fault;
        std::mutex fault_mutex;
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t k = next.fetch_add(1);
                if (k >= jobs.size()) return;
                try {
                    outcomes[k] = run(codes[jobs[k].i].source, uts[jobs[k].j].input);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(fault_mutex);
                    if (!fault) fault = std::current_exception();
                    return;
                }
            }
        };
        const int n_workers = std::min<int>(workers_, static_cast<int>(jobs.size()));
        if (n_workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(n_workers));
            for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        if (fault) std::rethrow_exception(fault);

        for (std::size_t k = 0; k < jobs.size(); ++k) {
            const auto& o = outcomes[k];
            matrix.set(jobs[k].i, jobs[k].j,
                       o.ok() && matches(o.text, uts[jobs[k].j].expected_output));
        }
        return matrix;
    }

    std::size_t cache_size() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return cache_.size();
    }

private:
    struct Key {
        std::uint64_t source_hash, input_hash;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            return static_cast<std::size_t>(k.source_hash ^ (k.input_hash * 0x9e3779b97f4a7c15ull));
        }
    };

    ExecLimits limits_;
    MatchPolicy match_policy_;
    int workers_;
    std::filesystem::path scratch_;
    mutable std::mutex mutex_;
    std::unordered_map<Key, ExecutionOutcome, KeyHash> cache_;
    std::atomic<std::uint64_t> job_counter_{0};
    inline static std::atomic<std::uint64_t> instance_counter_{0};
};

// One-shot, uncached convenience wrapper.
inline ExecutionOutcome run_candidate(const CodeCandidate& code, const std::string& input,
                                      const ExecLimits& limits) {
    Executor executor(limits, "", 1);
    return executor.run_uncached(code.source, input);
}

} // namespace coev
