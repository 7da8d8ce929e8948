#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "coev/errors.hpp"
#include "coev/prompts.hpp"
#include "coev/text.hpp"

namespace coev {

struct SamplingParams {
    double temperature = 0.8;
    double top_p = 0.95;
    int top_k = 40;
    int max_tokens = 2048;
    std::optional<std::uint64_t> seed;
};

struct ChatRequest {
    std::string template_id;
    std::map<std::string, std::string> variables;
    int sample_count = 1;
    SamplingParams sampling;
};

struct Usage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    std::uint64_t call_count = 0;

    Usage& operator+=(const Usage& other) {
        prompt_tokens += other.prompt_tokens;
        completion_tokens += other.completion_tokens;
        call_count += other.call_count;
        return *this;
    }
    bool operator==(const Usage&) const = default;
};

struct Completion {
    std::vector<std::string> texts;
    Usage usage;
};

// Prompt templates keyed by id. {identifier} placeholders are substituted
// from the request variables; anything else passes through verbatim.
class TemplateSet {
public:
    static TemplateSet builtin() {
        TemplateSet set;
        for (const auto& [id, text] : prompts::builtin_templates())
            set.texts_.emplace(std::string(id), std::string(text));
        return set;
    }

    void set(std::string id, std::string text) { texts_[std::move(id)] = std::move(text); }

    bool contains(const std::string& id) const { return texts_.count(id) > 0; }

    const std::string& get(const std::string& id) const {
        auto it = texts_.find(id);
        if (it == texts_.end()) throw ConfigError("unknown template: " + id);
        return it->second;
    }

    // Every <id>.txt in dir replaces (or adds) the template with that id.
    void load_overrides(const std::filesystem::path& dir) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(dir))
            throw ConfigError("template override path is not a directory: " + dir.string());
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            std::ifstream in(entry.path(), std::ios::binary);
            std::ostringstream buffer;
            buffer << in.rdbuf();
            texts_[entry.path().stem().string()] = buffer.str();
        }
    }

    static std::string render_text(const std::string& text,
                                   const std::map<std::string, std::string>& variables) {
        std::string out;
        out.reserve(text.size());
        std::size_t i = 0;
        while (i < text.size()) {
            if (text[i] != '{') {
                out.push_back(text[i++]);
                continue;
            }
            std::size_t j = i + 1;
            while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            if (j >= text.size() || text[j] != '}' || j == i + 1) {
                out.push_back(text[i++]); // not a placeholder; literal brace
                continue;
            }
            const std::string name = text.substr(i + 1, j - i - 1);
            auto it = variables.find(name);
            if (it == variables.end())
                throw ConfigError("template variable not bound: " + name);
            out += it->second;
            i = j + 1;
        }
        return out;
    }

    std::string render(const std::string& id,
                       const std::map<std::string, std::string>& variables) const {
        return render_text(get(id), variables);
    }

private:
    std::map<std::string, std::string> texts_;
};

class Provider {
public:
    virtual ~Provider() = default;
    // Returns exactly request.sample_count texts or throws.
    virtual Completion complete(const ChatRequest& request, const std::string& prompt) = 0;
    // Deterministic providers are called strictly serially by the gateway.
    virtual bool deterministic() const { return false; }
};

// One canned response set. Keyed entries match whenever a request carries the
// same (template_id, variables) fingerprint; keyless entries are consumed in
// script order, optionally guarded by a template id.
struct ScriptEntry {
    std::string key;         // empty: positional
    std::string template_id; // positional guard; empty accepts any template
    std::vector<std::string> texts;
};

inline std::string script_fingerprint(const std::string& template_id,
                                      const std::map<std::string, std::string>& variables) {
    std::string key = template_id;
    key.push_back('|');
    bool first = true;
    for (const auto& [name, value] : variables) { // std::map: sorted by name
        if (!first) key.push_back('&');
        first = false;
        key += name;
        key.push_back('=');
        key += value;
    }
    return key;
}

// Deterministic offline provider: a run against a fixed script is a pure
// function of (script, request sequence).
class ScriptedProvider : public Provider {
public:
    explicit ScriptedProvider(std::vector<ScriptEntry> entries)
        : entries_(std::move(entries)), consumed_(entries_.size(), false) {}

    Completion complete(const ChatRequest& request, const std::string& prompt) override {
        std::lock_guard<std::mutex> lock(mutex_);
        const std::string fingerprint = script_fingerprint(request.template_id, request.variables);

        std::size_t pick = entries_.size();
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            if (consumed_[k] || entries_[k].key.empty()) continue;
            if (entries_[k].key == fingerprint) {
                pick = k;
                break;
            }
        }
        if (pick == entries_.size()) {
            for (std::size_t k = 0; k < entries_.size(); ++k) {
                if (consumed_[k] || !entries_[k].key.empty()) continue;
                if (!entries_[k].template_id.empty() && entries_[k].template_id != request.template_id)
                    throw ScriptExhaustedError("script expects template '" + entries_[k].template_id +
                                               "' next but got '" + request.template_id + "'");
                pick = k;
                break;
            }
        }
        if (pick == entries_.size())
            throw ScriptExhaustedError("script has no entry left for template '" +
                                       request.template_id + "'");
        const auto& texts = entries_[pick].texts;
        if (static_cast<int>(texts.size()) < request.sample_count)
            throw ScriptExhaustedError("script entry for '" + request.template_id + "' has " +
                                       std::to_string(texts.size()) + " texts, need " +
                                       std::to_string(request.sample_count));
        consumed_[pick] = true;

        Completion completion;
        completion.texts.assign(texts.begin(), texts.begin() + request.sample_count);
        completion.usage.prompt_tokens = approx_token_count(prompt);
        for (const auto& t : completion.texts)
            completion.usage.completion_tokens += approx_token_count(t);
        completion.usage.call_count = 1;
        return completion;
    }

    bool deterministic() const override { return true; }

    std::size_t remaining() const {
        std::lock_guard<std::mutex> lock(mutex_);
        std::size_t n = 0;
        for (bool c : consumed_)
            if (!c) ++n;
        return n;
    }

private:
    std::vector<ScriptEntry> entries_;
    std::vector<bool> consumed_;
    mutable std::mutex mutex_;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds base_delay{500};
    double backoff = 2.0;
    std::chrono::milliseconds max_delay{5000};
};

// Single entry point for every natural-language generation step: renders the
// template, bounds in-flight requests, retries transient transport failures,
// and accumulates usage counters.
class Gateway {
public:
    Gateway(TemplateSet templates, std::shared_ptr<Provider> provider,
            RetryPolicy retry = {}, int max_inflight = 8)
        : templates_(std::move(templates)),
          provider_(std::move(provider)),
          retry_(retry),
          max_inflight_(max_inflight > 0 ? max_inflight : 1) {}

    std::string render(const std::string& template_id,
                       const std::map<std::string, std::string>& variables) const {
        return templates_.render(template_id, variables);
    }

    Completion complete(const ChatRequest& request) {
        if (request.sample_count < 1)
            throw ConfigError("sample_count must be >= 1");
        const std::string prompt = templates_.render(request.template_id, request.variables);
        if (observer_) observer_(request.template_id, prompt);

        InflightSlot slot(*this);
        std::chrono::milliseconds delay = retry_.base_delay;
        for (int attempt = 1;; ++attempt) {
            try {
                Completion completion = provider_->complete(request, prompt);
                if (static_cast<int>(completion.texts.size()) != request.sample_count)
                    throw ProviderError("provider returned " + std::to_string(completion.texts.size()) +
                                        " texts, expected " + std::to_string(request.sample_count));
                std::lock_guard<std::mutex> lock(usage_mutex_);
                usage_ += completion.usage;
                return completion;
            } catch (const TransientProviderError&) {
                if (attempt >= retry_.attempts) throw;
                std::this_thread::sleep_for(delay);
                delay = std::min(retry_.max_delay,
                                 std::chrono::milliseconds(static_cast<std::int64_t>(
                                     static_cast<double>(delay.count()) * retry_.backoff)));
            }
        }
    }

    // Convenience: first sample with fenced-block extraction applied.
    std::string complete_text(const ChatRequest& request) {
        return extract_fenced_block(complete(request).texts.at(0));
    }

    Usage usage() const {
        std::lock_guard<std::mutex> lock(usage_mutex_);
        return usage_;
    }

    bool deterministic() const { return provider_->deterministic(); }

    using PromptObserver = std::function<void(const std::string& template_id, const std::string& prompt)>;
    void set_prompt_observer(PromptObserver observer) { observer_ = std::move(observer); }

    const TemplateSet& templates() const { return templates_; }

private:
    // Bounds concurrent provider calls; deterministic providers serialize.
    class InflightSlot {
    public:
        explicit InflightSlot(Gateway& gw) : gw_(gw) {
            const int limit = gw_.provider_->deterministic() ? 1 : gw_.max_inflight_;
            std::unique_lock<std::mutex> lock(gw_.inflight_mutex_);
            gw_.inflight_cv_.wait(lock, [&] { return gw_.inflight_ < limit; });
            ++gw_.inflight_;
        }
        ~InflightSlot() {
            {
                std::lock_guard<std::mutex> lock(gw_.inflight_mutex_);
                --gw_.inflight_;
            }
            gw_.inflight_cv_.notify_one();
        }

    private:
        Gateway& gw_;
    };

    TemplateSet templates_;
    std::shared_ptr<Provider> provider_;
    RetryPolicy retry_;
    int max_inflight_;
    int inflight_ = 0;
    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    mutable std::mutex usage_mutex_;
    Usage usage_;
    PromptObserver observer_;
};

} // namespace coev
