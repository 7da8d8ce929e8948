#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace coev {

// Invalid configuration or request: bad pool sizes, unbound template
// variables, malformed problem files.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// The completion provider failed after retries.
class ProviderError : public std::runtime_error {
public:
    explicit ProviderError(const std::string& what) : std::runtime_error(what) {}
};

// Transient transport fault; the gateway retries these with backoff.
class TransientProviderError : public ProviderError {
public:
    explicit TransientProviderError(const std::string& what) : ProviderError(what) {}
};

// A scripted provider had no entry left that matches the request.
class ScriptExhaustedError : public ProviderError {
public:
    explicit ScriptExhaustedError(const std::string& what) : ProviderError(what) {}
};

// Host-level fault (missing interpreter, unwritable directory). Aborts the
// current problem instead of degrading a single step.
class EnvironmentError : public std::runtime_error {
public:
    explicit EnvironmentError(const std::string& what) : std::runtime_error(what) {}
};

// A pool could not be filled within its retry budget; lists the slots that
// stayed empty.
class PartialPoolError : public std::runtime_error {
public:
    PartialPoolError(const std::string& what, std::vector<int> missing_slots)
        : std::runtime_error(what), missing_slots_(std::move(missing_slots)) {}

    const std::vector<int>& missing_slots() const { return missing_slots_; }

private:
    std::vector<int> missing_slots_;
};

} // namespace coev
