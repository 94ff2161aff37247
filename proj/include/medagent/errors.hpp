#pragma once

#include <stdexcept>
#include <string>

namespace medagent {

// What went wrong when talking to a generation or search backend.
// transport errors are the only retryable kind.
enum class BackendErrorKind {
  transport,       // network/timeouts/5xx: safe to retry
  refusal,         // provider declined (filter, policy); carries provider message
  context_length,  // request exceeded the model context window
  auth,            // bad or missing credentials
  unscripted,      // mock backend had no entry for the prompt
  config,          // backend misconfiguration (duplicate script entries, bad URL)
};

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  BackendErrorKind kind() const { return kind_; }
  bool retryable() const { return kind_ == BackendErrorKind::transport; }

 private:
  BackendErrorKind kind_;
};

// Malformed or invariant-violating data (bad JSONL line, schema mismatch).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or invalid run configuration (its own CLI exit code).
class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

// A reasoning-loop failure for one item (all generations failed, unparseable
// query completion after retry, no extractable answer at the final vote).
class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace medagent
