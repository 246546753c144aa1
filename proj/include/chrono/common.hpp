#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace chrono {

enum class ErrorCode {
  InvalidArgument,
  ModeMismatch,
  ConfigMismatch,
  ManifestParse,
  EmptyDataset,
  InsufficientFrames,
  EmptySet,
  ShapeError,
  DomainError,
  IoError,
  OutputExists,
  WeightsLoad,
  CorruptCheckpoint,
  Nonconvergence,
  NonfiniteLoss,
};

const char* error_code_name(ErrorCode code);

/// Single exception type for the whole toolkit; the CLI maps codes to exit
/// classes (usage/config, data/IO, runtime).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

// ---------------------------------------------------------------------------
// Randomness. All sampling in the dataset/trainer paths funnels through an
// explicit Rng so runs are reproducible from a single seed.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), derived from the top 53 bits so the mapping is
  /// pinned and identical across standard libraries.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  int64_t uniform_int(int64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller on pinned uniforms.
  double normal();

  std::mt19937_64& engine() { return engine_; }

  std::string serialize_state() const;
  void restore_state(const std::string& state);

  /// Derives an independent stream (e.g. per-purpose sub-generators).
  Rng fork(uint64_t stream_id) const;

 private:
  std::mt19937_64 engine_;
  uint64_t init_seed_ = 0;
};

/// FNV-1a 64-bit hash; used for config hashes and output digests.
uint64_t fnv1a64(const void* data, size_t nbytes, uint64_t seed = 0xcbf29ce484222325ull);
std::string fnv1a64_hex(const std::string& text);

// ---------------------------------------------------------------------------
// Logging. Level is taken from the CHRONO_LOG environment variable
// (error|warn|info|debug); default info.
// ---------------------------------------------------------------------------

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel log_level();
void set_log_level(LogLevel level);
void log_message(LogLevel level, const std::string& message);

inline void log_error(const std::string& m) { log_message(LogLevel::Error, m); }
inline void log_warn(const std::string& m) { log_message(LogLevel::Warn, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::Debug, m); }

}  // namespace chrono
