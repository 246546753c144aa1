#include "chrono/common.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>

namespace chrono {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::ModeMismatch: return "MODE_MISMATCH";
    case ErrorCode::ConfigMismatch: return "CONFIG_MISMATCH";
    case ErrorCode::ManifestParse: return "MANIFEST_PARSE";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::InsufficientFrames: return "INSUFFICIENT_FRAMES";
    case ErrorCode::EmptySet: return "EMPTY_SET";
    case ErrorCode::ShapeError: return "SHAPE_ERROR";
    case ErrorCode::DomainError: return "DOMAIN_ERROR";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::OutputExists: return "OUTPUT_EXISTS";
    case ErrorCode::WeightsLoad: return "WEIGHTS_LOAD";
    case ErrorCode::CorruptCheckpoint: return "CORRUPT_CHECKPOINT";
    case ErrorCode::Nonconvergence: return "NONCONVERGENCE";
    case ErrorCode::NonfiniteLoss: return "NONFINITE_LOSS";
  }
  return "UNKNOWN";
}

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) fail(ErrorCode::InvalidArgument, "uniform_int requires n > 0");
  // Rejection sampling keeps the draw unbiased.
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<int64_t>(x % un);
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::string Rng::serialize_state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) fail(ErrorCode::CorruptCheckpoint, "bad rng state string");
}

Rng Rng::fork(uint64_t stream_id) const {
  std::mt19937_64 copy = engine_;
  uint64_t base = copy();
  return Rng(fnv1a64(&stream_id, sizeof(stream_id), base));
}

uint64_t fnv1a64(const void* data, size_t nbytes, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < nbytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a64_hex(const std::string& text) {
  uint64_t h = fnv1a64(text.data(), text.size());
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

namespace {

LogLevel level_from_env() {
  const char* env = std::getenv("CHRONO_LOG");
  if (!env) return LogLevel::Info;
  std::string v(env);
  if (v == "error") return LogLevel::Error;
  if (v == "warn") return LogLevel::Warn;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

LogLevel g_level = level_from_env();
std::mutex g_log_mutex;

}  // namespace

LogLevel log_level() { return g_level; }
void set_log_level(LogLevel level) { g_level = level; }

void log_message(LogLevel level, const std::string& message) {
  if (level > g_level) return;
  static const char* names[] = {"ERROR", "WARN", "INFO", "DEBUG"};
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << "\n";
}

}  // namespace chrono
