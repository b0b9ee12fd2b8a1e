#pragma once

// Shared plumbing: error type, hashing, float<->text round-tripping,
// deterministic RNG helpers, and a small parallel-for.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace specter {

// Runtime failures (I/O, malformed input, numeric preconditions).  The CLI
// maps these to exit code 2; bad command-line usage is exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// FNV-1a 64-bit.  Used for content-addressed cache keys and for the
// determinism checks that compare artifacts across runs.
inline uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string to_hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// 17 significant digits round-trip any finite double exactly, so serialized
// models reload bit-identical.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || (end && *end != '\0'))
    throw Error("not a number: '" + s + "'");
  return v;
}

// Unbiased bounded draw (Lemire).  Keeps sampling reproducible across
// platforms, unlike std::uniform_int_distribution.
inline uint64_t bounded_rand(std::mt19937_64& rng, uint64_t n) {
  if (n == 0) throw Error("bounded_rand: empty range");
  __uint128_t m = static_cast<__uint128_t>(rng()) * n;
  uint64_t lo = static_cast<uint64_t>(m);
  if (lo < n) {
    uint64_t t = (0 - n) % n;
    while (lo < t) {
      m = static_cast<__uint128_t>(rng()) * n;
      lo = static_cast<uint64_t>(m);
    }
  }
  return static_cast<uint64_t>(m >> 64);
}

// Uniform double in [0,1) with 53 random bits.
inline double unit_rand(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Runs fn(i) for i in [0,n).  jobs <= 0 means hardware concurrency.  Callers
// that need deterministic output must write results indexed by i and reduce
// in index order afterwards; the scheduling itself makes no ordering promise.
template <typename Fn>
void parallel_for(size_t n, int jobs, Fn&& fn) {
  if (n == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  size_t workers = jobs > 0 ? static_cast<size_t>(jobs) : (hw ? hw : 1);
  if (workers > n) workers = n;
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw Error("read failed: " + path.string());
  return data;
}

// Write-to-temp + rename so concurrent readers never see a torn file and
// repeated runs that produce identical bytes leave identical files.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view data) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(
      static_cast<unsigned long long>(
          std::hash<std::thread::id>{}(std::this_thread::get_id())));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("rename failed for " + path.string() + ": " + ec.message());
  }
}

}  // namespace specter
