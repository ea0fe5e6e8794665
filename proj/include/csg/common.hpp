// Shared plumbing: errors, deterministic RNG, parallel map, hashing.
#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace csg {

class CsgError : public std::runtime_error {
 public:
  explicit CsgError(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename... Args>
[[noreturn]] inline void fail(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw CsgError(os.str());
}

template <typename... Args>
inline void require(bool cond, Args&&... args) {
  if (!cond) fail(std::forward<Args>(args)...);
}

inline void warn(const std::string& msg);
namespace detail {
inline std::function<void(const std::string&)>& warn_sink() {
  static std::function<void(const std::string&)> sink;
  return sink;
}
}  // namespace detail

/// Redirect warnings (tests install a collector); empty sink -> stderr.
inline void set_warning_sink(std::function<void(const std::string&)> sink) {
  detail::warn_sink() = std::move(sink);
}

inline void warn(const std::string& msg) {
  if (detail::warn_sink()) {
    detail::warn_sink()(msg);
  } else {
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
  }
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive an independent stream seed from (base, index...).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(base ^ (a * 0x9e3779b97f4a7c15ULL)) ^ b);
}

// mt19937_64 wrapper with portable draw helpers. std distributions are
// implementation-defined, so uniforms and ranges are derived by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  /// Uniform in [0, 1) with 53 bits.
  double u01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) fail("Rng::below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = eng_();
    } while (r >= limit);
    return r % n;
  }

  int int_range(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  bool bernoulli(double p) { return u01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct values from [0, n) in selection order.
  std::vector<int> sample_without_replacement(int n, int k) {
    require(k <= n, "sample_without_replacement: k > n");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::mt19937_64 eng_;
};

/// Index-parallel map with deterministic output slots. fn(i) must only touch
/// state owned by slot i; reductions happen after the join, in index order.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (;;) {
          int i = next.fetch_add(1);
          if (i >= n) break;
          fn(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// FNV-1a over bytes; used for content hashes in run manifests and cache keys.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace csg
