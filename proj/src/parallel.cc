#include "ratlesnet/parallel.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define RATLESNET_HAS_MXCSR 1
#endif

namespace ratlesnet {

namespace {
std::atomic<std::size_t> g_threads{std::max(1u, std::thread::hardware_concurrency())};

#ifdef RATLESNET_HAS_MXCSR
constexpr unsigned kFtzDaz = 0x8040;  // flush-to-zero | denormals-are-zero
unsigned get_fp_mode() { return _mm_getcsr(); }
void set_fp_mode(unsigned mode) { _mm_setcsr(mode); }
#else
constexpr unsigned kFtzDaz = 0;
unsigned get_fp_mode() { return 0; }
void set_fp_mode(unsigned) {}
#endif
}  // namespace

FlushDenormals::FlushDenormals() : saved_(get_fp_mode()) { set_fp_mode(saved_ | kFtzDaz); }

FlushDenormals::~FlushDenormals() { set_fp_mode(saved_); }

void set_num_threads(std::size_t n) { g_threads = std::max<std::size_t>(1, n); }

std::size_t num_threads() { return g_threads; }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(num_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const unsigned mode = get_fp_mode();
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) {
    pool.emplace_back([&] {
      set_fp_mode(mode);
      work();
    });
  }
  work();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace ratlesnet
