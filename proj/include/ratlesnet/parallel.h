#pragma once

#include <cstddef>
#include <functional>

namespace ratlesnet {

// Upper bound on worker threads used inside a single op. 1 runs everything on
// the calling thread. Ops split work into chunks whose boundaries do not
// depend on the thread count, so results are identical for every setting.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Runs fn(i) for i in [0, count) with the caller's floating-point mode.
// Exceptions from workers are rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

// Flushes subnormal floats to zero on this thread until destroyed. Training
// drives softmax tails below FLT_MIN, and subnormal arithmetic is several
// times slower on x86. No-op elsewhere.
class FlushDenormals {
 public:
  FlushDenormals();
  ~FlushDenormals();
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace ratlesnet
