#include "mkdm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace mkdm {
namespace {

constexpr std::int64_t kMinParallelWork = 1 << 20;

int threads_from_env() {
  const char* env = std::getenv("MKDM_THREADS");
  if (!env) return 1;
  try {
    return std::max(1, std::stoi(env));
  } catch (const std::exception&) {
    return 1;
  }
}

std::atomic<int>& thread_setting() {
  static std::atomic<int> threads{threads_from_env()};
  return threads;
}

}  // namespace

int thread_count() { return thread_setting().load(std::memory_order_relaxed); }

void set_thread_count(int threads) { thread_setting().store(std::max(1, threads)); }

void parallel_rows(std::int64_t n, std::int64_t work_per_row,
                   const std::function<void(std::int64_t, std::int64_t)>& fn) {
  const std::int64_t threads = std::min<std::int64_t>(thread_count(), n);
  if (threads <= 1 || n * work_per_row < kMinParallelWork) {
    fn(0, n);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(static_cast<std::size_t>(threads - 1));
  const std::int64_t chunk = (n + threads - 1) / threads;
  for (std::int64_t t = 1; t < threads; ++t) {
    const std::int64_t begin = t * chunk;
    const std::int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(n, chunk));
}

}  // namespace mkdm
