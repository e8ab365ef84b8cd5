#include "myosub/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace myosub {

namespace {

std::optional<std::size_t> g_override;
std::mutex g_override_mutex;

std::size_t env_cap() {
  static const std::size_t cap = [] {
    if (const char* env = std::getenv("MYOSUB_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v >= 1) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<std::size_t>(hw > 0 ? hw : 1);
  }();
  return cap;
}

}  // namespace

std::size_t thread_cap() {
  std::lock_guard<std::mutex> lock(g_override_mutex);
  if (g_override) return *g_override;
  return env_cap();
}

void set_thread_cap(std::optional<std::size_t> cap) {
  std::lock_guard<std::mutex> lock(g_override_mutex);
  if (cap && *cap == 0) cap = 1;
  g_override = cap;
}

void parallel_for_chunks(std::size_t count, std::size_t grain,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  if (grain == 0) grain = 1;
  const std::size_t nchunks = (count + grain - 1) / grain;
  const std::size_t nthreads = std::min(thread_cap(), nchunks);
  if (nthreads <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c)
      fn(c * grain, std::min(count, (c + 1) * grain));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(nthreads);
  for (std::size_t t = 0; t < nthreads; ++t) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= nchunks) return;
        fn(c * grain, std::min(count, (c + 1) * grain));
      }
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace myosub
