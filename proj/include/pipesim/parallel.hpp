#pragma once

// Static strided work division: task i runs on thread i % jobs, results land
// in caller-owned slots, so output is byte-identical for any job count.

#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace pipesim {

inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs < 1) throw std::invalid_argument("parallel_for: jobs must be >= 1");
  if (count == 0) return;
  if (jobs == 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = (int)std::min<std::size_t>((std::size_t)jobs, count);
  std::vector<std::thread> pool;
  pool.reserve((size_t)workers);
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (int j = 0; j < workers; ++j) {
    pool.emplace_back([&, j] {
      try {
        for (std::size_t i = (std::size_t)j; i < count; i += (std::size_t)workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pipesim
