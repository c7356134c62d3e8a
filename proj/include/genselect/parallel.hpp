#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace genselect {

// Runs fn(i) for i in [0, n) on up to `width` threads. Every index is
// attempted; the exception of the lowest failing index is rethrown after all
// workers finish.
inline void parallel_for(std::size_t n, std::size_t width,
                         const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  width = std::clamp<std::size_t>(width, 1, n);
  std::vector<std::exception_ptr> errors(n);
  if (width == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    workers.reserve(width);
    for (std::size_t w = 0; w < width; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace genselect
