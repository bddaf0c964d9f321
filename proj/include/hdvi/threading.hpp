#pragma once

#include <exception>
#include <mutex>

namespace hdvi {

/// Thread cap consulted by every parallel kernel and outer loop.
/// Defaults to 1 so runs are serial unless explicitly widened.
int max_threads();
void set_max_threads(int n);

/// Exceptions must not escape an OpenMP region; loop bodies run through this
/// collector and the first captured exception is rethrown after the join.
class ExceptionCollector {
  public:
    template <typename F>
    void run(F&& body) noexcept {
        try {
            body();
        } catch (...) {
            const std::lock_guard<std::mutex> lock(mutex_);
            if (!first_) first_ = std::current_exception();
        }
    }

    void rethrow_if_any() {
        if (first_) std::rethrow_exception(first_);
    }

  private:
    std::mutex mutex_;
    std::exception_ptr first_;
};

}  // namespace hdvi
