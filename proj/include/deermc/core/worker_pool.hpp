#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace deermc {

/// Fixed set of worker threads executing index-range jobs. The calling thread
/// participates, so a pool of size 1 runs everything inline.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers = default_size());
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const noexcept { return workers_; }

  /// Runs body(begin, end) over [0, n) split into contiguous chunks of at most
  /// `grain` indices. Blocks until every chunk has finished; rethrows the first
  /// exception raised by a chunk.
  void parallel_for(std::size_t n, std::size_t grain,
                    const std::function<void(std::size_t, std::size_t)>& body);

  /// Runs task(i) for i in [0, count), one task per call.
  void run_tasks(std::size_t count, const std::function<void(std::size_t)>& task);

  /// DEERMC_THREADS if set, else hardware concurrency.
  static std::size_t default_size();

 private:
  void worker_loop();
  void drain(std::unique_lock<std::mutex>& lock);

  std::size_t workers_;
  std::vector<std::jthread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t job_count_ = 0;
  std::size_t next_ = 0;
  std::size_t finished_ = 0;
  std::size_t generation_ = 0;
  std::exception_ptr error_;
  bool stop_ = false;
};

/// Process-wide default pool, created on first use.
WorkerPool& default_pool();

}  // namespace deermc
