#include "deermc/core/worker_pool.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>

namespace deermc {

namespace {

// Nested parallel calls from inside a task run inline instead of deadlocking.
thread_local bool inside_task = false;

std::mutex& submit_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::size_t WorkerPool::default_size() {
  if (const char* env = std::getenv("DEERMC_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

WorkerPool::WorkerPool(std::size_t workers) : workers_(std::max<std::size_t>(1, workers)) {
  threads_.reserve(workers_ - 1);
  for (std::size_t i = 1; i < workers_; ++i) threads_.emplace_back([this] { worker_loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
}

void WorkerPool::drain(std::unique_lock<std::mutex>& lock) {
  while (next_ < job_count_) {
    const std::size_t i = next_++;
    const auto* job = job_;
    lock.unlock();
    try {
      inside_task = true;
      (*job)(i);
      inside_task = false;
    } catch (...) {
      inside_task = false;
      lock.lock();
      if (!error_) error_ = std::current_exception();
      ++finished_;
      continue;
    }
    lock.lock();
    ++finished_;
  }
}

void WorkerPool::worker_loop() {
  std::size_t seen = 0;
  std::unique_lock lock(mutex_);
  for (;;) {
    wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
    if (stop_) return;
    seen = generation_;
    drain(lock);
    if (finished_ == job_count_) done_.notify_all();
  }
}

void WorkerPool::run_tasks(std::size_t count, const std::function<void(std::size_t)>& task) {
  if (count == 0) return;
  if (workers_ == 1 || count == 1 || inside_task) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::lock_guard submit(submit_mutex());
  std::unique_lock lock(mutex_);
  job_ = &task;
  job_count_ = count;
  next_ = 0;
  finished_ = 0;
  error_ = nullptr;
  ++generation_;
  wake_.notify_all();
  drain(lock);
  done_.wait(lock, [&] { return finished_ == job_count_; });
  job_ = nullptr;
  if (error_) {
    auto e = error_;
    error_ = nullptr;
    std::rethrow_exception(e);
  }
}

void WorkerPool::parallel_for(std::size_t n, std::size_t grain,
                              const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  grain = std::max<std::size_t>(1, grain);
  const std::size_t chunks = (n + grain - 1) / grain;
  run_tasks(chunks, [&](std::size_t c) { body(c * grain, std::min(n, (c + 1) * grain)); });
}

WorkerPool& default_pool() {
  static WorkerPool pool;
  return pool;
}

}  // namespace deermc
