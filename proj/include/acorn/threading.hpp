// Copyright 2026 The Acorn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace acorn {

// Resolves the worker count: ACORN_THREADS env var if set and positive,
// otherwise the hardware concurrency.
inline int resolve_thread_count() {
  if (const char* env = std::getenv("ACORN_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Fixed-chunk fork/join pool. Work is expressed as `chunks` independent
// pieces whose outputs are disjoint; which thread runs which chunk is
// irrelevant to the result, so determinism rests on the chunk decomposition
// alone. Callers must keep chunk counts independent of the thread count.
class ThreadPool {
 public:
  explicit ThreadPool(int threads) : threads_(threads < 1 ? 1 : threads) {
    for (int i = 1; i < threads_; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::unique_lock lock(mu_);
      shutdown_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int size() const { return threads_; }

  // Runs fn(chunk) for every chunk in [0, chunks), blocking until all
  // complete. The calling thread participates. The first exception thrown
  // by any chunk is rethrown here after the job drains.
  void run(int chunks, const std::function<void(int)>& fn) {
    if (chunks <= 0) return;
    if (threads_ == 1 || chunks == 1) {
      for (int c = 0; c < chunks; ++c) fn(c);
      return;
    }
    // Each run gets its own Job; a worker still finishing a previous job
    // holds that job's shared_ptr and cannot observe this one.
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->total = chunks;
    job->pending.store(chunks, std::memory_order_relaxed);
    {
      std::unique_lock lock(mu_);
      job_ = job;
    }
    cv_.notify_all();
    drain(*job);
    {
      std::unique_lock lock(mu_);
      done_cv_.wait(lock, [&] {
        return job->pending.load(std::memory_order_acquire) == 0;
      });
      if (job_ == job) job_ = nullptr;
    }
    if (job->error) std::rethrow_exception(job->error);
  }

 private:
  struct Job {
    const std::function<void(int)>* fn = nullptr;
    int total = 0;
    std::atomic<int> next{0};
    std::atomic<int> pending{0};
    std::exception_ptr error;
    std::mutex error_mu;
  };

  void drain(Job& job) {
    while (true) {
      int c = job.next.fetch_add(1, std::memory_order_relaxed);
      if (c >= job.total) return;
      try {
        (*job.fn)(c);
      } catch (...) {
        std::unique_lock lock(job.error_mu);
        if (!job.error) job.error = std::current_exception();
      }
      if (job.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::unique_lock lock(mu_);
        done_cv_.notify_all();
      }
    }
  }

  void worker_loop() {
    std::shared_ptr<Job> last;
    while (true) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return shutdown_ || (job_ && job_ != last); });
        if (shutdown_) return;
        job = job_;
      }
      last = job;
      drain(*job);
    }
  }

  int threads_;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::shared_ptr<Job> job_;
  bool shutdown_ = false;
};

}  // namespace acorn
