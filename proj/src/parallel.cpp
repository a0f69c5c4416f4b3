#include "lpm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace lpm {
namespace {

thread_local bool t_inside_pool = false;

std::size_t default_workers() {
  if (const char* env = std::getenv("LPM_WORKERS")) {
    try {
      long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

class Pool {
 public:
  explicit Pool(std::size_t workers) {
    for (std::size_t i = 1; i < workers; ++i) threads_.emplace_back([this] { loop(); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::size_t size() const { return threads_.size() + 1; }

  void run(std::size_t n_chunks, std::size_t n_items, const ChunkFn& fn) {
    std::unique_lock<std::mutex> lk(m_);
    fn_ = &fn;
    n_chunks_ = n_chunks;
    n_items_ = n_items;
    next_.store(0);
    error_chunk_ = n_chunks;
    error_ = nullptr;
    busy_ = threads_.size();
    ++generation_;
    lk.unlock();
    cv_.notify_all();

    work();

    lk.lock();
    done_cv_.wait(lk, [this] { return busy_ == 0; });
    fn_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void work() {
    t_inside_pool = true;
    for (;;) {
      std::size_t c = next_.fetch_add(1);
      if (c >= n_chunks_) break;
      std::size_t b = c * kChunkSize;
      std::size_t e = std::min(n_items_, b + kChunkSize);
      try {
        (*fn_)(c, b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_m_);
        if (c < error_chunk_) {
          error_chunk_ = c;
          error_ = std::current_exception();
        }
      }
    }
    t_inside_pool = false;
  }

  void loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      work();
      {
        std::lock_guard<std::mutex> lk(m_);
        --busy_;
      }
      done_cv_.notify_one();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex m_, err_m_;
  std::condition_variable cv_, done_cv_;
  const ChunkFn* fn_ = nullptr;
  std::size_t n_chunks_ = 0, n_items_ = 0, busy_ = 0, error_chunk_ = 0;
  std::atomic<std::size_t> next_{0};
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

std::mutex g_pool_mutex;
std::size_t g_override = 0;
std::unique_ptr<Pool> g_pool;

}  // namespace

std::size_t worker_count() {
  std::lock_guard<std::mutex> lk(g_pool_mutex);
  return g_override ? g_override : default_workers();
}

void set_worker_count(std::size_t n) {
  std::lock_guard<std::mutex> lk(g_pool_mutex);
  g_override = n;
  g_pool.reset();
}

std::size_t chunk_count(std::size_t n_items) { return (n_items + kChunkSize - 1) / kChunkSize; }

void for_each_chunk(std::size_t n_items, const ChunkFn& fn) {
  const std::size_t n_chunks = chunk_count(n_items);
  if (n_chunks == 0) return;
  std::size_t workers = t_inside_pool ? 1 : worker_count();
  if (workers <= 1 || n_chunks == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      fn(c, c * kChunkSize, std::min(n_items, (c + 1) * kChunkSize));
    return;
  }
  std::lock_guard<std::mutex> lk(g_pool_mutex);
  if (!g_pool || g_pool->size() != workers) g_pool = std::make_unique<Pool>(workers);
  g_pool->run(n_chunks, n_items, fn);
}

}  // namespace lpm
