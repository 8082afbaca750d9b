#include "met2net/threading.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace met2net {

namespace {

int resolve_thread_count() {
    if (const char* env = std::getenv("MET2NET_THREADS")) {
        int v = std::atoi(env);
        return v <= 1 ? 1 : v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

int g_thread_count = -1;
thread_local bool tl_in_parallel = false;

// Persistent worker pool. Workers pull chunk indices from a shared counter;
// chunk boundaries are fixed by (n, grain) alone, independent of pool size.
class Pool {
public:
    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            shutdown_ = true;
        }
        wake_cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(std::int64_t n_chunks, std::int64_t grain, std::int64_t n,
             const std::function<void(std::int64_t, std::int64_t)>& fn) {
        std::unique_lock<std::mutex> lk(mu_);
        idle_cv_.wait(lk, [&] { return active_ == 0; });
        fn_ = &fn;
        grain_ = grain;
        limit_ = n;
        next_.store(0, std::memory_order_relaxed);
        remaining_.store(n_chunks, std::memory_order_relaxed);
        ++generation_;
        lk.unlock();
        wake_cv_.notify_all();
        drain();
        lk.lock();
        done_cv_.wait(lk, [&] { return remaining_.load(std::memory_order_acquire) == 0; });
    }

private:
    void drain() {
        while (true) {
            std::int64_t c = next_.fetch_add(1, std::memory_order_relaxed);
            std::int64_t begin = c * grain_;
            if (begin >= limit_) return;
            std::int64_t end = std::min(begin + grain_, limit_);
            (*fn_)(begin, end);
            if (remaining_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                std::lock_guard<std::mutex> lk(mu_);
                done_cv_.notify_all();
            }
        }
    }

    void worker_loop() {
        tl_in_parallel = true;  // work items must not re-enter the pool
        std::uint64_t seen = 0;
        std::unique_lock<std::mutex> lk(mu_);
        while (true) {
            wake_cv_.wait(lk, [&] { return shutdown_ || generation_ != seen; });
            if (shutdown_) return;
            seen = generation_;
            ++active_;
            lk.unlock();
            drain();
            lk.lock();
            if (--active_ == 0) idle_cv_.notify_all();
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable wake_cv_;
    std::condition_variable idle_cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::int64_t, std::int64_t)>* fn_ = nullptr;
    std::int64_t grain_ = 1;
    std::int64_t limit_ = 0;
    std::atomic<std::int64_t> next_{0};
    std::atomic<std::int64_t> remaining_{0};
    std::uint64_t generation_ = 0;
    int active_ = 0;
    bool shutdown_ = false;
};

Pool* pool() {
    static Pool* p = new Pool(thread_count() - 1);
    return p;
}

}  // namespace

int thread_count() {
    if (g_thread_count < 0) g_thread_count = resolve_thread_count();
    return g_thread_count;
}

void set_thread_count(int n) { g_thread_count = n <= 1 ? 1 : n; }

void parallel_for(std::int64_t n, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    if (grain < 1) grain = 1;
    std::int64_t n_chunks = (n + grain - 1) / grain;
    if (thread_count() == 1 || n_chunks == 1 || tl_in_parallel) {
        for (std::int64_t c = 0; c < n_chunks; ++c) {
            fn(c * grain, std::min((c + 1) * grain, n));
        }
        return;
    }
    bool prev = tl_in_parallel;
    tl_in_parallel = true;
    pool()->run(n_chunks, grain, n, fn);
    tl_in_parallel = prev;
}

}  // namespace met2net
