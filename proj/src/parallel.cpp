#include "rmct/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace rmct {

int resolve_threads(int requested)
{
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("RAYMARCH_CT_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0)
                return n;
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, std::size_t, int)>& fn)
{
    workers = std::max(1, workers);
    if (workers == 1 || n < 2) {
        fn(0, n, 0);
        return;
    }
    const auto w = static_cast<std::size_t>(workers);
    std::vector<std::exception_ptr> errors(w);
    {
        std::vector<std::jthread> pool;
        pool.reserve(w);
        for (std::size_t k = 0; k < w; ++k) {
            const std::size_t begin = n * k / w;
            const std::size_t end = n * (k + 1) / w;
            pool.emplace_back([&, begin, end, k] {
                try {
                    fn(begin, end, static_cast<int>(k));
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

}  // namespace rmct
