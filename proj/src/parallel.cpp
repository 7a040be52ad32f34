#include "mscal/parallel.hpp"

namespace mscal {

namespace {
std::atomic<unsigned> g_max_threads{0};
}

void set_max_threads(unsigned n)
{
    g_max_threads.store(n);
}

unsigned max_threads()
{
    unsigned n = g_max_threads.load();
    if (n == 0)
        n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

}  // namespace mscal
