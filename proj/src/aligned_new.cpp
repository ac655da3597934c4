// Replacement global allocation functions that return 64-byte-aligned
// memory. Eigen's SIMD kernels peel loops based on the runtime alignment of
// operand pointers, so two allocations of the same buffer at different
// addresses can produce bitwise-different floating-point sums. Pinning every
// allocation to one alignment class makes results reproducible across runs
// and across repeated calls within a process, which the pipeline's
// byte-determinism guarantees rely on.

#include <cstddef>
#include <cstdlib>
#include <new>

namespace {

constexpr std::size_t kAlign = 64;

void* alloc_or_handle(std::size_t size) {
    if (size == 0) size = 1;
    for (;;) {
        void* p = nullptr;
        if (posix_memalign(&p, kAlign, size) == 0 && p) return p;
        std::new_handler h = std::get_new_handler();
        if (!h) throw std::bad_alloc();
        h();
    }
}

}  // namespace

void* operator new(std::size_t size) { return alloc_or_handle(size); }
void* operator new[](std::size_t size) { return alloc_or_handle(size); }

void* operator new(std::size_t size, const std::nothrow_t&) noexcept {
    if (size == 0) size = 1;
    void* p = nullptr;
    return posix_memalign(&p, kAlign, size) == 0 ? p : nullptr;
}
void* operator new[](std::size_t size, const std::nothrow_t& t) noexcept {
    return operator new(size, t);
}

void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept {
    std::free(p);
}
