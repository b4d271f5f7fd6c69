#include <atomic>
#include <cstdlib>
#include <string>

#include "snn/kernels/kernels.hpp"

namespace snn::kernels {

const KernelTable& avx2_table_impl();
bool avx2_compiled();

namespace {

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* initial_table() {
    const KernelTable* avx = avx2_table();
    const char* env = std::getenv("SNN_SIMD");
    if (env != nullptr) {
        Isa isa{};
        if (parse_isa(env, isa) && isa == Isa::Scalar) return &scalar_table();
    }
    return avx != nullptr ? avx : &scalar_table();
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

}  // namespace

const KernelTable* avx2_table() {
    static const bool ok = avx2_compiled() && cpu_supports_avx2();
    return ok ? &avx2_table_impl() : nullptr;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(Isa isa) {
    if (isa == Isa::Scalar) {
        current().store(&scalar_table());
        return true;
    }
    const KernelTable* avx = avx2_table();
    if (avx == nullptr) return false;
    current().store(avx);
    return true;
}

bool parse_isa(std::string_view name, Isa& out) {
    if (name == "scalar") {
        out = Isa::Scalar;
        return true;
    }
    if (name == "avx2" || name == "auto") {
        out = Isa::Avx2;
        return true;
    }
    return false;
}

}  // namespace snn::kernels
