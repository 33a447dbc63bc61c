#include "seqmim/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "seqmim/error.hpp"

namespace seqmim {

namespace detail {
#ifndef SEQMIM_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#ifndef SEQMIM_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif
}  // namespace detail

const KernelTable* simd_kernels() {
#if defined(SEQMIM_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return detail::avx2_table();
  return nullptr;
#elif defined(SEQMIM_HAVE_NEON)
  return detail::neon_table();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* pick_default() {
  const char* env = std::getenv("SEQMIM_SIMD");
  if (env && std::strcmp(env, "scalar") == 0) return &scalar_kernels();
  const KernelTable* simd = simd_kernels();
  return simd ? simd : &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

const KernelTable& kernels() { return *active().load(std::memory_order_relaxed); }

void use_kernels(const std::string& name) {
  if (name == "scalar") {
    active().store(&scalar_kernels());
  } else if (name == "simd") {
    const KernelTable* simd = simd_kernels();
    if (!simd) fail(ErrorCode::validation, "no SIMD kernels available on this machine");
    active().store(simd);
  } else {
    fail(ErrorCode::validation, "unknown kernel set '" + name + "'");
  }
}

std::vector<std::string> available_kernels() {
  std::vector<std::string> out{"scalar"};
  if (const KernelTable* simd = simd_kernels()) out.emplace_back(simd->name);
  return out;
}

}  // namespace seqmim
