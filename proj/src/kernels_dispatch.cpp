#include "zipcrt/kernels.hpp"

#include "zipcrt/error.hpp"

#include <cstdlib>
#include <string>

namespace zipcrt::kernels {

namespace {

constexpr KernelTable kScalar{Isa::scalar, &scalar::moments, &scalar::compose};
#if defined(ZIPCRT_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2, &avx2::moments, &avx2::compose};
#endif
#if defined(ZIPCRT_HAVE_NEON)
constexpr KernelTable kNeon{Isa::neon, &neon::moments, &neon::compose};
#endif

const KernelTable& select() noexcept {
  if (const char* forced = std::getenv("ZIPCRT_ISA")) {
    const std::string name(forced);
    for (const Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
      if (name == isa_name(isa))
        if (const KernelTable* t = table_for(isa)) return *t;
  }
  if (const KernelTable* t = table_for(Isa::avx2)) return *t;
  if (const KernelTable* t = table_for(Isa::neon)) return *t;
  return kScalar;
}

} // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
  case Isa::scalar: return "scalar";
  case Isa::avx2: return "avx2";
  case Isa::neon: return "neon";
  }
  return "unknown";
}

const KernelTable* table_for(Isa isa) noexcept {
  switch (isa) {
  case Isa::scalar:
    return &kScalar;
  case Isa::avx2:
#if defined(ZIPCRT_HAVE_AVX2)
    if (__builtin_cpu_supports("avx2")) return &kAvx2;
#endif
    return nullptr;
  case Isa::neon:
#if defined(ZIPCRT_HAVE_NEON)
    return &kNeon; // baseline on AArch64
#else
    return nullptr;
#endif
  }
  return nullptr;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (const Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
    if (table_for(isa)) out.push_back(isa);
  return out;
}

const KernelTable& active() noexcept {
  static const KernelTable& table = select();
  return table;
}

void compose_outcomes(std::span<const std::uint8_t> structural,
                      std::span<const std::int32_t> poisson, std::span<std::int32_t> out) {
  if (structural.size() != poisson.size() || out.size() != poisson.size())
    throw ValidationError("compose_outcomes: span lengths differ");
  active().compose(structural.data(), poisson.data(), out.data(), out.size());
}

} // namespace zipcrt::kernels
