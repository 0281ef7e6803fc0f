#pragma once

// Data-parallel reductions over per-subject outcome vectors.
//
// Every kernel has a scalar reference implementation; AVX2 (x86-64) and NEON
// (AArch64) variants are compiled when the toolchain supports them and the
// widest one the CPU reports is selected at first use. All variants return
// bit-identical results (integer arithmetic only).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace zipcrt::kernels {

struct OutcomeMoments {
  std::int64_t count = 0;
  std::int64_t sum = 0;
  std::int64_t sum_sq = 0;
  std::int64_t zeros = 0;

  friend bool operator==(const OutcomeMoments&, const OutcomeMoments&) = default;
};

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  // Outcomes must be nonnegative.
  OutcomeMoments (*moments)(const std::int32_t* y, std::size_t n);
  // out[j] = structural[j] ? 0 : poisson[j]
  void (*compose)(const std::uint8_t* structural, const std::int32_t* poisson,
                  std::int32_t* out, std::size_t n);
};

// Variant selected for this process. ZIPCRT_ISA=scalar|avx2|neon in the
// environment overrides the choice when that variant is usable.
const KernelTable& active() noexcept;

// nullptr when the variant is not compiled in or the CPU lacks it.
const KernelTable* table_for(Isa isa) noexcept;

std::vector<Isa> available_isas();

inline OutcomeMoments outcome_moments(std::span<const std::int32_t> y) {
  return active().moments(y.data(), y.size());
}

// Spans must have equal length.
void compose_outcomes(std::span<const std::uint8_t> structural,
                      std::span<const std::int32_t> poisson, std::span<std::int32_t> out);

namespace scalar {
OutcomeMoments moments(const std::int32_t* y, std::size_t n);
void compose(const std::uint8_t* structural, const std::int32_t* poisson, std::int32_t* out,
             std::size_t n);
} // namespace scalar

#if defined(ZIPCRT_HAVE_AVX2)
namespace avx2 {
OutcomeMoments moments(const std::int32_t* y, std::size_t n);
void compose(const std::uint8_t* structural, const std::int32_t* poisson, std::int32_t* out,
             std::size_t n);
} // namespace avx2
#endif

#if defined(ZIPCRT_HAVE_NEON)
namespace neon {
OutcomeMoments moments(const std::int32_t* y, std::size_t n);
void compose(const std::uint8_t* structural, const std::int32_t* poisson, std::int32_t* out,
             std::size_t n);
} // namespace neon
#endif

} // namespace zipcrt::kernels
