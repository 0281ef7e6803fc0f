#include "zipcrt/kernels.hpp"

namespace zipcrt::kernels::scalar {

OutcomeMoments moments(const std::int32_t* y, std::size_t n) {
  OutcomeMoments m;
  m.count = static_cast<std::int64_t>(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::int64_t v = y[j];
    m.sum += v;
    m.sum_sq += v * v;
    m.zeros += v == 0;
  }
  return m;
}

void compose(const std::uint8_t* structural, const std::int32_t* poisson, std::int32_t* out,
             std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] = structural[j] ? 0 : poisson[j];
}

} // namespace zipcrt::kernels::scalar
