#pragma once

namespace zipcrt {

double normal_cdf(double x) noexcept;

// Inverse standard normal CDF (Wichura's AS241, ~1e-16 relative accuracy).
// Throws DomainError outside (0, 1).
double normal_quantile(double p);

// Student-t CDF for integer degrees of freedom, evaluated with the finite
// trigonometric series that exists for integral df.
double student_t_cdf(double x, int df);

double student_t_pdf(double x, int df);

// Inverse Student-t CDF for integer df >= 1, polished by safeguarded Newton
// iterations on student_t_cdf to ~1e-12 in x.
double student_t_quantile(double p, int df);

} // namespace zipcrt
