#pragma once

namespace lmmlasso {

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
[[nodiscard]] double regularized_gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
[[nodiscard]] double regularized_gamma_q(double a, double x);

/// Central chi-square CDF with `dof` degrees of freedom.
[[nodiscard]] double chisq_cdf(double x, double dof);
[[nodiscard]] double chisq_quantile(double prob, int dof);

/// Non-central chi-square CDF, evaluated as a Poisson(xi / 2) mixture of central
/// chi-square CDFs summed outward from the modal index.
[[nodiscard]] double ncchisq_cdf(double x, int p, double xi);
[[nodiscard]] double ncchisq_pdf(double x, int p, double xi);

/// Inverse of ncchisq_cdf in x; |cdf(result) - prob| < 1e-9 (usually far smaller).
[[nodiscard]] double ncchisq_quantile(double prob, int p, double xi);

}  // namespace lmmlasso
