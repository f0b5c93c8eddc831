#include "lmmlasso/ncchisq.hpp"

#include "lmmlasso/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lmmlasso {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 100000;
constexpr double kTailMass = 1e-15;

double log_prefactor(double a, double x) { return -x + a * std::log(x) - std::lgamma(a); }

// Series for P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * kEps) break;
    }
    return sum * std::exp(log_prefactor(a, x));
}

// Modified Lentz continued fraction for Q(a, x), valid for x >= a + 1.
double gamma_q_fraction(double a, double x) {
    constexpr double tiny = std::numeric_limits<double>::min() / kEps;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return std::exp(log_prefactor(a, x)) * h;
}

void check_gamma_args(double a, double x) {
    if (!(a > 0.0) || !(x >= 0.0)) throw InputError("incomplete gamma requires a > 0 and x >= 0");
}

double chisq_pdf(double x, double dof) {
    const double half = 0.5 * dof;
    if (x <= 0.0) {
        if (dof == 2.0) return 0.5;
        return dof < 2.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return std::exp((half - 1.0) * std::log(x) - 0.5 * x - half * std::numbers::ln2 - std::lgamma(half));
}

void check_nc_args(double x, int p, double xi) {
    if (std::isnan(x) || x < 0.0) throw InputError("non-central chi-square: x must be nonnegative");
    if (p < 1) throw InputError("non-central chi-square: degrees of freedom must be positive");
    if (!(xi >= 0.0) || !std::isfinite(xi)) throw InputError("non-central chi-square: xi must be nonnegative");
}

// Sums w_k * term(k) over the Poisson(xi / 2) weights, outward from the mode,
// until the neglected weight mass is below kTailMass on each side.
template <typename Term>
double poisson_mixture(double xi, Term&& term) {
    const double lambda = 0.5 * xi;
    if (lambda == 0.0) return term(0);
    const double mode = std::floor(lambda);
    const double w_mode = std::exp(-lambda + mode * std::log(lambda) - std::lgamma(mode + 1.0));
    double sum = w_mode * term(static_cast<long>(mode));

    double w = w_mode;
    for (double k = mode + 1.0;; k += 1.0) {
        w *= lambda / k;
        sum += w * term(static_cast<long>(k));
        const double rho = lambda / (k + 1.0);
        if (rho < 1.0 && w * rho / (1.0 - rho) < kTailMass) break;
        if (w == 0.0) break;
    }
    w = w_mode;
    for (double k = mode - 1.0; k >= 0.0; k -= 1.0) {
        w *= (k + 1.0) / lambda;
        sum += w * term(static_cast<long>(k));
        const double rho = k / lambda;
        if (rho < 1.0 && w * rho / (1.0 - rho) < kTailMass) break;
        if (w == 0.0) break;
    }
    return sum;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
    check_gamma_args(a, x);
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) return std::min(1.0, gamma_p_series(a, x));
    return std::max(0.0, 1.0 - gamma_q_fraction(a, x));
}

double regularized_gamma_q(double a, double x) {
    check_gamma_args(a, x);
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    if (x < a + 1.0) return std::max(0.0, 1.0 - gamma_p_series(a, x));
    return std::min(1.0, gamma_q_fraction(a, x));
}

double chisq_cdf(double x, double dof) {
    if (x <= 0.0) return 0.0;
    return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chisq_quantile(double prob, int dof) { return ncchisq_quantile(prob, dof, 0.0); }

double ncchisq_cdf(double x, int p, double xi) {
    check_nc_args(x, p, xi);
    if (x == 0.0) return 0.0;
    const double v = poisson_mixture(xi, [&](long k) { return chisq_cdf(x, p + 2.0 * static_cast<double>(k)); });
    return std::clamp(v, 0.0, 1.0);
}

double ncchisq_pdf(double x, int p, double xi) {
    check_nc_args(x, p, xi);
    return poisson_mixture(xi, [&](long k) { return chisq_pdf(x, p + 2.0 * static_cast<double>(k)); });
}

double ncchisq_quantile(double prob, int p, double xi) {
    if (!(prob > 0.0 && prob < 1.0)) throw InputError("quantile probability must lie in (0, 1)");
    check_nc_args(0.0, p, xi);

    double lo = 0.0;
    double hi = p + xi + 20.0 * std::sqrt(2.0 * p + 4.0 * xi) + 40.0;
    while (ncchisq_cdf(hi, p, xi) < prob) {
        lo = hi;
        hi *= 2.0;
    }
    double x = std::clamp(p + xi, lo, hi);
    for (int iter = 0; iter < 500; ++iter) {
        const double diff = ncchisq_cdf(x, p, xi) - prob;
        if (std::abs(diff) < 1e-14) break;
        if (diff < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
        const double f = ncchisq_pdf(x, p, xi);
        double next = (f > 0.0 && std::isfinite(f)) ? x - diff / f : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

}  // namespace lmmlasso
