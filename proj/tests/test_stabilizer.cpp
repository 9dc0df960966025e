#include "rvm/stabilizer.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include <cmath>

namespace {

using mp100 = boost::multiprecision::cpp_bin_float_100;

// Coefficients from the equivalent triangular system
//   (a*a)_{k+1} = 2 sum_{m=0}^{k} (b*b)_m c_{k-m} B(alpha(m+2)-1, alpha(k-m-1)+2),
// obtained by matching powers in the functional equation; solved in 100 digits.
std::vector<double> coefficients_oracle(double alpha, int count) {
  const mp100 a = alpha;
  auto gam = [](const mp100& x) { return boost::multiprecision::tgamma(x); };
  auto beta = [&](const mp100& x, const mp100& y) { return gam(x) * gam(y) / gam(x + y); };
  std::vector<mp100> ak(count + 2), bk(count + 2);
  for (int k = 0; k < count + 2; ++k) {
    ak[k] = 1 / gam(a * k + 1);
    bk[k] = 1 / gam(a * (k + 1));
  }
  auto conv = [](const std::vector<mp100>& u, const std::vector<mp100>& v, int k) {
    mp100 s = 0;
    for (int l = 0; l <= k; ++l) s += u[l] * v[k - l];
    return s;
  };
  std::vector<mp100> c(count + 1);
  for (int k = 0; k <= count; ++k) {
    mp100 rhs = conv(ak, ak, k + 1) / 2;
    for (int m = 1; m <= k; ++m) rhs -= conv(bk, bk, m) * c[k - m] * beta(a * (m + 2) - 1, a * (k - m - 1) + 2);
    c[k] = rhs / (bk[0] * bk[0] * beta(2 * a - 1, a * (k - 1) + 2));
  }
  std::vector<double> out;
  for (const auto& v : c) out.push_back(static_cast<double>(v));
  return out;
}

// Independent deconvolution of f^2 * sigma^2 = c lambda^2 (1 - R^2): sigma^2(s) = s^{1-alpha} z(s)
// with z piecewise constant on a uniform grid, collocated at the cell ends.
std::vector<double> deconvolution_oracle(const rvm::KernelSpec& spec, double c, double horizon, int n) {
  const rvm::Resolvent res(spec);
  const double h = horizon / n;
  using boost::math::quadrature::gauss_kronrod;
  const double p = 1.0 / (2.0 * spec.alpha - 1.0);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs(n);
  for (int k = 1; k <= n; ++k) {
    const double t = k * h;
    for (int j = 1; j <= k; ++j) {
      // lag u = t - s over [t - jh, t - (j-1)h], integrated in v = u^{2 alpha - 1}
      auto integrand = [&](double v) {
        const double u = std::pow(v, p);
        const double g = res.density_regular(u);
        return p * g * g * std::pow(std::max(0.0, t - u), 1.0 - spec.alpha);
      };
      const double lo = std::pow(std::max(0.0, t - j * h), 2.0 * spec.alpha - 1.0);
      const double hi = std::pow(t - (j - 1) * h, 2.0 * spec.alpha - 1.0);
      w(k - 1, j - 1) = gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 10, 1e-12);
    }
    const double r = res.value(t);
    rhs(k - 1) = c * spec.lambda * spec.lambda * (1.0 - r * r);
  }
  const Eigen::VectorXd z = w.triangularView<Eigen::Lower>().solve(rhs);
  std::vector<double> sigma_sq(n + 1, 0.0);
  for (int k = 1; k <= n; ++k) sigma_sq[k] = std::pow(k * h, 1.0 - spec.alpha) * z(k - 1);
  return sigma_sq;
}

TEST(StabilizerCoefficients, LeadingCoefficient) {
  const auto c = rvm::stabilizer_coefficients(0.9, 3);
  EXPECT_NEAR(c[0], std::pow(std::tgamma(0.9), 2) / (std::tgamma(0.8) * std::tgamma(1.1)), 1e-14);
  EXPECT_NEAR(rvm::stabilizer_coefficients(0.9999, 0)[0], 1.0, 1e-3);
}

TEST(StabilizerCoefficients, MatchEquivalentTriangularSystem) {
  for (double alpha : {0.6, 0.75, 0.9}) {
    const auto got = rvm::stabilizer_coefficients(alpha, 40);
    const auto ref = coefficients_oracle(alpha, 40);
    for (int k = 0; k <= 40; ++k) EXPECT_NEAR(got[k], ref[k], 1e-14 * std::fabs(ref[k]) + 1e-300) << alpha << " " << k;
  }
}

TEST(StabilizerCoefficients, DomainChecks) {
  EXPECT_THROW(rvm::stabilizer_coefficients(1.0, 3), std::domain_error);
  EXPECT_THROW(rvm::stabilizer_coefficients(0.5, 3), std::domain_error);
  EXPECT_THROW(rvm::stabilizer_coefficients(0.7, -1), std::invalid_argument);
}

TEST(Stabilizer, TrivialValues) {
  const auto grid = rvm::uniform_grid(1.0, 10);
  const rvm::StabilizerTable st({0.9, 0.2}, 0.01, grid);
  EXPECT_EQ(st.value(0.0), 0.0);
  EXPECT_EQ(st.values().front(), 0.0);
  for (double v : st.values()) EXPECT_GE(v, 0.0);
  const rvm::StabilizerTable zero({0.6, 0.6}, 0.0, grid);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  const rvm::StabilizerTable exp_kernel({1.0, 0.5}, 0.04, grid);
  EXPECT_EQ(exp_kernel.value(0.0), 0.0);
  EXPECT_NEAR(exp_kernel.value(0.3), std::sqrt(2.0 * 0.04 * 0.5), 1e-15);
}

TEST(Stabilizer, MatchesDeconvolutionOracle) {
  const rvm::KernelSpec spec{0.9, 0.2};
  const double c = 0.01;
  const auto grid = rvm::uniform_grid(1.0, 10);
  const rvm::StabilizerTable st(spec, c, grid);
  // piecewise-constant collocation is first order; extrapolate two resolutions
  const auto coarse = deconvolution_oracle(spec, c, 1.0, 100);
  const auto fine = deconvolution_oracle(spec, c, 1.0, 200);
  const double extrapolated = 2.0 * fine.back() - coarse.back();
  EXPECT_NEAR(st.squared(1.0), extrapolated, 1e-5 * extrapolated);
  EXPECT_NEAR(st.squared(0.5), 2.0 * fine[100] - coarse[50], 1e-5 * st.squared(0.5));
}

TEST(Stabilizer, FunctionalEquationResidualReferenceAssets) {
  const auto grid = rvm::uniform_grid(1.0, 100);
  for (auto [alpha, lambda, c] : {std::tuple{0.9, 0.2, 0.01}, {0.6, 0.6, 0.03}}) {
    const rvm::StabilizerTable st({alpha, lambda}, c, grid);
    const auto table = rvm::resolvent_table({alpha, lambda}, grid);
    EXPECT_LE(rvm::functional_equation_residual(st, table), 5e-4 * c * lambda * lambda);
  }
}

TEST(Stabilizer, ResidualVanishesForZeroScale) {
  const auto grid = rvm::uniform_grid(1.0, 20);
  const rvm::StabilizerTable st({0.7, 1.0}, 0.0, grid);
  EXPECT_EQ(rvm::functional_equation_residual(st, rvm::resolvent_table({0.7, 1.0}, grid)), 0.0);
  const rvm::StabilizerTable exp_kernel({1.0, 0.8}, 0.05, grid);
  EXPECT_LE(rvm::functional_equation_residual(exp_kernel, rvm::resolvent_table({1.0, 0.8}, grid)), 1e-12);
}

TEST(Stabilizer, ScalingLaw) {
  const auto grid = rvm::uniform_grid(1.0, 10);
  const double alpha = 0.75;
  const double lambda = 2.5;
  const double c = 0.07;
  const rvm::StabilizerTable st({alpha, lambda}, c, grid);
  const rvm::StabilizerTable unit({alpha, 1.0}, 1.0, grid);
  for (double t : {0.01, 0.2, 0.9, 3.0}) {
    const double expected = std::sqrt(c) * std::pow(lambda, 1.0 - 1.0 / (2.0 * alpha)) *
                            unit.value(std::pow(lambda, 1.0 / alpha) * t);
    EXPECT_NEAR(st.value(t), expected, 1e-12 * expected) << t;
  }
}

TEST(Stabilizer, ApproachesLimit) {
  const auto grid = rvm::uniform_grid(1.0, 10);
  for (double alpha : {0.55, 0.6, 0.75, 0.9}) {
    const rvm::StabilizerTable st({alpha, 1.0}, 1.0, grid);
    const double t_star = st.trust_radius();
    for (double t : {t_star, 1.05 * t_star, 2.0 * t_star, 100.0 * t_star}) {
      EXPECT_NEAR(st.value(t), st.limit(), 0.01 * st.limit()) << alpha << " " << t;
    }
    EXPECT_EQ(st.value(10.0 * t_star), st.limit());
  }
}

}  // namespace
