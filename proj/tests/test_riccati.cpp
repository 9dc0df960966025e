#include "rvm/riccati.hpp"

#include <boost/numeric/odeint.hpp>
#include <gtest/gtest.h>

#include <array>
#include <cmath>

namespace {

using rvm::RiccatiVariant;

std::vector<rvm::StabilizerTable> stabilizers(const rvm::ModelParams& m) {
  const auto grid = rvm::uniform_grid(m.horizon, 10);
  return rvm::make_stabilizers(m, grid);
}

rvm::RiccatiSpec make_spec(RiccatiVariant v, const rvm::ModelParams& m, double gamma, int n) {
  return rvm::RiccatiSpec::from_tables(v, m, gamma, stabilizers(m), n);
}

rvm::RiccatiSpec constant_sigma_spec(RiccatiVariant v, const rvm::ModelParams& m, double gamma, int n,
                                     const std::vector<double>& sigma) {
  rvm::RiccatiSpec spec;
  spec.variant = v;
  spec.params = m;
  spec.gamma = gamma;
  spec.n = n;
  for (double s : sigma) spec.sigma.emplace_back([s](double) { return s; });
  return spec;
}

// psi' = a + b psi + q psi^2, psi(0) = 0, by an adaptive Dormand-Prince integration.
std::vector<double> ode_oracle(double a, double b, double q, const std::vector<double>& times) {
  using state = std::array<double, 1>;
  namespace ode = boost::numeric::odeint;
  state x{0.0};
  std::vector<double> out;
  auto rhs = [&](const state& y, state& dy, double) { dy[0] = a + b * y[0] + q * y[0] * y[0]; };
  auto stepper = ode::make_dense_output(1e-14, 1e-14, ode::runge_kutta_dopri5<state>());
  ode::integrate_times(stepper, rhs, x, times.begin(), times.end(), 1e-4,
                       [&](const state& y, double) { out.push_back(y[0]); });
  return out;
}

double sup_diff(const std::vector<double>& u, const std::vector<double>& v) {
  double e = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) e = std::max(e, std::fabs(u[k] - v[k]));
  return e;
}

rvm::ModelParams exponential_kernel_asset() {
  rvm::ModelParams m;
  m.assets = {rvm::AssetParams{1.0, 0.2, 0.4, 0.1, -0.7, 0.2, 0.01}};
  return m;
}

TEST(RiccatiRhs, TrivialCases) {
  auto m = rvm::reference_two_asset_model();
  for (auto& a : m.assets) a.theta = 0.0;
  for (auto v : {RiccatiVariant::power_general, RiccatiVariant::exponential_general}) {
    const auto spec = make_spec(v, m, 0.3, 10);
    EXPECT_EQ(rvm::riccati_rhs(spec, 0, 0.4, {0.0, 0.0}), 0.0);
    EXPECT_EQ(rvm::riccati_rhs(spec, 1, 0.9, {0.0, 0.0}), 0.0);
  }
  auto flat = rvm::reference_two_asset_model();
  for (auto& a : flat.assets) a.nu = 0.0;
  const auto spec = make_spec(RiccatiVariant::exponential_general, flat, 0.3, 10);
  EXPECT_DOUBLE_EQ(rvm::riccati_rhs(spec, 1, 0.5, {0.0, -0.02}), -0.005 + 0.6 * 0.02);
}

TEST(RiccatiRhs, DistortionIdentity) {
  auto m = rvm::reference_two_asset_model();
  for (auto& a : m.assets) a.rho = -0.6;
  const double gamma = 0.35;
  const auto deg = make_spec(RiccatiVariant::power_degenerate, m, gamma, 10);
  const auto gen = make_spec(RiccatiVariant::power_general, m, gamma, 10);
  const double delta = deg.delta();
  EXPECT_DOUBLE_EQ(delta, (1.0 - gamma) / (1.0 - gamma + gamma * 0.36));
  for (double s : {0.0, 0.3, 0.99}) {
    for (double x : {-0.2, 0.01, 0.7}) {
      for (std::size_t i = 0; i < 2; ++i) {
        std::vector<double> psi(2, x), psi_t(2, delta * x);
        EXPECT_NEAR(rvm::riccati_rhs(gen, i, s, psi_t), delta * rvm::riccati_rhs(deg, i, s, psi), 1e-15);
      }
    }
  }
}

TEST(Riccati, ZeroRiskPremiumIsFixedPoint) {
  auto m = rvm::reference_two_asset_model();
  for (auto& a : m.assets) a.theta = 0.0;
  for (auto v : {RiccatiVariant::power_general, RiccatiVariant::exponential_general}) {
    const auto sol = rvm::solve_riccati(make_spec(v, m, 0.2, 50));
    for (const auto& p : sol.psi) {
      for (double x : p) EXPECT_EQ(x, 0.0);
    }
  }
}

TEST(Riccati, ExponentialKernelMatchesOdeOracle) {
  const auto m = exponential_kernel_asset();
  const auto& a = m.assets[0];
  const double sbar = std::sqrt(2.0 * a.c * a.lambda);
  const auto spec = constant_sigma_spec(RiccatiVariant::exponential_general, m, 0.5, 200, {sbar});
  const auto sol = rvm::solve_riccati(spec);
  const auto ref = ode_oracle(-a.theta * a.theta / 2.0, -(a.lambda + a.theta * a.rho * a.nu * sbar),
                              0.5 * a.nu * a.nu * (1.0 - a.rho * a.rho) * sbar * sbar, sol.times);
  EXPECT_LE(sup_diff(sol.psi[0], ref), 1e-6);

  // power general: a = g th^2/(2(1-g)), linear g/(1-g) th rho nu s - lambda, quadratic (nu^2/2)(1 + g rho^2/(1-g)) s^2
  const double g = 0.4;
  const double k = g / (1.0 - g);
  const auto pspec = constant_sigma_spec(RiccatiVariant::power_general, m, g, 200, {sbar});
  const auto psol = rvm::solve_riccati(pspec);
  const auto pref = ode_oracle(k * a.theta * a.theta / 2.0, k * a.theta * a.rho * a.nu * sbar - a.lambda,
                               0.5 * a.nu * a.nu * (1.0 + k * a.rho * a.rho) * sbar * sbar, psol.times);
  EXPECT_LE(sup_diff(psol.psi[0], pref), 1e-6);
}

TEST(Riccati, ExponentialKernelSecondOrder) {
  auto m = exponential_kernel_asset();
  m.assets[0].theta = 1.5;  // larger solution so the error is well above rounding
  const auto& a = m.assets[0];
  const double sbar = std::sqrt(2.0 * a.c * a.lambda);
  double prev = 0.0;
  for (int n : {50, 100, 200, 400}) {
    const auto sol = rvm::solve_riccati(constant_sigma_spec(RiccatiVariant::exponential_general, m, 0.5, n, {sbar}));
    const auto ref = ode_oracle(-a.theta * a.theta / 2.0, -(a.lambda + a.theta * a.rho * a.nu * sbar),
                                0.5 * a.nu * a.nu * (1.0 - a.rho * a.rho) * sbar * sbar, sol.times);
    const double err = sup_diff(sol.psi[0], ref);
    if (prev > 0.0) {
      EXPECT_GE(prev / err, 3.5) << n;
    }
    prev = err;
  }
}

TEST(Riccati, FractionalOrderWithSmoothCoefficients) {
  // constant sigma keeps the integrand smooth in time, leaving the t^alpha
  // behaviour of psi at 0 as the only irregularity
  const auto m = rvm::reference_two_asset_model();
  const auto st = stabilizers(m);
  for (auto v : {RiccatiVariant::power_general, RiccatiVariant::exponential_general}) {
    std::vector<rvm::RiccatiSolution> s;
    for (int n : {100, 200, 400, 3200, 6400}) {
      s.push_back(rvm::solve_riccati(constant_sigma_spec(v, m, 0.2, n, {st[0].value(1.0), st[1].value(1.0)})));
    }
    for (std::size_t i = 0; i < 2; ++i) {
      const double p = std::pow(2.0, 1.0 + m.assets[i].alpha);
      auto err = [&](int lev) {
        double e = 0.0;
        const int stride = 1 << lev;
        for (int k = 0; k <= 100; ++k) {
          const double ref = (p * s[4].psi[i][64 * k] - s[3].psi[i][32 * k]) / (p - 1.0);
          e = std::max(e, std::fabs(s[lev].psi[i][k * stride] - ref));
        }
        return e;
      };
      EXPECT_GE(err(0) / err(1), 0.8 * p) << rvm::to_string(v) << " " << i;
      EXPECT_GE(err(1) / err(2), 0.8 * p) << rvm::to_string(v) << " " << i;
    }
  }
}

TEST(Riccati, DegenerateGeneralConsistency) {
  auto m = rvm::reference_two_asset_model();
  for (auto& a : m.assets) a.rho = -0.6;
  for (double gamma : {0.2, 0.5, 0.8}) {
    const auto deg = rvm::solve_riccati(make_spec(RiccatiVariant::power_degenerate, m, gamma, 200));
    const auto gen = rvm::solve_riccati(make_spec(RiccatiVariant::power_general, m, gamma, 200));
    for (std::size_t i = 0; i < 2; ++i) {
      for (int k = 0; k <= 200; ++k) EXPECT_NEAR(deg.delta * deg.psi[i][k], gen.psi[i][k], 1e-8);
    }
  }
  const auto edeg = rvm::solve_riccati(make_spec(RiccatiVariant::exponential_degenerate, m, 0.5, 200));
  const auto egen = rvm::solve_riccati(make_spec(RiccatiVariant::exponential_general, m, 0.5, 200));
  EXPECT_EQ(edeg.psi, egen.psi);
  EXPECT_EQ(edeg.delta, 1.0);
}

TEST(Riccati, DegenerateRequiresEqualCorrelation) {
  const auto m = rvm::reference_two_asset_model();
  EXPECT_THROW(rvm::solve_riccati(make_spec(RiccatiVariant::power_degenerate, m, 0.2, 20)), rvm::ConfigError);
  EXPECT_THROW(rvm::solve_riccati(make_spec(RiccatiVariant::power_general, m, 1.0, 20)), rvm::ConfigError);
}

TEST(Riccati, SignAndShapeForReferenceModel) {
  const auto m = rvm::reference_two_asset_model();
  const auto pw = rvm::solve_riccati(make_spec(RiccatiVariant::power_general, m, 0.2, 200));
  const auto ex = rvm::solve_riccati(make_spec(RiccatiVariant::exponential_general, m, 0.2, 200));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(pw.psi[i][0], 0.0);
    EXPECT_EQ(ex.psi[i][0], 0.0);
    for (int k = 1; k <= 200; ++k) {
      EXPECT_LT(ex.psi[i][k], 0.0);
      EXPECT_LT(ex.psi[i][k], ex.psi[i][k - 1]);
      EXPECT_GT(pw.psi[i][k], pw.psi[i][k - 1]);
    }
  }
  EXPECT_FALSE(pw.blowup);
}

TEST(Riccati, ExponentialMonotoneInRiskPremium) {
  const auto base = rvm::reference_two_asset_model();
  for (auto [lo, hi] : {std::pair{0.05, 0.1}, {0.1, 0.3}, {0.3, 0.6}}) {
    auto a = base;
    auto b = base;
    for (auto& x : a.assets) x.theta = lo;
    for (auto& x : b.assets) x.theta = hi;
    const auto sa = rvm::solve_riccati(make_spec(RiccatiVariant::exponential_general, a, 0.5, 100));
    const auto sb = rvm::solve_riccati(make_spec(RiccatiVariant::exponential_general, b, 0.5, 100));
    for (std::size_t i = 0; i < 2; ++i) {
      for (int k = 1; k <= 100; ++k) EXPECT_LT(sb.psi[i][k], sa.psi[i][k]);
    }
  }
}

TEST(PsiBound, ReferenceModelAndEdgeCases) {
  const auto m = rvm::reference_two_asset_model();
  const auto spec = make_spec(RiccatiVariant::exponential_general, m, 0.5, 200);
  const auto sol = rvm::solve_riccati(spec);
  std::vector<double> sup;
  for (const auto& s : spec.sigma) sup.push_back(rvm::sigma_sup_norm(s, 1.0));
  const auto rep = rvm::psi_bound_check(sol, m, sup);
  EXPECT_TRUE(rep.pass());
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = m.assets[i];
    const double lb = a.lambda + a.nu * a.rho * a.theta * sup[i];
    EXPECT_DOUBLE_EQ(rep.assets[i].lambda_bar, lb);
    const double bound = a.theta * a.theta / (2.0 * lb) * (1.0 - rvm::mittag_leffler(a.alpha, -lb));
    EXPECT_NEAR(rep.assets[i].bound, bound, 1e-14);
    EXPECT_TRUE(rep.assets[i].applicable);
    EXPECT_LE(rep.assets[i].sup_abs_psi, bound);
  }

  auto pos = m;
  for (auto& a : pos.assets) a.rho = 0.3;
  const auto psol = rvm::solve_riccati(make_spec(RiccatiVariant::exponential_general, pos, 0.5, 50));
  const auto prep = rvm::psi_bound_check(psol, pos, sup);
  EXPECT_EQ(prep.assets[0].lambda_bar, pos.assets[0].lambda);

  auto zero = m;
  for (auto& a : zero.assets) a.theta = 0.0;
  const auto zsol = rvm::solve_riccati(make_spec(RiccatiVariant::exponential_general, zero, 0.5, 50));
  const auto zrep = rvm::psi_bound_check(zsol, zero, sup);
  EXPECT_EQ(zrep.assets[1].bound, 0.0);
  EXPECT_TRUE(zrep.pass());

  auto steep = m;
  steep.assets[0].theta = 2.0;
  steep.assets[0].nu = 5.0;
  steep.assets[0].rho = -1.0;
  const auto srep = rvm::psi_bound_check(zsol, steep, {1.0, 1.0});
  EXPECT_FALSE(srep.assets[0].applicable);

  const auto power = rvm::solve_riccati(make_spec(RiccatiVariant::power_general, m, 0.5, 20));
  EXPECT_THROW(rvm::psi_bound_check(power, m, sup), rvm::ConfigError);
}

TEST(AssumptionGate, ConstantAndTrivialCase) {
  auto m = rvm::reference_two_asset_model();
  for (auto& a : m.assets) a.rho = 1.0;
  EXPECT_DOUBLE_EQ(rvm::assumption_constant(2.0, m), 280.0);

  auto quiet = rvm::reference_two_asset_model();
  for (auto& a : quiet.assets) {
    a.theta = 0.0;
    a.nu = 0.0;
  }
  const auto spec = make_spec(RiccatiVariant::power_general, quiet, 0.2, 20);
  const auto rep = rvm::assumption_gate(quiet, rvm::solve_riccati(spec), spec.sigma, 2.0, 1e-6);
  EXPECT_EQ(rep.lhs, 0.0);
  EXPECT_TRUE(rep.pass);

  const auto ref = rvm::reference_two_asset_model();
  const auto rspec = make_spec(RiccatiVariant::power_general, ref, 0.2, 200);
  const auto rrep = rvm::assumption_gate(ref, rvm::solve_riccati(rspec), rspec.sigma, 2.0);
  EXPECT_GE(rrep.lhs, 0.01);
  EXPECT_TRUE(rrep.pass);
  EXPECT_DOUBLE_EQ(rrep.a, 2.0 * rrep.a_p * rrep.lhs);
  EXPECT_THROW(rvm::assumption_gate(ref, rvm::solve_riccati(rspec), rspec.sigma, 1.0), rvm::ConfigError);
}

TEST(Riccati, PowerBlowupTime) {
  // alpha = 1, constant sigma: psi' = a + b psi + q psi^2 explodes at
  // t* = (pi/2 - atan(b / (2 q w))) / (q w), w^2 = a/q - b^2/(4 q^2)
  rvm::ModelParams m;
  m.assets = {rvm::AssetParams{1.0, 0.5, 2.0, 3.0, 0.5, 0.2, 0.01}};
  m.horizon = 1.0;
  const double gamma = 0.6;
  const double s = 0.8;
  auto spec = constant_sigma_spec(RiccatiVariant::power_general, m, gamma, 200, {s});
  const auto& p = m.assets[0];
  const double k = gamma / (1.0 - gamma);
  const double a = k * p.theta * p.theta / 2.0;
  const double b = k * p.theta * p.rho * p.nu * s - p.lambda;
  const double q = 0.5 * p.nu * p.nu * (1.0 + k * p.rho * p.rho) * s * s;
  const double w = std::sqrt(a / q - b * b / (4.0 * q * q));
  const double t_star = (M_PI / 2.0 - std::atan(b / (2.0 * q * w))) / (q * w);
  ASSERT_LT(t_star, 1.0);
  EXPECT_THROW(rvm::solve_riccati(spec), rvm::RiccatiBlowup);
  try {
    rvm::solve_riccati(spec);
  } catch (const rvm::RiccatiBlowup& e) {
    EXPECT_LT(e.last_valid_time, t_star);
    EXPECT_NEAR(e.t_max, t_star, 5e-3);
  }
  const auto sol = rvm::solve_riccati(spec, true);
  EXPECT_TRUE(sol.blowup);
  EXPECT_LT(sol.horizon(), t_star);
  EXPECT_NEAR(sol.t_max, t_star, 5e-3);
}

}  // namespace
