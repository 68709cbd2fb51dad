#include "hha_oracles/oracles.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <cmath>

namespace hha::oracle {

Vec finite_difference_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    auto at = [&](double offset) {
      Vec y = x;
      y(d) += offset;
      return f(y);
    };
    g(d) = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
  }
  return g;
}

double beta_kl_quadrature(double a1, double b1, double a2, double b2) {
  const double log_norm1 = std::log(boost::math::beta(a1, b1));
  const double log_norm2 = std::log(boost::math::beta(a2, b2));
  // xc is the signed distance to the nearer endpoint; it keeps log(1 - x)
  // accurate where x rounds to 1.
  auto integrand = [&](double x, double xc) {
    const double log_x = x < 0.5 ? std::log(x) : std::log1p(-xc);
    const double log_1mx = x < 0.5 ? std::log1p(-x) : std::log(xc);
    const double lp1 = (a1 - 1) * log_x + (b1 - 1) * log_1mx - log_norm1;
    const double lp2 = (a2 - 1) * log_x + (b2 - 1) * log_1mx - log_norm2;
    return std::exp(lp1) * (lp1 - lp2);
  };
  boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(integrand, 0.0, 1.0);
}

namespace {

double generic_dirichlet_kl(const Vec& a, const Vec& b) {
  using boost::math::digamma;
  const double a0 = a.sum();
  double kl = std::lgamma(a0) - std::lgamma(b.sum());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    kl -= std::lgamma(a(i)) - std::lgamma(b(i));
    kl += (a(i) - b(i)) * (digamma(a(i)) - digamma(a0));
  }
  return kl;
}

}  // namespace

planner::EfeBreakdown exact_efe_one_step(const planner::DiscreteMdp& mdp, Mode s0, Mode a, bool info_gain) {
  const Vec alpha = mdp.concentration(s0, a);
  const Vec p = alpha / alpha.sum();
  planner::EfeBreakdown out;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p(j) <= 0.0) continue;
    out.utility += p(j) * mdp.preference(j);
    if (info_gain) {
      Vec posterior = alpha;
      posterior(j) += 1.0;
      out.param_info_gain += p(j) * generic_dirichlet_kl(posterior, alpha);
      out.state_entropy -= p(j) * std::log(p(j));
    }
  }
  out.total_G = -(out.utility + out.param_info_gain + out.state_entropy);
  return out;
}

}  // namespace hha::oracle
