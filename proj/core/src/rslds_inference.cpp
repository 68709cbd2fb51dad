#include "hha/forward_backward.hpp"
#include "hha/rslds.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace hha::rslds {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double gaussian_log_norm(const Eigen::LLT<Mat>& llt) {
  const auto d = static_cast<double>(llt.matrixLLT().rows());
  return -0.5 * d * kLog2Pi - llt.matrixLLT().diagonal().array().log().sum();
}

Eigen::LLT<Mat> checked_llt(const Mat& m, const std::string& what) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) throw FittingError(what + " is not positive definite");
  return llt;
}

}  // namespace

ExpectedLogJoint::ExpectedLogJoint(const RsldsParams& params, const Mat& qz_unary, const Sequence& seq)
    : params_(&params), weights_(qz_unary) {
  const auto T = seq.length();
  const int M = params.M;
  const int K = params.K;
  require(qz_unary.rows() == T && qz_unary.cols() == K, "expected log joint: q(z) shape");

  quadratic_ = BlockTridiagonal(static_cast<std::size_t>(T), M);
  linear_ = Mat::Zero(T, M);
  constant_ = 0.0;

  const auto s_llt = checked_llt(params.S, "emission covariance");
  const Mat s_inv = s_llt.solve(Mat::Identity(M, M));
  const double s_norm = gaussian_log_norm(s_llt);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Vec y = seq.y.row(t).transpose();
    quadratic_.diag[static_cast<std::size_t>(t)] += s_inv;
    linear_.row(t) += (s_inv * y).transpose();
    constant_ += s_norm - 0.5 * y.dot(s_inv * y);
  }

  const auto init_llt = checked_llt(params.initial_cov, "initial state covariance");
  const Mat init_inv = init_llt.solve(Mat::Identity(M, M));
  quadratic_.diag[0] += init_inv;
  linear_.row(0) += (init_inv * params.initial_mean).transpose();
  constant_ += gaussian_log_norm(init_llt) - 0.5 * params.initial_mean.dot(init_inv * params.initial_mean);

  std::vector<Mat> q_inv(static_cast<std::size_t>(K));
  std::vector<double> q_norm(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto llt = checked_llt(params.dynamics[static_cast<std::size_t>(k)].Q, "dynamics covariance");
    q_inv[static_cast<std::size_t>(k)] = llt.solve(Mat::Identity(M, M));
    q_norm[static_cast<std::size_t>(k)] = gaussian_log_norm(llt);
  }

  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const Vec u = seq.u.row(t).transpose();
    for (int k = 0; k < K; ++k) {
      const double w = qz_unary(t, k);
      if (w == 0.0) continue;
      const auto& d = params.dynamics[static_cast<std::size_t>(k)];
      const Mat& P = q_inv[static_cast<std::size_t>(k)];
      Vec offset = d.b;
      if (params.N > 0) offset += d.B * u;
      const Mat PA = P * d.A;
      const Vec Pd = P * offset;
      quadratic_.diag[ts] += w * d.A.transpose() * PA;
      quadratic_.diag[ts + 1] += w * P;
      quadratic_.lower[ts] -= w * PA;
      linear_.row(t) -= w * (d.A.transpose() * Pd).transpose();
      linear_.row(t + 1) += w * Pd.transpose();
      constant_ += w * (q_norm[static_cast<std::size_t>(k)] - 0.5 * offset.dot(Pd));
    }
  }

  // z_0 is uniform; every later mode is read from the recurrence.
  constant_ += -std::log(static_cast<double>(K)) * qz_unary.row(0).sum();
  recurrence_offset_ = Mat::Zero(T, K);
  for (Eigen::Index t = 1; t < T; ++t) {
    Vec off = params.r;
    if (params.N > 0) off += params.W_u * seq.u.row(t - 1).transpose();
    recurrence_offset_.row(t) = off.transpose();
  }
}

double ExpectedLogJoint::value(const Mat& x) const {
  const Mat jx = quadratic_.multiply(x);
  double v = constant_ + (linear_.array() * x.array()).sum() - 0.5 * (jx.array() * x.array()).sum();
  const auto& p = *params_;
  for (Eigen::Index t = 1; t < x.rows(); ++t) {
    const Vec logits = p.W_x * x.row(t).transpose() + recurrence_offset_.row(t).transpose();
    const double lse = log_sum_exp(logits);
    const Vec w = weights_.row(t).transpose();
    v += w.dot(logits) - w.sum() * lse;
  }
  return v;
}

Mat ExpectedLogJoint::gradient(const Mat& x) const {
  Mat g = linear_ - quadratic_.multiply(x);
  const auto& p = *params_;
  for (Eigen::Index t = 1; t < x.rows(); ++t) {
    Vec logits = p.W_x * x.row(t).transpose() + recurrence_offset_.row(t).transpose();
    const double m = logits.maxCoeff();
    Vec prob = (logits.array() - m).exp();
    prob /= prob.sum();
    const Vec w = weights_.row(t).transpose();
    g.row(t) += (p.W_x.transpose() * (w - w.sum() * prob)).transpose();
  }
  return g;
}

BlockTridiagonal ExpectedLogJoint::negative_hessian(const Mat& x) const {
  BlockTridiagonal h = quadratic_;
  const auto& p = *params_;
  for (Eigen::Index t = 1; t < x.rows(); ++t) {
    Vec logits = p.W_x * x.row(t).transpose() + recurrence_offset_.row(t).transpose();
    const double m = logits.maxCoeff();
    Vec prob = (logits.array() - m).exp();
    prob /= prob.sum();
    const double mass = weights_.row(t).sum();
    const Mat curvature = Mat(prob.asDiagonal()) - prob * prob.transpose();
    h.diag[static_cast<std::size_t>(t)] += mass * p.W_x.transpose() * curvature * p.W_x;
  }
  return h;
}

double ExpectedLogJoint::expected_value(const ContinuousPosterior& qx) const {
  // E[-x'Jx/2] = -m'Jm/2 - tr(J Sigma)/2 for the quadratic part.
  double trace = 0.0;
  for (std::size_t t = 0; t < quadratic_.steps(); ++t) {
    trace += (quadratic_.diag[t].array() * qx.cov[t].array()).sum();
    if (t + 1 < quadratic_.steps()) trace += 2.0 * (quadratic_.lower[t].array() * qx.cross_cov[t].array()).sum();
  }
  return value(qx.mean) - 0.5 * trace;
}

DiscretePosterior e_step_discrete(const RsldsParams& params, const ContinuousPosterior& qx, const Sequence& seq) {
  const auto T = seq.length();
  const int K = params.K;
  const int M = params.M;
  require(qx.mean.rows() == T && qx.mean.cols() == M, "e_step_discrete: q(x) does not cover the sequence");
  require(static_cast<Eigen::Index>(qx.cov.size()) == T, "e_step_discrete: q(x) covariances missing");

  Vec log_initial = Vec::Constant(K, -std::log(static_cast<double>(K)));
  Mat log_lik = Mat::Zero(T, K);
  std::vector<Mat> log_trans(static_cast<std::size_t>(T - 1));

  std::vector<Eigen::LLT<Mat>> q_llt;
  q_llt.reserve(static_cast<std::size_t>(K));
  for (const auto& d : params.dynamics) q_llt.emplace_back(d.Q);

  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const Vec x0 = qx.mean.row(t).transpose();
    const Vec x1 = qx.mean.row(t + 1).transpose();
    const Vec u = seq.u.row(t).transpose();
    for (int k = 0; k < K; ++k) {
      const auto& d = params.dynamics[static_cast<std::size_t>(k)];
      const auto& llt = q_llt[static_cast<std::size_t>(k)];
      Vec resid = x1 - d.A * x0 - d.b;
      if (params.N > 0) resid -= d.B * u;
      // Cov(x_{t+1} - A x_t) under q(x).
      const Mat cross = qx.cross_cov[ts] * d.A.transpose();
      const Mat cov = qx.cov[ts + 1] - cross - cross.transpose() + d.A * qx.cov[ts] * d.A.transpose();
      const double quad = resid.dot(llt.solve(resid)) + llt.solve(cov).trace();
      log_lik(t, k) = gaussian_log_norm(llt) - 0.5 * quad;
    }
    const Vec row = transition_log_probs(params, x1, u);
    Mat lt(K, K);
    for (int i = 0; i < K; ++i) lt.row(i) = row.transpose();
    log_trans[ts] = std::move(lt);
  }

  auto chain = forward_backward(log_initial, log_trans, log_lik);
  return {std::move(chain.unary), std::move(chain.pairwise)};
}

ContinuousPosterior observation_posterior(const Sequence& seq) {
  ContinuousPosterior q;
  const auto T = seq.length();
  const auto M = seq.y.cols();
  q.mean = seq.y;
  q.cov.assign(static_cast<std::size_t>(T), Mat::Zero(M, M));
  q.cross_cov.assign(static_cast<std::size_t>(T > 0 ? T - 1 : 0), Mat::Zero(M, M));
  q.converged = true;
  return q;
}

ContinuousPosterior e_step_continuous(const RsldsParams& params, const DiscretePosterior& qz, const Sequence& seq,
                                      const NewtonConfig& config, const Mat* init) {
  const auto T = seq.length();
  require(qz.unary.rows() == T, "e_step_continuous: q(z) does not cover the sequence");
  for (Eigen::Index t = 0; t < T; ++t)
    require(std::abs(qz.unary.row(t).sum() - 1.0) < 1e-6, "e_step_continuous: q(z) not normalised");

  const ExpectedLogJoint objective(params, qz.unary, seq);
  Mat x = init ? *init : seq.y;
  double f = objective.value(x);

  ContinuousPosterior out;
  Mat grad = objective.gradient(x);
  int iter = 0;
  for (; iter < config.max_iters; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= config.grad_tol) {
      out.converged = true;
      break;
    }
    std::optional<BlockTridiagonalCholesky> factor;
    try {
      factor.emplace(objective.negative_hessian(x));
    } catch (const NumericalError& e) {
      throw FittingError(std::string("Laplace step: Hessian not negative definite (") + e.what() + ")");
    }
    const Mat direction = factor->solve(grad);
    // Half the squared Newton decrement predicts the remaining ascent.
    const double decrement = 0.5 * (grad.array() * direction.array()).sum();
    if (decrement <= config.decrement_tol + 1e-14 * std::abs(f)) {
      out.converged = true;
      break;
    }
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h <= config.max_halvings; ++h) {
      const Mat candidate = x + step * direction;
      const double fc = objective.value(candidate);
      if (std::isfinite(fc) && fc >= f) {
        x = candidate;
        f = fc;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    grad = objective.gradient(x);
    if (!accepted) break;  // no ascent possible at floating-point resolution
  }
  if (!out.converged && grad.lpNorm<Eigen::Infinity>() <= config.grad_tol) out.converged = true;

  BlockTridiagonalCholesky factor = [&] {
    try {
      return BlockTridiagonalCholesky(objective.negative_hessian(x));
    } catch (const NumericalError& e) {
      throw FittingError(std::string("Laplace covariance: Hessian not negative definite (") + e.what() + ")");
    }
  }();
  auto cov = factor.selected_inverse();
  out.mean = std::move(x);
  out.cov = std::move(cov.diag);
  out.cross_cov = std::move(cov.lower);
  out.log_det_precision = factor.log_determinant();
  out.objective = f;
  out.gradient_inf_norm = grad.lpNorm<Eigen::Infinity>();
  out.newton_iterations = iter;
  return out;
}

std::vector<Mode> map_modes(const DiscretePosterior& qz) {
  std::vector<Mode> out(static_cast<std::size_t>(qz.unary.rows()));
  for (Eigen::Index t = 0; t < qz.unary.rows(); ++t) {
    Eigen::Index best = 0;
    qz.unary.row(t).maxCoeff(&best);
    out[static_cast<std::size_t>(t)] = static_cast<Mode>(best);
  }
  return out;
}

}  // namespace hha::rslds
