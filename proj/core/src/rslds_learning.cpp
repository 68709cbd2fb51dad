#include "hha/forward_backward.hpp"
#include "hha/rslds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace hha::rslds {
namespace {

constexpr double kLog2PiE = 2.8378770664093454835606594728112;

Mat floor_covariance(const Mat& cov, double floor) {
  Mat sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  Vec values = eig.eigenvalues().cwiseMax(floor);
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

double softmax_objective(const Mat& features, const Mat& targets, const Mat& weights, double ridge) {
  double total = -0.5 * ridge * weights.squaredNorm();
  const Mat logits = features * weights.transpose();
  for (Eigen::Index n = 0; n < features.rows(); ++n) {
    const Vec row = logits.row(n).transpose();
    total += targets.row(n).dot(row) - targets.row(n).sum() * log_sum_exp(row);
  }
  return total;
}

}  // namespace

DynamicsStats DynamicsStats::zero(int M, int D) {
  return {Mat::Zero(D, D), Mat::Zero(M, D), Mat::Zero(M, M), 0.0};
}

DynamicsStats& DynamicsStats::operator+=(const DynamicsStats& o) {
  phi_phi += o.phi_phi;
  next_phi += o.next_phi;
  next_next += o.next_next;
  count += o.count;
  return *this;
}

std::vector<DynamicsStats> dynamics_statistics(const RsldsParams& params, const VariationalPosterior& posterior,
                                               const TrajectoryBatch& batch) {
  const int M = params.M;
  const int N = params.N;
  const int D = M + N + 1;
  std::vector<DynamicsStats> stats(static_cast<std::size_t>(params.K), DynamicsStats::zero(M, D));
  require(posterior.q_x.size() == batch.sequences.size() && posterior.q_z.size() == batch.sequences.size(),
          "dynamics statistics: posterior does not match batch");

  for (std::size_t s = 0; s < batch.sequences.size(); ++s) {
    const auto& seq = batch.sequences[s];
    const auto& qx = posterior.q_x[s];
    const auto& qz = posterior.q_z[s];
    for (Eigen::Index t = 0; t + 1 < seq.length(); ++t) {
      const auto ts = static_cast<std::size_t>(t);
      Vec phi(D);
      phi << qx.mean.row(t).transpose(), seq.u.row(t).transpose(), 1.0;
      Mat e_phi_phi = phi * phi.transpose();
      e_phi_phi.topLeftCorner(M, M) += qx.cov[ts];
      const Vec next = qx.mean.row(t + 1).transpose();
      Mat e_next_phi = next * phi.transpose();
      e_next_phi.leftCols(M) += qx.cross_cov[ts];
      const Mat e_next_next = next * next.transpose() + qx.cov[ts + 1];
      for (int k = 0; k < params.K; ++k) {
        const double w = qz.unary(t, k);
        if (w == 0.0) continue;
        auto& st = stats[static_cast<std::size_t>(k)];
        st.phi_phi += w * e_phi_phi;
        st.next_phi += w * e_next_phi;
        st.next_next += w * e_next_next;
        st.count += w;
      }
    }
  }
  return stats;
}

std::pair<Mat, Mat> mniw_posterior_mean(const MniwPrior& prior, const DynamicsStats& stats, double covariance_floor) {
  const auto M = prior.mean.rows();
  const Mat precision = prior.column_precision + stats.phi_phi;
  Eigen::LDLT<Mat> ldlt(precision);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw FittingError("m-step: posterior column precision is singular");
  const Mat rhs = prior.mean * prior.column_precision + stats.next_phi;
  const Mat mean = ldlt.solve(rhs.transpose()).transpose();
  const Mat scale = prior.iw_scale + stats.next_next + prior.mean * prior.column_precision * prior.mean.transpose() -
                    mean * precision * mean.transpose();
  const double dof = prior.iw_dof + stats.count;
  const double denom = dof - static_cast<double>(M) - 1.0;
  if (!(denom > 0.0)) throw FittingError("m-step: inverse-Wishart mean undefined (dof too small)");
  return {mean, floor_covariance(scale / denom, covariance_floor)};
}

Mat fit_softmax_regression(const Mat& features, const Mat& targets, const Mat& initial, double ridge, int max_iters) {
  const auto K = targets.cols();
  const auto D = features.cols();
  require(initial.rows() == K && initial.cols() == D, "softmax regression: initial weight shape");
  require(features.rows() == targets.rows(), "softmax regression: row mismatch");
  Mat w = initial;
  double f = softmax_objective(features, targets, w, ridge);
  const auto P = K * D;
  for (int iter = 0; iter < max_iters; ++iter) {
    Mat grad = -ridge * w;
    Mat hess = Mat::Zero(P, P);
    const Mat logits = features * w.transpose();
    for (Eigen::Index n = 0; n < features.rows(); ++n) {
      Vec row = logits.row(n).transpose();
      const double m = row.maxCoeff();
      Vec prob = (row.array() - m).exp();
      prob /= prob.sum();
      const double mass = targets.row(n).sum();
      const Vec phi = features.row(n).transpose();
      grad += (targets.row(n).transpose() - mass * prob) * phi.transpose();
      const Mat outer = phi * phi.transpose();
      const Mat curv = mass * (Mat(prob.asDiagonal()) - prob * prob.transpose());
      for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = 0; j < K; ++j)
          if (curv(i, j) != 0.0) hess.block(i * D, j * D, D, D) += curv(i, j) * outer;
    }
    hess.diagonal().array() += ridge;
    // Row-major flatten of the K x D gradient.
    Vec g(P);
    for (Eigen::Index i = 0; i < K; ++i) g.segment(i * D, D) = grad.row(i).transpose();
    if (g.lpNorm<Eigen::Infinity>() < 1e-9) break;
    Eigen::LDLT<Mat> ldlt(hess);
    const Vec step_flat = ldlt.solve(g);
    Mat step(K, D);
    for (Eigen::Index i = 0; i < K; ++i) step.row(i) = step_flat.segment(i * D, D).transpose();

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h < 30; ++h) {
      const Mat candidate = w + scale * step;
      const double fc = softmax_objective(features, targets, candidate, ridge);
      if (std::isfinite(fc) && fc >= f) {
        accepted = fc - f > 1e-12 * (1.0 + std::abs(f));
        w = candidate;
        f = fc;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
  }
  return w;
}

RsldsParams m_step(const RsldsParams& params, const MniwPrior& prior, const VariationalPosterior& posterior,
                   const TrajectoryBatch& batch, const FitConfig& config) {
  prior.validate(params.M, params.N);
  RsldsParams next = params;
  const int M = params.M;
  const int N = params.N;

  const auto stats = dynamics_statistics(params, posterior, batch);
  for (int k = 0; k < params.K; ++k) {
    const auto& st = stats[static_cast<std::size_t>(k)];
    if (st.count < config.responsibility_floor) continue;
    auto [mean, cov] = mniw_posterior_mean(prior, st, config.covariance_floor);
    next.set_stacked_dynamics(k, mean);
    next.dynamics[static_cast<std::size_t>(k)].Q = cov;
  }

  // Recurrence: soft-target logistic regression of q(z_t) on (x_t, u_{t-1}).
  std::size_t rows = 0;
  for (const auto& seq : batch.sequences) rows += static_cast<std::size_t>(seq.length() - 1);
  const int D = M + N + 1;
  Mat features(static_cast<Eigen::Index>(rows), D);
  Mat targets(static_cast<Eigen::Index>(rows), params.K);
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < batch.sequences.size(); ++s) {
    const auto& seq = batch.sequences[s];
    for (Eigen::Index t = 1; t < seq.length(); ++t, ++row) {
      features.row(row) << posterior.q_x[s].mean.row(t), seq.u.row(t - 1), 1.0;
      targets.row(row) = posterior.q_z[s].unary.row(t);
    }
  }
  if (rows > 0 && config.recurrence_newton_iters > 0)
    next.set_stacked_recurrence(fit_softmax_regression(features, targets, params.stacked_recurrence(),
                                                       prior.recurrence_ridge, config.recurrence_newton_iters));

  if (config.learn_emission) {
    Mat resid = Mat::Zero(M, M);
    double count = 0.0;
    for (std::size_t s = 0; s < batch.sequences.size(); ++s) {
      const auto& seq = batch.sequences[s];
      const auto& qx = posterior.q_x[s];
      for (Eigen::Index t = 0; t < seq.length(); ++t) {
        const Vec e = seq.y.row(t).transpose() - qx.mean.row(t).transpose();
        resid += e * e.transpose() + qx.cov[static_cast<std::size_t>(t)];
        count += 1.0;
      }
    }
    next.S = floor_covariance(resid / count, config.covariance_floor);
  }
  return next;
}

double surrogate_elbo(const RsldsParams& params, const VariationalPosterior& posterior, const TrajectoryBatch& batch) {
  double total = 0.0;
  for (std::size_t s = 0; s < batch.sequences.size(); ++s) {
    const auto& seq = batch.sequences[s];
    const auto& qz = posterior.q_z[s];
    const auto& qx = posterior.q_x[s];
    const ExpectedLogJoint objective(params, qz.unary, seq);
    total += objective.expected_value(qx);

    auto xlogx = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
    double entropy = 0.0;
    const auto T = seq.length();
    if (T == 1) {
      for (Eigen::Index k = 0; k < params.K; ++k) entropy -= xlogx(qz.unary(0, k));
    } else {
      for (const auto& pair : qz.pairwise) entropy -= pair.unaryExpr(xlogx).sum();
      for (Eigen::Index t = 1; t + 1 < T; ++t) entropy += qz.unary.row(t).unaryExpr(xlogx).sum();
    }
    total += entropy;
    total += 0.5 * static_cast<double>(T * params.M) * kLog2PiE - 0.5 * qx.log_det_precision;
  }
  return total;
}

FitResult fit(const RsldsParams& params, const MniwPrior& prior, const TrajectoryBatch& batch,
              const FitConfig& config) {
  params.validate();
  batch.validate(params.M, params.N);
  FitResult result;
  result.params = params;

  auto& post = result.posterior;
  post.q_z.resize(batch.sequences.size());
  post.q_x.resize(batch.sequences.size());
  for (std::size_t s = 0; s < batch.sequences.size(); ++s) {
    post.q_x[s] = observation_posterior(batch.sequences[s]);
    post.q_z[s] = e_step_discrete(params, post.q_x[s], batch.sequences[s]);
  }

  for (int round = 0; round < config.em_iters; ++round) {
    try {
      for (std::size_t s = 0; s < batch.sequences.size(); ++s) {
        const auto& seq = batch.sequences[s];
        post.q_x[s] = e_step_continuous(result.params, post.q_z[s], seq, config.newton);
        if (!post.q_x[s].converged)
          result.warnings.push_back("round " + std::to_string(round) + ": Laplace step did not converge on sequence " +
                                    std::to_string(s) + " (|grad|=" + std::to_string(post.q_x[s].gradient_inf_norm) +
                                    ")");
        post.q_z[s] = e_step_discrete(result.params, post.q_x[s], seq);
      }
      result.params = m_step(result.params, prior, post, batch, config);
    } catch (const FittingError& e) {
      throw FittingError("EM round " + std::to_string(round) + ": " + e.what());
    }
    result.elbo_trace.push_back(surrogate_elbo(result.params, post, batch));
  }
  return result;
}

namespace {

std::vector<int> kmeans(const Mat& data, int K, int iters, std::mt19937_64& rng) {
  const auto n = data.rows();
  // k-means++ seeding.
  Mat centers(K, data.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = data.row(pick(rng));
  Vec dist2 = Vec::Constant(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < K; ++c) {
    for (Eigen::Index i = 0; i < n; ++i)
      dist2(i) = std::min(dist2(i), (data.row(i) - centers.row(c - 1)).squaredNorm());
    const double total = dist2.sum();
    if (!(total > 0.0)) {
      centers.row(c) = data.row(pick(rng));
      continue;
    }
    std::uniform_real_distribution<double> unif(0.0, total);
    const double draw = unif(rng);
    double acc = 0.0;
    Eigen::Index chosen = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += dist2(i);
      if (draw < acc) {
        chosen = i;
        break;
      }
    }
    centers.row(c) = data.row(chosen);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.rowwise() - data.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    Mat sums = Mat::Zero(K, data.cols());
    Vec counts = Vec::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += data.row(i);
      counts(labels[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < K; ++c)
      if (counts(c) > 0) centers.row(c) = sums.row(c) / counts(c);
  }
  return labels;
}

Mat least_squares(const Mat& phi, const Mat& target) {
  Mat gram = phi.transpose() * phi;
  gram.diagonal().array() += 1e-10 * (1.0 + gram.diagonal().maxCoeff());
  return gram.ldlt().solve(phi.transpose() * target).transpose();
}

}  // namespace

InitResult initialize(const TrajectoryBatch& batch, int K, int M, int N, std::mt19937_64& rng,
                      const InitConfig& config) {
  batch.validate(M, N);
  const int D = M + N + 1;
  require(K >= 1, "initialize: K must be positive");
  std::size_t transitions = 0;
  for (const auto& seq : batch.sequences) transitions += static_cast<std::size_t>(seq.length() - 1);
  require(transitions >= static_cast<std::size_t>(K * D), "initialize: batch shorter than K*(M+N+1)");

  const auto n = static_cast<Eigen::Index>(transitions);
  Mat features(n, M + N + M);
  Mat phi(n, D);
  Mat next(n, M);
  Eigen::Index row = 0;
  for (const auto& seq : batch.sequences) {
    for (Eigen::Index t = 0; t + 1 < seq.length(); ++t, ++row) {
      features.row(row) << seq.y.row(t), seq.u.row(t), seq.y.row(t + 1) - seq.y.row(t);
      phi.row(row) << seq.y.row(t), seq.u.row(t), 1.0;
      next.row(row) = seq.y.row(t + 1);
    }
  }
  // Standardise so clusters are not dominated by the widest coordinate.
  const Vec mean = features.colwise().mean().transpose();
  Mat centred = features.rowwise() - mean.transpose();
  const Vec sd = (centred.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
  for (Eigen::Index c = 0; c < centred.cols(); ++c)
    if (sd(c) > 1e-12) centred.col(c) /= sd(c);

  InitResult result;
  const auto labels = K == 1 ? std::vector<int>(static_cast<std::size_t>(n), 0) : kmeans(centred, K, config.kmeans_iters, rng);

  RsldsParams p = RsldsParams::identity(K, M, N);
  const Mat global = least_squares(phi, next);
  const Mat global_resid = next - phi * global.transpose();
  const Mat global_q = floor_covariance(global_resid.transpose() * global_resid / static_cast<double>(n),
                                        config.covariance_floor);

  std::vector<int> populated;
  std::normal_distribution<double> jitter(0.0, config.pad_jitter);
  for (int k = 0; k < K; ++k) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i)
      if (labels[static_cast<std::size_t>(i)] == k) members.push_back(i);
    if (static_cast<int>(members.size()) < D + 1) {
      result.warnings.push_back("initialize: cluster " + std::to_string(k) + " has " +
                                std::to_string(members.size()) + " points; padding with a jittered global fit");
      Mat stacked = global;
      for (Eigen::Index i = 0; i < stacked.rows(); ++i)
        for (Eigen::Index j = 0; j < stacked.cols(); ++j) stacked(i, j) += jitter(rng);
      p.set_stacked_dynamics(k, stacked);
      p.dynamics[static_cast<std::size_t>(k)].Q = global_q;
      continue;
    }
    populated.push_back(k);
    Mat phi_k(static_cast<Eigen::Index>(members.size()), D);
    Mat next_k(static_cast<Eigen::Index>(members.size()), M);
    for (std::size_t i = 0; i < members.size(); ++i) {
      phi_k.row(static_cast<Eigen::Index>(i)) = phi.row(members[i]);
      next_k.row(static_cast<Eigen::Index>(i)) = next.row(members[i]);
    }
    const Mat stacked = K == 1 ? global : least_squares(phi_k, next_k);
    const Mat resid = next_k - phi_k * stacked.transpose();
    p.set_stacked_dynamics(k, stacked);
    p.dynamics[static_cast<std::size_t>(k)].Q =
        floor_covariance(resid.transpose() * resid / static_cast<double>(members.size()), config.covariance_floor);
  }
  if (static_cast<int>(populated.size()) < K)
    result.warnings.push_back("initialize: found " + std::to_string(populated.size()) + " usable clusters for K=" +
                              std::to_string(K));

  // Recurrence from cluster labels: z_t is read from (y_t, u_{t-1}).
  std::size_t rec_rows = 0;
  for (const auto& seq : batch.sequences) rec_rows += static_cast<std::size_t>(std::max<Eigen::Index>(seq.length() - 2, 0));
  result.labels.reserve(batch.sequences.size());
  Mat rec_features(static_cast<Eigen::Index>(rec_rows), D);
  Mat rec_targets = Mat::Zero(static_cast<Eigen::Index>(rec_rows), K);
  Eigen::Index label_row = 0;
  Eigen::Index rec_row = 0;
  for (const auto& seq : batch.sequences) {
    std::vector<Mode> seq_labels;
    for (Eigen::Index t = 0; t + 1 < seq.length(); ++t, ++label_row) {
      const int label = labels[static_cast<std::size_t>(label_row)];
      seq_labels.push_back(label);
      if (t >= 1) {
        rec_features.row(rec_row) << seq.y.row(t), seq.u.row(t - 1), 1.0;
        rec_targets(rec_row, label) = 1.0;
        ++rec_row;
      }
    }
    result.labels.push_back(std::move(seq_labels));
  }
  if (K > 1 && rec_rows > 0)
    p.set_stacked_recurrence(fit_softmax_regression(rec_features, rec_targets, Mat::Zero(K, D),
                                                    config.recurrence_ridge, 50));

  // Emission noise starts well below the smallest dynamics noise.
  double min_q = std::numeric_limits<double>::infinity();
  for (const auto& d : p.dynamics) min_q = std::min(min_q, d.Q.diagonal().minCoeff());
  p.S = std::max(0.1 * min_q, config.covariance_floor) * Mat::Identity(M, M);

  Mat all_y(static_cast<Eigen::Index>(batch.total_steps()), M);
  Eigen::Index yr = 0;
  for (const auto& seq : batch.sequences) {
    all_y.middleRows(yr, seq.length()) = seq.y;
    yr += seq.length();
  }
  const Vec y_mean = all_y.colwise().mean().transpose();
  const Mat y_centred = all_y.rowwise() - y_mean.transpose();
  p.initial_mean = y_mean;
  p.initial_cov = floor_covariance(y_centred.transpose() * y_centred / static_cast<double>(all_y.rows()),
                                   config.covariance_floor);
  result.params = std::move(p);
  return result;
}

}  // namespace hha::rslds
