#pragma once

#include "hha/block_tridiag.hpp"
#include "hha/types.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <random>
#include <string>
#include <vector>

/// Recurrent-only switching linear dynamical system.
///
/// Indexing convention used throughout this module:
///   x_{t+1} = A_{z_t} x_t + B_{z_t} u_t + b_{z_t} + nu_t,   nu_t ~ N(0, Q_{z_t})
///   y_t     = x_t + omega_t,                                omega_t ~ N(0, S)
///   z_t     ~ softmax(W_x x_t + W_u u_{t-1} + r)            for t >= 1
///   z_0     ~ uniform,  x_0 ~ N(initial_mean, initial_cov)
/// so z_t labels the (state, last control) cell that x_t occupies and selects
/// the affine dynamics applied at the t -> t+1 transition. The next mode never
/// depends on the previous mode.
namespace hha::rslds {

struct ModeDynamics {
  Mat A;  ///< M x M
  Mat B;  ///< M x N
  Vec b;  ///< M
  Mat Q;  ///< M x M, SPD
};

struct RsldsParams {
  int K = 0;
  int M = 0;
  int N = 0;
  std::vector<ModeDynamics> dynamics;
  Mat C;  ///< identity, never learned
  Mat S;  ///< emission covariance
  Mat W_x;  ///< K x M
  Mat W_u;  ///< K x N
  Vec r;    ///< K
  Vec initial_mean;
  Mat initial_cov;

  /// Zero dynamics offsets, identity A, zero recurrence, unit covariances.
  static RsldsParams identity(int K, int M, int N, double noise = 1.0);

  /// Throws ContractViolation on inconsistent shapes or non-SPD covariances.
  void validate() const;

  /// [A_k B_k b_k] as an M x (M+N+1) block.
  Mat stacked_dynamics(int k) const;
  void set_stacked_dynamics(int k, const Mat& stacked);

  /// [W_x W_u r] as a K x (M+N+1) block.
  Mat stacked_recurrence() const;
  void set_stacked_recurrence(const Mat& stacked);

  bool operator==(const RsldsParams& other) const;
};

/// Matrix-normal inverse-Wishart prior over [A_k B_k b_k], Q_k (shared by all
/// modes) and a Gaussian ridge over the recurrence weights.
struct MniwPrior {
  Mat mean;               ///< M x (M+N+1)
  Mat column_precision;   ///< (M+N+1) x (M+N+1), PSD (zero = flat)
  Mat iw_scale;           ///< M x M
  double iw_dof = 0.0;
  double recurrence_ridge = 1e-2;

  /// Identity-biased dynamics prior: mean [I 0 0], dof M+2, scale 0.1 I.
  static MniwPrior weakly_informative(int M, int N, double iw_scale = 0.1, double column_precision = 1.0);
  /// Improper flat prior: zero precision, zero scale, dof M+1.
  static MniwPrior flat(int M, int N);

  void validate(int M, int N) const;
};

/// One contiguous episode of observations and the controls applied after
/// each observation. Row t of `u` drives the t -> t+1 transition.
struct Sequence {
  Mat y;  ///< T x M
  Mat u;  ///< T x N

  Eigen::Index length() const { return y.rows(); }
};

struct TrajectoryBatch {
  std::vector<Sequence> sequences;

  std::size_t total_steps() const;
  /// Every sequence has length >= 2 and matching y/u shapes.
  void validate(int M, int N) const;
};

struct DiscretePosterior {
  Mat unary;                   ///< T x K
  std::vector<Mat> pairwise;   ///< T-1 blocks of K x K
};

struct ContinuousPosterior {
  Mat mean;                     ///< T x M (Laplace mode)
  std::vector<Mat> cov;         ///< Cov(x_t)
  std::vector<Mat> cross_cov;   ///< Cov(x_{t+1}, x_t)
  double log_det_precision = 0.0;
  double objective = 0.0;
  double gradient_inf_norm = 0.0;
  int newton_iterations = 0;
  bool converged = false;
};

struct VariationalPosterior {
  std::vector<DiscretePosterior> q_z;
  std::vector<ContinuousPosterior> q_x;
};

struct NewtonConfig {
  int max_iters = 50;
  double grad_tol = 1e-6;
  /// Also stop once the predicted ascent falls below this.
  double decrement_tol = 1e-10;
  int max_halvings = 20;
};

struct FitConfig {
  int em_iters = 10;
  NewtonConfig newton{};
  double covariance_floor = 1e-6;
  /// Modes whose total responsibility falls below this keep their parameters.
  double responsibility_floor = 1e-6;
  int recurrence_newton_iters = 25;
  bool learn_emission = true;
};

struct InitConfig {
  int kmeans_iters = 100;
  double covariance_floor = 1e-6;
  double recurrence_ridge = 1e-2;
  double pad_jitter = 1e-3;
};

// ---------------------------------------------------------------------------
// Generative model

/// softmax(W_x x + W_u u + r).
Vec transition_probs(const RsldsParams& params, const Eigen::Ref<const Vec>& x,
                     const Eigen::Ref<const Vec>& u);

/// log softmax(W_x x + W_u u + r), computed stably.
Vec transition_log_probs(const RsldsParams& params, const Eigen::Ref<const Vec>& x,
                         const Eigen::Ref<const Vec>& u);

struct StepSample {
  Mode z_next = 0;
  Vec x_next;
  Vec y_next;
};

StepSample sample_step(const RsldsParams& params, Mode z, const Vec& x, const Vec& u, std::mt19937_64& rng);

struct Simulation {
  Sequence sequence;
  Mat x;                 ///< latent states, T x M
  std::vector<Mode> z;   ///< latent modes
};

/// Rolls the generative model forward under the given control sequence
/// (T x N), starting from x_0 with z_0 drawn from the recurrence at (x_0, 0).
Simulation simulate(const RsldsParams& params, const Vec& x0, const Mat& controls, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Inference

/// E_{q(z)}[log p(y, x, z)] as a function of the continuous trajectory, with
/// the recurrence term evaluated at x itself. Exposed for the Laplace step and
/// for derivative checks.
class ExpectedLogJoint {
 public:
  ExpectedLogJoint(const RsldsParams& params, const Mat& qz_unary, const Sequence& sequence);

  double value(const Mat& x) const;
  Mat gradient(const Mat& x) const;
  BlockTridiagonal negative_hessian(const Mat& x) const;

  /// Expectation of the Gaussian part under q(x) = N(mean, cov) plus the
  /// recurrence term at the mean.
  double expected_value(const ContinuousPosterior& qx) const;

 private:
  const RsldsParams* params_;
  Mat weights_;
  BlockTridiagonal quadratic_;
  Mat linear_;
  double constant_ = 0.0;
  Mat recurrence_offset_;  ///< row t: W_u u_{t-1} + r (t >= 1)
};

DiscretePosterior e_step_discrete(const RsldsParams& params, const ContinuousPosterior& qx, const Sequence& sequence);

/// Damped Newton ascent on the expected log joint followed by the Laplace
/// covariance. `init` defaults to the observations.
ContinuousPosterior e_step_continuous(const RsldsParams& params, const DiscretePosterior& qz,
                                      const Sequence& sequence, const NewtonConfig& config = {},
                                      const Mat* init = nullptr);

/// Point-mass q(x) at the observations; used to bootstrap the first q(z).
ContinuousPosterior observation_posterior(const Sequence& sequence);

// ---------------------------------------------------------------------------
// Learning

/// q(z)-weighted expected sufficient statistics for one mode's dynamics
/// regression x_{t+1} ~ [x_t; u_t; 1].
struct DynamicsStats {
  Mat phi_phi;   ///< D x D
  Mat next_phi;  ///< M x D
  Mat next_next; ///< M x M
  double count = 0.0;

  static DynamicsStats zero(int M, int D);
  DynamicsStats& operator+=(const DynamicsStats& other);
};

std::vector<DynamicsStats> dynamics_statistics(const RsldsParams& params, const VariationalPosterior& posterior,
                                               const TrajectoryBatch& batch);

/// MNIW posterior mean of ([A B b], Q) given statistics.
std::pair<Mat, Mat> mniw_posterior_mean(const MniwPrior& prior, const DynamicsStats& stats, double covariance_floor);

RsldsParams m_step(const RsldsParams& params, const MniwPrior& prior, const VariationalPosterior& posterior,
                   const TrajectoryBatch& batch, const FitConfig& config = {});

/// Ridge-regularised multiclass logistic regression with soft targets,
/// solved by Newton ascent with backtracking. Rows of `targets` are
/// nonnegative weights per class; returns K x D weights.
Mat fit_softmax_regression(const Mat& features, const Mat& targets, const Mat& initial, double ridge, int max_iters);

struct FitResult {
  RsldsParams params;
  VariationalPosterior posterior;
  std::vector<double> elbo_trace;
  std::vector<std::string> warnings;
};

FitResult fit(const RsldsParams& params, const MniwPrior& prior, const TrajectoryBatch& batch,
              const FitConfig& config = {});

/// Surrogate evidence bound: expected log joint (recurrence at the mean)
/// plus entropies of q(z) and q(x).
double surrogate_elbo(const RsldsParams& params, const VariationalPosterior& posterior, const TrajectoryBatch& batch);

struct InitResult {
  RsldsParams params;
  std::vector<std::vector<Mode>> labels;  ///< per sequence, length T-1
  std::vector<std::string> warnings;
};

/// k-means over [y_t, u_t, y_{t+1} - y_t], per-cluster least squares and a
/// logistic regression of cluster labels on (y_t, u_{t-1}).
InitResult initialize(const TrajectoryBatch& batch, int K, int M, int N, std::mt19937_64& rng,
                      const InitConfig& config = {});

/// Most likely mode per step under q(z).
std::vector<Mode> map_modes(const DiscretePosterior& qz);

// ---------------------------------------------------------------------------
// Serialization (versioned, row-major matrices with explicit shapes)

inline constexpr int kParamsFormatVersion = 1;

nlohmann::json to_json(const RsldsParams& params);
RsldsParams params_from_json(const nlohmann::json& doc);

}  // namespace hha::rslds
