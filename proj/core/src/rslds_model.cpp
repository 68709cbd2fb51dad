#include "hha/json_io.hpp"
#include "hha/rslds.hpp"

#include <cmath>
#include <string>

namespace hha::rslds {
namespace {

bool is_spd(const Mat& m) {
  if (m.rows() != m.cols() || !m.isApprox(m.transpose(), 1e-8)) return false;
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

Vec gaussian_draw(const Mat& cov, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec e(cov.rows());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = normal(rng);
  Eigen::LLT<Mat> llt(cov);
  return llt.matrixL() * e;
}

}  // namespace

RsldsParams RsldsParams::identity(int K, int M, int N, double noise) {
  RsldsParams p;
  p.K = K;
  p.M = M;
  p.N = N;
  for (int k = 0; k < K; ++k)
    p.dynamics.push_back({Mat::Identity(M, M), Mat::Zero(M, N), Vec::Zero(M), noise * Mat::Identity(M, M)});
  p.C = Mat::Identity(M, M);
  p.S = noise * Mat::Identity(M, M);
  p.W_x = Mat::Zero(K, M);
  p.W_u = Mat::Zero(K, N);
  p.r = Vec::Zero(K);
  p.initial_mean = Vec::Zero(M);
  p.initial_cov = Mat::Identity(M, M);
  return p;
}

void RsldsParams::validate() const {
  require(K >= 1 && M >= 1 && N >= 0, "rslds: invalid dimensions");
  require(static_cast<int>(dynamics.size()) == K, "rslds: expected one dynamics block per mode");
  for (int k = 0; k < K; ++k) {
    const auto& d = dynamics[static_cast<std::size_t>(k)];
    const std::string tag = "rslds: mode " + std::to_string(k);
    require(d.A.rows() == M && d.A.cols() == M, tag + " A shape");
    require(d.B.rows() == M && d.B.cols() == N, tag + " B shape");
    require(d.b.size() == M, tag + " b shape");
    require(is_spd(d.Q), tag + " Q not SPD");
  }
  require(C.rows() == M && C.cols() == M && C.isIdentity(0.0), "rslds: emission C must be the identity");
  require(is_spd(S), "rslds: emission S not SPD");
  require(W_x.rows() == K && W_x.cols() == M, "rslds: W_x shape");
  require(W_u.rows() == K && W_u.cols() == N, "rslds: W_u shape");
  require(r.size() == K, "rslds: r shape");
  require(initial_mean.size() == M && is_spd(initial_cov), "rslds: initial state prior");
}

Mat RsldsParams::stacked_dynamics(int k) const {
  const auto& d = dynamics.at(static_cast<std::size_t>(k));
  Mat out(M, M + N + 1);
  out << d.A, d.B, d.b;
  return out;
}

void RsldsParams::set_stacked_dynamics(int k, const Mat& stacked) {
  auto& d = dynamics.at(static_cast<std::size_t>(k));
  d.A = stacked.leftCols(M);
  d.B = stacked.middleCols(M, N);
  d.b = stacked.col(M + N);
}

Mat RsldsParams::stacked_recurrence() const {
  Mat out(K, M + N + 1);
  out << W_x, W_u, r;
  return out;
}

void RsldsParams::set_stacked_recurrence(const Mat& stacked) {
  W_x = stacked.leftCols(M);
  W_u = stacked.middleCols(M, N);
  r = stacked.col(M + N);
}

bool RsldsParams::operator==(const RsldsParams& o) const {
  if (K != o.K || M != o.M || N != o.N) return false;
  for (int k = 0; k < K; ++k) {
    const auto& a = dynamics[static_cast<std::size_t>(k)];
    const auto& b = o.dynamics[static_cast<std::size_t>(k)];
    if (a.A != b.A || a.B != b.B || a.b != b.b || a.Q != b.Q) return false;
  }
  return C == o.C && S == o.S && W_x == o.W_x && W_u == o.W_u && r == o.r && initial_mean == o.initial_mean &&
         initial_cov == o.initial_cov;
}

MniwPrior MniwPrior::weakly_informative(int M, int N, double iw_scale, double column_precision) {
  const int D = M + N + 1;
  MniwPrior prior;
  prior.mean = Mat::Zero(M, D);
  prior.mean.leftCols(M).setIdentity();
  prior.column_precision = column_precision * Mat::Identity(D, D);
  prior.iw_scale = iw_scale * Mat::Identity(M, M);
  prior.iw_dof = M + 2;
  return prior;
}

MniwPrior MniwPrior::flat(int M, int N) {
  const int D = M + N + 1;
  MniwPrior prior;
  prior.mean = Mat::Zero(M, D);
  prior.column_precision = Mat::Zero(D, D);
  prior.iw_scale = Mat::Zero(M, M);
  prior.iw_dof = M + 1;
  return prior;
}

void MniwPrior::validate(int M, int N) const {
  const int D = M + N + 1;
  require(mean.rows() == M && mean.cols() == D, "mniw: mean shape");
  require(column_precision.rows() == D && column_precision.cols() == D, "mniw: column precision shape");
  require(iw_scale.rows() == M && iw_scale.cols() == M, "mniw: scale shape");
  require(iw_dof >= M + 1, "mniw: dof must be at least M + 1");
  require(recurrence_ridge >= 0.0, "mniw: negative recurrence ridge");
}

std::size_t TrajectoryBatch::total_steps() const {
  std::size_t total = 0;
  for (const auto& s : sequences) total += static_cast<std::size_t>(s.length());
  return total;
}

void TrajectoryBatch::validate(int M, int N) const {
  require(!sequences.empty(), "trajectory batch is empty");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    const std::string tag = "trajectory batch: sequence " + std::to_string(i);
    require(s.y.rows() >= 2, tag + " shorter than 2 steps");
    require(s.y.cols() == M, tag + " observation width");
    require(s.u.rows() == s.y.rows() && s.u.cols() == N, tag + " control shape");
  }
}

Vec transition_log_probs(const RsldsParams& params, const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& u) {
  require(x.size() == params.M && u.size() == params.N, "transition_probs: shape mismatch");
  Vec logits = params.W_x * x + params.r;
  if (params.N > 0) logits += params.W_u * u;
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Vec transition_probs(const RsldsParams& params, const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& u) {
  Vec p = transition_log_probs(params, x, u).array().exp();
  return p / p.sum();
}

namespace {

Mode sample_categorical(const Vec& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double draw = unif(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    acc += p(k);
    if (draw < acc) return static_cast<Mode>(k);
  }
  return static_cast<Mode>(p.size() - 1);
}

}  // namespace

StepSample sample_step(const RsldsParams& params, Mode z, const Vec& x, const Vec& u, std::mt19937_64& rng) {
  require(z >= 0 && z < params.K, "sample_step: mode index out of range");
  require(x.size() == params.M && u.size() == params.N, "sample_step: shape mismatch");
  const auto& d = params.dynamics[static_cast<std::size_t>(z)];
  StepSample out;
  out.x_next = d.A * x + d.b + gaussian_draw(d.Q, rng);
  if (params.N > 0) out.x_next += d.B * u;
  out.y_next = params.C * out.x_next + gaussian_draw(params.S, rng);
  out.z_next = sample_categorical(transition_probs(params, out.x_next, u), rng);
  return out;
}

Simulation simulate(const RsldsParams& params, const Vec& x0, const Mat& controls, std::mt19937_64& rng) {
  const auto T = controls.rows();
  require(T >= 1 && controls.cols() == params.N, "simulate: control shape");
  Simulation sim;
  sim.x.resize(T, params.M);
  sim.sequence.y.resize(T, params.M);
  sim.sequence.u = controls;
  sim.z.resize(static_cast<std::size_t>(T));

  Vec x = x0;
  Mode z = sample_categorical(transition_probs(params, x, Vec::Zero(params.N)), rng);
  sim.x.row(0) = x.transpose();
  sim.sequence.y.row(0) = (x + gaussian_draw(params.S, rng)).transpose();
  sim.z[0] = z;
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const Vec u = controls.row(t).transpose();
    auto s = sample_step(params, z, x, u, rng);
    x = s.x_next;
    z = s.z_next;
    sim.x.row(t + 1) = x.transpose();
    sim.sequence.y.row(t + 1) = s.y_next.transpose();
    sim.z[static_cast<std::size_t>(t + 1)] = z;
  }
  return sim;
}

nlohmann::json to_json(const RsldsParams& p) {
  using io::matrix_to_json;
  using io::vector_to_json;
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& d : p.dynamics)
    modes.push_back({{"A", matrix_to_json(d.A)},
                     {"B", matrix_to_json(d.B)},
                     {"b", vector_to_json(d.b)},
                     {"Q", matrix_to_json(d.Q)}});
  return {{"format", "hha.rslds_params"},
          {"version", kParamsFormatVersion},
          {"K", p.K},
          {"M", p.M},
          {"N", p.N},
          {"modes", std::move(modes)},
          {"C", matrix_to_json(p.C)},
          {"S", matrix_to_json(p.S)},
          {"W_x", matrix_to_json(p.W_x)},
          {"W_u", matrix_to_json(p.W_u)},
          {"r", vector_to_json(p.r)},
          {"initial_mean", vector_to_json(p.initial_mean)},
          {"initial_cov", matrix_to_json(p.initial_cov)}};
}

RsldsParams params_from_json(const nlohmann::json& doc) {
  using io::matrix_from_json;
  using io::vector_from_json;
  require(doc.value("format", std::string{}) == "hha.rslds_params", "params json: unexpected format tag");
  require(doc.at("version").get<int>() == kParamsFormatVersion, "params json: unsupported version");
  RsldsParams p;
  p.K = doc.at("K").get<int>();
  p.M = doc.at("M").get<int>();
  p.N = doc.at("N").get<int>();
  for (const auto& m : doc.at("modes"))
    p.dynamics.push_back({matrix_from_json(m.at("A")), matrix_from_json(m.at("B")), vector_from_json(m.at("b")),
                          matrix_from_json(m.at("Q"))});
  p.C = matrix_from_json(doc.at("C"));
  p.S = matrix_from_json(doc.at("S"));
  p.W_x = matrix_from_json(doc.at("W_x"));
  p.W_u = matrix_from_json(doc.at("W_u"));
  p.r = vector_from_json(doc.at("r"));
  p.initial_mean = vector_from_json(doc.at("initial_mean"));
  p.initial_cov = matrix_from_json(doc.at("initial_cov"));
  p.validate();
  return p;
}

}  // namespace hha::rslds
