#pragma once

// N-player linear-quadratic dynamic game with entropic risk objectives.
//
//   x_{t+1} = A_t x_t + sum_i B_t^i u_t^i + w_t,   w_t ~ N(0, W_t)
//   Psi^i   = sum_{t<T} [ 1/2 x'Q_t^i x + l_t^i'x + c_t^i
//                         + 1/2 sum_j u^j' R_t^{ij} u^j ]
//             + 1/2 x_T'Q_T^i x_T + l_T^i'x_T + c_T^i
//   J^i     = (1/theta_i) log E exp(theta_i Psi^i)       (E[Psi^i] at theta = 0)
//
// Feedback Nash equilibria are affine, u_t^i = -P_t^i x_t - alpha_t^i, and
// are found by a coupled backward recursion on quadratic value functions
// V_t^i(x) = 1/2 x'Z x + zeta'x + n. Each step first applies the exact
// exponential-of-quadratic expectation over w_t, which with S = W^{1/2} reads
//   Sigma~ = S (I - theta S Z S)^{-1} S
//   Z~     = Z + theta Z Sigma~ Z
//   zeta~  = zeta + theta Z Sigma~ zeta
//   n~     = n + theta/2 zeta'Sigma~ zeta - 1/(2 theta) log det(I - theta S Z S)
// (the log-det term tends to tr(W Z)/2 as theta -> 0), and then solves the
// simultaneous first-order conditions of all players. The recursion breaks
// down ("neurotic breakdown") when I - theta S Z S loses definiteness.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace riskdrive::game {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class NeuroticBreakdown : public std::runtime_error {
 public:
  NeuroticBreakdown(const std::string& what, int step)
      : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class NoEquilibrium : public std::runtime_error {
 public:
  NoEquilibrium(const std::string& what, int step)
      : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

enum class SolveStatus { converged, neurotic_breakdown, no_equilibrium };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::neurotic_breakdown: return "neurotic_breakdown";
    case SolveStatus::no_equilibrium: return "no_equilibrium";
  }
  return "unknown";
}

template <typename Scalar = double>
struct LQGame {
  int horizon = 0;
  int state_dim = 0;
  std::vector<int> control_dims;
  std::vector<Scalar> theta;

  std::vector<Mat<Scalar>> A;                             // [t], t < T
  std::vector<std::vector<Mat<Scalar>>> B;                // [t][i]
  std::vector<Mat<Scalar>> W;                             // [t]
  std::vector<std::vector<Mat<Scalar>>> Q;                // [t][i], t <= T
  std::vector<std::vector<Vec<Scalar>>> l;                // [t][i], t <= T
  std::vector<std::vector<Scalar>> c;                     // [t][i], t <= T
  std::vector<std::vector<std::vector<Mat<Scalar>>>> R;   // [t][i][j]

  int players() const { return static_cast<int>(control_dims.size()); }

  /// Zero dynamics and costs with R^{ii} = I, ready to be filled in.
  static LQGame zeros(int state_dim, std::vector<int> control_dims, int horizon) {
    if (state_dim < 1 || horizon < 1 || control_dims.empty()) {
      throw std::invalid_argument("LQGame: need state_dim, horizon, players >= 1");
    }
    LQGame g;
    g.horizon = horizon;
    g.state_dim = state_dim;
    g.control_dims = std::move(control_dims);
    const int n = state_dim;
    const int N = g.players();
    g.theta.assign(static_cast<std::size_t>(N), Scalar(0));
    for (int t = 0; t <= horizon; ++t) {
      if (t < horizon) {
        g.A.push_back(Mat<Scalar>::Identity(n, n));
        g.W.push_back(Mat<Scalar>::Zero(n, n));
        std::vector<Mat<Scalar>> bt;
        std::vector<std::vector<Mat<Scalar>>> rt(static_cast<std::size_t>(N));
        for (int i = 0; i < N; ++i) {
          bt.push_back(Mat<Scalar>::Zero(n, g.control_dims[i]));
          for (int j = 0; j < N; ++j) {
            const int d = g.control_dims[j];
            rt[i].push_back(i == j ? Mat<Scalar>(Mat<Scalar>::Identity(d, d))
                                   : Mat<Scalar>(Mat<Scalar>::Zero(d, d)));
          }
        }
        g.B.push_back(std::move(bt));
        g.R.push_back(std::move(rt));
      }
      g.Q.emplace_back(static_cast<std::size_t>(N), Mat<Scalar>::Zero(n, n));
      g.l.emplace_back(static_cast<std::size_t>(N), Vec<Scalar>::Zero(n));
      g.c.emplace_back(static_cast<std::size_t>(N), Scalar(0));
    }
    return g;
  }

  /// Throws std::invalid_argument on inconsistent dimensions, asymmetric or
  /// indefinite Q/W, or R^{ii} not positive definite.
  void validate(Scalar tol = Scalar(1e-9)) const {
    const int N = players();
    auto fail = [](const std::string& m) { throw std::invalid_argument("LQGame: " + m); };
    if (horizon < 1 || state_dim < 1 || N < 1) fail("empty game");
    if (static_cast<int>(theta.size()) != N) fail("theta size");
    auto sz = [](const auto& v) { return static_cast<int>(v.size()); };
    if (sz(A) != horizon || sz(B) != horizon || sz(W) != horizon || sz(R) != horizon ||
        sz(Q) != horizon + 1 || sz(l) != horizon + 1 || sz(c) != horizon + 1) {
      fail("time dimension");
    }
    for (Scalar th : theta) {
      if (!std::isfinite(static_cast<double>(th))) fail("theta not finite");
    }
    auto psd = [&](const Mat<Scalar>& m) {
      if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * (Scalar(1) + m.cwiseAbs().maxCoeff())) {
        return false;
      }
      Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(m);
      return es.eigenvalues().minCoeff() >= -tol * (Scalar(1) + m.cwiseAbs().maxCoeff());
    };
    const int n = state_dim;
    for (int t = 0; t <= horizon; ++t) {
      if (sz(Q[t]) != N || sz(l[t]) != N || sz(c[t]) != N) fail("player dimension");
      for (int i = 0; i < N; ++i) {
        if (Q[t][i].rows() != n || Q[t][i].cols() != n || l[t][i].size() != n) fail("Q/l shape");
        if (!Q[t][i].allFinite() || !l[t][i].allFinite()) fail("Q/l not finite");
        if (!psd(Q[t][i])) fail("Q not symmetric PSD at t=" + std::to_string(t));
      }
      if (t == horizon) break;
      if (A[t].rows() != n || A[t].cols() != n || !A[t].allFinite()) fail("A shape");
      if (W[t].rows() != n || W[t].cols() != n || !psd(W[t])) fail("W not symmetric PSD");
      if (sz(B[t]) != N || sz(R[t]) != N) fail("player dimension");
      for (int i = 0; i < N; ++i) {
        if (B[t][i].rows() != n || B[t][i].cols() != control_dims[i] || !B[t][i].allFinite()) {
          fail("B shape");
        }
        if (sz(R[t][i]) != N) fail("R dimension");
        for (int j = 0; j < N; ++j) {
          if (R[t][i][j].rows() != control_dims[j] || R[t][i][j].cols() != control_dims[j]) {
            fail("R shape");
          }
          if (!psd(R[t][i][j]) && i == j) fail("R^ii not symmetric");
        }
        Eigen::LLT<Mat<Scalar>> llt(R[t][i][i]);
        if (llt.info() != Eigen::Success) fail("R^ii not positive definite");
      }
    }
  }
};

/// Affine feedback u_t^i = -P[t][i] x_t - alpha[t][i].
template <typename Scalar = double>
struct Policy {
  std::vector<std::vector<Mat<Scalar>>> P;
  std::vector<std::vector<Vec<Scalar>>> alpha;

  Vec<Scalar> control(int t, int i, const Vec<Scalar>& x) const {
    return -P[t][i] * x - alpha[t][i];
  }
};

/// Quadratic value functions V_t^i(x) = 1/2 x'Z x + zeta'x + n for t <= T.
template <typename Scalar = double>
struct ValueRecursion {
  std::vector<std::vector<Mat<Scalar>>> Z;
  std::vector<std::vector<Vec<Scalar>>> zeta;
  std::vector<std::vector<Scalar>> n;

  Scalar value(int t, int i, const Vec<Scalar>& x) const {
    return Scalar(0.5) * x.dot(Z[t][i] * x) + zeta[t][i].dot(x) + n[t][i];
  }
};

template <typename Scalar = double>
struct NashSolution {
  Policy<Scalar> policy;
  ValueRecursion<Scalar> values;
  SolveStatus status = SolveStatus::converged;
  int failed_step = -1;
  int failed_player = -1;

  bool breakdown_flag() const { return status == SolveStatus::neurotic_breakdown; }
  bool ok() const { return status == SolveStatus::converged; }

  /// Entropic risk J^i of the equilibrium from x0.
  Scalar risk(int i, const Vec<Scalar>& x0) const { return values.value(0, i, x0); }

  /// Throws NeuroticBreakdown or NoEquilibrium naming the offending step.
  void require_ok() const {
    if (status == SolveStatus::neurotic_breakdown) {
      throw NeuroticBreakdown("neurotic breakdown at step " + std::to_string(failed_step) +
                                  " for player " + std::to_string(failed_player),
                              failed_step);
    }
    if (status == SolveStatus::no_equilibrium) {
      throw NoEquilibrium("simultaneous best-response system singular at step " +
                              std::to_string(failed_step),
                          failed_step);
    }
  }
};

namespace detail {

template <typename Scalar>
Mat<Scalar> symmetric_sqrt(const Mat<Scalar>& w) {
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(w);
  const Vec<Scalar> ev = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

template <typename Scalar>
struct RiskAdjusted {
  Mat<Scalar> Z;
  Vec<Scalar> zeta;
  Scalar n;
};

// Exact (1/theta) log E exp(theta V(m + w)) as a quadratic in m. Returns
// nullopt when I - theta S Z S is not positive definite.
template <typename Scalar>
std::optional<RiskAdjusted<Scalar>> risk_adjust(const Mat<Scalar>& Z, const Vec<Scalar>& zeta,
                                                Scalar n, const Mat<Scalar>& W,
                                                const Mat<Scalar>& S, bool noiseless,
                                                Scalar theta) {
  if (noiseless) return RiskAdjusted<Scalar>{Z, zeta, n};
  if (theta == Scalar(0)) {
    return RiskAdjusted<Scalar>{Z, zeta, n + Scalar(0.5) * (W.cwiseProduct(Z)).sum()};
  }
  const auto dim = Z.rows();
  const Mat<Scalar> szs = S * Z * S;
  const Mat<Scalar> m = Mat<Scalar>::Identity(dim, dim) - theta * Scalar(0.5) * (szs + szs.transpose());
  Eigen::LLT<Mat<Scalar>> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Mat<Scalar> L = llt.matrixL();
  const Vec<Scalar> diag = L.diagonal();
  if ((diag.array() <= Scalar(0)).any() || !diag.allFinite()) return std::nullopt;
  Scalar logdet(0);
  for (Eigen::Index k = 0; k < diag.size(); ++k) logdet += Scalar(2) * std::log(diag(k));
  const Mat<Scalar> sigma = S * llt.solve(S);
  const Mat<Scalar> zs = Z * sigma;
  RiskAdjusted<Scalar> out;
  out.Z = Z + theta * zs * Z;
  out.Z = Scalar(0.5) * (out.Z + out.Z.transpose());
  out.zeta = zeta + theta * zs * zeta;
  out.n = n + Scalar(0.5) * theta * zeta.dot(sigma * zeta) - logdet / (Scalar(2) * theta);
  if (!out.Z.allFinite() || !out.zeta.allFinite() || !std::isfinite(static_cast<double>(out.n))) {
    return std::nullopt;
  }
  return out;
}

template <typename Scalar>
struct Backward {
  Policy<Scalar> policy;
  ValueRecursion<Scalar> values;
  SolveStatus status = SolveStatus::converged;
  int failed_step = -1;
  int failed_player = -1;
};

// Shared backward pass. With `fixed` given the policy is only evaluated,
// otherwise each step solves the simultaneous first-order conditions.
template <typename Scalar>
Backward<Scalar> backward(const LQGame<Scalar>& g, const Policy<Scalar>* fixed) {
  g.validate();
  const int T = g.horizon;
  const int N = g.players();
  const auto n = static_cast<Eigen::Index>(g.state_dim);
  Backward<Scalar> out;
  auto& P = out.policy.P;
  auto& alpha = out.policy.alpha;
  auto& V = out.values;
  P.assign(static_cast<std::size_t>(T), {});
  alpha.assign(static_cast<std::size_t>(T), {});
  V.Z.assign(static_cast<std::size_t>(T + 1), {});
  V.zeta.assign(static_cast<std::size_t>(T + 1), {});
  V.n.assign(static_cast<std::size_t>(T + 1), {});
  for (int i = 0; i < N; ++i) {
    V.Z[T].push_back(g.Q[T][i]);
    V.zeta[T].push_back(g.l[T][i]);
    V.n[T].push_back(g.c[T][i]);
  }

  std::vector<Eigen::Index> offset(static_cast<std::size_t>(N) + 1, 0);
  for (int i = 0; i < N; ++i) offset[i + 1] = offset[i] + g.control_dims[i];
  const Eigen::Index m_total = offset[N];

  for (int t = T - 1; t >= 0; --t) {
    const bool noiseless = g.W[t].isZero(Scalar(0));
    const Mat<Scalar> S = noiseless ? Mat<Scalar>() : symmetric_sqrt<Scalar>(g.W[t]);
    std::vector<RiskAdjusted<Scalar>> adj;
    for (int i = 0; i < N; ++i) {
      auto a = risk_adjust<Scalar>(V.Z[t + 1][i], V.zeta[t + 1][i], V.n[t + 1][i], g.W[t], S,
                                   noiseless, g.theta[i]);
      if (!a) {
        out.status = SolveStatus::neurotic_breakdown;
        out.failed_step = t;
        out.failed_player = i;
        return out;
      }
      adj.push_back(std::move(*a));
    }

    std::vector<Mat<Scalar>> Pt(static_cast<std::size_t>(N));
    std::vector<Vec<Scalar>> at(static_cast<std::size_t>(N));
    if (fixed) {
      for (int i = 0; i < N; ++i) {
        Pt[i] = fixed->P[t][i];
        at[i] = fixed->alpha[t][i];
      }
    } else {
      Mat<Scalar> M = Mat<Scalar>::Zero(m_total, m_total);
      Mat<Scalar> rhs = Mat<Scalar>::Zero(m_total, n + 1);
      for (int i = 0; i < N; ++i) {
        const Mat<Scalar> bz = g.B[t][i].transpose() * adj[i].Z;
        const Mat<Scalar> hii = g.R[t][i][i] + bz * g.B[t][i];
        // Each player's stage problem must be convex in its own control.
        Eigen::LLT<Mat<Scalar>> soc(Scalar(0.5) * (hii + hii.transpose()));
        if (soc.info() != Eigen::Success) {
          out.status = SolveStatus::neurotic_breakdown;
          out.failed_step = t;
          out.failed_player = i;
          return out;
        }
        for (int j = 0; j < N; ++j) {
          M.block(offset[i], offset[j], g.control_dims[i], g.control_dims[j]) =
              i == j ? hii : Mat<Scalar>(bz * g.B[t][j]);
        }
        rhs.block(offset[i], 0, g.control_dims[i], n) = bz * g.A[t];
        rhs.block(offset[i], n, g.control_dims[i], 1) = g.B[t][i].transpose() * adj[i].zeta;
      }
      Eigen::FullPivLU<Mat<Scalar>> lu(M);
      const Scalar scale = M.cwiseAbs().maxCoeff();
      if (!lu.isInvertible() || lu.rcond() < Scalar(1e-13) || !(scale > Scalar(0))) {
        out.status = SolveStatus::no_equilibrium;
        out.failed_step = t;
        return out;
      }
      const Mat<Scalar> sol = lu.solve(rhs);
      for (int i = 0; i < N; ++i) {
        Pt[i] = sol.block(offset[i], 0, g.control_dims[i], n);
        at[i] = sol.block(offset[i], n, g.control_dims[i], 1);
      }
    }

    Mat<Scalar> F = g.A[t];
    Vec<Scalar> beta = Vec<Scalar>::Zero(n);
    for (int j = 0; j < N; ++j) {
      F -= g.B[t][j] * Pt[j];
      beta -= g.B[t][j] * at[j];
    }
    V.Z[t].resize(static_cast<std::size_t>(N));
    V.zeta[t].resize(static_cast<std::size_t>(N));
    V.n[t].resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
      const auto& za = adj[i].Z;
      Mat<Scalar> Z = g.Q[t][i] + F.transpose() * za * F;
      Vec<Scalar> zeta = g.l[t][i] + F.transpose() * (za * beta + adj[i].zeta);
      Scalar nn = g.c[t][i] + Scalar(0.5) * beta.dot(za * beta) + adj[i].zeta.dot(beta) + adj[i].n;
      for (int j = 0; j < N; ++j) {
        const Mat<Scalar> rp = g.R[t][i][j] * Pt[j];
        Z += Pt[j].transpose() * rp;
        zeta += Pt[j].transpose() * (g.R[t][i][j] * at[j]);
        nn += Scalar(0.5) * at[j].dot(g.R[t][i][j] * at[j]);
      }
      V.Z[t][i] = Scalar(0.5) * (Z + Z.transpose());
      V.zeta[t][i] = std::move(zeta);
      V.n[t][i] = nn;
    }
    P[t] = std::move(Pt);
    alpha[t] = std::move(at);
  }
  return out;
}

}  // namespace detail

/// Feedback Nash equilibrium by the coupled risk-sensitive recursion. Never
/// throws for numerical failure; inspect `status` or call require_ok().
template <typename Scalar>
NashSolution<Scalar> solve_nash(const LQGame<Scalar>& game) {
  auto b = detail::backward<Scalar>(game, nullptr);
  NashSolution<Scalar> s;
  s.policy = std::move(b.policy);
  s.values = std::move(b.values);
  s.status = b.status;
  s.failed_step = b.failed_step;
  s.failed_player = b.failed_player;
  return s;
}

/// Exact entropic risk recursion of every player under a given policy.
/// Throws NeuroticBreakdown when the risk is unbounded.
template <typename Scalar>
ValueRecursion<Scalar> evaluate_policy(const LQGame<Scalar>& game, const Policy<Scalar>& policy) {
  auto b = detail::backward<Scalar>(game, &policy);
  if (b.status != SolveStatus::converged) {
    throw NeuroticBreakdown("policy risk unbounded at step " + std::to_string(b.failed_step),
                            b.failed_step);
  }
  return std::move(b.values);
}

/// (1/theta) log mean exp(theta * psi), or the mean at theta = 0.
template <typename Scalar>
Scalar entropic_risk(Scalar theta, std::span<const Scalar> samples) {
  if (samples.empty()) throw std::invalid_argument("entropic_risk: no samples");
  for (Scalar s : samples) {
    if (!std::isfinite(static_cast<double>(s))) {
      throw std::invalid_argument("entropic_risk: non-finite sample");
    }
  }
  const auto count = static_cast<Scalar>(samples.size());
  if (theta == Scalar(0)) {
    Scalar sum(0);
    for (Scalar s : samples) sum += s;
    return sum / count;
  }
  Scalar peak = -std::numeric_limits<Scalar>::infinity();
  for (Scalar s : samples) peak = std::max(peak, theta * s);
  Scalar acc(0);
  for (Scalar s : samples) acc += std::exp(theta * s - peak);
  const Scalar out = (peak + std::log(acc / count)) / theta;
  if (!std::isfinite(static_cast<double>(out))) {
    throw NeuroticBreakdown("entropic risk overflow (neurotic breakdown)", -1);
  }
  return out;
}

template <typename Scalar = double>
struct RolloutResult {
  std::vector<std::vector<Vec<Scalar>>> trajectories;  // [sample][t], kept on request
  std::vector<std::vector<Scalar>> costs;              // [player][sample]
  std::vector<Scalar> empirical_risk;                  // [player]
};

/// Realized cost of one player along a state/control trajectory.
template <typename Scalar>
Scalar realized_cost(const LQGame<Scalar>& g, int i, const std::vector<Vec<Scalar>>& xs,
                     const std::vector<std::vector<Vec<Scalar>>>& us) {
  Scalar total(0);
  for (int t = 0; t < g.horizon; ++t) {
    total += Scalar(0.5) * xs[t].dot(g.Q[t][i] * xs[t]) + g.l[t][i].dot(xs[t]) + g.c[t][i];
    for (int j = 0; j < g.players(); ++j) {
      total += Scalar(0.5) * us[t][j].dot(g.R[t][i][j] * us[t][j]);
    }
  }
  const auto& xT = xs[g.horizon];
  return total + Scalar(0.5) * xT.dot(g.Q[g.horizon][i] * xT) + g.l[g.horizon][i].dot(xT) +
         g.c[g.horizon][i];
}

/// Closed-loop Monte Carlo. Noise is drawn as W^{1/2} z with z standard
/// normal from mt19937_64(seed); the same seed reproduces the same draws, so
/// two policies rolled out with one seed share their noise.
template <typename Scalar>
RolloutResult<Scalar> rollout(const LQGame<Scalar>& g, const Policy<Scalar>& policy,
                              const Vec<Scalar>& x0, std::uint64_t seed, int n_samples,
                              int keep_trajectories = 0) {
  if (n_samples < 1) throw std::invalid_argument("rollout: n_samples must be >= 1");
  const int N = g.players();
  std::vector<Mat<Scalar>> S;
  bool deterministic = true;
  for (const auto& w : g.W) {
    S.push_back(detail::symmetric_sqrt<Scalar>(w));
    deterministic = deterministic && w.isZero(Scalar(0));
  }
  const int samples = deterministic ? 1 : n_samples;
  RolloutResult<Scalar> out;
  out.costs.assign(static_cast<std::size_t>(N), std::vector<Scalar>(static_cast<std::size_t>(samples)));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec<Scalar>> xs(static_cast<std::size_t>(g.horizon) + 1);
  std::vector<std::vector<Vec<Scalar>>> us(static_cast<std::size_t>(g.horizon),
                                           std::vector<Vec<Scalar>>(static_cast<std::size_t>(N)));
  for (int s = 0; s < samples; ++s) {
    xs[0] = x0;
    for (int t = 0; t < g.horizon; ++t) {
      Vec<Scalar> next = g.A[t] * xs[t];
      for (int i = 0; i < N; ++i) {
        us[t][i] = policy.control(t, i, xs[t]);
        next += g.B[t][i] * us[t][i];
      }
      Vec<Scalar> z(g.state_dim);
      for (int k = 0; k < g.state_dim; ++k) z(k) = static_cast<Scalar>(normal(rng));
      if (!deterministic) next += S[t] * z;
      xs[t + 1] = std::move(next);
    }
    for (int i = 0; i < N; ++i) out.costs[i][s] = realized_cost(g, i, xs, us);
    if (s < keep_trajectories || deterministic) out.trajectories.push_back(xs);
  }
  for (int i = 0; i < N; ++i) {
    out.empirical_risk.push_back(entropic_risk<Scalar>(g.theta[i], out.costs[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON export / import. Matrices are arrays of rows; vectors are flat arrays.
//   { "horizon", "state_dim", "control_dims", "theta",
//     "A": [t], "B": [t][i], "W": [t], "R": [t][i][j],
//     "Q": [t][i], "l": [t][i], "c": [t][i] }   with t <= T for Q, l, c.

namespace detail {

template <typename Scalar>
nlohmann::json mat_json(const Mat<Scalar>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(static_cast<double>(m(r, k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Scalar>
Mat<Scalar> json_mat(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw std::invalid_argument("LQGame json: bad matrix rows");
  }
  Mat<Scalar> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::invalid_argument("LQGame json: bad matrix cols");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      m(r, k) = static_cast<Scalar>(row[static_cast<std::size_t>(k)].template get<double>());
    }
  }
  return m;
}

template <typename Scalar>
nlohmann::json vec_json(const Vec<Scalar>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(static_cast<double>(v(k)));
  return a;
}

template <typename Scalar>
Vec<Scalar> json_vec(const nlohmann::json& j, Eigen::Index size) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
    throw std::invalid_argument("LQGame json: bad vector");
  }
  Vec<Scalar> v(size);
  for (Eigen::Index k = 0; k < size; ++k) {
    v(k) = static_cast<Scalar>(j[static_cast<std::size_t>(k)].template get<double>());
  }
  return v;
}

}  // namespace detail

template <typename Scalar>
nlohmann::json to_json(const LQGame<Scalar>& g) {
  using detail::mat_json;
  using detail::vec_json;
  nlohmann::json j;
  j["horizon"] = g.horizon;
  j["state_dim"] = g.state_dim;
  j["control_dims"] = g.control_dims;
  j["theta"] = nlohmann::json::array();
  for (Scalar th : g.theta) j["theta"].push_back(static_cast<double>(th));
  for (int t = 0; t <= g.horizon; ++t) {
    nlohmann::json q = nlohmann::json::array(), l = nlohmann::json::array(),
                   c = nlohmann::json::array();
    for (int i = 0; i < g.players(); ++i) {
      q.push_back(mat_json(g.Q[t][i]));
      l.push_back(vec_json(g.l[t][i]));
      c.push_back(static_cast<double>(g.c[t][i]));
    }
    j["Q"].push_back(q);
    j["l"].push_back(l);
    j["c"].push_back(c);
    if (t == g.horizon) break;
    j["A"].push_back(mat_json(g.A[t]));
    j["W"].push_back(mat_json(g.W[t]));
    nlohmann::json b = nlohmann::json::array(), r = nlohmann::json::array();
    for (int i = 0; i < g.players(); ++i) {
      b.push_back(mat_json(g.B[t][i]));
      nlohmann::json ri = nlohmann::json::array();
      for (int k = 0; k < g.players(); ++k) ri.push_back(mat_json(g.R[t][i][k]));
      r.push_back(ri);
    }
    j["B"].push_back(b);
    j["R"].push_back(r);
  }
  return j;
}

template <typename Scalar = double>
LQGame<Scalar> game_from_json(const nlohmann::json& j) {
  using detail::json_mat;
  using detail::json_vec;
  auto g = LQGame<Scalar>::zeros(j.at("state_dim").get<int>(),
                                 j.at("control_dims").get<std::vector<int>>(),
                                 j.at("horizon").get<int>());
  const auto n = static_cast<Eigen::Index>(g.state_dim);
  const auto& theta = j.at("theta");
  if (static_cast<int>(theta.size()) != g.players()) {
    throw std::invalid_argument("LQGame json: theta size");
  }
  for (int i = 0; i < g.players(); ++i) g.theta[i] = static_cast<Scalar>(theta[i].get<double>());
  for (int t = 0; t <= g.horizon; ++t) {
    for (int i = 0; i < g.players(); ++i) {
      g.Q[t][i] = json_mat<Scalar>(j.at("Q").at(t).at(i), n, n);
      g.l[t][i] = json_vec<Scalar>(j.at("l").at(t).at(i), n);
      g.c[t][i] = static_cast<Scalar>(j.at("c").at(t).at(i).get<double>());
    }
    if (t == g.horizon) break;
    g.A[t] = json_mat<Scalar>(j.at("A").at(t), n, n);
    g.W[t] = json_mat<Scalar>(j.at("W").at(t), n, n);
    for (int i = 0; i < g.players(); ++i) {
      g.B[t][i] = json_mat<Scalar>(j.at("B").at(t).at(i), n, g.control_dims[i]);
      for (int k = 0; k < g.players(); ++k) {
        g.R[t][i][k] = json_mat<Scalar>(j.at("R").at(t).at(i).at(k), g.control_dims[k],
                                        g.control_dims[k]);
      }
    }
  }
  g.validate();
  return g;
}

}  // namespace riskdrive::game
