#pragma once

#include "subrigid/errors.hpp"
#include "subrigid/graph.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace subrigid {

/// Zero-eigenvalue threshold, relative to the largest eigenvalue of S.
inline constexpr double kDefaultRigidityTol = 1e-8;

/// Relative spectral gap below which lambda_{f+1} is treated as repeated.
inline constexpr double kDegenerateGapTol = 1e-6;

/// Dimension of the trivial-motion space in R^d.
constexpr std::size_t trivial_motion_dim(std::size_t d) { return d * (d + 1) / 2; }

/// A graph realized in R^d (d = 2 or 3).
struct Framework {
  Graph graph;
  Positions positions;  // d x n

  Framework() = default;
  Framework(Graph g, Positions x) : graph(std::move(g)), positions(std::move(x)) {
    if (static_cast<std::size_t>(positions.cols()) != graph.size())
      throw std::invalid_argument("positions do not match the node count");
    if (positions.rows() != 2 && positions.rows() != 3)
      throw std::invalid_argument("framework dimension must be 2 or 3");
  }

  std::size_t size() const { return graph.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(positions.rows()); }
  auto position(NodeId i) const { return positions.col(static_cast<Eigen::Index>(i)); }

  /// Stacked copy [x_0; ...; x_{n-1}].
  Eigen::VectorXd stacked() const {
    return Eigen::Map<const Eigen::VectorXd>(positions.data(), positions.size());
  }
};

/// Unit bearing r_ij = (x_i - x_j) / ||x_i - x_j||.
inline Eigen::VectorXd bearing(const Framework& fw, NodeId i, NodeId j) {
  Eigen::VectorXd diff = fw.position(i) - fw.position(j);
  const double len = diff.norm();
  if (!(len > 0.0)) throw CoincidentNodes(i, j);
  return diff / len;
}

/// Normalized rigidity matrix (m x dn), rows in lexicographic edge order.
/// Row for {i, j}, i < j: r_ij^T in block i and -r_ij^T in block j.
inline Eigen::MatrixXd rigidity_matrix(const Framework& fw) {
  const auto d = static_cast<Eigen::Index>(fw.dim());
  const auto edges = fw.graph.edges();
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(edges.size()),
                                            d * static_cast<Eigen::Index>(fw.size()));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [i, j] = edges[k];
    const Eigen::VectorXd r = bearing(fw, i, j);
    const auto row = static_cast<Eigen::Index>(k);
    R.block(row, d * static_cast<Eigen::Index>(i), 1, d) = r.transpose();
    R.block(row, d * static_cast<Eigen::Index>(j), 1, d) = -r.transpose();
  }
  return R;
}

/// Per-edge strains sigma = R u.
inline Eigen::VectorXd strains(const Framework& fw, const Eigen::VectorXd& motion) {
  const auto d = static_cast<Eigen::Index>(fw.dim());
  if (motion.size() != d * static_cast<Eigen::Index>(fw.size()))
    throw std::invalid_argument("motion vector must have length d*n");
  const auto edges = fw.graph.edges();
  Eigen::VectorXd sigma(static_cast<Eigen::Index>(edges.size()));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [i, j] = edges[k];
    sigma(static_cast<Eigen::Index>(k)) =
        bearing(fw, i, j).dot(motion.segment(d * static_cast<Eigen::Index>(i), d) -
                              motion.segment(d * static_cast<Eigen::Index>(j), d));
  }
  return sigma;
}

inline double energy(const Framework& fw, const Eigen::VectorXd& motion) {
  return strains(fw, motion).squaredNorm();
}

/// S = R^T W R with W = diag(weights).
inline Eigen::MatrixXd symmetric_rigidity_matrix(const Eigen::MatrixXd& R,
                                                 const Eigen::VectorXd& weights) {
  if (weights.size() != R.rows()) throw std::invalid_argument("one weight per edge required");
  if ((weights.array() <= 0.0).any()) throw std::invalid_argument("edge weights must be positive");
  return R.transpose() * weights.asDiagonal() * R;
}

/// Assembles S edge by edge: each edge adds w r r^T to the (i,i) and (j,j)
/// blocks and -w r r^T to the (i,j) and (j,i) blocks. Equivalent to
/// R^T W R without forming R. An empty `weights` means W = I.
inline Eigen::MatrixXd assemble_symmetric_rigidity_matrix(const Framework& fw,
                                                          const std::vector<double>& weights = {}) {
  const auto d = static_cast<Eigen::Index>(fw.dim());
  const auto edges = fw.graph.edges();
  if (!weights.empty() && weights.size() != edges.size())
    throw std::invalid_argument("one weight per edge required");
  const auto dn = d * static_cast<Eigen::Index>(fw.size());
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dn, dn);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [i, j] = edges[k];
    const double w = weights.empty() ? 1.0 : weights[k];
    if (!(w > 0.0)) throw std::invalid_argument("edge weights must be positive");
    const Eigen::VectorXd r = bearing(fw, i, j);
    const Eigen::MatrixXd block = w * r * r.transpose();
    const auto bi = d * static_cast<Eigen::Index>(i);
    const auto bj = d * static_cast<Eigen::Index>(j);
    S.block(bi, bi, d, d) += block;
    S.block(bj, bj, d, d) += block;
    S.block(bi, bj, d, d) -= block;
    S.block(bj, bi, d, d) -= block;
  }
  return S;
}

/// Orthonormal basis (dn x f) of rigid-body velocities: d translations plus
/// f - d infinitesimal rotations.
inline Eigen::MatrixXd trivial_motion_basis(const Framework& fw) {
  const std::size_t n = fw.size();
  const std::size_t d = fw.dim();
  if (n < 2) throw std::invalid_argument("trivial motions need at least two nodes");
  const std::size_t f = trivial_motion_dim(d);
  const auto rows = static_cast<Eigen::Index>(d * n);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(f));

  // Rotate about the centroid; only improves conditioning.
  const Eigen::VectorXd centroid = fw.positions.rowwise().mean();
  for (std::size_t i = 0; i < n; ++i) {
    const auto base = static_cast<Eigen::Index>(d * i);
    const Eigen::VectorXd x = fw.position(i) - centroid;
    for (std::size_t a = 0; a < d; ++a) T(base + static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = 1.0;
    if (d == 2) {
      T(base + 0, 2) = -x(1);
      T(base + 1, 2) = x(0);
    } else {
      // omega x x for omega = e_0, e_1, e_2
      T(base + 1, 3) = -x(2);
      T(base + 2, 3) = x(1);
      T(base + 0, 4) = x(2);
      T(base + 2, 4) = -x(0);
      T(base + 0, 5) = -x(1);
      T(base + 1, 5) = x(0);
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(T);
  qr.setThreshold(1e-12);
  if (static_cast<std::size_t>(qr.rank()) < f)
    throw std::invalid_argument("degenerate configuration: rigid motions span fewer than f dimensions");
  Eigen::HouseholderQR<Eigen::MatrixXd> thin(T);
  return thin.householderQ() * Eigen::MatrixXd::Identity(rows, static_cast<Eigen::Index>(f));
}

struct RigidityEigenpair {
  double rho = 0.0;                // lambda_{f+1}(S)
  Eigen::VectorXd nu;              // unit eigenvector
  double next = 0.0;               // lambda_{f+2}(S), or rho if dn == f+1
  double largest = 0.0;            // lambda_max(S)
  bool degenerate = false;         // lambda_{f+1} and lambda_{f+2} not separated
};

/// The (f+1)-th smallest eigenpair of a symmetric PSD S of size dn x dn.
inline RigidityEigenpair rigidity_eigenpair(const Eigen::MatrixXd& S, std::size_t d) {
  if (S.rows() != S.cols() || d == 0 || static_cast<std::size_t>(S.rows()) % d != 0)
    throw std::invalid_argument("S must be square with size divisible by d");
  const std::size_t n = static_cast<std::size_t>(S.rows()) / d;
  if (n <= d) throw FrameworkTooSmall(n, d);
  const auto f = static_cast<Eigen::Index>(trivial_motion_dim(d));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  if (eig.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed");
  const auto& vals = eig.eigenvalues();
  RigidityEigenpair out;
  out.rho = vals(f);
  out.nu = eig.eigenvectors().col(f);
  out.nu.normalize();
  out.next = f + 1 < vals.size() ? vals(f + 1) : vals(f);
  out.largest = vals(vals.size() - 1);
  out.degenerate = f + 1 < vals.size() && (out.next - out.rho) <= kDegenerateGapTol * std::max(out.largest, 1e-300);
  return out;
}

/// Sorted spectrum of S (eigenvalues only).
inline Eigen::VectorXd symmetric_spectrum(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed");
  return eig.eigenvalues();
}

/// Eigenvalue route: lambda_{f+1}(R^T R) > tol * lambda_max.
inline bool passes_eigenvalue_test(const Framework& fw, double tol = kDefaultRigidityTol) {
  if (fw.size() <= fw.dim()) throw FrameworkTooSmall(fw.size(), fw.dim());
  if (fw.graph.edge_count() == 0) return false;
  const auto vals = symmetric_spectrum(assemble_symmetric_rigidity_matrix(fw));
  const auto f = static_cast<Eigen::Index>(trivial_motion_dim(fw.dim()));
  return vals(f) > tol * vals(vals.size() - 1);
}

/// Number of singular values of R with sigma^2 > tol * sigma_max^2.
inline std::size_t numerical_rank(const Eigen::MatrixXd& R, double tol = kDefaultRigidityTol) {
  if (R.size() == 0) return 0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(R);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double cutoff = tol * sv(0) * sv(0);
  std::size_t rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) * sv(k) > cutoff) ++rank;
  return rank;
}

/// Rank route: rank(R) == dn - f.
inline bool passes_rank_test(const Framework& fw, double tol = kDefaultRigidityTol) {
  if (fw.size() <= fw.dim()) throw FrameworkTooSmall(fw.size(), fw.dim());
  return numerical_rank(rigidity_matrix(fw), tol) ==
         fw.dim() * fw.size() - trivial_motion_dim(fw.dim());
}

struct RigidityReport {
  std::size_t rank_R = 0;
  Eigen::VectorXd eigenvalues;  // ascending, size dn
  double rho = 0.0;
  Eigen::VectorXd nu;
  bool rigid = false;
  bool degenerate = false;
  std::size_t f = 0;
};

/// Full report with W = I. Throws std::logic_error if the rank and eigenvalue
/// verdicts disagree.
inline RigidityReport rigidity_report(const Framework& fw, double tol = kDefaultRigidityTol) {
  const std::size_t d = fw.dim();
  if (fw.size() <= d) throw FrameworkTooSmall(fw.size(), d);
  RigidityReport rep;
  rep.f = trivial_motion_dim(d);
  const Eigen::MatrixXd R = rigidity_matrix(fw);
  rep.rank_R = numerical_rank(R, tol);

  const Eigen::MatrixXd S = assemble_symmetric_rigidity_matrix(fw);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  if (eig.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed");
  rep.eigenvalues = eig.eigenvalues();
  const auto f = static_cast<Eigen::Index>(rep.f);
  rep.rho = rep.eigenvalues(f);
  rep.nu = eig.eigenvectors().col(f).normalized();
  const double largest = rep.eigenvalues(rep.eigenvalues.size() - 1);
  rep.rigid = largest > 0.0 && rep.rho > tol * largest;
  if (f + 1 < rep.eigenvalues.size())
    rep.degenerate = rep.eigenvalues(f + 1) - rep.rho <= kDegenerateGapTol * std::max(largest, 1e-300);

  const bool rank_rigid = rep.rank_R == d * fw.size() - rep.f;
  if (rank_rigid != rep.rigid)
    throw std::logic_error("rank and eigenvalue rigidity tests disagree");
  return rep;
}

/// Infinitesimal rigidity with both routes cross-checked.
inline bool is_infinitesimally_rigid(const Framework& fw, double tol = kDefaultRigidityTol) {
  const bool by_eig = passes_eigenvalue_test(fw, tol);
  const bool by_rank = passes_rank_test(fw, tol);
  if (by_eig != by_rank) throw std::logic_error("rank and eigenvalue rigidity tests disagree");
  return by_eig;
}

/// Upper bound 2m / D^2 on the normalized rigidity eigenvalue of a 2-D framework.
inline double diameter_eigenvalue_bound(std::size_t edge_count, std::size_t diam) {
  if (diam < 1) throw std::invalid_argument("diameter must be at least 1");
  return 2.0 * static_cast<double>(edge_count) / (static_cast<double>(diam) * static_cast<double>(diam));
}

inline Eigen::MatrixXd laplacian(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, j] : g.edges()) {
    const auto a = static_cast<Eigen::Index>(i);
    const auto b = static_cast<Eigen::Index>(j);
    L(a, a) += 1.0;
    L(b, b) += 1.0;
    L(a, b) -= 1.0;
    L(b, a) -= 1.0;
  }
  return L;
}

/// Test vector behind the 2m/D^2 bound: u_i = g_{p,i} / D for an endpoint p
/// of a diametral pair, mean-centered. Its Laplacian Rayleigh quotient bounds
/// lambda_2(L) from above and is itself at most 2m/D^2.
inline Eigen::VectorXd diameter_test_vector(const Graph& g) {
  const GeodesicTable table(g);
  const std::size_t diam = table.max_hops();
  if (diam < 1) throw std::invalid_argument("graph needs at least one edge");
  NodeId p = 0;
  for (NodeId i = 0; i < g.size(); ++i)
    for (NodeId j = 0; j < g.size(); ++j)
      if (*table(i, j) == diam) {
        p = i;
        i = g.size() - 1;
        break;
      }
  Eigen::VectorXd u(static_cast<Eigen::Index>(g.size()));
  for (NodeId i = 0; i < g.size(); ++i)
    u(static_cast<Eigen::Index>(i)) = static_cast<double>(*table(p, i)) / static_cast<double>(diam);
  u.array() -= u.mean();
  return u;
}

inline double laplacian_rayleigh_quotient(const Graph& g, const Eigen::VectorXd& u) {
  double num = 0.0;
  for (const auto& [i, j] : g.edges()) {
    const double diff = u(static_cast<Eigen::Index>(i)) - u(static_cast<Eigen::Index>(j));
    num += diff * diff;
  }
  return num / u.squaredNorm();
}

}  // namespace subrigid
