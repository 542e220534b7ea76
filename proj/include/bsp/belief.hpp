#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace bsp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Planar robot state [x (m), y (m), theta (rad)]. Heading is kept unwrapped.
using StateVector = Eigen::Vector3d;

inline constexpr int kStateDim = 3;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r <= 0.0) r += two_pi;
  return r - std::numbers::pi;
}

inline constexpr int vech_size(int n) { return n * (n + 1) / 2; }

/// Recovers n from a half-vectorized length; returns -1 when the length is not triangular.
inline int dim_from_vech_size(Eigen::Index len) {
  int n = 0;
  while (vech_size(n) < len) ++n;
  return vech_size(n) == len ? n : -1;
}

/// Index of entry (row, col), row >= col, inside vech of an n x n matrix.
inline constexpr int vech_index(int n, int row, int col) {
  if (row < col) std::swap(row, col);
  return col * n - col * (col - 1) / 2 + (row - col);
}

/// Half-vectorization: lower triangle stacked column by column.
inline VectorXd vech(const MatrixXd& s, double sym_tol = 1e-12) {
  if (s.rows() != s.cols()) throw Error("vech: matrix is not square");
  const int n = static_cast<int>(s.rows());
  double worst = 0.0;
  int wr = 0, wc = 0;
  for (int c = 0; c < n; ++c) {
    for (int r = c + 1; r < n; ++r) {
      const double d = std::abs(s(r, c) - s(c, r));
      if (d > worst) {
        worst = d;
        wr = r;
        wc = c;
      }
    }
  }
  if (worst > sym_tol) {
    std::ostringstream os;
    os << "vech: matrix not symmetric, max asymmetry " << worst << " at (" << wr << ", " << wc << ")";
    throw Error(os.str());
  }
  VectorXd v(vech_size(n));
  int i = 0;
  for (int c = 0; c < n; ++c)
    for (int r = c; r < n; ++r) v(i++) = s(r, c);
  return v;
}

inline MatrixXd unvech(const VectorXd& v, int n) {
  if (n < 0 || v.size() != vech_size(n)) {
    std::ostringstream os;
    os << "unvech: length " << v.size() << " does not match n(n+1)/2 for n = " << n;
    throw Error(os.str());
  }
  MatrixXd s(n, n);
  int i = 0;
  for (int c = 0; c < n; ++c) {
    for (int r = c; r < n; ++r) {
      s(r, c) = v(i);
      s(c, r) = v(i);
      ++i;
    }
  }
  return s;
}

inline constexpr double kPsdTolerance = 1e-9;

/// (S + S^T)/2, with negative eigenvalues clamped to zero when the smallest is below -1e-9.
inline MatrixXd symmetrize_and_clamp(const MatrixXd& s) {
  if (!s.allFinite()) throw Error("symmetrize_and_clamp: non-finite entry");
  MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.eigenvalues().size() == 0 || es.eigenvalues().minCoeff() >= -kPsdTolerance) return sym;
  const VectorXd clamped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
}

inline double max_eigenvalue(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// Symmetric PSD square root via eigendecomposition; tolerates singular input.
inline MatrixXd psd_sqrt(const MatrixXd& s) {
  if (s.size() == 0) return s;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (s + s.transpose()));
  const VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// Gaussian belief: mean plus half-vectorized covariance.
struct Belief {
  VectorXd mean;
  VectorXd cov_vech;

  Belief() = default;
  Belief(VectorXd m, const MatrixXd& cov) : mean(std::move(m)), cov_vech(bsp::vech(cov, 1e-9)) {}

  int state_dim() const { return static_cast<int>(mean.size()); }
  int dim() const { return static_cast<int>(mean.size() + cov_vech.size()); }
  MatrixXd covariance() const { return unvech(cov_vech, state_dim()); }

  /// Stacked [mean; cov_vech], the planner's state variable.
  VectorXd stacked() const {
    VectorXd b(dim());
    b << mean, cov_vech;
    return b;
  }

  static Belief from_stacked(const VectorXd& b, int n) {
    if (b.size() != n + vech_size(n)) throw Error("Belief::from_stacked: dimension mismatch");
    Belief out;
    out.mean = b.head(n);
    out.cov_vech = b.tail(vech_size(n));
    return out;
  }

  friend bool operator==(const Belief& a, const Belief& b) {
    return a.mean.size() == b.mean.size() && a.cov_vech.size() == b.cov_vech.size() && a.mean == b.mean &&
           a.cov_vech == b.cov_vech;
  }
};

inline constexpr int belief_dim(int n) { return n + vech_size(n); }

}  // namespace bsp
