#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "pearl/core.hpp"

namespace pearl {

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kSvdDimensionLimit = 512;

// Largest singular value by power iteration on A^T A.
inline double spectral_norm_power(const Matrix& a, double tol = 1e-10, int max_iters = 10000) {
  if (a.size() == 0) return 0.0;
  Vector v = Vector::Ones(a.cols()) / std::sqrt(static_cast<double>(a.cols()));
  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector w = a.transpose() * (a * v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = std::sqrt(nw);
    v = w / nw;
    if (std::abs(next - sigma) <= tol * next) return next;
    sigma = next;
  }
  return sigma;
}

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  if (static_cast<std::size_t>(std::max(a.rows(), a.cols())) <= kSvdDimensionLimit) {
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
  }
  return spectral_norm_power(a);
}

inline double lambda_min_symmetric(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double lambda_max_symmetric(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

inline Matrix symmetric_part(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Dense LU with partial pivoting. Refuses (numerically) singular systems
// instead of returning a least-squares answer.
inline Vector solve_linear(const Matrix& a, const Vector& b, double rcond_floor = 1e-13) {
  if (a.rows() != a.cols() || a.rows() != b.size()) {
    throw LayoutError("linear system dimensions do not agree");
  }
  Eigen::PartialPivLU<Matrix> lu(a);
  const double rc = lu.rcond();
  if (!(rc > rcond_floor)) {
    throw SingularSystemError("linear system is singular (rcond = " + std::to_string(rc) +
                              "); equilibrium is not unique");
  }
  Vector x = lu.solve(b);
  // One step of iterative refinement.
  const Vector r = b - a * x;
  x += lu.solve(r);
  return x;
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
  Matrix g(rows, cols);
  for (Eigen::Index c = 0; c < g.cols(); ++c)
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
  return g;
}

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
// of diag(R) folded into Q.
inline Matrix random_orthogonal(std::size_t d, RngStream& rng) {
  const Matrix g = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

// Q diag(lambda) Q^T with lambda uniform in [lo, hi].
inline Matrix random_symmetric_with_spectrum(std::size_t d, double lo, double hi, RngStream& rng) {
  const Matrix q = random_orthogonal(d, rng);
  Vector lambda(static_cast<Eigen::Index>(d));
  for (Eigen::Index k = 0; k < lambda.size(); ++k) lambda(k) = lo + (hi - lo) * rng.uniform01();
  Matrix s = q * lambda.asDiagonal() * q.transpose();
  return symmetric_part(s);
}

// Pairwise summation keeps rounding drift O(log n) for large aggregates.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

inline double pairwise_mean(std::span<const double> v) {
  return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  std::size_t count = 0;

  // Normal-approximation 95% half-width of the mean.
  double ci_half_width() const {
    return count > 1 ? 1.959963984540054 * stddev / std::sqrt(static_cast<double>(count)) : 0.0;
  }
};

inline MeanStd mean_std(std::span<const double> v) {
  MeanStd out;
  out.count = v.size();
  if (v.empty()) return out;
  out.mean = pairwise_mean(v);
  if (v.size() > 1) {
    std::vector<double> sq(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) sq[k] = (v[k] - out.mean) * (v[k] - out.mean);
    out.stddev = std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1));
  }
  return out;
}

// 64-bit FNV-1a, used to fingerprint serialized problems.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int k = 15; k >= 0; --k) {
    s[static_cast<std::size_t>(k)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace pearl
