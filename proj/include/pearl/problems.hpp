#pragma once

// Concrete games: finite-sum quadratic minimax, the skew-coupled n-player
// quadratic game, the mobile-robot control game and the sine game whose
// operator is star-cocoercive without being monotone.

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "pearl/core.hpp"
#include "pearl/linalg.hpp"

namespace pearl {

// How stochastic gradients are drawn.
struct OracleNoise {
  enum class Kind { finite_sum, gaussian };
  Kind kind = Kind::finite_sum;
  std::size_t batch = 1;  // finite_sum: samples per draw, with replacement
  double sigma = 0.0;     // gaussian: per-coordinate standard deviation

  static OracleNoise finite_sum(std::size_t batch = 1) { return {Kind::finite_sum, batch, 0.0}; }
  static OracleNoise gaussian(double sigma) { return {Kind::gaussian, 1, sigma}; }
};

inline json to_json(const OracleNoise& n) {
  return json{{"kind", n.kind == OracleNoise::Kind::finite_sum ? "finite_sum" : "gaussian"},
              {"batch", n.batch},
              {"sigma", n.sigma}};
}

inline OracleNoise noise_from_json(const json& j) {
  OracleNoise n;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "finite_sum") {
    n.kind = OracleNoise::Kind::finite_sum;
  } else if (kind == "gaussian") {
    n.kind = OracleNoise::Kind::gaussian;
  } else {
    throw std::invalid_argument("unknown noise kind '" + kind + "'");
  }
  n.batch = j.at("batch").get<std::size_t>();
  n.sigma = j.at("sigma").get<double>();
  return n;
}

// Spectrum intervals for the random quadratic generators.
struct SpectrumBounds {
  double mu_a = 1.0;
  double l_a = 2.0;
  double mu_c = 1.0;
  double l_c = 2.0;
  double l_b = 10.0;

  friend bool operator==(const SpectrumBounds&, const SpectrumBounds&) = default;

  void validate(bool has_c) const {
    auto check = [](double lo, double hi, const char* name) {
      if (!(lo > 0.0) || !(lo <= hi)) {
        throw PreconditionError(std::string("invalid spectrum bounds for ") + name +
                                ": need 0 < mu <= L");
      }
    };
    check(mu_a, l_a, "A");
    if (has_c) check(mu_c, l_c, "C");
    if (!(l_b >= 0.0)) throw PreconditionError("invalid spectrum bound for B: need L_B >= 0");
  }
};

inline json to_json(const SpectrumBounds& b) {
  return json{{"mu_a", b.mu_a}, {"l_a", b.l_a}, {"mu_c", b.mu_c}, {"l_c", b.l_c}, {"l_b", b.l_b}};
}

inline SpectrumBounds bounds_from_json(const json& j) {
  SpectrumBounds b;
  b.mu_a = j.at("mu_a").get<double>();
  b.l_a = j.at("l_a").get<double>();
  b.mu_c = j.at("mu_c").get<double>();
  b.l_c = j.at("l_c").get<double>();
  b.l_b = j.at("l_b").get<double>();
  return b;
}

inline json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::invalid_argument("matrix payload size does not match its shape");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

inline json vector_to_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

inline Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// Provenance of a generated instance, stored in its serialized form.
struct Generation {
  std::uint64_t seed = 0;
  SpectrumBounds bounds;
  bool generated = false;
};

namespace detail {

inline void check_players(std::size_t i, std::size_t n) {
  if (i >= n) throw LayoutError("player index out of range");
}

inline Vector add_gaussian(Vector g, double sigma, RngStream& rng) {
  if (sigma > 0.0) {
    for (Eigen::Index k = 0; k < g.size(); ++k) g(k) += sigma * rng.normal();
  }
  return g;
}

// Stream tags used by the generators, so that every random component has
// its own coordinates.
enum GenTag : std::uint64_t { kTagA = 101, kTagB = 102, kTagC = 103, kTagVecA = 104, kTagVecC = 105 };

inline Vector uniform_vector(std::size_t d, RngStream& rng) {
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = rng.uniform01();
  return v;
}

}  // namespace detail

// Base for games whose operator is affine; caches the equilibrium.
class AffineGame : public GameProblem {
 public:
  std::optional<Vector> equilibrium() const override { return equilibrium_; }

 protected:
  void cache_equilibrium() {
    const auto op = affine_operator();
    try {
      equilibrium_ = solve_linear(op->jacobian, -op->offset);
    } catch (const SingularSystemError&) {
      equilibrium_.reset();
    }
  }

 private:
  std::optional<Vector> equilibrium_;
};

// Two-player zero-sum game built from the finite sum
//   L_m(u, v) = 1/2 <u, A_m u> + <u, B_m v> - 1/2 <v, C_m v> + <a_m, u> - <c_m, v>,
// with f_1 = L and f_2 = -L.
class QuadraticMinimaxGame final : public AffineGame {
 public:
  struct Sample {
    Matrix a_mat, b_mat, c_mat;
    Vector a_vec, c_vec;
  };

  QuadraticMinimaxGame(std::vector<Sample> samples, OracleNoise noise, Generation gen = {})
      : samples_(std::move(samples)), noise_(noise), gen_(gen) {
    if (samples_.empty()) throw PreconditionError("minimax game needs M >= 1 samples");
    d_ = static_cast<std::size_t>(samples_.front().a_mat.rows());
    if (d_ == 0) throw PreconditionError("dimension must be positive");
    const auto d = static_cast<Eigen::Index>(d_);
    for (const auto& s : samples_) {
      if (s.a_mat.rows() != d || s.a_mat.cols() != d || s.b_mat.rows() != d ||
          s.b_mat.cols() != d || s.c_mat.rows() != d || s.c_mat.cols() != d ||
          s.a_vec.size() != d || s.c_vec.size() != d) {
        throw LayoutError("inconsistent sample dimensions in minimax game");
      }
    }
    if (noise_.kind == OracleNoise::Kind::finite_sum && noise_.batch == 0) {
      throw PreconditionError("batch size must be positive");
    }
    layout_ = BlockLayout::uniform(2, d_);
    avg_a_ = Matrix::Zero(d, d);
    avg_b_ = Matrix::Zero(d, d);
    avg_c_ = Matrix::Zero(d, d);
    avg_av_ = Vector::Zero(d);
    avg_cv_ = Vector::Zero(d);
    for (const auto& s : samples_) {
      avg_a_ += s.a_mat;
      avg_b_ += s.b_mat;
      avg_c_ += s.c_mat;
      avg_av_ += s.a_vec;
      avg_cv_ += s.c_vec;
    }
    const double inv = 1.0 / static_cast<double>(samples_.size());
    avg_a_ *= inv;
    avg_b_ *= inv;
    avg_c_ *= inv;
    avg_av_ *= inv;
    avg_cv_ *= inv;
    cache_equilibrium();
  }

  std::string kind() const override { return "quad-minimax"; }
  const BlockLayout& layout() const override { return layout_; }

  std::size_t dim() const { return d_; }
  std::size_t sample_count() const { return samples_.size(); }
  const std::vector<Sample>& samples() const { return samples_; }
  const OracleNoise& noise() const { return noise_; }
  const Generation& generation() const { return gen_; }
  const Matrix& mean_a() const { return avg_a_; }
  const Matrix& mean_b() const { return avg_b_; }
  const Matrix& mean_c() const { return avg_c_; }

  double lagrangian(const Vector& x) const {
    const auto u = x.head(static_cast<Eigen::Index>(d_));
    const auto v = x.tail(static_cast<Eigen::Index>(d_));
    return 0.5 * u.dot(avg_a_ * u) + u.dot(avg_b_ * v) - 0.5 * v.dot(avg_c_ * v) +
           avg_av_.dot(u) - avg_cv_.dot(v);
  }

  double objective(std::size_t i, const Vector& x) const override {
    detail::check_players(i, 2);
    layout_.check_vector(x);
    return i == 0 ? lagrangian(x) : -lagrangian(x);
  }

  Vector grad(std::size_t i, const Vector& x) const override {
    detail::check_players(i, 2);
    layout_.check_vector(x);
    const auto u = x.head(static_cast<Eigen::Index>(d_));
    const auto v = x.tail(static_cast<Eigen::Index>(d_));
    if (i == 0) return avg_a_ * u + avg_b_ * v + avg_av_;
    return avg_c_ * v - avg_b_.transpose() * u + avg_cv_;
  }

  std::optional<AffineOperator> affine_operator() const override {
    const auto d = static_cast<Eigen::Index>(d_);
    AffineOperator op;
    op.jacobian.resize(2 * d, 2 * d);
    op.jacobian << avg_a_, avg_b_, -avg_b_.transpose(), avg_c_;
    op.offset.resize(2 * d);
    op.offset << avg_av_, avg_cv_;
    return op;
  }

  std::optional<std::vector<double>> exact_sigma() const override {
    if (noise_.kind == OracleNoise::Kind::gaussian) {
      const double s = noise_.sigma * std::sqrt(static_cast<double>(d_));
      return std::vector<double>{s, s};
    }
    if (samples_.size() == 1) return std::vector<double>{0.0, 0.0};
    return std::nullopt;
  }

  json to_json() const override {
    json samples = json::array();
    for (const auto& s : samples_) {
      samples.push_back(json{{"A", matrix_to_json(s.a_mat)},
                             {"B", matrix_to_json(s.b_mat)},
                             {"C", matrix_to_json(s.c_mat)},
                             {"a", vector_to_json(s.a_vec)},
                             {"c", vector_to_json(s.c_vec)}});
    }
    return json{{"format", "pearl-problem"},
                {"version", 1},
                {"kind", kind()},
                {"metadata",
                 {{"generated", gen_.generated},
                  {"seed", gen_.seed},
                  {"bounds", pearl::to_json(gen_.bounds)},
                  {"d", d_},
                  {"M", samples_.size()},
                  {"vector_distribution", "uniform[0,1)"}}},
                {"noise", pearl::to_json(noise_)},
                {"samples", std::move(samples)}};
  }

  static std::unique_ptr<QuadraticMinimaxGame> from_json(const json& j) {
    std::vector<Sample> samples;
    for (const auto& s : j.at("samples")) {
      samples.push_back(Sample{matrix_from_json(s.at("A")), matrix_from_json(s.at("B")),
                               matrix_from_json(s.at("C")), vector_from_json(s.at("a")),
                               vector_from_json(s.at("c"))});
    }
    const auto& meta = j.at("metadata");
    Generation gen{meta.at("seed").get<std::uint64_t>(), bounds_from_json(meta.at("bounds")),
                   meta.at("generated").get<bool>()};
    return std::make_unique<QuadraticMinimaxGame>(std::move(samples),
                                                  noise_from_json(j.at("noise")), gen);
  }

 protected:
  Vector draw_grad(std::size_t i, const Vector& x, RngStream& rng) const override {
    if (noise_.kind == OracleNoise::Kind::gaussian) {
      return detail::add_gaussian(grad(i, x), noise_.sigma, rng);
    }
    detail::check_players(i, 2);
    layout_.check_vector(x);
    const auto u = x.head(static_cast<Eigen::Index>(d_));
    const auto v = x.tail(static_cast<Eigen::Index>(d_));
    Vector g = Vector::Zero(static_cast<Eigen::Index>(d_));
    for (std::size_t b = 0; b < noise_.batch; ++b) {
      const auto& s = samples_[rng.uniform_index(samples_.size())];
      if (i == 0) {
        g += s.a_mat * u + s.b_mat * v + s.a_vec;
      } else {
        g += s.c_mat * v - s.b_mat.transpose() * u + s.c_vec;
      }
    }
    return g / static_cast<double>(noise_.batch);
  }

 private:
  std::vector<Sample> samples_;
  OracleNoise noise_;
  Generation gen_;
  std::size_t d_ = 0;
  BlockLayout layout_;
  Matrix avg_a_, avg_b_, avg_c_;
  Vector avg_av_, avg_cv_;
};

inline std::unique_ptr<QuadraticMinimaxGame> generate_quadratic_minimax(
    std::size_t d, std::size_t m, const SpectrumBounds& bounds, std::uint64_t seed,
    OracleNoise noise = OracleNoise::finite_sum()) {
  bounds.validate(true);
  if (d == 0 || m == 0) throw PreconditionError("need d >= 1 and M >= 1");
  std::vector<QuadraticMinimaxGame::Sample> samples;
  samples.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    RngStream ra(seed, detail::kTagA, k, 0), rb(seed, detail::kTagB, k, 0),
        rc(seed, detail::kTagC, k, 0), rva(seed, detail::kTagVecA, k, 0),
        rvc(seed, detail::kTagVecC, k, 0);
    samples.push_back({random_symmetric_with_spectrum(d, bounds.mu_a, bounds.l_a, ra),
                       random_symmetric_with_spectrum(d, 0.0, bounds.l_b, rb),
                       random_symmetric_with_spectrum(d, bounds.mu_c, bounds.l_c, rc),
                       detail::uniform_vector(d, rva), detail::uniform_vector(d, rvc)});
  }
  return std::make_unique<QuadraticMinimaxGame>(std::move(samples), noise,
                                                Generation{seed, bounds, true});
}

// Scalar game L(u, v) = a/2 u^2 + b u v - c/2 v^2 with additive Gaussian
// gradient noise of standard deviation sigma.
inline std::unique_ptr<QuadraticMinimaxGame> scalar_minimax_game(double a, double b, double c,
                                                                 double sigma = 0.0) {
  QuadraticMinimaxGame::Sample s{Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b),
                                 Matrix::Constant(1, 1, c), Vector::Zero(1), Vector::Zero(1)};
  return std::make_unique<QuadraticMinimaxGame>(std::vector{s}, OracleNoise::gaussian(sigma));
}

// n-player game with f_{i,m} = 1/2 <x^i, A_{i,m} x^i> + sum_{j != i} <x^i, B_{i,j,m} x^j>
// + <a_{i,m}, x^i>, where B_{j,i,m} = -B_{i,j,m}^T.
class NPlayerQuadraticGame final : public AffineGame {
 public:
  // a_mats[i][m], a_vecs[i][m]; upper[pair(i,j)][m] for i < j in row-major
  // pair order (0,1), (0,2), ..., (1,2), ...
  NPlayerQuadraticGame(std::size_t n, std::vector<std::vector<Matrix>> a_mats,
                       std::vector<std::vector<Matrix>> upper,
                       std::vector<std::vector<Vector>> a_vecs, OracleNoise noise,
                       Generation gen = {})
      : n_(n), a_mats_(std::move(a_mats)), a_vecs_(std::move(a_vecs)), noise_(noise), gen_(gen) {
    if (n_ < 2) throw PreconditionError("n-player game needs n >= 2");
    if (a_mats_.size() != n_ || a_vecs_.size() != n_ || upper.size() != n_ * (n_ - 1) / 2) {
      throw LayoutError("inconsistent player count in n-player game");
    }
    m_ = a_mats_.front().size();
    if (m_ == 0) throw PreconditionError("need M >= 1");
    d_ = static_cast<std::size_t>(a_mats_.front().front().rows());
    if (noise_.kind == OracleNoise::Kind::finite_sum && noise_.batch == 0) {
      throw PreconditionError("batch size must be positive");
    }
    const auto d = static_cast<Eigen::Index>(d_);
    layout_ = BlockLayout::uniform(n_, d_);
    b_mats_.assign(n_ * n_, {});
    std::size_t pair = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j, ++pair) {
        if (upper[pair].size() != m_) throw LayoutError("coupling sample count mismatch");
        b_mats_[i * n_ + j] = upper[pair];
        auto& lower = b_mats_[j * n_ + i];
        lower.reserve(m_);
        for (const auto& b : upper[pair]) lower.push_back(-b.transpose());
      }
    }
    avg_a_.assign(n_, Matrix::Zero(d, d));
    avg_av_.assign(n_, Vector::Zero(d));
    avg_b_.assign(n_ * n_, Matrix::Zero(d, d));
    const double inv = 1.0 / static_cast<double>(m_);
    for (std::size_t i = 0; i < n_; ++i) {
      if (a_mats_[i].size() != m_ || a_vecs_[i].size() != m_) {
        throw LayoutError("sample count mismatch in n-player game");
      }
      for (std::size_t k = 0; k < m_; ++k) {
        if (a_mats_[i][k].rows() != d || a_mats_[i][k].cols() != d || a_vecs_[i][k].size() != d) {
          throw LayoutError("inconsistent dimensions in n-player game");
        }
        avg_a_[i] += a_mats_[i][k];
        avg_av_[i] += a_vecs_[i][k];
      }
      avg_a_[i] *= inv;
      avg_av_[i] *= inv;
      for (std::size_t j = 0; j < n_; ++j) {
        if (i == j) continue;
        for (const auto& b : b_mats_[i * n_ + j]) avg_b_[i * n_ + j] += b;
        avg_b_[i * n_ + j] *= inv;
      }
    }
    cache_equilibrium();
  }

  std::string kind() const override { return "nplayer"; }
  const BlockLayout& layout() const override { return layout_; }

  std::size_t players() const { return n_; }
  std::size_t dim() const { return d_; }
  std::size_t sample_count() const { return m_; }
  const std::vector<Matrix>& coupling(std::size_t i, std::size_t j) const {
    return b_mats_[i * n_ + j];
  }
  const Matrix& mean_a(std::size_t i) const { return avg_a_[i]; }

  double objective(std::size_t i, const Vector& x) const override {
    detail::check_players(i, n_);
    layout_.check_vector(x);
    const Vector xi = block_of(layout_, x, i);
    double f = 0.5 * xi.dot(avg_a_[i] * xi) + avg_av_[i].dot(xi);
    for (std::size_t j = 0; j < n_; ++j) {
      if (j != i) f += xi.dot(avg_b_[i * n_ + j] * block_of(layout_, x, j));
    }
    return f;
  }

  Vector grad(std::size_t i, const Vector& x) const override {
    detail::check_players(i, n_);
    layout_.check_vector(x);
    Vector g = avg_a_[i] * block_of(layout_, x, i) + avg_av_[i];
    for (std::size_t j = 0; j < n_; ++j) {
      if (j != i) g += avg_b_[i * n_ + j] * block_of(layout_, x, j);
    }
    return g;
  }

  std::optional<AffineOperator> affine_operator() const override {
    const auto d = static_cast<Eigen::Index>(d_);
    const auto total = static_cast<Eigen::Index>(layout_.total());
    AffineOperator op{Matrix::Zero(total, total), Vector(total)};
    for (std::size_t i = 0; i < n_; ++i) {
      const auto oi = static_cast<Eigen::Index>(layout_.offset(i));
      op.jacobian.block(oi, oi, d, d) = avg_a_[i];
      op.offset.segment(oi, d) = avg_av_[i];
      for (std::size_t j = 0; j < n_; ++j) {
        if (j == i) continue;
        const auto oj = static_cast<Eigen::Index>(layout_.offset(j));
        op.jacobian.block(oi, oj, d, d) = avg_b_[i * n_ + j];
      }
    }
    return op;
  }

  std::optional<std::vector<double>> exact_sigma() const override {
    if (noise_.kind == OracleNoise::Kind::gaussian) {
      return std::vector<double>(n_, noise_.sigma * std::sqrt(static_cast<double>(d_)));
    }
    if (m_ == 1) return std::vector<double>(n_, 0.0);
    return std::nullopt;
  }

  json to_json() const override {
    json a = json::array(), av = json::array(), b = json::array();
    for (std::size_t i = 0; i < n_; ++i) {
      json ai = json::array(), avi = json::array();
      for (std::size_t k = 0; k < m_; ++k) {
        ai.push_back(matrix_to_json(a_mats_[i][k]));
        avi.push_back(vector_to_json(a_vecs_[i][k]));
      }
      a.push_back(std::move(ai));
      av.push_back(std::move(avi));
    }
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) {
        json bij = json::array();
        for (const auto& mat : b_mats_[i * n_ + j]) bij.push_back(matrix_to_json(mat));
        b.push_back(json{{"i", i}, {"j", j}, {"samples", std::move(bij)}});
      }
    }
    return json{{"format", "pearl-problem"},
                {"version", 1},
                {"kind", kind()},
                {"metadata",
                 {{"generated", gen_.generated},
                  {"seed", gen_.seed},
                  {"bounds", pearl::to_json(gen_.bounds)},
                  {"n", n_},
                  {"d", d_},
                  {"M", m_},
                  {"vector_distribution", "uniform[0,1)"}}},
                {"noise", pearl::to_json(noise_)},
                {"A", std::move(a)},
                {"a", std::move(av)},
                {"B_upper", std::move(b)}};
  }

  static std::unique_ptr<NPlayerQuadraticGame> from_json(const json& j) {
    const auto& meta = j.at("metadata");
    const auto n = meta.at("n").get<std::size_t>();
    std::vector<std::vector<Matrix>> a(n), upper;
    std::vector<std::vector<Vector>> av(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& m : j.at("A").at(i)) a[i].push_back(matrix_from_json(m));
      for (const auto& v : j.at("a").at(i)) av[i].push_back(vector_from_json(v));
    }
    for (const auto& pair : j.at("B_upper")) {
      std::vector<Matrix> s;
      for (const auto& m : pair.at("samples")) s.push_back(matrix_from_json(m));
      upper.push_back(std::move(s));
    }
    Generation gen{meta.at("seed").get<std::uint64_t>(), bounds_from_json(meta.at("bounds")),
                   meta.at("generated").get<bool>()};
    return std::make_unique<NPlayerQuadraticGame>(n, std::move(a), std::move(upper),
                                                  std::move(av), noise_from_json(j.at("noise")),
                                                  gen);
  }

 protected:
  Vector draw_grad(std::size_t i, const Vector& x, RngStream& rng) const override {
    if (noise_.kind == OracleNoise::Kind::gaussian) {
      return detail::add_gaussian(grad(i, x), noise_.sigma, rng);
    }
    detail::check_players(i, n_);
    layout_.check_vector(x);
    const Vector xi = block_of(layout_, x, i);
    Vector g = Vector::Zero(static_cast<Eigen::Index>(d_));
    for (std::size_t b = 0; b < noise_.batch; ++b) {
      const std::size_t k = rng.uniform_index(m_);
      g += a_mats_[i][k] * xi + a_vecs_[i][k];
      for (std::size_t j = 0; j < n_; ++j) {
        if (j != i) g += b_mats_[i * n_ + j][k] * block_of(layout_, x, j);
      }
    }
    return g / static_cast<double>(noise_.batch);
  }

 private:
  std::size_t n_ = 0, d_ = 0, m_ = 0;
  std::vector<std::vector<Matrix>> a_mats_;
  std::vector<std::vector<Matrix>> b_mats_;  // [i * n + j][m]
  std::vector<std::vector<Vector>> a_vecs_;
  OracleNoise noise_;
  Generation gen_;
  BlockLayout layout_;
  std::vector<Matrix> avg_a_;
  std::vector<Vector> avg_av_;
  std::vector<Matrix> avg_b_;
};

inline std::unique_ptr<NPlayerQuadraticGame> generate_nplayer_quadratic(
    std::size_t n, std::size_t d, std::size_t m, const SpectrumBounds& bounds, std::uint64_t seed,
    OracleNoise noise = OracleNoise::finite_sum()) {
  bounds.validate(false);
  if (n < 2) throw PreconditionError("n-player game needs n >= 2");
  if (d == 0 || m == 0) throw PreconditionError("need d >= 1 and M >= 1");
  std::vector<std::vector<Matrix>> a(n), upper;
  std::vector<std::vector<Vector>> av(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      RngStream ra(seed, detail::kTagA + 1000 * i, k, 0);
      RngStream rv(seed, detail::kTagVecA + 1000 * i, k, 0);
      a[i].push_back(random_symmetric_with_spectrum(d, bounds.mu_a, bounds.l_a, ra));
      av[i].push_back(detail::uniform_vector(d, rv));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      std::vector<Matrix> s;
      for (std::size_t k = 0; k < m; ++k) {
        RngStream rb(seed, detail::kTagB + 1000 * (i * n + j), k, 0);
        s.push_back(random_symmetric_with_spectrum(d, 0.0, bounds.l_b, rb));
      }
      upper.push_back(std::move(s));
    }
  }
  return std::make_unique<NPlayerQuadraticGame>(n, std::move(a), std::move(upper), std::move(av),
                                                noise,
                                                Generation{seed, bounds, true});
}

// Distributed mobile-robot control: robot i pays a_i/2 |x^i - anchor_i|^2 plus
// b_i/2 sum_j |x^i - x^j - h_ij|^2. Scalar positions (d = 1).
class RobotControlGame final : public AffineGame {
 public:
  static constexpr std::size_t kRobots = 5;

  static constexpr std::array<double, kRobots> kAnchors{1.0, -4.0, 8.0, -9.0, 13.0};
  static constexpr std::array<std::array<double, kRobots>, kRobots> kDisplacement{{
      {0.0, 5.0, -7.0, 9.0, -8.0},
      {-5.0, 0.0, -6.0, 2.0, -9.0},
      {7.0, 6.0, 0.0, 7.0, -4.0},
      {-9.0, -2.0, -7.0, 0.0, -2.0},
      {8.0, 9.0, 4.0, 2.0, 0.0},
  }};

  // Default gradient noise variance.
  static constexpr double kNoiseVariance = 100.0;

  explicit RobotControlGame(double noise_variance = kNoiseVariance)
      : noise_variance_(noise_variance), layout_(BlockLayout::uniform(kRobots, 1)) {
    if (noise_variance < 0.0) throw PreconditionError("noise variance must be nonnegative");
    for (std::size_t i = 0; i < kRobots; ++i) {
      const double one_based = static_cast<double>(i + 1);
      a_[i] = 10.0 + one_based / 6.0;
      b_[i] = one_based / 6.0;
    }
    cache_equilibrium();
  }

  std::string kind() const override { return "robot"; }
  const BlockLayout& layout() const override { return layout_; }

  double a(std::size_t i) const { return a_.at(i); }
  double b(std::size_t i) const { return b_.at(i); }
  double h(std::size_t i, std::size_t j) const { return kDisplacement.at(i).at(j); }
  double anchor(std::size_t i) const { return kAnchors.at(i); }
  double noise_variance() const { return noise_variance_; }

  double objective(std::size_t i, const Vector& x) const override {
    detail::check_players(i, kRobots);
    layout_.check_vector(x);
    const double dx = x(static_cast<Eigen::Index>(i)) - kAnchors[i];
    double f = 0.5 * a_[i] * dx * dx;
    for (std::size_t j = 0; j < kRobots; ++j) {
      const double r = x(static_cast<Eigen::Index>(i)) - x(static_cast<Eigen::Index>(j)) -
                       kDisplacement[i][j];
      f += 0.5 * b_[i] * r * r;
    }
    return f;
  }

  Vector grad(std::size_t i, const Vector& x) const override {
    detail::check_players(i, kRobots);
    layout_.check_vector(x);
    const double xi = x(static_cast<Eigen::Index>(i));
    double g = a_[i] * (xi - kAnchors[i]);
    for (std::size_t j = 0; j < kRobots; ++j) {
      g += b_[i] * (xi - x(static_cast<Eigen::Index>(j)) - kDisplacement[i][j]);
    }
    return Vector::Constant(1, g);
  }

  std::optional<AffineOperator> affine_operator() const override {
    const auto n = static_cast<Eigen::Index>(kRobots);
    AffineOperator op{Matrix::Zero(n, n), Vector::Zero(n)};
    for (std::size_t i = 0; i < kRobots; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double hsum = 0.0;
      for (std::size_t j = 0; j < kRobots; ++j) {
        hsum += kDisplacement[i][j];
        if (j != i) op.jacobian(ii, static_cast<Eigen::Index>(j)) = -b_[i];
      }
      op.jacobian(ii, ii) = a_[i] + b_[i] * static_cast<double>(kRobots - 1);
      op.offset(ii) = -a_[i] * kAnchors[i] - b_[i] * hsum;
    }
    return op;
  }

  std::optional<std::vector<double>> exact_sigma() const override {
    return std::vector<double>(kRobots, std::sqrt(noise_variance_));
  }

  json to_json() const override {
    std::vector<std::vector<double>> h;
    for (const auto& row : kDisplacement) h.emplace_back(row.begin(), row.end());
    return json{{"format", "pearl-problem"},
                {"version", 1},
                {"kind", kind()},
                {"metadata", {{"n", kRobots}, {"d", 1}}},
                {"a", std::vector<double>(a_.begin(), a_.end())},
                {"b", std::vector<double>(b_.begin(), b_.end())},
                {"anchors", std::vector<double>(kAnchors.begin(), kAnchors.end())},
                {"h", h},
                {"noise_variance", noise_variance_}};
  }

 protected:
  Vector draw_grad(std::size_t i, const Vector& x, RngStream& rng) const override {
    return detail::add_gaussian(grad(i, x), std::sqrt(noise_variance_), rng);
  }

 private:
  double noise_variance_;
  BlockLayout layout_;
  std::array<double, kRobots> a_{};
  std::array<double, kRobots> b_{};
};

// f_1(u; v) = u^2/2 phi(v), f_2(v; u) = v^2/2 phi(u), phi(t) = mu + (ell - mu) sin^2 t.
// F satisfies QSM and SCO but is neither Lipschitz nor monotone.
class SineNonCocoerciveGame final : public GameProblem {
 public:
  SineNonCocoerciveGame(double mu, double ell, double noise_sigma = 0.0)
      : mu_(mu), ell_(ell), noise_sigma_(noise_sigma), layout_(BlockLayout::uniform(2, 1)) {
    if (!(mu > 0.0) || !(mu < ell)) throw PreconditionError("sine game needs 0 < mu < ell");
    if (noise_sigma < 0.0) throw PreconditionError("noise sigma must be nonnegative");
  }

  std::string kind() const override { return "sine"; }
  const BlockLayout& layout() const override { return layout_; }

  double mu() const { return mu_; }
  double ell() const { return ell_; }

  double phi(double t) const {
    const double s = std::sin(t);
    return mu_ + (ell_ - mu_) * s * s;
  }

  double objective(std::size_t i, const Vector& x) const override {
    detail::check_players(i, 2);
    layout_.check_vector(x);
    const double own = x(static_cast<Eigen::Index>(i));
    const double other = x(static_cast<Eigen::Index>(1 - i));
    return 0.5 * own * own * phi(other);
  }

  Vector grad(std::size_t i, const Vector& x) const override {
    detail::check_players(i, 2);
    layout_.check_vector(x);
    return Vector::Constant(1, x(static_cast<Eigen::Index>(i)) *
                                   phi(x(static_cast<Eigen::Index>(1 - i))));
  }

  // Jacobian of F at (u, v).
  Matrix jacobian(double u, double v) const {
    Matrix j(2, 2);
    j << phi(v), u * (ell_ - mu_) * std::sin(2.0 * v), v * (ell_ - mu_) * std::sin(2.0 * u),
        phi(u);
    return j;
  }

  std::optional<Vector> equilibrium() const override { return Vector::Zero(2); }

  std::optional<ProblemParameters> analytic_params() const override {
    return ProblemParameters::make(mu_, ell_, {ell_, ell_}, *exact_sigma());
  }

  std::optional<std::vector<double>> exact_sigma() const override {
    return std::vector<double>{noise_sigma_, noise_sigma_};
  }

  json to_json() const override {
    return json{{"format", "pearl-problem"}, {"version", 1},         {"kind", kind()},
                {"metadata", {{"n", 2}, {"d", 1}}}, {"mu", mu_}, {"ell", ell_},
                {"noise_sigma", noise_sigma_}};
  }

 protected:
  Vector draw_grad(std::size_t i, const Vector& x, RngStream& rng) const override {
    return detail::add_gaussian(grad(i, x), noise_sigma_, rng);
  }

 private:
  double mu_, ell_, noise_sigma_;
  BlockLayout layout_;
};

// det(DF + DF^T) at u = v = t. Negative means F is not monotone.
inline double sine_symmetric_det(const SineNonCocoerciveGame& game, double t) {
  const Matrix j = game.jacobian(t, t);
  const Matrix s = j + j.transpose();
  return s.determinant();
}

// t = (2N + 1/4) pi, where sin 2t = 1 and the off-diagonal of DF + DF^T is
// 2 (ell - mu) t. At (2N + 1/2) pi it vanishes (sin 2t = 0) and the
// determinant is 4 ell^2 > 0, so that point is not a witness.
inline double sine_witness_point(int n) { return (2.0 * n + 0.25) * std::numbers::pi; }

inline double sine_monotonicity_witness(const SineNonCocoerciveGame& game, int n) {
  return sine_symmetric_det(game, sine_witness_point(n));
}

inline std::unique_ptr<GameProblem> problem_from_json(const json& j) {
  if (j.value("format", "") != "pearl-problem") {
    throw std::invalid_argument("not a pearl-problem document");
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "quad-minimax") return QuadraticMinimaxGame::from_json(j);
  if (kind == "nplayer") return NPlayerQuadraticGame::from_json(j);
  if (kind == "robot") return std::make_unique<RobotControlGame>(j.at("noise_variance").get<double>());
  if (kind == "sine") {
    return std::make_unique<SineNonCocoerciveGame>(j.at("mu").get<double>(), j.at("ell").get<double>(),
                                                   j.at("noise_sigma").get<double>());
  }
  throw std::invalid_argument("unknown problem kind '" + kind + "'");
}

inline std::string problem_hash(const GameProblem& problem) {
  return hex64(fnv1a64(problem.to_json().dump()));
}

}  // namespace pearl
