#pragma once

// Domain types shared by every part of the library: block layouts, joint
// actions, gradient oracles and the keyed random streams that drive them.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace pearl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using json = nlohmann::json;

class LayoutError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Per-player dimensions d_1..d_n of a joint action, with D = sum d_i.
class BlockLayout {
 public:
  BlockLayout() = default;

  explicit BlockLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw LayoutError("layout needs at least one player");
    offsets_.reserve(dims_.size());
    std::size_t acc = 0;
    for (std::size_t d : dims_) {
      if (d == 0) throw LayoutError("player dimension must be positive");
      offsets_.push_back(acc);
      acc += d;
    }
    total_ = acc;
  }

  static BlockLayout uniform(std::size_t n, std::size_t d) {
    return BlockLayout(std::vector<std::size_t>(n, d));
  }

  std::size_t players() const { return dims_.size(); }
  std::size_t total() const { return total_; }
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::size_t dim(std::size_t i) const {
    check_player(i);
    return dims_[i];
  }
  std::size_t offset(std::size_t i) const {
    check_player(i);
    return offsets_[i];
  }

  void check_player(std::size_t i) const {
    if (i >= dims_.size()) {
      throw LayoutError("player index " + std::to_string(i) + " out of range [0, " +
                        std::to_string(dims_.size()) + ")");
    }
  }

  void check_vector(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != total_) {
      throw LayoutError("vector of length " + std::to_string(x.size()) +
                        " does not match layout dimension " + std::to_string(total_));
    }
  }

  friend bool operator==(const BlockLayout& a, const BlockLayout& b) { return a.dims_ == b.dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

// Block i of a flat joint vector, as a view (no copy).
inline auto block_of(const BlockLayout& layout, const Vector& x, std::size_t i) {
  return x.segment(static_cast<Eigen::Index>(layout.offset(i)),
                   static_cast<Eigen::Index>(layout.dim(i)));
}

inline auto block_of(const BlockLayout& layout, Vector& x, std::size_t i) {
  return x.segment(static_cast<Eigen::Index>(layout.offset(i)),
                   static_cast<Eigen::Index>(layout.dim(i)));
}

// The joint action x = (x^1, ..., x^n) stored as one contiguous vector.
struct JointAction {
  BlockLayout layout;
  Vector values;

  JointAction() = default;
  JointAction(BlockLayout l, Vector v) : layout(std::move(l)), values(std::move(v)) {
    layout.check_vector(values);
  }

  static JointAction constant(const BlockLayout& l, double value) {
    return JointAction(l, Vector::Constant(static_cast<Eigen::Index>(l.total()), value));
  }

  Vector block(std::size_t i) const { return block_of(layout, values, i); }

  // x^{-i}: every coordinate except block i, in player order.
  Vector complement(std::size_t i) const {
    const auto off = static_cast<Eigen::Index>(layout.offset(i));
    const auto d = static_cast<Eigen::Index>(layout.dim(i));
    const auto total = static_cast<Eigen::Index>(layout.total());
    Vector out(total - d);
    out.head(off) = values.head(off);
    out.tail(total - off - d) = values.tail(total - off - d);
    return out;
  }

  static JointAction reassemble(const BlockLayout& layout, const Vector& block,
                                const Vector& complement, std::size_t i) {
    const auto off = static_cast<Eigen::Index>(layout.offset(i));
    const auto d = static_cast<Eigen::Index>(layout.dim(i));
    const auto total = static_cast<Eigen::Index>(layout.total());
    if (block.size() != d || complement.size() != total - d) {
      throw LayoutError("block/complement sizes do not match the layout");
    }
    Vector v(total);
    v.head(off) = complement.head(off);
    v.segment(off, d) = block;
    v.tail(total - off - d) = complement.tail(total - off - d);
    return JointAction(layout, std::move(v));
  }
};

// Coordinates of one random stream. Identical keys always produce identical
// draws, independent of thread count or evaluation order.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t player = 0;
  std::uint64_t iteration = 0;
  std::uint64_t replicate = 0;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

namespace detail {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based generator: the key is hashed into a starting counter and
// each draw is a splitmix64 step. Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(StreamKey key) : key_(key) {
    std::uint64_t h = detail::mix64(key.seed + 0x9e3779b97f4a7c15ULL);
    h = detail::mix64(h ^ (key.player * 0xd1b54a32d192ed03ULL + 1));
    h = detail::mix64(h ^ (key.iteration * 0xabc98388fb8fac03ULL + 2));
    h = detail::mix64(h ^ (key.replicate * 0x8cb92ba72f3d8dd7ULL + 3));
    state_ = h;
  }

  RngStream(std::uint64_t seed, std::uint64_t player, std::uint64_t iteration,
            std::uint64_t replicate)
      : RngStream(StreamKey{seed, player, iteration, replicate}) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    ++consumed_;
    return detail::mix64(state_);
  }

  double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() {
    std::normal_distribution<double> dist;
    return dist(*this);
  }

  std::size_t uniform_index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(*this);
  }

  const StreamKey& key() const { return key_; }
  std::uint64_t consumed() const { return consumed_; }

 private:
  StreamKey key_;
  std::uint64_t state_ = 0;
  std::uint64_t consumed_ = 0;
};

// Record of the stream a gradient draw came from.
struct DrawId {
  StreamKey key;
  std::uint64_t words_before = 0;
  std::uint64_t words_after = 0;

  friend bool operator==(const DrawId&, const DrawId&) = default;
};

struct GradientSample {
  std::size_t player = 0;
  Vector value;
  DrawId draw_id;
};

// mu, ell, L_i, sigma_i and the quantities derived from them.
struct ProblemParameters {
  double mu = 0.0;
  double ell = 0.0;
  std::vector<double> l_per_player;
  double l_max = 0.0;
  std::vector<double> sigma_per_player;
  double sigma_sq_total = 0.0;
  double kappa = 0.0;
  double q = 0.0;

  static ProblemParameters make(double mu, double ell, std::vector<double> l_per_player,
                                std::vector<double> sigma_per_player) {
    if (!(mu > 0.0)) throw PreconditionError("mu must be positive (QSM fails)");
    if (!(ell > 0.0)) throw PreconditionError("ell must be positive");
    if (mu > ell) throw PreconditionError("mu must not exceed ell");
    if (l_per_player.empty()) throw PreconditionError("need at least one L_i");
    ProblemParameters p;
    p.mu = mu;
    p.ell = ell;
    p.l_per_player = std::move(l_per_player);
    p.l_max = *std::max_element(p.l_per_player.begin(), p.l_per_player.end());
    p.sigma_per_player = std::move(sigma_per_player);
    p.sigma_sq_total = 0.0;
    for (double s : p.sigma_per_player) {
      if (s < 0.0) throw PreconditionError("sigma_i must be nonnegative");
      p.sigma_sq_total += s * s;
    }
    p.kappa = ell / mu;
    p.q = p.l_max / std::sqrt(ell * mu);
    return p;
  }

  ProblemParameters with_sigma(std::vector<double> sigma) const {
    return make(mu, ell, l_per_player, std::move(sigma));
  }
};

inline json to_json(const ProblemParameters& p) {
  return json{{"mu", p.mu},
              {"ell", p.ell},
              {"l_per_player", p.l_per_player},
              {"l_max", p.l_max},
              {"sigma_per_player", p.sigma_per_player},
              {"sigma_sq_total", p.sigma_sq_total},
              {"kappa", p.kappa},
              {"q", p.q}};
}

// F(x) = M x + b.
struct AffineOperator {
  Matrix jacobian;
  Vector offset;

  Vector apply(const Vector& x) const { return jacobian * x + offset; }
};

// A game: each player i owns block x^i and minimizes f_i(x^i; x^{-i}).
// Implementations are immutable after construction.
class GameProblem {
 public:
  virtual ~GameProblem() = default;

  virtual std::string kind() const = 0;
  virtual const BlockLayout& layout() const = 0;

  virtual double objective(std::size_t i, const Vector& x) const = 0;
  // Exact gradient of f_i with respect to x^i.
  virtual Vector grad(std::size_t i, const Vector& x) const = 0;

  // One unbiased draw of the gradient of f_i with respect to x^i.
  GradientSample stoch_grad(std::size_t i, const Vector& x, RngStream& rng) const {
    GradientSample s;
    s.player = i;
    s.draw_id.key = rng.key();
    s.draw_id.words_before = rng.consumed();
    s.value = draw_grad(i, x, rng);
    s.draw_id.words_after = rng.consumed();
    return s;
  }

  virtual std::optional<Vector> equilibrium() const { return std::nullopt; }
  virtual std::optional<ProblemParameters> analytic_params() const { return std::nullopt; }
  virtual std::optional<AffineOperator> affine_operator() const { return std::nullopt; }
  // Per-player noise level when it is known in closed form.
  virtual std::optional<std::vector<double>> exact_sigma() const { return std::nullopt; }

  virtual json to_json() const = 0;

 protected:
  virtual Vector draw_grad(std::size_t i, const Vector& x, RngStream& rng) const = 0;
};

// F(x) = (grad_1 f_1, ..., grad_n f_n) on a flat vector.
inline Vector joint_gradient(const GameProblem& problem, const Vector& x) {
  const auto& layout = problem.layout();
  layout.check_vector(x);
  Vector out(x.size());
  for (std::size_t i = 0; i < layout.players(); ++i) {
    block_of(layout, out, i) = problem.grad(i, x);
  }
  return out;
}

inline JointAction joint_gradient(const GameProblem& problem, const JointAction& x) {
  if (!(x.layout == problem.layout())) throw LayoutError("joint action layout mismatch");
  return JointAction(x.layout, joint_gradient(problem, x.values));
}

// Stochastic counterpart of F, each block drawn from its own stream.
inline Vector joint_stoch_gradient(const GameProblem& problem, const Vector& x,
                                   std::uint64_t seed, std::uint64_t iteration,
                                   std::uint64_t replicate) {
  const auto& layout = problem.layout();
  layout.check_vector(x);
  Vector out(x.size());
  for (std::size_t i = 0; i < layout.players(); ++i) {
    RngStream rng(seed, i, iteration, replicate);
    block_of(layout, out, i) = problem.stoch_grad(i, x, rng).value;
  }
  return out;
}

}  // namespace pearl
