#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikeslab {

using Index = std::size_t;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense coefficient vector theta, length p.
using ParamVector = Vector;

/**
 * Binary inclusion vector delta with a cached, sorted support list.
 * Flips keep the support sorted via binary search.
 */
class SparsityVector
{
public:
  SparsityVector() = default;
  explicit SparsityVector(Index p) : bits_(p, 0) {}

  static SparsityVector from_bits(const std::vector<int>& bits)
  {
    SparsityVector d(bits.size());
    for (Index j = 0; j < bits.size(); ++j)
      if (bits[j]) d.set(j, true);
    return d;
  }

  static SparsityVector full(Index p)
  {
    SparsityVector d(p);
    d.support_.resize(p);
    for (Index j = 0; j < p; ++j) {
      d.bits_[j] = 1;
      d.support_[j] = j;
    }
    return d;
  }

  Index size() const noexcept { return bits_.size(); }
  Index count() const noexcept { return support_.size(); }
  bool operator[](Index j) const noexcept { return bits_[j] != 0; }
  bool test(Index j) const
  {
    if (j >= bits_.size()) throw std::out_of_range("SparsityVector index out of range");
    return bits_[j] != 0;
  }

  const std::vector<Index>& support() const noexcept { return support_; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  void set(Index j, bool on)
  {
    if (j >= bits_.size()) throw std::out_of_range("SparsityVector index out of range");
    if ((bits_[j] != 0) == on) return;
    bits_[j] = on ? 1 : 0;
    auto it = std::lower_bound(support_.begin(), support_.end(), j);
    if (on)
      support_.insert(it, j);
    else
      support_.erase(it);
  }

  void flip(Index j) { set(j, !test(j)); }

  friend bool operator==(const SparsityVector& a, const SparsityVector& b) { return a.bits_ == b.bits_; }

  std::string to_string() const
  {
    std::string s(bits_.size(), '0');
    for (Index j : support_) s[j] = '1';
    return s;
  }

private:
  std::vector<std::uint8_t> bits_;
  std::vector<Index> support_;
};

/// theta_delta: theta with inactive coordinates zeroed.
inline ParamVector masked(const ParamVector& theta, const SparsityVector& delta)
{
  ParamVector out = ParamVector::Zero(theta.size());
  for (Index j : delta.support()) out[j] = theta[j];
  return out;
}

/// [theta]_delta: the active coordinates, in support order.
inline Vector gather(const ParamVector& theta, const std::vector<Index>& idx)
{
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (Index k = 0; k < idx.size(); ++k) out[k] = theta[idx[k]];
  return out;
}

inline void scatter(ParamVector& theta, const std::vector<Index>& idx, const Vector& values)
{
  for (Index k = 0; k < idx.size(); ++k) theta[idx[k]] = values[k];
}

/// Prior and sampler knobs shared by every algorithm.
struct Hyperparams
{
  double u = 1.5;           // prior sparsity exponent, > 1
  double rho0 = 1.0;        // spike precision
  double rho1 = 1.0;        // slab precision
  Index J = 100;            // coordinates screened per iteration
  std::optional<Index> B;   // minibatch size (SGLD only)
  double gamma = 0.005;     // SGLD step size
  double mala_step = 0.01;  // MaLa step size

  /// Throws std::invalid_argument on a violated invariant.
  void validate(Index p, Index n) const
  {
    if (!(u > 1.0)) throw std::invalid_argument("hyperparams: u must be > 1");
    if (!(rho1 > 0.0)) throw std::invalid_argument("hyperparams: rho1 must be > 0");
    if (!(rho0 >= rho1)) throw std::invalid_argument("hyperparams: rho0 must be >= rho1");
    if (J < 1 || J > p) throw std::invalid_argument("hyperparams: J must lie in [1, p]");
    if (B && (*B < 1 || *B > n)) throw std::invalid_argument("hyperparams: B must lie in [1, n]");
    if (!(gamma > 0.0)) throw std::invalid_argument("hyperparams: gamma must be > 0");
    if (!(mala_step > 0.0)) throw std::invalid_argument("hyperparams: mala_step must be > 0");
  }
};

enum class ModelKind { linear, logistic };

inline const char* to_string(ModelKind k) { return k == ModelKind::linear ? "linear" : "logistic"; }

/// Design matrix, response and (linear) noise variance.
struct RegressionData
{
  Matrix X;           // n x p, column-major
  Vector y;           // length n
  double sigma2 = 1.0;

  Index n() const noexcept { return static_cast<Index>(X.rows()); }
  Index p() const noexcept { return static_cast<Index>(X.cols()); }

  void validate(ModelKind kind) const
  {
    if (X.rows() != y.size()) throw std::invalid_argument("regression data: X rows must match y length");
    if (X.rows() == 0 || X.cols() == 0) throw std::invalid_argument("regression data: empty design");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("regression data: sigma2 must be > 0");
    if (kind == ModelKind::logistic)
      for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) throw std::invalid_argument("regression data: logistic response must be 0/1");
  }
};

} // namespace spikeslab
