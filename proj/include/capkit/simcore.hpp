#ifndef CAPKIT_SIMCORE_HPP_
#define CAPKIT_SIMCORE_HPP_

#include <cmath>
#include <stdexcept>

#include "capkit/types.hpp"

// Numeric kernels for image-text contrastive alignment: cosine
// similarity, the symmetric InfoNCE-style loss over an in-batch
// similarity matrix, its analytic gradient, and pseudo-target mixing.
// All functions are pure and templated on the Eigen expression type.

namespace capkit {

inline constexpr Scalar kDefaultTemperature = 0.07;
inline constexpr Scalar kDefaultPseudoTargetAlpha = 0.4;
inline constexpr Scalar kRowSumTolerance = 1e-9;

// In-batch similarity logits plus the temperature they are divided by
// before softmax normalization.
template <typename S>
struct SimilarityMatrixT {
  MatrixX<S> values; // square, entry (a,b) = s(image_a, text_b)
  S tau = S(kDefaultTemperature);
};
using SimilarityMatrix = SimilarityMatrixT<Scalar>;

template <typename S>
struct ItcResultT {
  S loss;
  MatrixX<S> p_i2t; // row a = softmax_b of values(a,b)/tau
  MatrixX<S> p_t2i; // row a = softmax_b of values(b,a)/tau
};
using ItcResult = ItcResultT<Scalar>;

template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar cosine(const Eigen::MatrixBase<DerivedU>& u,
                                 const Eigen::MatrixBase<DerivedV>& v) {
  using S = typename DerivedU::Scalar;
  if (u.size() != v.size())
    throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(u.size()) +
                                " vs " + std::to_string(v.size()) + ")");
  const S nu = u.norm();
  const S nv = v.norm();
  if (nu == S(0) || nv == S(0)) throw std::invalid_argument("cosine: zero vector");
  const S c = u.dot(v) / (nu * nv);
  return std::min(S(1), std::max(S(-1), c));
}

// Cosine similarity between every image row and every text row.
// Entry (a,b) = cosine(images.row(a), texts.row(b)).
template <typename DerivedI, typename DerivedT>
SimilarityMatrixT<typename DerivedI::Scalar> pairwise_similarity(
    const Eigen::MatrixBase<DerivedI>& images, const Eigen::MatrixBase<DerivedT>& texts,
    typename DerivedI::Scalar tau = kDefaultTemperature) {
  using S = typename DerivedI::Scalar;
  if (images.cols() != texts.cols())
    throw std::invalid_argument("pairwise_similarity: dimension mismatch");
  if (images.rows() != texts.rows())
    throw std::invalid_argument("pairwise_similarity: batch size mismatch");
  if (tau <= S(0)) throw std::invalid_argument("pairwise_similarity: tau must be positive");
  const VectorX<S> inorm = images.rowwise().norm();
  const VectorX<S> tnorm = texts.rowwise().norm();
  if ((inorm.array() == S(0)).any() || (tnorm.array() == S(0)).any())
    throw std::invalid_argument("pairwise_similarity: zero row");
  MatrixX<S> values = inorm.cwiseInverse().asDiagonal() * (images * texts.transpose()) *
                      tnorm.cwiseInverse().asDiagonal();
  values = values.cwiseMin(S(1)).cwiseMax(S(-1));
  return {std::move(values), tau};
}

// Row-wise softmax with max subtraction; rows sum to 1 for any finite
// input, which matters at temperatures that scale logits by ~14x.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  MatrixX<S> p = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
  const VectorX<S> sums = p.rowwise().sum();
  p.array().colwise() /= sums.array();
  return p;
}

// Identity targets: pair a belongs with pair a.
template <typename S = Scalar>
MatrixX<S> one_hot_targets(Index batch) {
  return MatrixX<S>::Identity(batch, batch);
}

template <typename Derived>
void validate_target_distribution(const Eigen::MatrixBase<Derived>& targets, const char* name) {
  using S = typename Derived::Scalar;
  if ((targets.array() < S(0)).any())
    throw std::invalid_argument(std::string(name) + ": negative entry");
  const VectorX<S> sums = targets.rowwise().sum();
  if (((sums.array() - S(1)).abs() > S(kRowSumTolerance)).any())
    throw std::invalid_argument(std::string(name) + ": rows must sum to 1");
}

namespace detail {

template <typename S>
void check_itc_shapes(const SimilarityMatrixT<S>& sim, const MatrixX<S>& targets_i2t,
                      const MatrixX<S>& targets_t2i) {
  if (sim.values.rows() != sim.values.cols())
    throw std::invalid_argument("itc_loss: similarity matrix must be square");
  if (!sim.values.allFinite()) throw std::invalid_argument("itc_loss: non-finite similarity");
  if (sim.tau <= S(0)) throw std::invalid_argument("itc_loss: tau must be positive");
  if (targets_i2t.rows() != sim.values.rows() || targets_i2t.cols() != sim.values.cols() ||
      targets_t2i.rows() != sim.values.rows() || targets_t2i.cols() != sim.values.cols())
    throw std::invalid_argument("itc_loss: target shape mismatch");
  validate_target_distribution(targets_i2t, "targets_i2t");
  validate_target_distribution(targets_t2i, "targets_t2i");
}

// -sum_b y_b log p_b, averaged over rows.
template <typename S>
S mean_cross_entropy(const MatrixX<S>& targets, const MatrixX<S>& p) {
  using ArrayXX = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;
  // y = 0 entries contribute nothing even where log p underflows.
  ArrayXX contrib = (targets.array() > S(0))
                        .select(targets.array() * p.array().log(),
                                ArrayXX::Zero(p.rows(), p.cols()));
  return -contrib.sum() / S(p.rows());
}

} // namespace detail

// Symmetric contrastive loss over the batch:
//   loss = 1/2 * mean_a [ CE(y_i2t row a, softmax(values(a,:)/tau))
//                       + CE(y_t2i row a, softmax(values(:,a)/tau)) ].
template <typename S>
ItcResultT<S> itc_loss(const SimilarityMatrixT<S>& sim, const MatrixX<S>& targets_i2t,
                       const MatrixX<S>& targets_t2i) {
  detail::check_itc_shapes(sim, targets_i2t, targets_t2i);
  ItcResultT<S> result;
  result.p_i2t = softmax_rows((sim.values / sim.tau).eval());
  result.p_t2i = softmax_rows((sim.values.transpose() / sim.tau).eval());
  result.loss = (detail::mean_cross_entropy(targets_i2t, result.p_i2t) +
                 detail::mean_cross_entropy(targets_t2i, result.p_t2i)) /
                S(2);
  return result;
}

// Gradient of itc_loss with respect to each raw similarity entry:
//   d loss / d values = [(p_i2t - y_i2t) + (p_t2i - y_t2i)^T] / (2 B tau).
template <typename S>
MatrixX<S> itc_loss_grad(const SimilarityMatrixT<S>& sim, const MatrixX<S>& targets_i2t,
                         const MatrixX<S>& targets_t2i) {
  const ItcResultT<S> r = itc_loss(sim, targets_i2t, targets_t2i);
  const S batch = S(sim.values.rows());
  return ((r.p_i2t - targets_i2t) + (r.p_t2i - targets_t2i).transpose()) / (S(2) * batch * sim.tau);
}

// Convex mix of hard labels with soft targets from a momentum model:
// alpha * momentum + (1 - alpha) * onehot. Row-stochastic by convexity.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> mix_pseudo_targets(const Eigen::MatrixBase<DerivedA>& onehot,
                                                      const Eigen::MatrixBase<DerivedB>& momentum,
                                                      typename DerivedA::Scalar alpha) {
  using S = typename DerivedA::Scalar;
  if (alpha < S(0) || alpha > S(1))
    throw std::invalid_argument("mix_pseudo_targets: alpha outside [0, 1]");
  if (onehot.rows() != momentum.rows() || onehot.cols() != momentum.cols())
    throw std::invalid_argument("mix_pseudo_targets: shape mismatch");
  validate_target_distribution(onehot, "onehot");
  validate_target_distribution(momentum, "momentum");
  return alpha * momentum + (S(1) - alpha) * onehot;
}

} // namespace capkit

#endif
