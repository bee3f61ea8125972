#ifndef CAPKIT_BUCKETS_HPP_
#define CAPKIT_BUCKETS_HPP_

#include <string>
#include <vector>

#include "capkit/types.hpp"

// Quantile bucketing of an image-text similarity population. The two
// edge buckets are deliberately small: the lowest edge_fraction of the
// population lands in bucket 1 (likely noise), the highest in bucket n
// (best matches), and the interior buckets split the remaining mass
// evenly. Training prompts carry the per-pair bucket label; inference
// always uses the top bucket's label.

namespace capkit {

inline constexpr int kDefaultBucketCount = 4;
inline constexpr Scalar kDefaultEdgeFraction = 0.1;

// The default quality ladder, noisiest bucket first.
std::vector<std::string> default_bucket_labels();

struct BucketSpec {
  int n = kDefaultBucketCount;
  std::vector<Scalar> thresholds; // ascending, size n-1
  std::vector<std::string> labels; // size n, bucket 1 first
  Scalar edge_fraction = kDefaultEdgeFraction;
};

struct BucketAssignment {
  std::string record_id;
  int bucket_index; // 1-based
  std::string label;
};

// Chooses thresholds so that bucket 1 holds the lowest edge_fraction
// quantile of the population, bucket n the highest, and the interior
// buckets split the rest into equal-mass slices. The quantile cut is
// the order statistic at ceil(q*N); the stored threshold is the next
// order statistic up, so that assignment's tie-to-higher rule lands
// exactly that count below it. Throws on too few samples, a degenerate
// (too concentrated) population, or edge_fraction outside (0, 1/n).
BucketSpec compute_thresholds(const std::vector<Scalar>& similarities, int n,
                              Scalar edge_fraction, const std::vector<std::string>& labels);

// bucket_index = 1 + count(thresholds <= similarity): a similarity
// exactly at a threshold goes to the higher bucket, so the maximum
// observed similarity always lands in bucket n.
BucketAssignment assign_bucket(Scalar similarity, const BucketSpec& spec,
                               const std::string& record_id = {});

// The label injected into every inference prompt: labels[n-1].
const std::string& inference_bucket(const BucketSpec& spec);

// Sidecar serialization: a single JSON object with fields n,
// thresholds, labels, edge_fraction.
void save_bucket_spec(const BucketSpec& spec, const std::string& path);
BucketSpec load_bucket_spec(const std::string& path);

} // namespace capkit

#endif
