#include "capkit/buckets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace capkit {

using nlohmann::ordered_json;

std::vector<std::string> default_bucket_labels() {
  return {"noise", "low quality", "high quality", "best match"};
}

namespace {

void check_spec_arguments(std::size_t sample_count, int n, Scalar edge_fraction,
                          const std::vector<std::string>& labels) {
  if (n < 2) throw std::invalid_argument("compute_thresholds: need at least 2 buckets");
  if (sample_count < static_cast<std::size_t>(n))
    throw std::invalid_argument("compute_thresholds: too few samples (" +
                                std::to_string(sample_count) + " for " + std::to_string(n) +
                                " buckets)");
  if (!(edge_fraction > 0.0) || !(edge_fraction < 1.0 / n))
    throw std::invalid_argument("compute_thresholds: edge_fraction must lie in (0, 1/n)");
  if (labels.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("compute_thresholds: expected " + std::to_string(n) + " labels");
  std::set<std::string> distinct;
  for (const std::string& label : labels) {
    if (label.empty()) throw std::invalid_argument("compute_thresholds: empty bucket label");
    if (!distinct.insert(label).second)
      throw std::invalid_argument("compute_thresholds: duplicate bucket label \"" + label + "\"");
  }
}

// Cumulative sample counts below each threshold: ceil(q_j * N) with
// q_1 = edge, q_{n-1} = 1 - edge, interior levels evenly spaced.
std::vector<std::size_t> cumulative_cuts(std::size_t total, int n, Scalar edge_fraction) {
  std::vector<std::size_t> cuts;
  cuts.reserve(n - 1);
  for (int j = 1; j <= n - 1; ++j) {
    Scalar q;
    if (j == 1) {
      q = edge_fraction;
    } else {
      q = edge_fraction + Scalar(j - 1) * (1.0 - 2.0 * edge_fraction) / Scalar(n - 2);
    }
    // The slack keeps ceil from jumping a boundary when q*N is an
    // integer up to rounding (0.1 * 100 must cut at exactly 10).
    auto cut = static_cast<std::size_t>(std::ceil(q * Scalar(total) - 1e-9));
    cuts.push_back(std::min(cut, total - 1));
  }
  return cuts;
}

} // namespace

BucketSpec compute_thresholds(const std::vector<Scalar>& similarities, int n,
                              Scalar edge_fraction, const std::vector<std::string>& labels) {
  check_spec_arguments(similarities.size(), n, edge_fraction, labels);
  for (Scalar s : similarities)
    if (!std::isfinite(s)) throw std::invalid_argument("compute_thresholds: non-finite similarity");

  std::vector<Scalar> sorted = similarities;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back())
    throw std::invalid_argument("compute_thresholds: degenerate similarity population "
                                "(all values identical)");

  BucketSpec spec;
  spec.n = n;
  spec.edge_fraction = edge_fraction;
  spec.labels = labels;
  for (std::size_t cut : cumulative_cuts(sorted.size(), n, edge_fraction))
    spec.thresholds.push_back(sorted[cut]);

  for (std::size_t i = 1; i < spec.thresholds.size(); ++i)
    if (!(spec.thresholds[i - 1] < spec.thresholds[i]))
      throw std::invalid_argument("compute_thresholds: degenerate similarity population "
                                  "(quantile thresholds collide)");

  // Ties straddling the top cut can inflate bucket n past an interior
  // bucket; refuse rather than hand back a spec that breaks the
  // edge-bucket cardinality condition.
  if (n >= 3) {
    std::vector<std::size_t> counts(n, 0);
    for (Scalar s : sorted) counts[static_cast<std::size_t>(assign_bucket(s, spec).bucket_index - 1)]++;
    for (int interior = 2; interior <= n - 1; ++interior) {
      if (counts[0] >= counts[interior - 1] || counts[n - 1] >= counts[interior - 1])
        throw std::invalid_argument("compute_thresholds: population too concentrated to satisfy "
                                    "the edge-bucket cardinality condition");
    }
  }
  return spec;
}

BucketAssignment assign_bucket(Scalar similarity, const BucketSpec& spec,
                               const std::string& record_id) {
  if (!std::isfinite(similarity))
    throw std::invalid_argument("assign_bucket: similarity must be finite");
  const auto above = std::count_if(spec.thresholds.begin(), spec.thresholds.end(),
                                   [&](Scalar t) { return t <= similarity; });
  const int index = 1 + static_cast<int>(above);
  return {record_id, index, spec.labels[static_cast<std::size_t>(index - 1)]};
}

const std::string& inference_bucket(const BucketSpec& spec) {
  if (spec.labels.empty()) throw std::invalid_argument("inference_bucket: empty spec");
  return spec.labels.back();
}

void save_bucket_spec(const BucketSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  ordered_json j;
  j["n"] = spec.n;
  j["thresholds"] = spec.thresholds;
  j["labels"] = spec.labels;
  j["edge_fraction"] = spec.edge_fraction;
  out << j.dump() << '\n';
}

BucketSpec load_bucket_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  ordered_json j;
  in >> j;
  BucketSpec spec;
  spec.n = j.at("n").get<int>();
  spec.thresholds = j.at("thresholds").get<std::vector<Scalar>>();
  spec.labels = j.at("labels").get<std::vector<std::string>>();
  spec.edge_fraction = j.at("edge_fraction").get<Scalar>();
  if (spec.n < 2 || spec.labels.size() != static_cast<std::size_t>(spec.n) ||
      spec.thresholds.size() != static_cast<std::size_t>(spec.n - 1))
    throw std::runtime_error(path + ": inconsistent bucket spec");
  if (std::adjacent_find(spec.thresholds.begin(), spec.thresholds.end(), std::greater_equal<>()) !=
      spec.thresholds.end())
    throw std::runtime_error(path + ": thresholds not strictly ascending");
  return spec;
}

} // namespace capkit
