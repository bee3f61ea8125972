#ifndef CAPKIT_RETRIEVAL_HPP_
#define CAPKIT_RETRIEVAL_HPP_

#include <optional>
#include <string>
#include <vector>

#include "capkit/records.hpp"
#include "capkit/types.hpp"

// Exact brute-force nearest-neighbor retrieval over record embeddings,
// plus the caption cleaning filters applied before a corpus is indexed.
// Desk-scale N keeps exact scanning cheap and oracle-testable.

namespace capkit {

// Immutable after build; rows of `matrix` are unit-norm image
// embeddings in input order.
struct VectorIndex {
  std::vector<std::string> ids;
  std::vector<std::string> captions;
  Mat matrix; // N x d
  std::optional<std::string> url_filter;

  Index size() const { return matrix.rows(); }
  Index dimension() const { return matrix.cols(); }
};

struct RetrievalHit {
  std::string id;
  Scalar similarity;
  std::string caption;
};

struct CleaningRules {
  int min_tokens = 3;
  int max_tokens = 30;
  Scalar min_ascii_letter_ratio = 0.8;
};

enum class CleanReason { kept, too_short, too_long, non_english };

struct CleanDecision {
  bool keep;
  CleanReason reason; // CleanReason::kept when keep is true
};

const char* to_string(CleanReason reason);

// Indexes the records whose url contains url_substring (all records
// when absent), preserving input order. Throws if nothing survives.
VectorIndex build_index(const RecordSet& rs,
                        const std::optional<std::string>& url_substring = std::nullopt);

// The k highest-cosine records for the query (fewer if the index is
// smaller), in non-increasing similarity order with ties broken by
// ascending id. exclude_id drops one record, which prevents
// self-retrieval when augmenting a training set with its own index.
std::vector<RetrievalHit> top_k(const VectorIndex& index, const Vec& query, int k,
                                const std::optional<std::string>& exclude_id = std::nullopt);

// Keeps a caption iff it passes, in order: token count >= min_tokens,
// token count <= max_tokens, ASCII-letter ratio among non-space
// characters >= min_ascii_letter_ratio. First failing rule is the
// reported reason.
CleanDecision clean_filter(const PairRecord& record, const CleaningRules& rules);

} // namespace capkit

#endif
