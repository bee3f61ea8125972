#ifndef CAPKIT_CIDER_HPP_
#define CAPKIT_CIDER_HPP_

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "capkit/types.hpp"

// Consensus caption metric: TF-IDF weighted n-gram cosine agreement
// between a candidate and its references. The default is the -D
// variant (count clipping plus a Gaussian length penalty); the plain
// variant drops both.

namespace capkit {

struct CiderParams {
  int max_n = 4;
  Scalar sigma = 6.0; // length-penalty width
  Scalar scale = 10.0;
  bool d_variant = true;
};

// Lowercases ASCII letters, strips ASCII punctuation, splits on
// whitespace. Bytes outside ASCII pass through untouched.
std::vector<std::string> tokenize(const std::string& text);

// n-gram -> occurrence count for one token sequence; keys are the
// tokens joined by single spaces.
std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n);

// Inverse document frequencies over a reference corpus. One document =
// one image's reference group.
struct IdfTable {
  int max_n = 4;
  std::size_t doc_count = 0;
  std::unordered_map<std::string, Scalar> idf; // log(doc_count / df)

  // Unseen n-grams score with df clipped to 1.
  Scalar idf_for(const std::string& ngram_key) const;
};

// df(g) = number of groups containing g in at least one caption;
// idf(g) = log(N / df(g)). Throws if fewer than 2 groups (degenerate).
IdfTable build_idf(const std::vector<std::vector<std::string>>& reference_groups, int max_n = 4);

// Score of one candidate against one image's references: per n, the
// clipped TF-IDF cosine against each reference times the length
// penalty exp(-(lc-lr)^2 / (2 sigma^2)), averaged over references,
// averaged over n, times scale. Empty candidate scores 0.
Scalar cider_d(const std::string& candidate, const std::vector<std::string>& references,
               const IdfTable& idf, const CiderParams& params = {});

// Mean per-image cider_d over the prediction keys, with the IDF built
// from the reference groups. Prediction keys must be a subset of the
// reference keys.
Scalar corpus_cider(const std::map<std::string, std::string>& predictions,
                    const std::map<std::string, std::vector<std::string>>& references,
                    const CiderParams& params = {});

} // namespace capkit

#endif
