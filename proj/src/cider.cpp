#include "capkit/cider.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace capkit {

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

} // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (is_ascii_space(c)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else if (is_ascii_punct(c)) {
      // stripped, no token break: "don't" -> "dont"
    } else {
      if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
      current.push_back(static_cast<char>(c));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::unordered_map<std::string, int> counts;
  if (n < 1 || tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
    std::string key = tokens[start];
    for (int j = 1; j < n; ++j) {
      key += ' ';
      key += tokens[start + static_cast<std::size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

Scalar IdfTable::idf_for(const std::string& ngram_key) const {
  const auto it = idf.find(ngram_key);
  if (it != idf.end()) return it->second;
  return std::log(static_cast<Scalar>(doc_count)); // df clipped to 1
}

IdfTable build_idf(const std::vector<std::vector<std::string>>& reference_groups, int max_n) {
  if (reference_groups.size() < 2)
    throw std::invalid_argument("build_idf: need at least 2 reference groups");
  if (max_n < 1) throw std::invalid_argument("build_idf: max_n must be >= 1");

  IdfTable table;
  table.max_n = max_n;
  table.doc_count = reference_groups.size();

  std::unordered_map<std::string, std::size_t> df;
  for (const std::vector<std::string>& group : reference_groups) {
    std::set<std::string> grams_in_doc;
    for (const std::string& caption : group) {
      const std::vector<std::string> tokens = tokenize(caption);
      for (int n = 1; n <= max_n; ++n)
        for (const auto& [gram, count] : ngram_counts(tokens, n)) grams_in_doc.insert(gram);
    }
    for (const std::string& gram : grams_in_doc) ++df[gram];
  }

  const Scalar log_docs = std::log(static_cast<Scalar>(table.doc_count));
  for (const auto& [gram, docs_with] : df)
    table.idf.emplace(gram, log_docs - std::log(static_cast<Scalar>(docs_with)));
  return table;
}

namespace {

struct TfIdfVector {
  std::unordered_map<std::string, Scalar> weights;
  Scalar norm = 0.0;
};

TfIdfVector tfidf_vector(const std::vector<std::string>& tokens, int n, const IdfTable& idf) {
  TfIdfVector v;
  Scalar sq = 0.0;
  for (const auto& [gram, count] : ngram_counts(tokens, n)) {
    const Scalar w = static_cast<Scalar>(count) * idf.idf_for(gram);
    v.weights.emplace(gram, w);
    sq += w * w;
  }
  v.norm = std::sqrt(sq);
  return v;
}

} // namespace

Scalar cider_d(const std::string& candidate, const std::vector<std::string>& references,
               const IdfTable& idf, const CiderParams& params) {
  if (references.empty()) throw std::invalid_argument("cider_d: references must be nonempty");
  if (params.max_n < 1 || params.sigma <= 0.0)
    throw std::invalid_argument("cider_d: invalid params");
  if (idf.doc_count < 2) throw std::invalid_argument("cider_d: degenerate IDF table");

  const std::vector<std::string> cand_tokens = tokenize(candidate);
  if (cand_tokens.empty()) return 0.0;

  std::vector<std::vector<std::string>> ref_tokens;
  ref_tokens.reserve(references.size());
  for (const std::string& r : references) ref_tokens.push_back(tokenize(r));

  Scalar sum_over_n = 0.0;
  for (int n = 1; n <= params.max_n; ++n) {
    const TfIdfVector cand = tfidf_vector(cand_tokens, n, idf);
    Scalar sum_over_refs = 0.0;
    for (const std::vector<std::string>& rt : ref_tokens) {
      const TfIdfVector ref = tfidf_vector(rt, n, idf);
      Scalar dot = 0.0;
      for (const auto& [gram, wc] : cand.weights) {
        const auto it = ref.weights.find(gram);
        if (it == ref.weights.end()) continue;
        dot += (params.d_variant ? std::min(wc, it->second) : wc) * it->second;
      }
      Scalar val = 0.0;
      if (cand.norm != 0.0 && ref.norm != 0.0) val = dot / (cand.norm * ref.norm);
      if (params.d_variant) {
        const Scalar delta = static_cast<Scalar>(cand_tokens.size()) - static_cast<Scalar>(rt.size());
        val *= std::exp(-(delta * delta) / (2.0 * params.sigma * params.sigma));
      }
      sum_over_refs += val;
    }
    sum_over_n += sum_over_refs / static_cast<Scalar>(references.size());
  }
  return params.scale * sum_over_n / static_cast<Scalar>(params.max_n);
}

Scalar corpus_cider(const std::map<std::string, std::string>& predictions,
                    const std::map<std::string, std::vector<std::string>>& references,
                    const CiderParams& params) {
  if (predictions.empty()) throw std::invalid_argument("corpus_cider: empty prediction map");
  std::vector<std::string> missing;
  for (const auto& [image_id, caption] : predictions)
    if (!references.count(image_id)) missing.push_back(image_id);
  if (!missing.empty()) {
    std::string msg = "corpus_cider: no references for image(s):";
    for (const std::string& id : missing) msg += " " + id;
    throw std::invalid_argument(msg);
  }

  std::vector<std::vector<std::string>> groups;
  groups.reserve(references.size());
  for (const auto& [image_id, group] : references) groups.push_back(group);
  const IdfTable idf = build_idf(groups, params.max_n);

  Scalar total = 0.0;
  for (const auto& [image_id, caption] : predictions)
    total += cider_d(caption, references.at(image_id), idf, params);
  return total / static_cast<Scalar>(predictions.size());
}

} // namespace capkit
