#include "capkit/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace capkit {

const char* to_string(CleanReason reason) {
  switch (reason) {
    case CleanReason::kept: return "kept";
    case CleanReason::too_short: return "too_short";
    case CleanReason::too_long: return "too_long";
    case CleanReason::non_english: return "non_english";
  }
  return "unknown";
}

VectorIndex build_index(const RecordSet& rs, const std::optional<std::string>& url_substring) {
  VectorIndex index;
  index.url_filter = url_substring;
  std::vector<const PairRecord*> picked;
  for (const PairRecord& rec : rs.records) {
    if (url_substring && rec.url.find(*url_substring) == std::string::npos) continue;
    picked.push_back(&rec);
  }
  if (picked.empty()) {
    throw std::invalid_argument(url_substring
                                    ? "build_index: empty index (no url contains \"" + *url_substring + "\")"
                                    : "build_index: empty index");
  }
  index.ids.reserve(picked.size());
  index.captions.reserve(picked.size());
  index.matrix.resize(static_cast<Index>(picked.size()), rs.dimension);
  for (std::size_t i = 0; i < picked.size(); ++i) {
    index.ids.push_back(picked[i]->id);
    index.captions.push_back(picked[i]->caption);
    index.matrix.row(static_cast<Index>(i)) = picked[i]->image_embedding.transpose();
  }
  return index;
}

namespace {

// Chunk size for the scoring scan; bounds the transient score buffer.
constexpr Index kScanChunk = 4096;

struct ScoredRow {
  Scalar similarity;
  Index row;
};

} // namespace

std::vector<RetrievalHit> top_k(const VectorIndex& index, const Vec& query, int k,
                                const std::optional<std::string>& exclude_id) {
  if (k < 1) throw std::invalid_argument("top_k: k must be >= 1");
  if (query.size() != index.dimension())
    throw std::invalid_argument("top_k: dimension mismatch (query " + std::to_string(query.size()) +
                                ", index " + std::to_string(index.dimension()) + ")");

  const auto better = [&](const ScoredRow& a, const ScoredRow& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return index.ids[static_cast<std::size_t>(a.row)] < index.ids[static_cast<std::size_t>(b.row)];
  };

  // Bounded selection: keep the k best seen so far, worst at the back.
  std::vector<ScoredRow> best;
  best.reserve(static_cast<std::size_t>(k) + 1);
  for (Index start = 0; start < index.size(); start += kScanChunk) {
    const Index len = std::min(kScanChunk, index.size() - start);
    const Vec scores = index.matrix.middleRows(start, len) * query;
    for (Index i = 0; i < len; ++i) {
      const Index row = start + i;
      if (exclude_id && index.ids[static_cast<std::size_t>(row)] == *exclude_id) continue;
      const ScoredRow candidate{scores(i), row};
      if (best.size() == static_cast<std::size_t>(k) && !better(candidate, best.back())) continue;
      best.insert(std::upper_bound(best.begin(), best.end(), candidate, better), candidate);
      if (best.size() > static_cast<std::size_t>(k)) best.pop_back();
    }
  }

  std::vector<RetrievalHit> hits;
  hits.reserve(best.size());
  for (const ScoredRow& s : best) {
    hits.push_back({index.ids[static_cast<std::size_t>(s.row)], s.similarity,
                    index.captions[static_cast<std::size_t>(s.row)]});
  }
  return hits;
}

namespace {

int token_count(const std::string& text) {
  int count = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

} // namespace

CleanDecision clean_filter(const PairRecord& record, const CleaningRules& rules) {
  const int tokens = token_count(record.caption);
  if (tokens < rules.min_tokens) return {false, CleanReason::too_short};
  if (tokens > rules.max_tokens) return {false, CleanReason::too_long};

  std::size_t non_space = 0;
  std::size_t ascii_letters = 0;
  for (unsigned char c : record.caption) {
    if (std::isspace(c)) continue;
    ++non_space;
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) ++ascii_letters;
  }
  const Scalar ratio = non_space == 0 ? 0.0 : Scalar(ascii_letters) / Scalar(non_space);
  if (ratio < rules.min_ascii_letter_ratio) return {false, CleanReason::non_english};
  return {true, CleanReason::kept};
}

} // namespace capkit
