#ifndef CAPKIT_RECORDS_HPP_
#define CAPKIT_RECORDS_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "capkit/types.hpp"

namespace capkit {

// One image-text pair. The image is represented by its precomputed
// unit-norm embedding; a text embedding and a stored similarity are
// optional.
struct PairRecord {
  std::string id;
  std::string caption;
  std::string url;
  Vec image_embedding;
  std::optional<Vec> text_embedding;
  std::optional<Scalar> similarity;
};

// Immutable after load; iteration order is the on-disk order.
struct RecordSet {
  std::vector<PairRecord> records;
  Index dimension = 0; // 0 only for the empty set

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

using ValidationReport = std::vector<std::string>;

// Embeddings whose norm is within this distance of 1 are renormalized
// on load; anything further off is rejected.
constexpr Scalar kNormRepairTolerance = 1e-3;
// Norm tolerance the invariants are checked against.
constexpr Scalar kNormCheckTolerance = 1e-6;

// Reads one JSON record per line: fields `id`, `caption`, `url`,
// `image_embedding`, optional `text_embedding`, optional `similarity`.
// Throws std::runtime_error with the offending line number on malformed
// input, duplicate ids, dimension mismatches or non-unit embeddings.
RecordSet load_records(const std::string& path);

// Writes the set back in line-delimited form, one record per line,
// preserving order. load(save(load(p))) is identity on content.
void save_records(const RecordSet& rs, const std::string& path);

// Lists every invariant violation (unique ids, shared dimension,
// unit-norm embeddings, similarity range). Empty report means clean.
ValidationReport validate_records(const RecordSet& rs);

struct PredictionEntry {
  std::string caption;
  std::optional<Vec> caption_embedding;
};

// Output of one captioning model over a set of images.
struct PredictionFile {
  std::string model_id;
  std::map<std::string, PredictionEntry> entries; // image_id -> entry
};

// First line carries {"model_id": ...}; each following line one
// {image_id, caption, caption_embedding?} object. An image id may
// appear at most once per file.
PredictionFile load_predictions(const std::string& path);
void save_predictions(const PredictionFile& pf, const std::string& path);

// Reference captions for scoring: one {image_id, references: [string]}
// object per line.
std::map<std::string, std::vector<std::string>> load_references(const std::string& path);

// The line form save_records writes, for callers that append fields.
nlohmann::ordered_json record_to_json(const PairRecord& rec);

} // namespace capkit

#endif
