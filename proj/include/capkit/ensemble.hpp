#ifndef CAPKIT_ENSEMBLE_HPP_
#define CAPKIT_ENSEMBLE_HPP_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capkit/cider.hpp"
#include "capkit/records.hpp"
#include "capkit/types.hpp"

// The two model-ensemble tricks: similarity copy-paste (replace a
// model's caption with a near-duplicate training caption when the
// retrieved pair clears a similarity threshold and matches the image
// better) and consensus selection (among n model predictions, keep the
// caption with the highest mean agreement against the other n-1).

namespace capkit {

inline constexpr Scalar kDefaultCopyPasteThreshold = 0.35;

// Mean of the four similarities produced by augmenting both sides of
// an image pair twice. Exactly four finite values.
Scalar avg_augmented_similarity(const std::vector<Scalar>& sims);

enum class CopyPasteChoice { model_prediction, copied_caption };

// The retrieved training pair under consideration; c1 is the cosine
// between its caption and its own image.
struct CopyPasteCandidate {
  std::string id;
  std::string caption;
  Scalar c1;
};

struct CopyPasteDecision {
  std::string image_id;
  Scalar avg_similarity;
  std::optional<std::string> candidate_id;
  std::optional<Scalar> c1;
  std::optional<Scalar> c2;
  CopyPasteChoice chosen;
  std::string final_caption;
};

// Gate first: with no candidate or avg_similarity below threshold the
// model prediction stands and c1/c2 are never needed. Past the gate,
// the copied caption wins iff c1 > c2 (ties keep the model); c2 is the
// cosine between the model prediction and the candidate image.
CopyPasteDecision copy_paste(const std::string& image_id, Scalar avg_similarity,
                             const std::optional<CopyPasteCandidate>& candidate,
                             const std::string& model_caption, std::optional<Scalar> c2,
                             Scalar threshold = kDefaultCopyPasteThreshold);

// One image's predictions from several models, in model argument order.
struct CandidateSet {
  std::string image_id;
  std::vector<std::pair<std::string, std::string>> candidates; // (model_id, caption)
};

enum class ConsensusMode {
  pairwise_mean,   // score_j = mean over k != j of cider_d(c_j, [c_k])
  multi_reference, // score_j = cider_d(c_j, all others as one group)
};

struct ConsensusResult {
  std::size_t winner_index = 0;
  std::string model_id;
  std::string caption;
  std::vector<Scalar> scores;
};

// Winner = argmax of the consensus scores; ties go to the lowest list
// position. A single candidate wins with score 0.
ConsensusResult consensus_select(const CandidateSet& cs, const IdfTable& idf,
                                 const CiderParams& params = {},
                                 ConsensusMode mode = ConsensusMode::pairwise_mean);

// Self-corpus IDF for consensus when no external references exist: one
// document per image, holding all of that image's candidate captions.
IdfTable consensus_self_idf(const std::vector<PredictionFile>& files, int max_n = 4);

struct FuseReportRow {
  std::string image_id;
  std::string winner_model;
  std::vector<Scalar> scores; // in file argument order
};

struct FuseResult {
  PredictionFile fused; // model_id "ensemble", image-id sorted
  std::vector<FuseReportRow> report;
};

// Per-image consensus over the aligned candidates of all files. Every
// file must cover the same image-id set and carry a distinct model_id.
FuseResult fuse(const std::vector<PredictionFile>& files, const CiderParams& params = {},
                ConsensusMode mode = ConsensusMode::pairwise_mean,
                const std::optional<IdfTable>& external_idf = std::nullopt);

} // namespace capkit

#endif
