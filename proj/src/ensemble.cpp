#include "capkit/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace capkit {

Scalar avg_augmented_similarity(const std::vector<Scalar>& sims) {
  if (sims.size() != 4)
    throw std::invalid_argument("avg_augmented_similarity: expected 4 similarities, got " +
                                std::to_string(sims.size()));
  Scalar sum = 0.0;
  for (Scalar s : sims) {
    if (!std::isfinite(s))
      throw std::invalid_argument("avg_augmented_similarity: non-finite similarity");
    sum += s;
  }
  return sum / 4.0;
}

CopyPasteDecision copy_paste(const std::string& image_id, Scalar avg_similarity,
                             const std::optional<CopyPasteCandidate>& candidate,
                             const std::string& model_caption, std::optional<Scalar> c2,
                             Scalar threshold) {
  CopyPasteDecision decision;
  decision.image_id = image_id;
  decision.avg_similarity = avg_similarity;
  if (candidate) {
    decision.candidate_id = candidate->id;
    decision.c1 = candidate->c1;
  }
  decision.c2 = c2;

  if (!candidate || avg_similarity < threshold) {
    decision.chosen = CopyPasteChoice::model_prediction;
    decision.final_caption = model_caption;
    return decision;
  }
  if (!c2)
    throw std::invalid_argument("copy_paste: c2 required once the similarity gate passes");
  if (candidate->c1 > *c2) {
    decision.chosen = CopyPasteChoice::copied_caption;
    decision.final_caption = candidate->caption;
  } else {
    decision.chosen = CopyPasteChoice::model_prediction; // ties keep the model
    decision.final_caption = model_caption;
  }
  return decision;
}

ConsensusResult consensus_select(const CandidateSet& cs, const IdfTable& idf,
                                 const CiderParams& params, ConsensusMode mode) {
  if (cs.candidates.empty())
    throw std::invalid_argument("consensus_select: empty candidate set for image \"" +
                                cs.image_id + "\"");
  std::set<std::string> model_ids;
  for (const auto& [model_id, caption] : cs.candidates)
    if (!model_ids.insert(model_id).second)
      throw std::invalid_argument("consensus_select: duplicate model_id \"" + model_id + "\"");

  const std::size_t count = cs.candidates.size();
  ConsensusResult result;
  result.scores.assign(count, 0.0);

  if (count > 1) {
    for (std::size_t j = 0; j < count; ++j) {
      if (mode == ConsensusMode::pairwise_mean) {
        Scalar sum = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
          if (k == j) continue;
          sum += cider_d(cs.candidates[j].second, {cs.candidates[k].second}, idf, params);
        }
        result.scores[j] = sum / static_cast<Scalar>(count - 1);
      } else {
        std::vector<std::string> others;
        others.reserve(count - 1);
        for (std::size_t k = 0; k < count; ++k)
          if (k != j) others.push_back(cs.candidates[k].second);
        result.scores[j] = cider_d(cs.candidates[j].second, others, idf, params);
      }
    }
  }

  // max_element keeps the first maximum, which is the tie rule.
  const auto best = std::max_element(result.scores.begin(), result.scores.end());
  result.winner_index = static_cast<std::size_t>(best - result.scores.begin());
  result.model_id = cs.candidates[result.winner_index].first;
  result.caption = cs.candidates[result.winner_index].second;
  return result;
}

namespace {

void check_coverage(const std::vector<PredictionFile>& files) {
  std::set<std::string> all_ids;
  for (const PredictionFile& f : files)
    for (const auto& [image_id, entry] : f.entries) all_ids.insert(image_id);
  std::string complaint;
  for (const PredictionFile& f : files) {
    for (const std::string& id : all_ids) {
      if (!f.entries.count(id))
        complaint += " " + f.model_id + " lacks \"" + id + "\";";
    }
  }
  if (!complaint.empty())
    throw std::invalid_argument("fuse: image-id coverage mismatch:" + complaint);
}

} // namespace

IdfTable consensus_self_idf(const std::vector<PredictionFile>& files, int max_n) {
  if (files.empty()) throw std::invalid_argument("consensus_self_idf: no prediction files");
  std::vector<std::vector<std::string>> documents;
  for (const auto& [image_id, entry] : files.front().entries) {
    std::vector<std::string> captions;
    captions.reserve(files.size());
    for (const PredictionFile& f : files) {
      const auto it = f.entries.find(image_id);
      if (it != f.entries.end()) captions.push_back(it->second.caption);
    }
    documents.push_back(std::move(captions));
  }
  return build_idf(documents, max_n);
}

FuseResult fuse(const std::vector<PredictionFile>& files, const CiderParams& params,
                ConsensusMode mode, const std::optional<IdfTable>& external_idf) {
  if (files.empty()) throw std::invalid_argument("fuse: no prediction files");
  std::set<std::string> model_ids;
  for (const PredictionFile& f : files)
    if (!model_ids.insert(f.model_id).second)
      throw std::invalid_argument("fuse: duplicate model_id \"" + f.model_id + "\"");
  check_coverage(files);

  const IdfTable idf = external_idf ? *external_idf : consensus_self_idf(files, params.max_n);

  FuseResult result;
  result.fused.model_id = "ensemble";
  for (const auto& [image_id, first_entry] : files.front().entries) {
    CandidateSet cs;
    cs.image_id = image_id;
    for (const PredictionFile& f : files)
      cs.candidates.emplace_back(f.model_id, f.entries.at(image_id).caption);
    const ConsensusResult choice = consensus_select(cs, idf, params, mode);

    PredictionEntry entry;
    entry.caption = choice.caption;
    entry.caption_embedding = files[choice.winner_index].entries.at(image_id).caption_embedding;
    result.fused.entries.emplace(image_id, std::move(entry));
    result.report.push_back({image_id, choice.model_id, choice.scores});
  }
  return result;
}

} // namespace capkit
