#ifndef CAPKIT_PIPELINE_HPP_
#define CAPKIT_PIPELINE_HPP_

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "capkit/cider.hpp"
#include "capkit/prompts.hpp"
#include "capkit/retrieval.hpp"
#include "capkit/types.hpp"

// Declarative pipeline over the curation stages. Each stage reads and
// writes files; a run appends one manifest line per stage with content
// digests of its inputs and outputs, so identical configs and inputs
// are provably byte-identical across runs.

namespace capkit {

struct CleanStage {
  std::string input;
  std::string output;
  std::optional<std::string> rejects;
  CleaningRules rules;
};

struct BucketizeStage {
  std::string input;
  std::string output;
  std::string spec_output;
  int n = 4;
  Scalar edge_fraction = 0.1;
  std::vector<std::string> labels; // defaults applied at parse time
};

struct RetrieveStage {
  std::string queries;
  std::string index;
  std::string output;
  int top_k = 10;
  std::optional<std::string> url_filter;
  bool exclude_self = false;
};

enum class PromptMode { bucket, retrieval, combined };

struct PromptStage {
  PromptMode mode = PromptMode::bucket;
  std::string records;
  std::string output;
  std::optional<std::string> hits;      // required for retrieval/combined
  std::optional<std::string> spec_path; // required with inference
  bool inference = false;               // force the top bucket's label
  int max_knowledge_chars = kDefaultMaxKnowledgeChars;
};

struct ScoreStage {
  std::string candidates;
  std::string references;
  std::optional<std::string> output;
  CiderParams params;
};

struct ConsensusStage {
  std::vector<std::string> predictions;
  std::string output;
  std::optional<std::string> report;
  std::optional<std::string> idf_corpus; // external reference corpus
  bool multi_reference = false;
  CiderParams params;
};

struct CopyPasteStage {
  std::string queries;
  std::string train_index;
  std::string predictions;
  std::string output;
  std::optional<std::string> report;
  Scalar threshold = 0.35;
  std::optional<std::string> url_filter;
};

using Stage = std::variant<CleanStage, BucketizeStage, RetrieveStage, PromptStage, ScoreStage,
                           ConsensusStage, CopyPasteStage>;

struct PipelineConfig {
  long long seed = 0;
  std::string manifest = "manifest.txt";
  std::vector<Stage> stages;
};

// Stage executors, shared between the pipeline and the CLI
// subcommands. Each throws on error.
void run_clean(const CleanStage& stage);
void run_bucketize(const BucketizeStage& stage);
void run_retrieve(const RetrieveStage& stage);
void run_prompt(const PromptStage& stage);

struct ScoreReport {
  std::vector<std::pair<std::string, Scalar>> per_image; // image-id sorted
  Scalar corpus = 0.0;
};
ScoreReport run_score(const ScoreStage& stage);

void run_consensus(const ConsensusStage& stage);
void run_copy_paste(const CopyPasteStage& stage);

// Config file: one JSON object {seed, manifest, stages: [...]}, each
// stage an object with a "stage" discriminator and that stage's fields.
PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig parse_pipeline_config(const nlohmann::ordered_json& j);

// Checks every stage's parameters against the module preconditions and
// path distinctness, before anything runs. Throws on first violation.
void validate_pipeline_config(const PipelineConfig& config);

// Validates, then executes stages in declared order, writing the
// manifest as it goes. The first failing stage aborts with a
// stage-qualified error.
void run_pipeline(const PipelineConfig& config);

// Deterministic human-readable plan; writes nothing.
std::string explain(const PipelineConfig& config);

const char* stage_name(const Stage& stage);
const char* stage_phase(const Stage& stage); // curate | prompt | score | ensemble

} // namespace capkit

#endif
