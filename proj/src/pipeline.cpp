#include "capkit/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "capkit/buckets.hpp"
#include "capkit/ensemble.hpp"
#include "capkit/hash.hpp"
#include "capkit/records.hpp"
#include "capkit/simcore.hpp"

namespace capkit {

using nlohmann::ordered_json;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

ordered_json hit_to_json(const RetrievalHit& hit) {
  ordered_json j;
  j["id"] = hit.id;
  j["similarity"] = hit.similarity;
  j["caption"] = hit.caption;
  return j;
}

// Per-record similarity for bucketizing: the stored value when
// present, otherwise the cosine of the pair's own embeddings.
Scalar record_similarity(const PairRecord& rec) {
  if (rec.similarity) return *rec.similarity;
  if (rec.text_embedding) return cosine(rec.image_embedding, *rec.text_embedding);
  throw std::runtime_error("record \"" + rec.id +
                           "\" has neither a similarity nor a text_embedding");
}

} // namespace

void run_clean(const CleanStage& stage) {
  const RecordSet rs = load_records(stage.input);
  RecordSet kept;
  kept.dimension = rs.dimension;
  std::vector<std::pair<std::string, CleanReason>> rejected;
  for (const PairRecord& rec : rs.records) {
    const CleanDecision decision = clean_filter(rec, stage.rules);
    if (decision.keep)
      kept.records.push_back(rec);
    else
      rejected.emplace_back(rec.id, decision.reason);
  }
  save_records(kept, stage.output);
  if (stage.rejects) {
    std::ofstream out = open_out(*stage.rejects);
    for (const auto& [id, reason] : rejected) {
      ordered_json j;
      j["id"] = id;
      j["reason"] = to_string(reason);
      out << j.dump() << '\n';
    }
  }
}

void run_bucketize(const BucketizeStage& stage) {
  const RecordSet rs = load_records(stage.input);
  std::vector<Scalar> population;
  population.reserve(rs.size());
  for (const PairRecord& rec : rs.records) population.push_back(record_similarity(rec));

  const BucketSpec spec = compute_thresholds(population, stage.n, stage.edge_fraction, stage.labels);
  save_bucket_spec(spec, stage.spec_output);

  std::ofstream out = open_out(stage.output);
  for (std::size_t i = 0; i < rs.records.size(); ++i) {
    const BucketAssignment assignment = assign_bucket(population[i], spec, rs.records[i].id);
    ordered_json j = record_to_json(rs.records[i]);
    j["bucket_index"] = assignment.bucket_index;
    j["bucket_label"] = assignment.label;
    out << j.dump() << '\n';
  }
}

void run_retrieve(const RetrieveStage& stage) {
  const RecordSet queries = load_records(stage.queries);
  const RecordSet corpus = load_records(stage.index);
  const VectorIndex index = build_index(corpus, stage.url_filter);

  std::ofstream out = open_out(stage.output);
  for (const PairRecord& query : queries.records) {
    const std::optional<std::string> exclude =
        stage.exclude_self ? std::optional<std::string>(query.id) : std::nullopt;
    const std::vector<RetrievalHit> hits = top_k(index, query.image_embedding, stage.top_k, exclude);
    ordered_json j;
    j["query_id"] = query.id;
    ordered_json arr = ordered_json::array();
    for (const RetrievalHit& hit : hits) arr.push_back(hit_to_json(hit));
    j["hits"] = arr;
    out << j.dump() << '\n';
  }
}

namespace {

std::map<std::string, std::vector<std::string>> load_hit_captions(const std::string& path) {
  std::ifstream in = open_in(path);
  std::map<std::string, std::vector<std::string>> captions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("query_id") || !j.contains("hits"))
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed hit line");
    std::vector<std::string>& list = captions[j["query_id"].get<std::string>()];
    for (const auto& hit : j["hits"]) list.push_back(hit.at("caption").get<std::string>());
  }
  return captions;
}

} // namespace

void run_prompt(const PromptStage& stage) {
  std::map<std::string, std::vector<std::string>> hit_captions;
  if (stage.hits) hit_captions = load_hit_captions(*stage.hits);

  std::optional<BucketSpec> spec;
  if (stage.spec_path) spec = load_bucket_spec(*stage.spec_path);
  if (stage.inference && !spec)
    throw std::runtime_error("prompt: inference mode needs the bucket spec sidecar");

  std::ifstream in = open_in(stage.records);
  std::ofstream out = open_out(stage.output);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id"))
      throw std::runtime_error(stage.records + ":" + std::to_string(line_no) +
                               ": malformed record line");
    const std::string id = j["id"].get<std::string>();

    std::string label;
    if (stage.mode == PromptMode::bucket || stage.mode == PromptMode::combined) {
      if (stage.inference) {
        label = inference_bucket(*spec);
      } else if (j.contains("bucket_label")) {
        label = j["bucket_label"].get<std::string>();
      } else {
        throw std::runtime_error(stage.records + ":" + std::to_string(line_no) +
                                 ": record \"" + id + "\" has no bucket_label (run bucketize "
                                 "first or use inference mode)");
      }
    }

    std::vector<std::string> knowledge;
    if (stage.mode != PromptMode::bucket) {
      const auto it = hit_captions.find(id);
      if (it != hit_captions.end()) knowledge = it->second;
    }

    std::string prompt;
    switch (stage.mode) {
      case PromptMode::bucket: prompt = render_bucket(label); break;
      case PromptMode::retrieval: prompt = render_retrieval(knowledge, stage.max_knowledge_chars); break;
      case PromptMode::combined: prompt = render_combined(label, knowledge, stage.max_knowledge_chars); break;
    }
    j["prompt"] = prompt;
    out << j.dump() << '\n';
  }
}

ScoreReport run_score(const ScoreStage& stage) {
  const PredictionFile candidates = load_predictions(stage.candidates);
  const std::map<std::string, std::vector<std::string>> references = load_references(stage.references);

  std::map<std::string, std::string> predictions;
  for (const auto& [image_id, entry] : candidates.entries) predictions[image_id] = entry.caption;
  for (const auto& [image_id, caption] : predictions)
    if (!references.count(image_id))
      throw std::runtime_error("score: no references for image \"" + image_id + "\"");

  std::vector<std::vector<std::string>> groups;
  groups.reserve(references.size());
  for (const auto& [image_id, group] : references) groups.push_back(group);
  const IdfTable idf = build_idf(groups, stage.params.max_n);

  ScoreReport report;
  for (const auto& [image_id, caption] : predictions) {
    const Scalar score = cider_d(caption, references.at(image_id), idf, stage.params);
    report.per_image.emplace_back(image_id, score);
    report.corpus += score;
  }
  report.corpus /= static_cast<Scalar>(predictions.size());

  if (stage.output) {
    std::ofstream out = open_out(*stage.output);
    for (const auto& [image_id, score] : report.per_image) {
      ordered_json j;
      j["image_id"] = image_id;
      j["cider_d"] = score;
      out << j.dump() << '\n';
    }
    ordered_json corpus_line;
    corpus_line["corpus"] = report.corpus;
    out << corpus_line.dump() << '\n';
  }
  return report;
}

void run_consensus(const ConsensusStage& stage) {
  std::vector<PredictionFile> files;
  files.reserve(stage.predictions.size());
  for (const std::string& path : stage.predictions) files.push_back(load_predictions(path));

  std::optional<IdfTable> external_idf;
  if (stage.idf_corpus) {
    const auto references = load_references(*stage.idf_corpus);
    std::vector<std::vector<std::string>> groups;
    groups.reserve(references.size());
    for (const auto& [image_id, group] : references) groups.push_back(group);
    external_idf = build_idf(groups, stage.params.max_n);
  }

  const ConsensusMode mode =
      stage.multi_reference ? ConsensusMode::multi_reference : ConsensusMode::pairwise_mean;
  const FuseResult result = fuse(files, stage.params, mode, external_idf);
  save_predictions(result.fused, stage.output);

  if (stage.report) {
    std::ofstream out = open_out(*stage.report);
    for (const FuseReportRow& row : result.report) {
      ordered_json j;
      j["image_id"] = row.image_id;
      j["winner_model"] = row.winner_model;
      j["scores"] = row.scores;
      out << j.dump() << '\n';
    }
  }
}

void run_copy_paste(const CopyPasteStage& stage) {
  const RecordSet queries = load_records(stage.queries);
  const RecordSet train = load_records(stage.train_index);
  const PredictionFile predictions = load_predictions(stage.predictions);
  const VectorIndex index = build_index(train, stage.url_filter);

  std::map<std::string, const PairRecord*> query_by_id;
  for (const PairRecord& rec : queries.records) query_by_id[rec.id] = &rec;
  std::map<std::string, const PairRecord*> train_by_id;
  for (const PairRecord& rec : train.records) train_by_id[rec.id] = &rec;

  PredictionFile fused;
  fused.model_id = "copy-paste";
  std::vector<CopyPasteDecision> decisions;

  for (const auto& [image_id, entry] : predictions.entries) {
    const auto query_it = query_by_id.find(image_id);
    if (query_it == query_by_id.end())
      throw std::runtime_error("copy-paste: no query record for image \"" + image_id + "\"");

    const std::vector<RetrievalHit> hits = top_k(index, query_it->second->image_embedding, 1);
    std::optional<CopyPasteCandidate> candidate;
    std::optional<Scalar> c2;
    Scalar avg_similarity = -1.0;
    if (!hits.empty()) {
      const PairRecord& train_rec = *train_by_id.at(hits.front().id);
      avg_similarity = hits.front().similarity;
      if (avg_similarity >= stage.threshold) {
        // c1/c2 are only needed once the gate passes; missing
        // embeddings are an error here, not at load.
        Scalar c1;
        if (train_rec.similarity) {
          c1 = *train_rec.similarity;
        } else if (train_rec.text_embedding) {
          c1 = cosine(*train_rec.text_embedding, train_rec.image_embedding);
        } else {
          throw std::runtime_error("copy-paste: train record \"" + train_rec.id +
                                   "\" has neither a similarity nor a text_embedding");
        }
        if (!entry.caption_embedding)
          throw std::runtime_error("copy-paste: prediction for \"" + image_id +
                                   "\" has no caption_embedding");
        candidate = CopyPasteCandidate{train_rec.id, train_rec.caption, c1};
        c2 = cosine(*entry.caption_embedding, train_rec.image_embedding);
      }
    }

    const CopyPasteDecision decision =
        copy_paste(image_id, avg_similarity, candidate, entry.caption, c2, stage.threshold);
    PredictionEntry out_entry;
    out_entry.caption = decision.final_caption;
    fused.entries.emplace(image_id, std::move(out_entry));
    decisions.push_back(decision);
  }

  save_predictions(fused, stage.output);
  if (stage.report) {
    std::ofstream out = open_out(*stage.report);
    for (const CopyPasteDecision& d : decisions) {
      ordered_json j;
      j["image_id"] = d.image_id;
      j["avg_similarity"] = d.avg_similarity;
      if (d.candidate_id) j["candidate_id"] = *d.candidate_id;
      if (d.c1) j["c1"] = *d.c1;
      if (d.c2) j["c2"] = *d.c2;
      j["chosen"] = d.chosen == CopyPasteChoice::copied_caption ? "copied_caption" : "model_prediction";
      j["final_caption"] = d.final_caption;
      out << j.dump() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Config parsing and validation

namespace {

std::string require_string(const ordered_json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_string())
    throw std::runtime_error(ctx + ": missing string field '" + key + "'");
  return j[key].get<std::string>();
}

std::optional<std::string> optional_string(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

CiderParams parse_cider_params(const ordered_json& j) {
  CiderParams params;
  params.max_n = j.value("max_n", params.max_n);
  params.sigma = j.value("sigma", params.sigma);
  params.scale = j.value("scale", params.scale);
  params.d_variant = j.value("d_variant", params.d_variant);
  return params;
}

Stage parse_stage(const ordered_json& j, std::size_t position) {
  const std::string ctx = "stage #" + std::to_string(position + 1);
  const std::string kind = require_string(j, "stage", ctx);
  if (kind == "clean") {
    CleanStage s;
    s.input = require_string(j, "input", ctx);
    s.output = require_string(j, "output", ctx);
    s.rejects = optional_string(j, "rejects");
    s.rules.min_tokens = j.value("min_tokens", s.rules.min_tokens);
    s.rules.max_tokens = j.value("max_tokens", s.rules.max_tokens);
    s.rules.min_ascii_letter_ratio = j.value("ascii_ratio", s.rules.min_ascii_letter_ratio);
    return s;
  }
  if (kind == "bucketize") {
    BucketizeStage s;
    s.input = require_string(j, "input", ctx);
    s.output = require_string(j, "output", ctx);
    s.spec_output = require_string(j, "spec_output", ctx);
    s.n = j.value("buckets", s.n);
    s.edge_fraction = j.value("edge_fraction", s.edge_fraction);
    s.labels = j.value("labels", default_bucket_labels());
    return s;
  }
  if (kind == "retrieve") {
    RetrieveStage s;
    s.queries = require_string(j, "queries", ctx);
    s.index = require_string(j, "index", ctx);
    s.output = require_string(j, "output", ctx);
    s.top_k = j.value("top_k", s.top_k);
    s.url_filter = optional_string(j, "url_filter");
    s.exclude_self = j.value("exclude_self", s.exclude_self);
    return s;
  }
  if (kind == "prompt") {
    PromptStage s;
    const std::string mode = j.value("mode", std::string("bucket"));
    if (mode == "bucket") s.mode = PromptMode::bucket;
    else if (mode == "retrieval") s.mode = PromptMode::retrieval;
    else if (mode == "combined") s.mode = PromptMode::combined;
    else throw std::runtime_error(ctx + ": unknown prompt mode \"" + mode + "\"");
    s.records = require_string(j, "records", ctx);
    s.output = require_string(j, "output", ctx);
    s.hits = optional_string(j, "hits");
    s.spec_path = optional_string(j, "spec");
    s.inference = j.value("inference", s.inference);
    s.max_knowledge_chars = j.value("max_knowledge_chars", s.max_knowledge_chars);
    return s;
  }
  if (kind == "score") {
    ScoreStage s;
    s.candidates = require_string(j, "candidates", ctx);
    s.references = require_string(j, "references", ctx);
    s.output = optional_string(j, "output");
    s.params = parse_cider_params(j);
    return s;
  }
  if (kind == "consensus") {
    ConsensusStage s;
    if (!j.contains("predictions") || !j["predictions"].is_array())
      throw std::runtime_error(ctx + ": missing array field 'predictions'");
    for (const auto& p : j["predictions"]) s.predictions.push_back(p.get<std::string>());
    s.output = require_string(j, "output", ctx);
    s.report = optional_string(j, "report");
    s.idf_corpus = optional_string(j, "idf_corpus");
    s.multi_reference = j.value("multi_reference", s.multi_reference);
    s.params = parse_cider_params(j);
    return s;
  }
  if (kind == "copy-paste") {
    CopyPasteStage s;
    s.queries = require_string(j, "queries", ctx);
    s.train_index = require_string(j, "train_index", ctx);
    s.predictions = require_string(j, "predictions", ctx);
    s.output = require_string(j, "output", ctx);
    s.report = optional_string(j, "report");
    s.threshold = j.value("threshold", s.threshold);
    s.url_filter = optional_string(j, "url_filter");
    return s;
  }
  throw std::runtime_error(ctx + ": unknown stage \"" + kind + "\"");
}

struct StagePaths {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

StagePaths stage_paths(const Stage& stage) {
  StagePaths p;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CleanStage>) {
          p.inputs = {s.input};
          p.outputs = {s.output};
          if (s.rejects) p.outputs.push_back(*s.rejects);
        } else if constexpr (std::is_same_v<T, BucketizeStage>) {
          p.inputs = {s.input};
          p.outputs = {s.output, s.spec_output};
        } else if constexpr (std::is_same_v<T, RetrieveStage>) {
          p.inputs = {s.queries, s.index};
          p.outputs = {s.output};
        } else if constexpr (std::is_same_v<T, PromptStage>) {
          p.inputs = {s.records};
          if (s.hits) p.inputs.push_back(*s.hits);
          if (s.spec_path) p.inputs.push_back(*s.spec_path);
          p.outputs = {s.output};
        } else if constexpr (std::is_same_v<T, ScoreStage>) {
          p.inputs = {s.candidates, s.references};
          if (s.output) p.outputs.push_back(*s.output);
        } else if constexpr (std::is_same_v<T, ConsensusStage>) {
          p.inputs = s.predictions;
          if (s.idf_corpus) p.inputs.push_back(*s.idf_corpus);
          p.outputs = {s.output};
          if (s.report) p.outputs.push_back(*s.report);
        } else if constexpr (std::is_same_v<T, CopyPasteStage>) {
          p.inputs = {s.queries, s.train_index, s.predictions};
          p.outputs = {s.output};
          if (s.report) p.outputs.push_back(*s.report);
        }
      },
      stage);
  return p;
}

void check_cider_params(const CiderParams& params, const std::string& ctx) {
  if (params.max_n < 1) throw std::runtime_error(ctx + ": max_n must be >= 1");
  if (!(params.sigma > 0.0)) throw std::runtime_error(ctx + ": sigma must be positive");
}

void validate_stage(const Stage& stage, std::size_t position) {
  const std::string ctx = std::string(stage_name(stage)) + " stage #" + std::to_string(position + 1);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CleanStage>) {
          if (s.rules.min_tokens < 1 || s.rules.min_tokens > s.rules.max_tokens)
            throw std::runtime_error(ctx + ": need 0 < min_tokens <= max_tokens");
          if (s.rules.min_ascii_letter_ratio < 0.0 || s.rules.min_ascii_letter_ratio > 1.0)
            throw std::runtime_error(ctx + ": ascii_ratio must lie in [0, 1]");
        } else if constexpr (std::is_same_v<T, BucketizeStage>) {
          if (s.n < 2) throw std::runtime_error(ctx + ": need at least 2 buckets");
          if (!(s.edge_fraction > 0.0) || !(s.edge_fraction < 1.0 / s.n))
            throw std::runtime_error(ctx + ": edge_fraction must lie in (0, 1/n)");
          if (s.labels.size() != static_cast<std::size_t>(s.n))
            throw std::runtime_error(ctx + ": expected " + std::to_string(s.n) + " labels");
          std::set<std::string> distinct;
          for (const std::string& label : s.labels) {
            if (label.empty()) throw std::runtime_error(ctx + ": empty bucket label");
            if (!distinct.insert(label).second)
              throw std::runtime_error(ctx + ": duplicate bucket label \"" + label + "\"");
          }
        } else if constexpr (std::is_same_v<T, RetrieveStage>) {
          if (s.top_k < 1) throw std::runtime_error(ctx + ": top_k must be >= 1");
        } else if constexpr (std::is_same_v<T, PromptStage>) {
          if (s.max_knowledge_chars < 1)
            throw std::runtime_error(ctx + ": max_knowledge_chars must be >= 1");
          if (s.mode != PromptMode::bucket && !s.hits)
            throw std::runtime_error(ctx + ": retrieval/combined mode needs 'hits'");
          if (s.inference && !s.spec_path)
            throw std::runtime_error(ctx + ": inference mode needs 'spec'");
        } else if constexpr (std::is_same_v<T, ScoreStage>) {
          check_cider_params(s.params, ctx);
        } else if constexpr (std::is_same_v<T, ConsensusStage>) {
          if (s.predictions.empty()) throw std::runtime_error(ctx + ": no prediction files");
          check_cider_params(s.params, ctx);
        } else if constexpr (std::is_same_v<T, CopyPasteStage>) {
          if (!std::isfinite(s.threshold)) throw std::runtime_error(ctx + ": threshold must be finite");
        }
      },
      stage);

  const StagePaths paths = stage_paths(stage);
  std::set<std::string> seen;
  for (const std::string& path : paths.inputs) seen.insert(path);
  for (const std::string& path : paths.outputs) {
    if (seen.count(path))
      throw std::runtime_error(ctx + ": path \"" + path + "\" used as both input and output");
  }
  std::set<std::string> outs;
  for (const std::string& path : paths.outputs) {
    if (!outs.insert(path).second)
      throw std::runtime_error(ctx + ": duplicate output path \"" + path + "\"");
  }
}

} // namespace

const char* stage_name(const Stage& stage) {
  return std::visit(
      [](const auto& s) -> const char* {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CleanStage>) return "clean";
        else if constexpr (std::is_same_v<T, BucketizeStage>) return "bucketize";
        else if constexpr (std::is_same_v<T, RetrieveStage>) return "retrieve";
        else if constexpr (std::is_same_v<T, PromptStage>) return "prompt";
        else if constexpr (std::is_same_v<T, ScoreStage>) return "score";
        else if constexpr (std::is_same_v<T, ConsensusStage>) return "consensus";
        else return "copy-paste";
      },
      stage);
}

const char* stage_phase(const Stage& stage) {
  return std::visit(
      [](const auto& s) -> const char* {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CleanStage> || std::is_same_v<T, BucketizeStage> ||
                      std::is_same_v<T, RetrieveStage>)
          return "curate";
        else if constexpr (std::is_same_v<T, PromptStage>) return "prompt";
        else if constexpr (std::is_same_v<T, ScoreStage>) return "score";
        else return "ensemble";
      },
      stage);
}

PipelineConfig parse_pipeline_config(const ordered_json& j) {
  if (!j.is_object()) throw std::runtime_error("config: expected a JSON object");
  PipelineConfig config;
  config.seed = j.value("seed", config.seed);
  config.manifest = j.value("manifest", config.manifest);
  if (j.contains("stages")) {
    if (!j["stages"].is_array()) throw std::runtime_error("config: 'stages' must be an array");
    for (std::size_t i = 0; i < j["stages"].size(); ++i)
      config.stages.push_back(parse_stage(j["stages"][i], i));
  }
  return config;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in = open_in(path);
  ordered_json j = ordered_json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error(path + ": config does not parse as JSON");
  return parse_pipeline_config(j);
}

void validate_pipeline_config(const PipelineConfig& config) {
  for (std::size_t i = 0; i < config.stages.size(); ++i) validate_stage(config.stages[i], i);
}

namespace {

// Canonical parameter rendering for the manifest line: the paths are
// covered by the digests, so only the behavioral knobs appear.
ordered_json stage_params_json(const Stage& stage) {
  ordered_json j;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CleanStage>) {
          j["min_tokens"] = s.rules.min_tokens;
          j["max_tokens"] = s.rules.max_tokens;
          j["ascii_ratio"] = s.rules.min_ascii_letter_ratio;
        } else if constexpr (std::is_same_v<T, BucketizeStage>) {
          j["buckets"] = s.n;
          j["edge_fraction"] = s.edge_fraction;
          j["labels"] = s.labels;
        } else if constexpr (std::is_same_v<T, RetrieveStage>) {
          j["top_k"] = s.top_k;
          if (s.url_filter) j["url_filter"] = *s.url_filter;
          j["exclude_self"] = s.exclude_self;
        } else if constexpr (std::is_same_v<T, PromptStage>) {
          j["mode"] = s.mode == PromptMode::bucket ? "bucket"
                      : s.mode == PromptMode::retrieval ? "retrieval" : "combined";
          j["inference"] = s.inference;
          j["max_knowledge_chars"] = s.max_knowledge_chars;
        } else if constexpr (std::is_same_v<T, ScoreStage>) {
          j["max_n"] = s.params.max_n;
          j["sigma"] = s.params.sigma;
          j["scale"] = s.params.scale;
          j["d_variant"] = s.params.d_variant;
        } else if constexpr (std::is_same_v<T, ConsensusStage>) {
          j["multi_reference"] = s.multi_reference;
          j["max_n"] = s.params.max_n;
          j["sigma"] = s.params.sigma;
          j["scale"] = s.params.scale;
          j["d_variant"] = s.params.d_variant;
        } else if constexpr (std::is_same_v<T, CopyPasteStage>) {
          j["threshold"] = s.threshold;
          if (s.url_filter) j["url_filter"] = *s.url_filter;
        }
      },
      stage);
  return j;
}

void execute_stage(const Stage& stage) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CleanStage>) run_clean(s);
        else if constexpr (std::is_same_v<T, BucketizeStage>) run_bucketize(s);
        else if constexpr (std::is_same_v<T, RetrieveStage>) run_retrieve(s);
        else if constexpr (std::is_same_v<T, PromptStage>) run_prompt(s);
        else if constexpr (std::is_same_v<T, ScoreStage>) run_score(s);
        else if constexpr (std::is_same_v<T, ConsensusStage>) run_consensus(s);
        else run_copy_paste(s);
      },
      stage);
}

std::uint64_t digest_paths(const std::vector<std::string>& paths) {
  std::uint64_t state = kFnvOffsetBasis;
  for (const std::string& path : paths) state = fold_file_hash(path, state);
  return state;
}

} // namespace

void run_pipeline(const PipelineConfig& config) {
  validate_pipeline_config(config);

  std::ofstream manifest = open_out(config.manifest);
  manifest << "# capkit manifest v1\n";
  manifest << "# hash: fnv1a64\n";
  manifest << "# seed: " << config.seed << "\n";

  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const Stage& stage = config.stages[i];
    const StagePaths paths = stage_paths(stage);
    try {
      const std::uint64_t inputs_digest = digest_paths(paths.inputs);
      execute_stage(stage);
      const std::uint64_t outputs_digest = digest_paths(paths.outputs);
      manifest << "stage=" << stage_name(stage) << " inputs=" << hex64(inputs_digest)
               << " outputs=" << hex64(outputs_digest) << " params=" << stage_params_json(stage).dump()
               << "\n";
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(stage_name(stage)) + " stage #" + std::to_string(i + 1) +
                               ": " + e.what());
    }
  }
}

std::string explain(const PipelineConfig& config) {
  std::ostringstream out;
  if (config.stages.empty()) {
    out << "pipeline plan: no stages (seed " << config.seed << ")\n";
    return out.str();
  }
  out << "pipeline plan: " << config.stages.size() << " stage(s), seed " << config.seed
      << ", manifest " << config.manifest << "\n";
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const Stage& stage = config.stages[i];
    const StagePaths paths = stage_paths(stage);
    out << "  " << (i + 1) << ". " << stage_name(stage) << " [" << stage_phase(stage) << " phase]";
    out << " params=" << stage_params_json(stage).dump();
    out << " reads:";
    for (const std::string& p : paths.inputs) out << " " << p;
    out << " writes:";
    for (const std::string& p : paths.outputs) out << " " << p;
    out << "\n";
  }
  return out.str();
}

} // namespace capkit
