#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "capkit/buckets.hpp"
#include "capkit/ensemble.hpp"
#include "capkit/pipeline.hpp"
#include "capkit/records.hpp"
#include "capkit/simcore.hpp"

namespace {

using namespace capkit;

// CLI11 stores into plain strings; empty means "not given" for the
// optional path flags below.
std::optional<std::string> opt(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<std::string>(s);
}

void add_clean(CLI::App& app, CleanStage& stage, std::string& rejects) {
  CLI::App* cmd = app.add_subcommand("clean", "Filter captions by length and ASCII-letter ratio");
  cmd->add_option("--records", stage.input, "input record file")->required();
  cmd->add_option("--out", stage.output, "kept records")->required();
  cmd->add_option("--rejects", rejects, "rejection log with reasons");
  cmd->add_option("--min-tokens", stage.rules.min_tokens, "minimum caption tokens");
  cmd->add_option("--max-tokens", stage.rules.max_tokens, "maximum caption tokens");
  cmd->add_option("--ascii-ratio", stage.rules.min_ascii_letter_ratio,
                  "minimum ASCII-letter ratio among non-space characters");
  cmd->callback([&stage, &rejects] {
    stage.rejects = opt(rejects);
    run_clean(stage);
  });
}

void add_bucketize(CLI::App& app, BucketizeStage& stage) {
  CLI::App* cmd = app.add_subcommand("bucketize", "Assign similarity buckets from quantile thresholds");
  cmd->add_option("--records", stage.input, "input record file")->required();
  cmd->add_option("--out", stage.output, "records augmented with bucket fields")->required();
  cmd->add_option("--spec-out", stage.spec_output, "bucket spec sidecar")->required();
  cmd->add_option("--buckets", stage.n, "bucket count");
  cmd->add_option("--edge-fraction", stage.edge_fraction, "population mass of each edge bucket");
  cmd->add_option("--label", stage.labels, "bucket labels, lowest quality first (repeatable)");
  cmd->callback([&stage] {
    if (stage.labels.empty()) stage.labels = default_bucket_labels();
    run_bucketize(stage);
  });
}

void add_retrieve(CLI::App& app, RetrieveStage& stage, std::string& url_filter) {
  CLI::App* cmd = app.add_subcommand("retrieve", "Exact top-k retrieval by image-embedding cosine");
  cmd->add_option("--queries", stage.queries, "query record file")->required();
  cmd->add_option("--index", stage.index, "index record file")->required();
  cmd->add_option("--out", stage.output, "per-query hit lists")->required();
  cmd->add_option("--top-k", stage.top_k, "hits per query");
  cmd->add_option("--url-filter", url_filter, "index only records whose url contains this");
  cmd->add_flag("--exclude-self", stage.exclude_self, "drop the query id from its own hits");
  cmd->callback([&stage, &url_filter] {
    stage.url_filter = opt(url_filter);
    run_retrieve(stage);
  });
}

void add_prompt(CLI::App& app, PromptStage& stage, std::string& mode, std::string& hits,
                std::string& spec) {
  CLI::App* cmd = app.add_subcommand("prompt", "Instruction template rendering");
  CLI::App* build = cmd->add_subcommand("build", "Render a prompt per record");
  build->add_option("--mode", mode, "bucket | retrieval | combined")->required();
  build->add_option("--records", stage.records, "record file (bucketized for bucket/combined)")
      ->required();
  build->add_option("--out", stage.output, "records with a prompt field")->required();
  build->add_option("--hits", hits, "retrieval hits file");
  build->add_option("--spec", spec, "bucket spec sidecar (for --inference)");
  build->add_flag("--inference", stage.inference, "use the top bucket's label for every record");
  build->add_option("--max-knowledge-chars", stage.max_knowledge_chars,
                    "knowledge budget for retrieved captions");
  cmd->require_subcommand(1);
  build->callback([&stage, &mode, &hits, &spec] {
    if (mode == "bucket") stage.mode = PromptMode::bucket;
    else if (mode == "retrieval") stage.mode = PromptMode::retrieval;
    else if (mode == "combined") stage.mode = PromptMode::combined;
    else throw CLI::ValidationError("--mode", "expected bucket, retrieval or combined");
    stage.hits = opt(hits);
    stage.spec_path = opt(spec);
    run_prompt(stage);
  });
}

void add_score(CLI::App& app, ScoreStage& stage, std::string& output, bool& plain) {
  CLI::App* cmd = app.add_subcommand("score", "Caption metrics");
  CLI::App* cider = cmd->add_subcommand("cider", "Consensus n-gram TF-IDF score");
  cider->add_option("--candidates", stage.candidates, "prediction file")->required();
  cider->add_option("--references", stage.references, "reference file")->required();
  cider->add_option("--out", output, "per-image report file");
  cider->add_option("--max-n", stage.params.max_n, "largest n-gram order");
  cider->add_option("--sigma", stage.params.sigma, "length penalty width");
  cider->add_option("--scale", stage.params.scale, "score scale");
  cider->add_flag("--plain", plain, "plain variant: no clipping, no length penalty");
  cmd->require_subcommand(1);
  cider->callback([&stage, &output, &plain] {
    stage.params.d_variant = !plain;
    stage.output = opt(output);
    const ScoreReport report = run_score(stage);
    for (const auto& [image_id, score] : report.per_image)
      std::printf("%s\t%.6f\n", image_id.c_str(), score);
    std::printf("corpus\t%.6f\n", report.corpus);
  });
}

void add_ensemble(CLI::App& app, CopyPasteStage& cp, std::string& cp_report, std::string& cp_url,
                  ConsensusStage& cons, std::string& cons_report, std::string& cons_idf) {
  CLI::App* cmd = app.add_subcommand("ensemble", "Model-ensemble tricks");

  CLI::App* copy = cmd->add_subcommand("copy-paste", "Replace predictions with near-duplicate "
                                                     "training captions past a similarity gate");
  copy->add_option("--queries", cp.queries, "test record file (image embeddings)")->required();
  copy->add_option("--train-index", cp.train_index, "training record file")->required();
  copy->add_option("--predictions", cp.predictions, "prediction file with caption embeddings")
      ->required();
  copy->add_option("--out", cp.output, "final prediction file")->required();
  copy->add_option("--report", cp_report, "per-image decision log");
  copy->add_option("--threshold", cp.threshold, "similarity gate");
  copy->add_option("--url-filter", cp_url, "restrict the train index by url substring");
  copy->callback([&cp, &cp_report, &cp_url] {
    cp.report = opt(cp_report);
    cp.url_filter = opt(cp_url);
    run_copy_paste(cp);
  });

  CLI::App* consensus = cmd->add_subcommand("consensus", "Keep the caption with the highest mean "
                                                         "agreement against the other predictions");
  consensus->add_option("--predictions", cons.predictions, "prediction files")
      ->required()
      ->expected(-1);
  consensus->add_option("--out", cons.output, "fused prediction file")->required();
  consensus->add_option("--report", cons_report, "per-image score report");
  consensus->add_option("--idf-corpus", cons_idf, "external reference corpus for the IDF");
  consensus->add_flag("--multi-reference", cons.multi_reference,
                      "score each candidate against the others jointly instead of pairwise");
  consensus->add_option("--max-n", cons.params.max_n, "largest n-gram order");
  consensus->add_option("--sigma", cons.params.sigma, "length penalty width");
  cmd->require_subcommand(1);
  consensus->callback([&cons, &cons_report, &cons_idf] {
    cons.report = opt(cons_report);
    cons.idf_corpus = opt(cons_idf);
    run_consensus(cons);
  });
}

struct ItcArgs {
  std::string records;
  Scalar tau = kDefaultTemperature;
  Scalar alpha = 0.0;
  bool grad = false;
};

void add_itc(CLI::App& app, ItcArgs& args) {
  CLI::App* cmd = app.add_subcommand("itc-loss", "Contrastive loss of an embedding batch");
  cmd->add_option("--records", args.records, "record file with image and text embeddings")
      ->required();
  cmd->add_option("--tau", args.tau, "softmax temperature");
  cmd->add_option("--alpha", args.alpha,
                  "pseudo-target weight; soft targets come from the batch similarities");
  cmd->add_flag("--grad", args.grad, "also print the gradient Frobenius norm");
  cmd->callback([&args] {
    const RecordSet rs = load_records(args.records);
    if (rs.empty()) throw std::runtime_error("itc-loss: empty record file");
    Mat images(static_cast<Index>(rs.size()), rs.dimension);
    Mat texts(static_cast<Index>(rs.size()), rs.dimension);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const PairRecord& rec = rs.records[i];
      if (!rec.text_embedding)
        throw std::runtime_error("itc-loss: record \"" + rec.id + "\" has no text_embedding");
      images.row(static_cast<Index>(i)) = rec.image_embedding.transpose();
      texts.row(static_cast<Index>(i)) = rec.text_embedding->transpose();
    }
    const SimilarityMatrix sim = pairwise_similarity(images, texts, args.tau);
    Mat y_i2t = one_hot_targets(sim.values.rows());
    Mat y_t2i = one_hot_targets(sim.values.rows());
    if (args.alpha > 0.0) {
      y_i2t = mix_pseudo_targets(y_i2t, softmax_rows((sim.values / sim.tau).eval()), args.alpha);
      y_t2i = mix_pseudo_targets(y_t2i, softmax_rows((sim.values.transpose() / sim.tau).eval()),
                                 args.alpha);
    }
    const ItcResult result = itc_loss(sim, y_i2t, y_t2i);
    std::printf("batch\t%zu\ntau\t%.6g\nalpha\t%.6g\nloss\t%.12f\n", rs.size(), args.tau,
                args.alpha, result.loss);
    if (args.grad) {
      const Mat g = itc_loss_grad(sim, y_i2t, y_t2i);
      std::printf("grad_fro\t%.12e\n", g.norm());
    }
  });
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"capkit: caption data curation, scoring and ensembling"};
  app.require_subcommand(1);

  CleanStage clean_stage;
  std::string clean_rejects;
  add_clean(app, clean_stage, clean_rejects);

  BucketizeStage bucketize_stage;
  add_bucketize(app, bucketize_stage);

  RetrieveStage retrieve_stage;
  std::string retrieve_url;
  add_retrieve(app, retrieve_stage, retrieve_url);

  PromptStage prompt_stage;
  std::string prompt_mode, prompt_hits, prompt_spec;
  add_prompt(app, prompt_stage, prompt_mode, prompt_hits, prompt_spec);

  ScoreStage score_stage;
  std::string score_out;
  bool score_plain = false;
  add_score(app, score_stage, score_out, score_plain);

  CopyPasteStage cp_stage;
  std::string cp_report, cp_url;
  ConsensusStage cons_stage;
  std::string cons_report, cons_idf;
  add_ensemble(app, cp_stage, cp_report, cp_url, cons_stage, cons_report, cons_idf);

  ItcArgs itc_args;
  add_itc(app, itc_args);

  std::string config_path;
  CLI::App* run_cmd = app.add_subcommand("run", "Execute a declarative pipeline config");
  run_cmd->add_option("--config", config_path, "pipeline config file")->required();
  run_cmd->callback([&config_path] { run_pipeline(load_pipeline_config(config_path)); });

  std::string explain_path;
  CLI::App* explain_cmd = app.add_subcommand("explain", "Print the plan for a config, run nothing");
  explain_cmd->add_option("--config", explain_path, "pipeline config file")->required();
  explain_cmd->callback([&explain_path] {
    const PipelineConfig config = load_pipeline_config(explain_path);
    validate_pipeline_config(config);
    std::cout << explain(config);
  });

  try {
    CLI11_PARSE(app, argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
