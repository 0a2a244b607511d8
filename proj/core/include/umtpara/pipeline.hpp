#pragma once

// Stage orchestration: every stage reads its inputs from the output
// directory, writes artifacts atomically and records them in manifest.json.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "umtpara/clustering.hpp"
#include "umtpara/corpus.hpp"
#include "umtpara/metrics.hpp"
#include "umtpara/pairing.hpp"
#include "umtpara/pseudo.hpp"
#include "umtpara/seq2seq.hpp"
#include "umtpara/surrogate.hpp"
#include "umtpara/umt.hpp"

namespace umtpara::pipeline {

enum class Profile { kDesk, kPaper };
Profile parse_profile(const std::string& name);
std::string to_string(Profile p);

struct PipelineConfig {
  Profile profile = Profile::kDesk;
  std::filesystem::path base_dir;  // relative paths resolve against this

  // [corpus]
  std::filesystem::path corpus_path;
  CorpusFormat corpus_format = CorpusFormat::kLines;
  TokenizerConfig tokenizer;
  std::size_t min_count = 2;
  std::size_t max_vocab = 30000;
  // Leading sentences kept from the corpus; 0 keeps all.
  std::size_t corpus_limit = 0;

  // [clustering]
  ClusteringKind clustering = ClusteringKind::kLda;
  LdaConfig lda;
  std::filesystem::path embeddings;  // empty: hashed fallback
  std::size_t embedding_dim = 64;
  std::size_t kmeans_max_iter = 100;
  std::filesystem::path review;      // optional decisions TSV

  // [pairing]
  pairing::Strategy strategy = pairing::Strategy::kRandom;
  std::size_t score_degree = 2;
  std::size_t score_pairs = 6;       // L: sampled pairs for the score fit
  std::filesystem::path dev;         // labeled dev set for supervised/exhaustive
  std::filesystem::path score_samples;  // optional TSV `distance \t score`

  // [model]
  nn::TransformerConfig model;

  // [umt]
  umt::UmtTrainConfig umt;
  std::size_t workers = 1;

  // [distill]
  double sample_fraction = 1.0;
  std::size_t decode_batch = 64;

  // [filter]
  pseudo::FilterSpec filters;

  // [surrogate]
  surrogate::SurrogateTrainConfig surrogate;

  // [finetune]
  std::filesystem::path labeled;
  surrogate::SurrogateTrainConfig finetune;

  // [eval]
  std::filesystem::path test;
  std::size_t test_limit = 0;
  bool eval_finetuned = false;
  nn::BeamConfig beam;
  metrics::MetricConfig metrics;

  // [paraphrase]
  std::filesystem::path paraphrase_input;

  // [ablate]
  std::string ablate_axis;
  std::vector<std::size_t> corpus_sizes;
  std::vector<std::size_t> topic_counts;
  std::vector<pairing::Strategy> strategies;
  std::vector<ClusteringKind> clustering_methods;

  // [run]
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";

  static PipelineConfig defaults(Profile profile);

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  // Structural checks plus existence of every referenced input file.
  void validate() const;
  nlohmann::json snapshot() const;
};

// Reads an INI file over the profile's defaults. The profile comes from
// `forced` when given, else from run.profile, else desk. Unknown sections or
// keys and malformed values raise ConfigError naming "section.key".
PipelineConfig load_config(const std::filesystem::path& path, std::optional<Profile> forced = std::nullopt);
PipelineConfig parse_config(const std::string& text, std::optional<Profile> forced = std::nullopt,
                            const std::filesystem::path& base_dir = {});

inline constexpr const char* kStages[] = {"cluster",         "review-report", "pair",     "train-umt",
                                          "distill",         "filter",        "train-surrogate",
                                          "finetune",        "paraphrase",    "eval",     "ablate"};

bool is_stage(const std::string& name);

// Artifact names inside the output directory.
namespace artifacts {
inline constexpr const char* kVocab = "vocab.txt";
inline constexpr const char* kAssignments = "assignments.tsv";
inline constexpr const char* kClusters = "clusters.json";
inline constexpr const char* kTopicModel = "topic_model.json";
inline constexpr const char* kKMeansModel = "kmeans_model.json";
inline constexpr const char* kEmbeddings = "embeddings.txt";
inline constexpr const char* kDistances = "distances.tsv";
inline constexpr const char* kReviewReport = "review_report.txt";
inline constexpr const char* kReviewTemplate = "review_decisions.tsv";
inline constexpr const char* kPlan = "plan.tsv";
inline constexpr const char* kScoreFunction = "score_function.json";
inline constexpr const char* kUmtDir = "umt";
inline constexpr const char* kPairs = "pairs.jsonl";
inline constexpr const char* kFilteredPairs = "pairs.filtered.jsonl";
inline constexpr const char* kFilterReport = "filter_report.json";
inline constexpr const char* kSurrogate = "surrogate.ckpt";
inline constexpr const char* kSurrogateLog = "surrogate_epochs.csv";
inline constexpr const char* kFinetuned = "surrogate.finetuned.ckpt";
inline constexpr const char* kFinetuneLog = "finetune_epochs.csv";
inline constexpr const char* kParaphrases = "paraphrases.txt";
inline constexpr const char* kEvalReport = "eval_report.json";
inline constexpr const char* kEvalSentences = "eval_sentences.csv";
inline constexpr const char* kEvalOutputs = "eval_outputs.tsv";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifacts

std::string umt_checkpoint_name(ClusterId src, ClusterId tgt);

struct AblationRow {
  std::string value;
  double ibleu = 0.0;
};

// Runs one stage against config.out_dir. Returns the stage's own summary.
nlohmann::json run_stage(const std::string& stage, const PipelineConfig& config);

// Runs the training stages per axis value and returns axis value x iBLEU.
std::vector<AblationRow> ablate(const std::string& axis, const PipelineConfig& config);
std::string ablation_table(const std::string& axis, const std::vector<AblationRow>& rows);

// Stages in order for a full run without review or finetuning.
inline constexpr const char* kDefaultSequence[] = {"cluster",  "pair", "train-umt", "distill",
                                                   "filter",   "train-surrogate", "eval"};

}  // namespace umtpara::pipeline
