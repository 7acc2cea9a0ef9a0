#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "carol/data.hpp"
#include "carol/distances.hpp"
#include "carol/losses.hpp"
#include "carol/metrics.hpp"
#include "carol/net.hpp"

namespace carol {

// Everything a run depends on. Serialized in full into the run report so a
// report is replayable from its own config echo.
struct RunConfig {
  double c = 0.5;
  DistanceKind distance = DistanceKind::Euclidean;
  std::size_t n = 3;            // per-class contrastive sample size
  std::size_t recon_batch = 3;  // documents per reconstruction batch
  std::size_t epochs = 5;
  double lr = 1e-3;
  double deletion_ratio = 0.6;
  Eigen::Index feat_dim = 1024;
  Eigen::Index emb_dim = 64;
  std::uint64_t seed = 0;
  std::string train_corpus;
  std::string test_corpus;  // empty: hold out test_frac of the training corpus
  double test_frac = 0.2;
  std::size_t kdn_k = 5;
};

// Throws ConfigError on any out-of-range field.
void validate(const RunConfig& cfg);

struct StepRecord {
  std::size_t step = 0;   // global step index, from 0
  std::size_t epoch = 0;  // epoch the step belongs to, from 0
  LossBreakdown loss;
};

struct EncoderTraining {
  FeedForwardNet encoder;
  std::vector<StepRecord> steps;
  std::vector<LossBreakdown> epoch_means;
};

// One optimizer step consumes one reconstruction batch (freshly noised) and
// one balanced contrastive sample drawn from the whole training set; their
// gradient flows are combined with weights (1-c) and c. An epoch makes
// ceil(|train| / recon_batch) steps, covering every document once through a
// per-epoch shuffle. A flow whose weight is exactly zero is skipped, so the
// c=1 parameter trajectory cannot depend on the noise draws (loss values are
// still recorded for both flows). Non-finite losses or flow gradients abort
// with a NumericalError carrying the offending step's breakdown.
EncoderTraining train_encoder(const Dataset& train, const RunConfig& cfg);

// Noise-free encoder forward (bottleneck layer only) per document, row i
// aligned with ds.docs[i].
Eigen::MatrixXd embed_dataset(const FeedForwardNet& encoder, const Dataset& ds);

std::vector<int> dataset_labels(const Dataset& ds);

struct CvCell {
  std::size_t width = 0;
  std::size_t fold = 0;
  double f1 = 0.0;
};

struct ClassifierTraining {
  FeedForwardNet head;
  std::size_t hidden_width = 0;
  std::size_t folds_used = 0;
  bool fold_warning = false;  // folds reduced below 5, or CV skipped outright
  std::vector<CvCell> cv_table;
};

// Two-layer softmax head on frozen embeddings. Hidden width picked from
// {16, 64, 128} by stratified cross-validation on minority-class F1 (5 folds,
// reduced when a class cannot reach every fold; below 2 usable folds the
// search is skipped and the middle width is kept). The chosen head is then
// retrained on all rows.
ClassifierTraining train_classifier(const Eigen::MatrixXd& embeddings,
                                    const std::vector<int>& labels, int minority_label,
                                    std::uint64_t seed);

// Argmax class per row; an exact tie goes to label 0.
std::vector<int> classify(const FeedForwardNet& head, const Eigen::MatrixXd& embeddings);

ConfusionCounts confusion(const std::vector<int>& predicted, const std::vector<int>& truth,
                          int minority_label);

struct RunReport {
  RunConfig config;
  std::vector<LossBreakdown> epoch_means;
  Prf test_prf;
  OverlapReport test_overlap;
  std::size_t hidden_width = 0;
  std::size_t cv_folds = 0;
  bool cv_warning = false;
  std::vector<CvCell> cv_table;
  // Printed to stdout only; keeping it out of the serialized report keeps
  // report files bit-identical across reruns.
  double wall_seconds = 0.0;
};

struct EvalOutputs {
  RunReport report;  // epoch_means empty when no training happened here
  Eigen::MatrixXd train_embeddings, test_embeddings;
  std::vector<int> train_labels, test_labels;
  PcaResult projection;  // of the test embeddings
};

// The protocol downstream of a trained encoder: embed both sets, fit the
// classifier head on the frozen train embeddings, score minority P/R/F1 on
// test, measure overlap on the test embeddings, project them to 2D.
EvalOutputs evaluate_encoder(const FeedForwardNet& encoder, const Dataset& train,
                             const Dataset& test, const RunConfig& cfg);

struct RunOutputs {
  RunReport report;
  std::vector<StepRecord> steps;
  FeedForwardNet encoder;
  Eigen::MatrixXd train_embeddings, test_embeddings;
  std::vector<int> train_labels, test_labels;
  PcaResult projection;
};

// Loads cfg.train_corpus and cfg.test_corpus; with no test path, holds out
// test_frac of the training corpus instead.
std::pair<Dataset, Dataset> load_run_datasets(const RunConfig& cfg);

// End to end: train encoder, then evaluate_encoder. Errors from each stage
// are rethrown with a stage label prefix.
RunOutputs run_experiment(const Dataset& train, const Dataset& test, const RunConfig& cfg);
// Same, on load_run_datasets(cfg).
RunOutputs run_experiment(const RunConfig& cfg);

// run_report.json, training_log.csv, embeddings_{train,test}.csv,
// projection.csv, encoder.ckpt under out_dir (created if missing).
void write_run_artifacts(const RunOutputs& outputs, const std::string& out_dir);
void write_training_log_csv(const std::vector<StepRecord>& steps, const std::string& path);
std::string report_json(const RunReport& report);

struct SweepCell {
  double c = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double f1 = 0.0, si = 0.0, kdn = 0.0;
  double final_carol = 0.0, final_recon = 0.0;  // last-epoch means
};

struct SweepMeanRow {
  double c = 0.0;
  std::size_t cells = 0;  // non-failed cells behind the means
  double f1 = 0.0, si = 0.0, kdn = 0.0;
  double final_carol = 0.0, final_recon = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;      // sorted by (c, seed)
  std::vector<SweepMeanRow> means;   // ascending c; failed cells excluded
  double oracle_best_c = 0.0;        // argmax of mean test F1 (oracle pick)
  bool has_best = false;             // false when every cell failed
};

// Full cross product of c_values x seeds over a shared corpus pair. A failed
// cell is recorded with its error and the sweep continues. Cells are
// independent, so jobs > 1 fans them out to a thread pool; results do not
// depend on the worker count.
SweepResult sweep_c(const RunConfig& base, const std::vector<double>& c_values,
                    const std::vector<std::uint64_t>& seeds, const Dataset& train,
                    const Dataset& test, std::size_t jobs = 1);

// Per-cell rows only; means live in SweepResult and on stdout.
void write_sweep_csv(const SweepResult& sweep, const std::string& path);

}  // namespace carol
