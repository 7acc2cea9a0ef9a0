#include "carol/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <thread>
#include <utility>

#include "carol/errors.hpp"
#include "carol/io.hpp"
#include "carol/rng.hpp"

namespace carol {

namespace {

// Rethrows domain errors with a stage prefix so a failing run names the
// phase. Logic errors pass through untouched.
template <typename Fn>
auto with_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(stage) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string(stage) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(stage) + ": " + e.what());
  }
}

void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
}

void reset(NetGradients& g) {
  for (auto& w : g.weights) w.setZero();
  for (auto& b : g.biases) b.setZero();
}

bool grads_finite(const NetGradients& g) {
  for (const auto& w : g.weights)
    if (!w.allFinite()) return false;
  for (const auto& b : g.biases)
    if (!b.allFinite()) return false;
  return true;
}

std::string describe_losses(const LossBreakdown& bd) {
  return "carol=" + format_double(bd.carol) + " recon=" + format_double(bd.recon) +
         " total=" + format_double(bd.total);
}

// Rows are the per-document token distributions the encoder consumes.
Eigen::MatrixXd normalized_features(const Dataset& ds) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(ds.docs.size()), ds.feat_dim());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd& f = ds.docs[static_cast<std::size_t>(i)].features;
    x.row(i) = f.transpose() / f.sum();
  }
  return x;
}

constexpr std::array<std::size_t, 3> kHiddenWidths{16, 64, 128};
constexpr std::size_t kCvFolds = 5;
constexpr std::size_t kFallbackWidth = 64;  // middle width, kept when CV is impossible
constexpr double kHeadLr = 0.01;
constexpr int kHeadIters = 200;

// Full-batch cross-entropy training of a fresh two-layer softmax head.
FeedForwardNet train_head(const Eigen::MatrixXd& emb, const std::vector<int>& labels,
                          std::size_t width, std::uint64_t seed) {
  FeedForwardNet head =
      make_net({{emb.cols(), static_cast<Eigen::Index>(width), Activation::Tanh},
                {static_cast<Eigen::Index>(width), 2, Activation::Softmax}},
               seed);
  const Eigen::Index bsz = emb.rows();
  const double inv = 1.0 / static_cast<double>(bsz);
  NetGradients grads = zero_gradients(head);
  for (int it = 0; it < kHeadIters; ++it) {
    BatchCache cache;
    const Eigen::MatrixXd probs = forward_batch(head, emb, &cache);
    Eigen::MatrixXd gout = Eigen::MatrixXd::Zero(bsz, 2);
    for (Eigen::Index i = 0; i < bsz; ++i) {
      const Eigen::Index y = labels[static_cast<std::size_t>(i)];
      gout(i, y) = -inv / std::max(probs(i, y), kLogClamp);
    }
    reset(grads);
    backward_batch(head, cache, gout, grads);
    adam_step(head, grads, kHeadLr);
  }
  return head;
}

}  // namespace

void validate(const RunConfig& cfg) {
  if (!(cfg.c >= 0.0 && cfg.c <= 1.0)) throw ConfigError("c must lie in [0, 1]");
  if (cfg.n < 1) throw ConfigError("n must be at least 1");
  if (cfg.recon_batch < 1) throw ConfigError("recon_batch must be at least 1");
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("lr must be positive");
  if (!(cfg.deletion_ratio >= 0.0 && cfg.deletion_ratio <= 1.0))
    throw ConfigError("deletion_ratio must lie in [0, 1]");
  if (cfg.feat_dim < 1) throw ConfigError("feat_dim must be positive");
  if (cfg.emb_dim < 1) throw ConfigError("emb_dim must be positive");
  if (!(cfg.test_frac > 0.0 && cfg.test_frac < 1.0))
    throw ConfigError("test_frac must lie strictly between 0 and 1");
  if (cfg.kdn_k < 1) throw ConfigError("kdn_k must be at least 1");
}

EncoderTraining train_encoder(const Dataset& train, const RunConfig& cfg) {
  validate(cfg);
  if (train.docs.empty()) throw DataError("training set is empty");
  if (train.count_label(0) == 0 || train.count_label(1) == 0)
    throw DataError("training set must contain both classes");
  if (train.feat_dim() != cfg.feat_dim)
    throw ConfigError("feat_dim " + std::to_string(cfg.feat_dim) +
                      " does not match the corpus feature dimension " +
                      std::to_string(train.feat_dim()));

  const std::size_t n_docs = train.docs.size();
  const Eigen::Index feat = cfg.feat_dim;

  EncoderTraining out;
  out.encoder = init_encoder(derive_seed(cfg.seed, "encoder-init"), feat, cfg.emb_dim);

  const Eigen::MatrixXd x_norm = normalized_features(train);

  // Separate streams: the noise draws can never shift the sampling sequence,
  // so runs that skip one flow still see the other flow's exact draws.
  Rng noise_rng(derive_seed(cfg.seed, "noise"));
  Rng sample_rng(derive_seed(cfg.seed, "contrastive"));

  const std::size_t steps_per_epoch = (n_docs + cfg.recon_batch - 1) / cfg.recon_batch;
  NetGradients recon_grads = zero_gradients(out.encoder);
  NetGradients carol_grads = zero_gradients(out.encoder);
  NetGradients combined = zero_gradients(out.encoder);

  std::vector<std::size_t> order(n_docs);
  std::vector<int> pair_labels(2 * cfg.n);
  for (std::size_t i = cfg.n; i < 2 * cfg.n; ++i) pair_labels[i] = 1;

  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, "epoch-shuffle", epoch));
    shuffle_indices(order, shuffle_rng);

    double sum_carol = 0.0, sum_recon = 0.0, sum_total = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++global_step) try {
      const std::size_t begin = s * cfg.recon_batch;
      const std::size_t end = std::min(begin + cfg.recon_batch, n_docs);
      const Eigen::Index bsz = static_cast<Eigen::Index>(end - begin);

      // Reconstruction flow: corrupt fresh, decode, score against the clean
      // token distribution. Loss is the batch mean.
      Eigen::MatrixXd noisy(bsz, feat);
      for (Eigen::Index r = 0; r < bsz; ++r) {
        const Document& doc = train.docs[order[begin + static_cast<std::size_t>(r)]];
        const Document noised = add_noise(doc, cfg.deletion_ratio, noise_rng);
        noisy.row(r) = noised.features.transpose() / noised.features.sum();
      }
      BatchCache recon_cache;
      const Eigen::MatrixXd decoded = forward_batch(out.encoder, noisy, &recon_cache);
      double recon_value = 0.0;
      Eigen::MatrixXd recon_out_grads(bsz, feat);
      for (Eigen::Index r = 0; r < bsz; ++r) {
        const Document& doc = train.docs[order[begin + static_cast<std::size_t>(r)]];
        const ReconLoss rl = recon_loss(decoded.row(r).transpose(), doc.features);
        recon_value += rl.value;
        recon_out_grads.row(r) = rl.grad.transpose() / static_cast<double>(bsz);
      }
      recon_value /= static_cast<double>(bsz);

      // Contrastive flow: balanced sample from the whole training set,
      // encoded through the bottleneck layer only.
      const auto idx0 = class_sample_indices(train, 0, cfg.n, sample_rng);
      const auto idx1 = class_sample_indices(train, 1, cfg.n, sample_rng);
      Eigen::MatrixXd contrast(static_cast<Eigen::Index>(2 * cfg.n), feat);
      for (std::size_t i = 0; i < cfg.n; ++i) {
        contrast.row(static_cast<Eigen::Index>(i)) = x_norm.row(static_cast<Eigen::Index>(idx0[i]));
        contrast.row(static_cast<Eigen::Index>(cfg.n + i)) =
            x_norm.row(static_cast<Eigen::Index>(idx1[i]));
      }
      BatchCache emb_cache;
      const Eigen::MatrixXd emb = forward_batch(out.encoder, contrast, &emb_cache, 0, 0);
      const CarolLoss cl = carol_loss(emb, pair_labels, {cfg.n, cfg.distance, cfg.seed});

      const LossBreakdown bd = combined_loss(cfg.c, cl.value, recon_value);
      if (!std::isfinite(bd.carol) || !std::isfinite(bd.recon) || !std::isfinite(bd.total))
        throw NumericalError("loss diverged: " + describe_losses(bd));

      // A zero-weight flow is skipped outright rather than scaled by zero, so
      // its backward pass cannot influence the run in any way.
      reset(combined);
      if (cfg.c < 1.0) {
        reset(recon_grads);
        backward_batch(out.encoder, recon_cache, recon_out_grads, recon_grads);
        if (!grads_finite(recon_grads))
          throw NumericalError("reconstruction flow produced non-finite gradients: " +
                               describe_losses(bd));
        add_scaled(combined, recon_grads, 1.0 - cfg.c);
      }
      if (cfg.c > 0.0) {
        reset(carol_grads);
        backward_batch(out.encoder, emb_cache, cl.grads, carol_grads);
        if (!grads_finite(carol_grads))
          throw NumericalError("class-separation flow produced non-finite gradients: " +
                               describe_losses(bd));
        add_scaled(combined, carol_grads, cfg.c);
      }
      adam_step(out.encoder, combined, cfg.lr);

      out.steps.push_back({global_step, epoch, bd});
      sum_carol += bd.carol;
      sum_recon += bd.recon;
      sum_total += bd.total;
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(global_step) + " (epoch " +
                           std::to_string(epoch) + "): " + e.what());
    }

    LossBreakdown mean;
    mean.c = cfg.c;
    mean.carol = sum_carol / static_cast<double>(steps_per_epoch);
    mean.recon = sum_recon / static_cast<double>(steps_per_epoch);
    mean.total = sum_total / static_cast<double>(steps_per_epoch);
    out.epoch_means.push_back(mean);
  }
  return out;
}

Eigen::MatrixXd embed_dataset(const FeedForwardNet& encoder, const Dataset& ds) {
  if (encoder.layers.empty()) throw std::invalid_argument("encoder has no layers");
  if (ds.docs.empty()) throw DataError("cannot embed an empty dataset");
  if (ds.feat_dim() != encoder.layers.front().in_dim)
    throw std::invalid_argument("feature dimension " + std::to_string(ds.feat_dim()) +
                                " does not match encoder input dimension " +
                                std::to_string(encoder.layers.front().in_dim));
  return forward_batch(encoder, normalized_features(ds), nullptr, 0, 0);
}

std::vector<int> dataset_labels(const Dataset& ds) {
  std::vector<int> labels(ds.docs.size());
  for (std::size_t i = 0; i < ds.docs.size(); ++i) labels[i] = ds.docs[i].label;
  return labels;
}

ClassifierTraining train_classifier(const Eigen::MatrixXd& embeddings,
                                    const std::vector<int>& labels, int minority_label,
                                    std::uint64_t seed) {
  if (static_cast<Eigen::Index>(labels.size()) != embeddings.rows())
    throw std::invalid_argument("labels do not align with embedding rows");
  if (minority_label != 0 && minority_label != 1)
    throw std::invalid_argument("minority label must be 0 or 1");
  std::size_t count0 = 0, count1 = 0;
  for (int label : labels) {
    if (label == 0)
      ++count0;
    else if (label == 1)
      ++count1;
    else
      throw std::invalid_argument("labels must be 0 or 1");
  }
  if (count0 == 0 || count1 == 0) throw DataError("classifier training needs both classes");

  ClassifierTraining out;
  const std::size_t fold_cap = std::min({kCvFolds, count0, count1});
  if (fold_cap < 2) {
    // Too few examples of one class to hold any out; keep the middle width.
    out.hidden_width = kFallbackWidth;
    out.folds_used = 0;
    out.fold_warning = true;
  } else {
    out.folds_used = fold_cap;
    out.fold_warning = fold_cap < kCvFolds;

    // Per-class shuffle then round-robin keeps every fold stratified and
    // guarantees each fold at least one member of each class.
    std::vector<std::size_t> fold_of(labels.size());
    Rng fold_rng(derive_seed(seed, "cv-folds"));
    for (int cls : {0, 1}) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == cls) members.push_back(i);
      shuffle_indices(members, fold_rng);
      for (std::size_t i = 0; i < members.size(); ++i) fold_of[members[i]] = i % fold_cap;
    }

    double best_mean = -1.0;
    for (const std::size_t width : kHiddenWidths) {
      double mean_f1 = 0.0;
      for (std::size_t fold = 0; fold < fold_cap; ++fold) {
        std::vector<std::size_t> fit, held;
        for (std::size_t i = 0; i < labels.size(); ++i)
          (fold_of[i] == fold ? held : fit).push_back(i);

        Eigen::MatrixXd fit_emb(static_cast<Eigen::Index>(fit.size()), embeddings.cols());
        std::vector<int> fit_labels(fit.size());
        for (std::size_t i = 0; i < fit.size(); ++i) {
          fit_emb.row(static_cast<Eigen::Index>(i)) = embeddings.row(static_cast<Eigen::Index>(fit[i]));
          fit_labels[i] = labels[fit[i]];
        }
        Eigen::MatrixXd held_emb(static_cast<Eigen::Index>(held.size()), embeddings.cols());
        std::vector<int> held_labels(held.size());
        for (std::size_t i = 0; i < held.size(); ++i) {
          held_emb.row(static_cast<Eigen::Index>(i)) =
              embeddings.row(static_cast<Eigen::Index>(held[i]));
          held_labels[i] = labels[held[i]];
        }

        const FeedForwardNet head =
            train_head(fit_emb, fit_labels, width, derive_seed(seed, "cv-head", width * 16 + fold));
        const std::vector<int> preds = classify(head, held_emb);
        const double f1 = prf(confusion(preds, held_labels, minority_label)).f1;
        out.cv_table.push_back({width, fold, f1});
        mean_f1 += f1;
      }
      mean_f1 /= static_cast<double>(fold_cap);
      if (mean_f1 > best_mean) {
        best_mean = mean_f1;
        out.hidden_width = width;
      }
    }
  }

  out.head = train_head(embeddings, labels, out.hidden_width, derive_seed(seed, "final-head"));
  return out;
}

std::vector<int> classify(const FeedForwardNet& head, const Eigen::MatrixXd& embeddings) {
  if (head.layers.empty() || head.layers.back().out_dim != 2)
    throw std::invalid_argument("classifier head must emit two class scores");
  const Eigen::MatrixXd probs = forward_batch(head, embeddings, nullptr);
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    out[static_cast<std::size_t>(i)] = probs(i, 1) > probs(i, 0) ? 1 : 0;
  return out;
}

ConfusionCounts confusion(const std::vector<int>& predicted, const std::vector<int>& truth,
                          int minority_label) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("prediction and truth lengths differ");
  ConfusionCounts counts;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool actual = truth[i] == minority_label;
    const bool guessed = predicted[i] == minority_label;
    if (actual && guessed)
      ++counts.tp;
    else if (!actual && guessed)
      ++counts.fp;
    else if (actual && !guessed)
      ++counts.fn;
    else
      ++counts.tn;
  }
  return counts;
}

EvalOutputs evaluate_encoder(const FeedForwardNet& encoder, const Dataset& train,
                             const Dataset& test, const RunConfig& cfg) {
  validate(cfg);
  EvalOutputs out;
  out.train_labels = dataset_labels(train);
  out.test_labels = dataset_labels(test);
  out.train_embeddings =
      with_stage("embed-train", [&] { return embed_dataset(encoder, train); });
  out.test_embeddings = with_stage("embed-test", [&] { return embed_dataset(encoder, test); });

  const ClassifierTraining ct = with_stage("train-classifier", [&] {
    return train_classifier(out.train_embeddings, out.train_labels, train.minority_label,
                            derive_seed(cfg.seed, "classifier"));
  });

  const std::vector<int> preds = classify(ct.head, out.test_embeddings);
  out.report.test_prf = prf(confusion(preds, out.test_labels, train.minority_label));
  out.report.test_overlap = with_stage("overlap", [&] {
    return overlap_report(out.test_embeddings, out.test_labels, cfg.kdn_k, cfg.distance);
  });
  out.projection = with_stage("project", [&] { return pca_project(out.test_embeddings, 2); });

  out.report.config = cfg;
  out.report.hidden_width = ct.hidden_width;
  out.report.cv_folds = ct.folds_used;
  out.report.cv_warning = ct.fold_warning;
  out.report.cv_table = ct.cv_table;
  return out;
}

RunOutputs run_experiment(const Dataset& train, const Dataset& test, const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();

  EncoderTraining et = with_stage("train-encoder", [&] { return train_encoder(train, cfg); });
  EvalOutputs ev = evaluate_encoder(et.encoder, train, test, cfg);

  RunOutputs out;
  out.report = std::move(ev.report);
  out.report.epoch_means = std::move(et.epoch_means);
  out.steps = std::move(et.steps);
  out.encoder = std::move(et.encoder);
  out.train_embeddings = std::move(ev.train_embeddings);
  out.test_embeddings = std::move(ev.test_embeddings);
  out.train_labels = std::move(ev.train_labels);
  out.test_labels = std::move(ev.test_labels);
  out.projection = std::move(ev.projection);
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::pair<Dataset, Dataset> load_run_datasets(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.train_corpus.empty()) throw ConfigError("train_corpus path is required");

  Dataset train =
      with_stage("load-train", [&] { return load_corpus(cfg.train_corpus, cfg.feat_dim); });
  if (!cfg.test_corpus.empty()) {
    Dataset test =
        with_stage("load-test", [&] { return load_corpus(cfg.test_corpus, cfg.feat_dim); });
    return {std::move(train), std::move(test)};
  }
  return with_stage("split", [&] {
    return stratified_split(train, cfg.test_frac, derive_seed(cfg.seed, "split"));
  });
}

RunOutputs run_experiment(const RunConfig& cfg) {
  auto datasets = load_run_datasets(cfg);
  return run_experiment(datasets.first, datasets.second, cfg);
}

std::string report_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["config"] = {{"c", r.config.c},
                 {"distance", to_string(r.config.distance)},
                 {"n", r.config.n},
                 {"recon_batch", r.config.recon_batch},
                 {"epochs", r.config.epochs},
                 {"lr", r.config.lr},
                 {"deletion_ratio", r.config.deletion_ratio},
                 {"feat_dim", r.config.feat_dim},
                 {"emb_dim", r.config.emb_dim},
                 {"seed", r.config.seed},
                 {"train_corpus", r.config.train_corpus},
                 {"test_corpus", r.config.test_corpus},
                 {"test_frac", r.config.test_frac},
                 {"kdn_k", r.config.kdn_k}};
  auto epochs = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.epoch_means.size(); ++i) {
    const LossBreakdown& m = r.epoch_means[i];
    epochs.push_back(
        {{"epoch", i}, {"carol", m.carol}, {"recon", m.recon}, {"total", m.total}});
  }
  j["epochs"] = std::move(epochs);
  auto cv = nlohmann::ordered_json::array();
  for (const CvCell& cell : r.cv_table)
    cv.push_back({{"width", cell.width}, {"fold", cell.fold}, {"f1", cell.f1}});
  j["classifier"] = {{"hidden_width", r.hidden_width},
                     {"cv_folds", r.cv_folds},
                     {"cv_warning", r.cv_warning},
                     {"cv_table", std::move(cv)}};
  j["test"] = {{"precision", r.test_prf.precision},
               {"recall", r.test_prf.recall},
               {"f1", r.test_prf.f1},
               {"si", r.test_overlap.si},
               {"kdn", r.test_overlap.kdn},
               {"kdn_k", r.test_overlap.k},
               {"distance", to_string(r.test_overlap.distance)}};
  return j.dump(2) + "\n";
}

void write_training_log_csv(const std::vector<StepRecord>& steps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "step,epoch,c,carol,recon,total\n";
  for (const StepRecord& rec : steps) {
    out << rec.step << "," << rec.epoch << "," << format_double(rec.loss.c) << ","
        << format_double(rec.loss.carol) << "," << format_double(rec.loss.recon) << ","
        << format_double(rec.loss.total) << "\n";
  }
  if (!out) throw DataError("write failed on " + path);
}

void write_run_artifacts(const RunOutputs& outputs, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir + ": " + ec.message());
  const std::filesystem::path dir(out_dir);

  {
    const std::string path = (dir / "run_report.json").string();
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << report_json(outputs.report);
    if (!out) throw DataError("write failed on " + path);
  }
  write_training_log_csv(outputs.steps, (dir / "training_log.csv").string());
  write_embeddings_csv((dir / "embeddings_train.csv").string(), outputs.train_embeddings,
                       outputs.train_labels);
  write_embeddings_csv((dir / "embeddings_test.csv").string(), outputs.test_embeddings,
                       outputs.test_labels);
  write_projection_csv((dir / "projection.csv").string(), outputs.projection.projected,
                       outputs.test_labels);
  save_net(outputs.encoder, (dir / "encoder.ckpt").string());
}

SweepResult sweep_c(const RunConfig& base, const std::vector<double>& c_values,
                    const std::vector<std::uint64_t>& seeds, const Dataset& train,
                    const Dataset& test, std::size_t jobs) {
  validate(base);
  if (c_values.empty()) throw ConfigError("sweep needs at least one c value");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  for (double c : c_values)
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("every sweep c must lie in [0, 1]");

  std::vector<double> cs(c_values);
  std::sort(cs.begin(), cs.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
  std::vector<std::uint64_t> ss(seeds);
  std::sort(ss.begin(), ss.end());
  ss.erase(std::unique(ss.begin(), ss.end()), ss.end());

  SweepResult result;
  result.cells.resize(cs.size() * ss.size());
  for (std::size_t ci = 0; ci < cs.size(); ++ci)
    for (std::size_t si = 0; si < ss.size(); ++si) {
      SweepCell& cell = result.cells[ci * ss.size() + si];
      cell.c = cs[ci];
      cell.seed = ss[si];
    }

  auto run_cell = [&](SweepCell& cell) {
    RunConfig cfg = base;
    cfg.c = cell.c;
    cfg.seed = cell.seed;
    try {
      const RunOutputs ro = run_experiment(train, test, cfg);
      cell.f1 = ro.report.test_prf.f1;
      cell.si = ro.report.test_overlap.si;
      cell.kdn = ro.report.test_overlap.kdn;
      cell.final_carol = ro.report.epoch_means.back().carol;
      cell.final_recon = ro.report.epoch_means.back().recon;
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
  };

  if (jobs <= 1 || result.cells.size() <= 1) {
    for (SweepCell& cell : result.cells) run_cell(cell);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= result.cells.size()) return;
        run_cell(result.cells[i]);
      }
    };
    std::vector<std::thread> pool;
    const std::size_t workers = std::min(jobs, result.cells.size());
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (std::size_t ci = 0; ci < cs.size(); ++ci) {
    SweepMeanRow row;
    row.c = cs[ci];
    for (std::size_t si = 0; si < ss.size(); ++si) {
      const SweepCell& cell = result.cells[ci * ss.size() + si];
      if (cell.failed) continue;
      ++row.cells;
      row.f1 += cell.f1;
      row.si += cell.si;
      row.kdn += cell.kdn;
      row.final_carol += cell.final_carol;
      row.final_recon += cell.final_recon;
    }
    if (row.cells == 0) continue;
    const double inv = 1.0 / static_cast<double>(row.cells);
    row.f1 *= inv;
    row.si *= inv;
    row.kdn *= inv;
    row.final_carol *= inv;
    row.final_recon *= inv;
    result.means.push_back(row);
  }

  double best_f1 = -1.0;
  for (const SweepMeanRow& row : result.means) {
    if (row.f1 > best_f1) {
      best_f1 = row.f1;
      result.oracle_best_c = row.c;
      result.has_best = true;
    }
  }
  return result;
}

void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "c,seed,status,f1,si,kdn,final_carol,final_recon\n";
  for (const SweepCell& cell : sweep.cells) {
    out << format_double(cell.c) << "," << cell.seed << ",";
    if (cell.failed) {
      out << "failed,,,,,\n";
    } else {
      out << "ok," << format_double(cell.f1) << "," << format_double(cell.si) << ","
          << format_double(cell.kdn) << "," << format_double(cell.final_carol) << ","
          << format_double(cell.final_recon) << "\n";
    }
  }
  if (!out) throw DataError("write failed on " + path);
}

}  // namespace carol
