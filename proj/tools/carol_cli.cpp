#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "carol/data.hpp"
#include "carol/errors.hpp"
#include "carol/io.hpp"
#include "carol/metrics.hpp"
#include "carol/net.hpp"
#include "carol/pipeline.hpp"

namespace {

std::string default_out_root() {
  const char* env = std::getenv("CAROL_OUT_ROOT");
  return (env != nullptr && *env != '\0') ? env : ".";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw carol::DataError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw carol::DataError("cannot open " + path + " for writing");
  out << body;
  if (!out) throw carol::DataError("write failed on " + path);
}

// Every command prints its resolved configuration up front; a run is
// replayable from these lines alone.
void print_run_config(const carol::RunConfig& cfg) {
  std::cout << "config.c=" << carol::format_double(cfg.c) << "\n"
            << "config.distance=" << carol::to_string(cfg.distance) << "\n"
            << "config.n=" << cfg.n << "\n"
            << "config.recon_batch=" << cfg.recon_batch << "\n"
            << "config.epochs=" << cfg.epochs << "\n"
            << "config.lr=" << carol::format_double(cfg.lr) << "\n"
            << "config.deletion_ratio=" << carol::format_double(cfg.deletion_ratio) << "\n"
            << "config.feat_dim=" << cfg.feat_dim << "\n"
            << "config.emb_dim=" << cfg.emb_dim << "\n"
            << "config.seed=" << cfg.seed << "\n"
            << "config.train_corpus=" << cfg.train_corpus << "\n"
            << "config.test_corpus=" << cfg.test_corpus << "\n"
            << "config.test_frac=" << carol::format_double(cfg.test_frac) << "\n"
            << "config.kdn_k=" << cfg.kdn_k << "\n";
}

void print_report_summary(const carol::RunReport& report) {
  std::cout << "precision=" << carol::format_double(report.test_prf.precision) << "\n"
            << "recall=" << carol::format_double(report.test_prf.recall) << "\n"
            << "f1=" << carol::format_double(report.test_prf.f1) << "\n"
            << "si=" << carol::format_double(report.test_overlap.si) << "\n"
            << "kdn=" << carol::format_double(report.test_overlap.kdn) << "\n"
            << "hidden_width=" << report.hidden_width << "\n"
            << "cv_folds=" << report.cv_folds << "\n"
            << "cv_warning=" << (report.cv_warning ? "true" : "false") << "\n"
            << "wall_seconds=" << carol::format_double(report.wall_seconds) << "\n";
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Flat key=value config files, one pair per line; blank lines and lines
// starting with # or ; are skipped.
std::vector<std::pair<std::string, std::string>> read_config_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw carol::DataError("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw carol::ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    pairs.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return pairs;
}

// Expands a --config file into flags on the subcommand, skipping any key the
// command line already sets, so explicit flags always win. Keys must name
// existing options.
void expand_config_file(const CLI::App& sub, std::vector<std::string>& args,
                        std::size_t sub_pos) {
  std::string config_path;
  for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      config_path = args[i].substr(9);
  }
  if (config_path.empty()) return;

  const std::size_t given_end = args.size();
  for (const auto& [key, value] : read_config_pairs(config_path)) {
    if (key == "config")
      throw carol::ConfigError("config file " + config_path + ": config files cannot nest");
    if (sub.get_option_no_throw("--" + key) == nullptr)
      throw carol::ConfigError("config file " + config_path + ": unknown key '" + key + "'");
    bool on_cli = false;
    for (std::size_t i = sub_pos + 1; i < given_end; ++i) {
      const std::string& a = args[i];
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) on_cli = true;
      if (key == "out" && (a == "-o" || (a.rfind("-o", 0) == 0 && a.size() > 2 && a[1] == 'o')))
        on_cli = true;
    }
    if (!on_cli) args.push_back("--" + key + "=" + value);
  }
}

struct RunFlags {
  carol::RunConfig cfg;
  std::string distance_name = "euclidean";
  std::string out_dir = default_out_root();
  std::string config_path;
};

// Flag names mirror the RunConfig fields one-to-one; the same names work as
// keys in a --config file.
void add_run_options(CLI::App* cmd, RunFlags& flags, bool include_c = true) {
  cmd->add_option("--config", flags.config_path,
                  "Flat key=value config file; explicit flags override it");
  if (include_c)
    cmd->add_option("--c", flags.cfg.c, "Trade-off weight in [0,1]")->capture_default_str();
  cmd->add_option("--distance", flags.distance_name, "euclidean, chebyshev, or cosine")
      ->capture_default_str();
  cmd->add_option("--n", flags.cfg.n, "Per-class contrastive sample size")
      ->capture_default_str();
  cmd->add_option("--recon_batch", flags.cfg.recon_batch, "Reconstruction batch size")
      ->capture_default_str();
  cmd->add_option("--epochs", flags.cfg.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--lr", flags.cfg.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--deletion_ratio", flags.cfg.deletion_ratio,
                  "Per-token deletion probability for the noise model")
      ->capture_default_str();
  cmd->add_option("--feat_dim", flags.cfg.feat_dim, "Hashed feature dimension")
      ->capture_default_str();
  cmd->add_option("--emb_dim", flags.cfg.emb_dim, "Embedding dimension")
      ->capture_default_str();
  cmd->add_option("--seed", flags.cfg.seed, "Master random seed")->capture_default_str();
  cmd->add_option("--train_corpus", flags.cfg.train_corpus, "Training corpus JSONL path");
  cmd->add_option("--test_corpus", flags.cfg.test_corpus,
                  "Test corpus JSONL path (default: split off test_frac)");
  cmd->add_option("--test_frac", flags.cfg.test_frac,
                  "Held-out fraction when no test corpus is given")
      ->capture_default_str();
  cmd->add_option("--kdn_k", flags.cfg.kdn_k, "Neighborhood size for kDN")
      ->capture_default_str();
  cmd->add_option("-o,--out", flags.out_dir, "Output directory (default: $CAROL_OUT_ROOT or .)");
}

carol::RunConfig resolve(RunFlags& flags) {
  flags.cfg.distance = carol::parse_distance_kind(flags.distance_name);
  carol::validate(flags.cfg);
  return flags.cfg;
}

int cmd_gen_synth(const carol::SyntheticSpec& spec, const std::string& out_dir) {
  std::cout << "config.n_minority=" << spec.n_minority << "\n"
            << "config.imbalance_ratio=" << carol::format_double(spec.imbalance_ratio) << "\n"
            << "config.overlap=" << carol::format_double(spec.overlap) << "\n"
            << "config.vocab_size=" << spec.vocab_size << "\n"
            << "config.doc_len=" << spec.doc_len << "\n"
            << "config.seed=" << spec.seed << "\n"
            << "config.feat_dim=" << spec.feat_dim << "\n"
            << "out=" << out_dir << "\n";

  const carol::Dataset ds = carol::gen_synthetic(spec);
  ensure_dir(out_dir);
  const std::string corpus = out_dir + "/corpus.jsonl";
  carol::save_synthetic_corpus(ds, spec, corpus);

  std::cout << "docs=" << ds.docs.size() << "\n"
            << "minority=" << ds.count_label(ds.minority_label) << "\n"
            << "majority=" << ds.docs.size() - ds.count_label(ds.minority_label) << "\n"
            << "imbalance_ratio=" << carol::format_double(ds.imbalance_ratio) << "\n"
            << "corpus=" << corpus << "\n"
            << "meta=" << corpus << ".meta.json\n";
  return 0;
}

int cmd_train(RunFlags& flags) {
  const carol::RunConfig cfg = resolve(flags);
  print_run_config(cfg);
  std::cout << "out=" << flags.out_dir << "\n";

  const carol::RunOutputs outputs = carol::run_experiment(cfg);
  ensure_dir(flags.out_dir);
  carol::write_run_artifacts(outputs, flags.out_dir);

  print_report_summary(outputs.report);
  std::cout << "report=" << flags.out_dir << "/run_report.json\n"
            << "encoder=" << flags.out_dir << "/encoder.ckpt\n";
  return 0;
}

int cmd_evaluate(RunFlags& flags, const std::string& encoder_path) {
  const carol::RunConfig cfg = resolve(flags);
  if (encoder_path.empty()) throw carol::ConfigError("--encoder checkpoint path is required");
  print_run_config(cfg);
  std::cout << "encoder=" << encoder_path << "\n"
            << "out=" << flags.out_dir << "\n";

  const auto t0 = std::chrono::steady_clock::now();
  const carol::FeedForwardNet encoder = carol::load_net(encoder_path);
  const auto datasets = carol::load_run_datasets(cfg);
  carol::EvalOutputs ev = carol::evaluate_encoder(encoder, datasets.first, datasets.second, cfg);
  ev.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ensure_dir(flags.out_dir);
  write_text(flags.out_dir + "/run_report.json", carol::report_json(ev.report));
  carol::write_embeddings_csv(flags.out_dir + "/embeddings_train.csv", ev.train_embeddings,
                              ev.train_labels);
  carol::write_embeddings_csv(flags.out_dir + "/embeddings_test.csv", ev.test_embeddings,
                              ev.test_labels);
  carol::write_projection_csv(flags.out_dir + "/projection.csv", ev.projection.projected,
                              ev.test_labels);

  print_report_summary(ev.report);
  std::cout << "report=" << flags.out_dir << "/run_report.json\n";
  return 0;
}

int cmd_sweep(RunFlags& flags, const std::vector<double>& c_values,
              const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
  const carol::RunConfig base = resolve(flags);
  print_run_config(base);
  std::cout << "out=" << flags.out_dir << "\n"
            << "jobs=" << jobs << "\n";

  const auto datasets = carol::load_run_datasets(base);
  const carol::SweepResult sweep =
      carol::sweep_c(base, c_values, seeds, datasets.first, datasets.second, jobs);

  ensure_dir(flags.out_dir);
  const std::string table = flags.out_dir + "/sweep_table.csv";
  carol::write_sweep_csv(sweep, table);

  std::size_t failed = 0;
  for (const carol::SweepCell& cell : sweep.cells) {
    if (!cell.failed) continue;
    ++failed;
    std::cerr << "cell c=" << carol::format_double(cell.c) << " seed=" << cell.seed
              << " failed: " << cell.error << "\n";
  }
  std::cout << "sweep.cells=" << sweep.cells.size() << "\n"
            << "sweep.failed=" << failed << "\n";
  for (const carol::SweepMeanRow& row : sweep.means) {
    const std::string key = "mean." + carol::format_double(row.c);
    std::cout << key << ".cells=" << row.cells << "\n"
              << key << ".f1=" << carol::format_double(row.f1) << "\n"
              << key << ".si=" << carol::format_double(row.si) << "\n"
              << key << ".kdn=" << carol::format_double(row.kdn) << "\n"
              << key << ".final_carol=" << carol::format_double(row.final_carol) << "\n"
              << key << ".final_recon=" << carol::format_double(row.final_recon) << "\n";
  }
  if (sweep.has_best) {
    // Best c is picked on test F1, i.e. an oracle choice, not a tuned one.
    std::cout << "best_c=" << carol::format_double(sweep.oracle_best_c) << "\n"
              << "best_c_selection=oracle_test_f1\n";
  }
  std::cout << "sweep_table=" << table << "\n";
  return 0;
}

int cmd_overlap(const std::string& embeddings_path, std::size_t k,
                const std::string& distance_name) {
  const carol::DistanceKind distance = carol::parse_distance_kind(distance_name);
  std::cout << "config.embeddings=" << embeddings_path << "\n"
            << "config.k=" << k << "\n"
            << "config.distance=" << carol::to_string(distance) << "\n";

  const carol::LabeledEmbeddings le = carol::read_embeddings_csv(embeddings_path);
  const carol::OverlapReport report = carol::overlap_report(le.embeddings, le.labels, k, distance);

  std::cout << "points=" << le.labels.size() << "\n"
            << "si=" << carol::format_double(report.si) << "\n"
            << "kdn=" << carol::format_double(report.kdn) << "\n";
  return 0;
}

int cmd_project(const std::string& embeddings_path, const std::string& out_dir) {
  std::cout << "config.embeddings=" << embeddings_path << "\n"
            << "out=" << out_dir << "\n";

  const carol::LabeledEmbeddings le = carol::read_embeddings_csv(embeddings_path);
  const carol::PcaResult pca = carol::pca_project(le.embeddings, 2);
  ensure_dir(out_dir);
  const std::string path = out_dir + "/projection.csv";
  carol::write_projection_csv(path, pca.projected, le.labels);

  std::cout << "points=" << le.labels.size() << "\n"
            << "components_found=" << pca.components.rows() << "\n";
  for (Eigen::Index i = 0; i < pca.eigenvalues.size(); ++i)
    std::cout << "eigenvalue." << i << "=" << carol::format_double(pca.eigenvalues(i)) << "\n";
  std::cout << "projection=" << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-aware contrastive representation learning for imbalanced text"};
  app.require_subcommand(1);

  carol::SyntheticSpec spec;
  std::string gen_out = default_out_root();
  std::string gen_config;
  CLI::App* gen = app.add_subcommand("gen-synth", "Generate a synthetic imbalanced corpus");
  gen->add_option("--config", gen_config, "Flat key=value config file; explicit flags override it");
  gen->add_option("--n_minority", spec.n_minority, "Minority document count")
      ->capture_default_str();
  gen->add_option("--imbalance_ratio", spec.imbalance_ratio, "Majority/minority size ratio")
      ->capture_default_str();
  gen->add_option("--overlap", spec.overlap, "Probability of drawing a shared-vocabulary token")
      ->capture_default_str();
  gen->add_option("--vocab_size", spec.vocab_size, "Synthetic vocabulary size")
      ->capture_default_str();
  gen->add_option("--doc_len", spec.doc_len, "Tokens per document")->capture_default_str();
  gen->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  gen->add_option("--feat_dim", spec.feat_dim, "Hashed feature dimension")
      ->capture_default_str();
  gen->add_option("-o,--out", gen_out, "Output directory (default: $CAROL_OUT_ROOT or .)");

  RunFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "Train an encoder and evaluate the pipeline");
  add_run_options(train, train_flags);

  RunFlags eval_flags;
  std::string encoder_path;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a saved encoder checkpoint");
  add_run_options(evaluate, eval_flags);
  evaluate->add_option("--encoder", encoder_path, "Encoder checkpoint path");

  RunFlags sweep_flags;
  std::vector<double> c_values{0.0, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t jobs = 1;
  CLI::App* sweep = app.add_subcommand("sweep-c", "Cross product of c values and seeds");
  add_run_options(sweep, sweep_flags, /*include_c=*/false);
  sweep->add_option("--c", c_values, "Comma-separated c values")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--seeds", seeds, "Comma-separated seeds")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--jobs", jobs, "Worker threads for sweep cells")->capture_default_str();

  std::string overlap_embeddings;
  std::size_t overlap_k = 5;
  std::string overlap_distance = "euclidean";
  CLI::App* overlap = app.add_subcommand("overlap", "Class overlap measures on an embeddings CSV");
  overlap->add_option("--embeddings", overlap_embeddings, "Embeddings CSV path")->required();
  overlap->add_option("--k", overlap_k, "Neighborhood size for kDN")->capture_default_str();
  overlap->add_option("--distance", overlap_distance, "euclidean, chebyshev, or cosine")
      ->capture_default_str();

  std::string project_embeddings;
  std::string project_out = default_out_root();
  CLI::App* project = app.add_subcommand("project", "2D PCA projection of an embeddings CSV");
  project->add_option("--embeddings", project_embeddings, "Embeddings CSV path")->required();
  project->add_option("-o,--out", project_out, "Output directory (default: $CAROL_OUT_ROOT or .)");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    for (std::size_t i = 0; i < args.size(); ++i) {
      const CLI::App* sub = app.get_subcommand_no_throw(args[i]);
      if (sub != nullptr) {
        expand_config_file(*sub, args, i);
        break;
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // bad flags are config errors
  } catch (const carol::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const carol::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(spec, gen_out);
    if (train->parsed()) return cmd_train(train_flags);
    if (evaluate->parsed()) return cmd_evaluate(eval_flags, encoder_path);
    if (sweep->parsed()) return cmd_sweep(sweep_flags, c_values, seeds, jobs);
    if (overlap->parsed()) return cmd_overlap(overlap_embeddings, overlap_k, overlap_distance);
    if (project->parsed()) return cmd_project(project_embeddings, project_out);
  } catch (const carol::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const carol::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const carol::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
