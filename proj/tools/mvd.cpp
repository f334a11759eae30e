// mvd: multi-lingual vulnerability detection pipeline driver.
//
// Subcommands: curate, train, extend, evaluate, report, selftest.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mvd/config.hpp"
#include "mvd/corpus.hpp"
#include "mvd/eval.hpp"
#include "mvd/incremental.hpp"
#include "mvd/sha256.hpp"
#include "mvd/synth.hpp"
#include "mvd/train.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw mvd::Error("cannot create output directory: " + dir);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mvd::Error("cannot write: " + path);
  out << text;
}

void write_epoch_csv(const std::string& path, const std::vector<mvd::EpochLog>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mvd::Error("cannot write: " + path);
  out << "epoch,train_loss,val_pr_auc,lr\n";
  out << std::setprecision(10);
  for (const auto& e : log)
    out << e.epoch << ',' << e.train_loss << ',' << e.val_pr_auc << ',' << e.lr << '\n';
}

std::string table1_style(const std::vector<mvd::LanguageTally>& tallies) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "Language" << std::right << std::setw(8)
      << "Vuln." << std::setw(12) << "Non-vuln." << std::setw(10) << "% Vuln."
      << '\n';
  size_t vuln = 0, clean = 0;
  for (const auto& t : tallies) {
    out << std::left << std::setw(14) << t.language << std::right << std::setw(8)
        << t.vulnerable << std::setw(12) << t.clean << std::setw(10) << std::fixed
        << std::setprecision(1) << t.pct_vulnerable() << '\n';
    vuln += t.vulnerable;
    clean += t.clean;
  }
  double pct = vuln + clean == 0 ? 0.0
                                 : 100.0 * double(vuln) / double(vuln + clean);
  out << std::left << std::setw(14) << "Total" << std::right << std::setw(8) << vuln
      << std::setw(12) << clean << std::setw(10) << std::fixed << std::setprecision(1)
      << pct << '\n';
  return out.str();
}

// Shared pipeline: dataset + split -> encoded setup for training.
struct TrainSetup {
  mvd::DatasetSplit split;
  mvd::Vocab vocab;
  std::vector<std::string> roster;
  mvd::ClassPriors priors;
};

TrainSetup prepare_training(const mvd::RunConfig& cfg,
                            const std::vector<mvd::CodeFunction>& records,
                            const std::string& split_path) {
  TrainSetup s;
  if (split_path.empty()) {
    s.split = mvd::split_dataset(records, cfg.split_ratios,
                                 mvd::derive_seed(cfg.seed, "split"));
  } else {
    s.split = mvd::read_split_manifest(records, split_path);
  }
  std::vector<std::string> texts;
  for (const auto& r : s.split.train) texts.push_back(r.source);
  s.vocab = mvd::train_vocab(texts, cfg.vocab_size, cfg.min_pair_count);
  s.roster = mvd::build_roster(s.split.train, cfg.train.binary_mode);
  s.priors = mvd::class_priors(
      mvd::class_counts(s.split.train, s.roster, cfg.train.binary_mode));
  return s;
}

int cmd_curate(const std::string& archive_dir, const std::string& config_path,
               const std::vector<std::string>& overrides) {
  auto t0 = Clock::now();
  mvd::RunConfig cfg = mvd::load_run_config(config_path, overrides);
  ensure_dir(cfg.out_dir);

  mvd::RunManifest manifest;
  manifest.command = "curate";
  manifest.seed = cfg.seed;
  manifest.config_digest = mvd::sha256_hex(cfg.resolved_text);
  for (const auto& e : fs::directory_iterator(archive_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json")
      manifest.add_input(e.path().string());
  }

  mvd::CurationResult result = mvd::curate_archive(archive_dir);
  auto split = mvd::split_dataset(result.records, cfg.split_ratios,
                                  mvd::derive_seed(cfg.seed, "split"));

  std::string dataset_path = join_path(cfg.out_dir, "dataset.jsonl");
  std::string split_path = join_path(cfg.out_dir, "split.json");
  std::string log_path = join_path(cfg.out_dir, "curate_log.txt");
  mvd::write_dataset_jsonl(result.records, dataset_path);
  mvd::write_split_manifest(split, split_path);
  {
    std::string log_text;
    for (const auto& line : result.log) log_text += line + '\n';
    write_text(log_path, log_text);
  }

  std::cout << table1_style(mvd::tally_by_language(result.records));
  for (const auto& w : split.warnings) std::cerr << "warning: " << w << '\n';

  manifest.add_output(dataset_path);
  manifest.add_output(split_path);
  manifest.add_output(log_path);
  manifest.timings_sec["total"] = seconds_since(t0);
  manifest.notes["records"] = std::to_string(result.records.size());
  manifest.write(join_path(cfg.out_dir, "manifest.json"));
  std::cout << "wrote " << dataset_path << " (" << result.records.size()
            << " records)\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides) {
  auto t0 = Clock::now();
  mvd::RunConfig cfg = mvd::load_run_config(config_path, overrides);
  if (cfg.dataset_path.empty()) throw mvd::Error("train: data.dataset is required");
  ensure_dir(cfg.out_dir);

  mvd::RunManifest manifest;
  manifest.command = "train";
  manifest.seed = cfg.seed;
  manifest.config_digest = mvd::sha256_hex(cfg.resolved_text);
  manifest.add_input(cfg.dataset_path);
  if (!cfg.split_path.empty()) manifest.add_input(cfg.split_path);
  manifest.notes["variant"] = cfg.variant;

  auto records = mvd::read_dataset_jsonl(cfg.dataset_path);
  TrainSetup setup = prepare_training(cfg, records, cfg.split_path);

  mvd::ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = setup.vocab.size();
  mcfg.num_classes = static_cast<int>(setup.roster.size());
  mvd::ModelParams init = mvd::init_params(mcfg);

  auto tr = mvd::train(init, setup.split, cfg.train, setup.priors, setup.vocab,
                       setup.roster);
  for (const auto& e : tr.log) {
    std::cout << "epoch " << e.epoch << ": train_loss=" << e.train_loss
              << " val_pr_auc=" << e.val_pr_auc << " lr=" << e.lr << '\n';
  }
  std::cout << "best epoch: " << tr.best_epoch << '\n';

  std::string ckpt_path = join_path(cfg.out_dir, "checkpoint.mvd");
  std::string log_path = join_path(cfg.out_dir, "epochs.csv");
  mvd::save_checkpoint(tr.checkpoint, ckpt_path);
  write_epoch_csv(log_path, tr.log);

  manifest.add_output(ckpt_path);
  manifest.add_output(log_path);
  manifest.timings_sec["total"] = seconds_since(t0);
  manifest.write(join_path(cfg.out_dir, "manifest.json"));
  std::cout << "wrote " << ckpt_path << '\n';
  return 0;
}

int cmd_extend(const std::string& config_path, const std::string& base_path,
               const std::string& new_language, const std::string& eval_dataset,
               const std::string& eval_split,
               const std::vector<std::string>& overrides) {
  auto t0 = Clock::now();
  mvd::RunConfig cfg = mvd::load_run_config(config_path, overrides);
  if (cfg.dataset_path.empty())
    throw mvd::Error("extend: data.dataset (new-language records) is required");
  ensure_dir(cfg.out_dir);

  mvd::RunManifest manifest;
  manifest.command = "extend";
  manifest.seed = cfg.seed;
  manifest.config_digest = mvd::sha256_hex(cfg.resolved_text);
  manifest.add_input(base_path);
  manifest.add_input(cfg.dataset_path);
  if (!cfg.split_path.empty()) manifest.add_input(cfg.split_path);

  mvd::ExtensionPlan plan;
  plan.base = mvd::load_checkpoint(base_path);
  plan.base_digest = mvd::sha256_file(base_path);
  plan.new_language = new_language;
  plan.distill_weight = cfg.extend_distill_weight;
  plan.train_cfg = cfg.train;
  if (cfg.extend_lr > 0) plan.train_cfg.initial_lr = cfg.extend_lr;
  if (cfg.extend_epochs > 0) plan.train_cfg.epochs = cfg.extend_epochs;

  auto records = mvd::read_dataset_jsonl(cfg.dataset_path);
  if (cfg.split_path.empty()) {
    plan.data = mvd::split_dataset(records, cfg.split_ratios,
                                   mvd::derive_seed(cfg.seed, "split"));
  } else {
    plan.data = mvd::read_split_manifest(records, cfg.split_path);
  }

  auto res = mvd::extend(plan);
  for (const auto& e : res.log) {
    std::cout << "epoch " << e.epoch << ": train_loss=" << e.train_loss
              << " val_pr_auc=" << e.val_pr_auc << '\n';
  }

  std::string ckpt_path = join_path(cfg.out_dir, "checkpoint.mvd");
  mvd::save_checkpoint(res.checkpoint, ckpt_path);
  write_epoch_csv(join_path(cfg.out_dir, "epochs.csv"), res.log);
  manifest.add_output(ckpt_path);
  manifest.add_output(join_path(cfg.out_dir, "epochs.csv"));
  manifest.notes["new_language"] = new_language;
  manifest.notes["base_digest"] = plan.base_digest;
  manifest.notes["extension_data_languages"] = new_language;

  // Forgetting report needs held-out old-language records; training data
  // for old languages is never read.
  if (!eval_dataset.empty()) {
    manifest.add_input(eval_dataset);
    auto eval_records = mvd::read_dataset_jsonl(eval_dataset);
    std::vector<mvd::CodeFunction> old_test, all_test;
    if (!eval_split.empty()) {
      manifest.add_input(eval_split);
      auto esplit = mvd::read_split_manifest(eval_records, eval_split);
      eval_records = esplit.test;
    }
    for (const auto& r : eval_records) {
      if (r.language != new_language) old_test.push_back(r);
      all_test.push_back(r);
    }
    auto before = mvd::evaluate(plan.base, old_test);
    auto after = mvd::evaluate(res.checkpoint, all_test);
    std::string table = mvd::render_forgetting(new_language, before, after);
    std::cout << table;
    std::string report_path = join_path(cfg.out_dir, "forgetting.txt");
    write_text(report_path, table);
    manifest.add_output(report_path);
  }

  manifest.timings_sec["total"] = seconds_since(t0);
  manifest.write(join_path(cfg.out_dir, "manifest.json"));
  std::cout << "wrote " << ckpt_path << '\n';
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& ckpt_path,
                 const std::string& name, const std::vector<std::string>& overrides) {
  auto t0 = Clock::now();
  mvd::RunConfig cfg = mvd::load_run_config(config_path, overrides);
  if (cfg.dataset_path.empty()) throw mvd::Error("evaluate: data.dataset is required");
  ensure_dir(cfg.out_dir);

  mvd::RunManifest manifest;
  manifest.command = "evaluate";
  manifest.seed = cfg.seed;
  manifest.config_digest = mvd::sha256_hex(cfg.resolved_text);
  manifest.add_input(ckpt_path);
  manifest.add_input(cfg.dataset_path);

  auto ckpt = mvd::load_checkpoint(ckpt_path);
  auto records = mvd::read_dataset_jsonl(cfg.dataset_path);
  std::vector<mvd::CodeFunction> test_set;
  if (!cfg.split_path.empty()) {
    manifest.add_input(cfg.split_path);
    test_set = mvd::read_split_manifest(records, cfg.split_path).test;
  } else {
    test_set = records;
  }

  auto report = mvd::evaluate(ckpt, test_set);
  std::string table = mvd::render_report({{name, report}});
  std::cout << table;

  std::string table_path = join_path(cfg.out_dir, "metrics.txt");
  std::string csv_path = join_path(cfg.out_dir, "metrics.csv");
  std::string curve_path = join_path(cfg.out_dir, "pr_curves.csv");
  write_text(table_path, table);
  mvd::write_report_csv({{name, report}}, csv_path);
  mvd::write_pr_curves(report, curve_path);

  manifest.add_output(table_path);
  manifest.add_output(csv_path);
  manifest.add_output(curve_path);
  manifest.timings_sec["total"] = seconds_since(t0);
  manifest.write(join_path(cfg.out_dir, "manifest.json"));
  return 0;
}

int cmd_report(const std::vector<std::string>& csv_inputs,
               const std::string& config_path,
               const std::vector<std::string>& overrides) {
  auto t0 = Clock::now();
  mvd::RunConfig cfg = mvd::load_run_config(config_path, overrides);
  ensure_dir(cfg.out_dir);

  mvd::RunManifest manifest;
  manifest.command = "report";
  manifest.seed = cfg.seed;
  manifest.config_digest = mvd::sha256_hex(cfg.resolved_text);

  std::vector<std::pair<std::string, mvd::MetricsReport>> reports;
  for (const auto& path : csv_inputs) {
    manifest.add_input(path);
    for (auto& entry : mvd::read_report_csv(path)) reports.push_back(std::move(entry));
  }
  if (reports.empty()) throw mvd::Error("report: no rows in the input CSVs");

  std::string table = mvd::render_report(reports);
  std::cout << table;
  std::string table_path = join_path(cfg.out_dir, "comparison.txt");
  std::string csv_path = join_path(cfg.out_dir, "comparison.csv");
  write_text(table_path, table);
  mvd::write_report_csv(reports, csv_path);

  manifest.add_output(table_path);
  manifest.add_output(csv_path);
  manifest.timings_sec["total"] = seconds_since(t0);
  manifest.write(join_path(cfg.out_dir, "manifest.json"));
  return 0;
}

int cmd_selftest() {
  using namespace mvd;
  int failures = 0;
  auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name;
    if (!detail.empty()) std::cout << "  (" << detail << ")";
    std::cout << '\n';
    if (!ok) ++failures;
  };

  // Gradient check: toy transformer through the FOLA loss.
  {
    ModelConfig cfg;
    cfg.vocab_size = 18;
    cfg.max_len = 8;
    cfg.hidden_dim = 8;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.ffn_dim = 12;
    cfg.dropout_rate = 0.0;
    cfg.num_classes = 3;
    cfg.seed = 9;
    ModelParams p = init_params(cfg);
    std::vector<TokenSequence> batch;
    for (int b = 0; b < 2; ++b) {
      TokenSequence s;
      s.ids = {kClsId, 5 + b, 6, 7, kSepId, kPadId, kPadId, kPadId};
      s.mask = {1, 1, 1, 1, 1, 0, 0, 0};
      s.true_length = 5;
      batch.push_back(s);
    }
    auto priors = class_priors({5, 3, 2});
    LossConfig lcfg;
    std::vector<int> targets = {0, 2};
    double err = grad_check(
        p, batch, [&](const Mat& l) { return fola_loss(l, targets, priors, lcfg); },
        1e-5, 200);
    check("gradient check (toy transformer, fola)", err < 1e-4,
          "max rel err " + std::to_string(err));
  }

  // Metric oracles.
  {
    double ap = pr_auc({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
    check("pr_auc worked example = 5/6", ap == 1.0 * 0.5 + (2.0 / 3.0) * 0.5);
    auto m = confusion_metrics({1, 1, 0, 0}, {1, 0, 1, 0});
    check("confusion metrics bounds", m.precision == 0.5 && m.recall == 0.5);
    Vec probs(3);
    probs << 0.4, 0.35, 0.25;
    auto bs = collapse_binary(probs, 3);
    check("binary collapse", std::abs(bs.p_vuln - 0.6) < 1e-12 &&
                                 bs.predicted_vulnerable);
  }

  // Loss reduction identity spot check.
  {
    Rng rng(5);
    Mat z(4, 3);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) z(i, j) = rng.uniform(-2, 2);
    std::vector<int> targets = {0, 1, 2, 1};
    auto priors = class_priors({5, 3, 2});
    LossConfig ce;
    ce.variant = LossVariant::Ce;
    double manual = 0;
    for (int i = 0; i < 4; ++i) {
      Vec p = softmax(z.row(i).transpose());
      manual += -std::log(p[targets[size_t(i)]]);
    }
    manual /= 4;
    check("fola(ce) equals cross entropy",
          std::abs(fola_loss(z, targets, priors, ce).value - manual) < 1e-9);
  }

  std::cout << (failures == 0 ? "selftest: all checks passed\n"
                              : "selftest: FAILURES present\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-lingual vulnerability detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, archive_dir, base_path, ckpt_path, model_name = "model";
  std::string new_language, eval_dataset, eval_split;
  std::vector<std::string> overrides, csv_inputs;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config file (key = value lines)");
    cmd->add_option("--set", overrides,
                    "override a config key, e.g. --set train.epochs=5");
  };

  CLI::App* curate = app.add_subcommand("curate", "label a commit archive");
  curate->add_option("--archive", archive_dir, "directory of commit .json files")
      ->required();
  add_common(curate);

  std::string train_dataset, train_variant;
  CLI::App* train = app.add_subcommand("train", "train a detector");
  add_common(train);
  train->add_option("--dataset", train_dataset,
                    "dataset path, shorthand for --set data.dataset=...");
  train->add_option("--variant", train_variant, "mvd|binary|ce|focal|lace|freeze");

  CLI::App* extend = app.add_subcommand("extend", "add a language to a checkpoint");
  extend->add_option("--base", base_path, "base checkpoint")->required();
  extend->add_option("--language", new_language, "new language name")->required();
  extend->add_option("--eval-dataset", eval_dataset,
                     "held-out records for the forgetting report");
  extend->add_option("--eval-split", eval_split, "split manifest for --eval-dataset");
  add_common(extend);

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a test set");
  evaluate->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  evaluate->add_option("--name", model_name, "model name in the rendered table");
  add_common(evaluate);

  CLI::App* report = app.add_subcommand("report", "comparison table from metric CSVs");
  report->add_option("--inputs", csv_inputs, "metric CSV files")->required();
  add_common(report);

  app.add_subcommand("selftest", "run the gradient-check and metric-oracle suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("curate")) return cmd_curate(archive_dir, config_path, overrides);
    if (app.got_subcommand("train")) {
      if (!train_dataset.empty()) overrides.push_back("data.dataset=" + train_dataset);
      if (!train_variant.empty()) overrides.push_back("variant=" + train_variant);
      return cmd_train(config_path, overrides);
    }
    if (app.got_subcommand("extend"))
      return cmd_extend(config_path, base_path, new_language, eval_dataset, eval_split,
                        overrides);
    if (app.got_subcommand("evaluate"))
      return cmd_evaluate(config_path, ckpt_path, model_name, overrides);
    if (app.got_subcommand("report")) return cmd_report(csv_inputs, config_path, overrides);
    if (app.got_subcommand("selftest")) return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
