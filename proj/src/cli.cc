#include "ratlesnet/cli.h"

#include <CLI11.hpp>

#include <filesystem>
#include <ostream>
#include <thread>

#include "ratlesnet/checkpoint.h"
#include "ratlesnet/dataset.h"
#include "ratlesnet/eval.h"
#include "ratlesnet/io.h"
#include "ratlesnet/metrics.h"
#include "ratlesnet/nifti.h"
#include "ratlesnet/parallel.h"
#include "ratlesnet/run_config.h"

namespace fs = std::filesystem;

namespace ratlesnet {

namespace {

struct Options {
  std::size_t threads = 0;
  bool quiet = false;
  std::string config;
  std::string out;
  std::string manifest;
  std::string train_manifest;
  std::vector<std::string> test_manifests;
  std::string model;
  std::string in;
  std::string pred_dir;
  std::size_t n = 0;
};

RunConfig config_of(const Options& o) {
  return o.config.empty() ? RunConfig{} : load_run_config(o.config);
}

fs::path manifest_of(const std::string& flag, const fs::path& from_config, const char* name) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  throw ConfigError(std::string("no manifest given (use ") + name + " or the config file)");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

fs::path sibling_with_extension(const fs::path& p, const char* ext) {
  fs::path out = p;
  out.replace_extension(ext);
  return out == p ? fs::path(p.string() + ext) : out;
}

void write_predictions(const fs::path& dir, std::span<const DiceResult> scans,
                       std::span<const Mask> masks) {
  make_dir(dir);
  for (std::size_t i = 0; i < scans.size(); ++i) save_nifti(masks[i], dir / (scans[i].id + "_pred.nii"));
}

void write_report(const fs::path& dir, const EvalReport& report, std::span<const DiceResult> scans) {
  io::write_text(dir / "report.txt", format_report_text(report));
  io::write_text(dir / "report.csv", format_report_csv(report));
  io::write_text(dir / "scans.tsv", format_scan_results(scans));
}

int cmd_generate(const Options& o, const ProgressFn& log) {
  const RunConfig cfg = config_of(o);
  if (o.n == 0) throw ConfigError("generate: --n must be positive");
  const Manifest m = generate_phantom_study(cfg.phantom, o.n, o.out, cfg.study);
  log("wrote " + std::to_string(m.records.size()) + " scans and manifest.tsv to " + o.out);
  return exit_code::kOk;
}

int cmd_train(const Options& o, const ProgressFn& log) {
  const RunConfig cfg = config_of(o);
  const Manifest m = read_manifest(manifest_of(o.manifest, cfg.manifest, "--manifest"));
  if (m.records.size() < 2) throw ConfigError("train: need at least 2 scans");
  const TrainValSplit tv = split_train_val(m.records, cfg.train.val_fraction, cfg.seed + 1000);
  const std::vector<Sample> train_s = load_samples(tv.train);
  const std::vector<Sample> val_s = load_samples(tv.val);
  log("training on " + std::to_string(train_s.size()) + " scans, validating on " +
      std::to_string(val_s.size()));
  const TrainResult tr = train(build_model<float>(cfg.model), train_s, val_s, cfg.train.policy,
                               cfg.train.adam, cfg.seed, [&](const EpochRecord& r) {
                                 log("epoch " + std::to_string(r.epoch) + " train " +
                                     std::to_string(r.train_loss) + " val " +
                                     std::to_string(r.val_loss));
                               });
  const fs::path dir = o.out;
  make_dir(dir);
  save_checkpoint(tr.model, dir / "model.rlnet");
  io::write_text(dir / "train_log.tsv", format_epoch_log(tr.history));
  const FoldAudit audit{0, {}, {}, {}};
  std::vector<FoldAudit> split{audit};
  for (const auto& r : tv.train) split[0].train_ids.push_back(r.id);
  for (const auto& r : tv.val) split[0].val_ids.push_back(r.id);
  io::write_text(dir / "split.tsv", format_audit(split));
  log("best epoch " + std::to_string(tr.best_epoch) + ", checkpoint " +
      (dir / "model.rlnet").string());
  return exit_code::kOk;
}

int cmd_predict(const Options& o, const ProgressFn& log) {
  const Model<float> model = load_checkpoint(o.model);
  const Volume volume = load_volume(o.in);
  const Mask mask = predict_mask(model, standardize(volume));
  save_nifti(mask, o.out);
  log("wrote " + o.out + " (" + std::to_string(mask.count()) + " lesion voxels)");
  return exit_code::kOk;
}

int cmd_evaluate(const Options& o, const ProgressFn& log) {
  const RunConfig cfg = config_of(o);
  const Manifest m = read_manifest(manifest_of(o.manifest, cfg.manifest, "--manifest"));
  std::vector<DiceResult> scans;
  for (const ScanRecord& r : m.records) {
    const fs::path pred_path = fs::path(o.pred_dir) / (r.id + "_pred.nii");
    if (!fs::exists(pred_path)) {
      throw IoError("scan " + r.id + ": missing prediction " + pred_path.string());
    }
    const Mask pred = load_mask(pred_path);
    const Mask truth = load_mask(r.mask_path);
    if (pred.shape != truth.shape) {
      throw ShapeError("scan " + r.id + ": prediction " + std::to_string(pred.shape[0]) + "x" +
                       std::to_string(pred.shape[1]) + "x" + std::to_string(pred.shape[2]) +
                       " does not match ground truth " + std::to_string(truth.shape[0]) + "x" +
                       std::to_string(truth.shape[1]) + "x" + std::to_string(truth.shape[2]));
    }
    scans.push_back({r.id, dice(pred, truth), r.time_point, r.sham, r.study});
  }
  const EvalReport report = aggregate(scans, cfg.group_by);
  const fs::path out = o.out;
  if (out.has_parent_path()) make_dir(out.parent_path());
  io::write_text(out, format_report_text(report));
  io::write_text(sibling_with_extension(out, ".csv"), format_report_csv(report));
  log("scored " + std::to_string(scans.size()) + " scans, report " + out.string());
  return exit_code::kOk;
}

int cmd_crossval(const Options& o, const ProgressFn& log) {
  const RunConfig cfg = config_of(o);
  const Manifest m = read_manifest(manifest_of(o.manifest, cfg.manifest, "--manifest"));
  const CrossvalResult r = crossval(m, cfg.k, cfg.model, cfg.train, cfg.seed, cfg.group_by, log);
  const fs::path dir = o.out;
  make_dir(dir);
  for (std::size_t f = 0; f < r.models.size(); ++f) {
    const fs::path fold_dir = dir / ("fold_" + std::to_string(f));
    make_dir(fold_dir);
    save_checkpoint(r.models[f], fold_dir / "model.rlnet");
    io::write_text(fold_dir / "train_log.tsv", format_epoch_log(r.histories[f]));
  }
  write_report(dir, r.report, r.scans);
  io::write_text(dir / "audit.tsv", format_audit(r.audit));
  write_predictions(dir / "predictions", r.scans, r.predictions);
  log(format_report_text(r.report));
  return exit_code::kOk;
}

int cmd_generalize(const Options& o, const ProgressFn& log) {
  const RunConfig cfg = config_of(o);
  const Manifest train_m = read_manifest(manifest_of(o.train_manifest, cfg.manifest,
                                                     "--train-manifest"));
  std::vector<fs::path> test_paths(o.test_manifests.begin(), o.test_manifests.end());
  if (test_paths.empty()) test_paths = cfg.test_manifests;
  if (test_paths.empty()) throw ConfigError("generalize: no test manifests given");
  std::vector<Manifest> tests;
  for (const fs::path& p : test_paths) tests.push_back(read_manifest(p));
  const GeneralizationResult r = generalization_eval(train_m, tests, cfg.model, cfg.train,
                                                     cfg.seed, log);
  const fs::path dir = o.out;
  make_dir(dir);
  save_checkpoint(r.model, dir / "model.rlnet");
  io::write_text(dir / "train_log.tsv", format_epoch_log(r.history));
  write_report(dir, r.report, r.scans);
  const FoldAudit audit[] = {r.audit};
  io::write_text(dir / "audit.tsv", format_audit(audit));
  write_predictions(dir / "predictions", r.scans, r.predictions);
  log(format_report_text(r.report));
  return exit_code::kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"3D lesion segmentation: phantoms, training, prediction and evaluation",
               "ratlesnet"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--threads", o.threads, "worker threads (1 = sequential); default: all cores")
      ->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", o.quiet, "suppress progress messages");

  auto* gen = app.add_subcommand("generate", "write synthetic phantom scans and a manifest");
  gen->add_option("--config", o.config, "run config file");
  gen->add_option("--out", o.out, "output directory")->required();
  gen->add_option("--n", o.n, "number of scans")->required();

  auto* tr = app.add_subcommand("train", "train one model");
  tr->add_option("--config", o.config, "run config file");
  tr->add_option("--manifest", o.manifest, "scan manifest");
  tr->add_option("--out", o.out, "output directory")->required();

  auto* pr = app.add_subcommand("predict", "segment one volume");
  pr->add_option("--model", o.model, "checkpoint")->required();
  pr->add_option("--in", o.in, "input NIfTI volume")->required();
  pr->add_option("--out", o.out, "output NIfTI mask")->required();

  auto* ev = app.add_subcommand("evaluate", "score <id>_pred.nii masks against a manifest");
  ev->add_option("--config", o.config, "run config file (group_by)");
  ev->add_option("--pred-dir", o.pred_dir, "directory of predictions")->required();
  ev->add_option("--manifest", o.manifest, "scan manifest");
  ev->add_option("--out", o.out, "report path; a .csv sibling is written too")->required();

  auto* cv = app.add_subcommand("crossval", "k-fold cross-validation");
  cv->add_option("--config", o.config, "run config file");
  cv->add_option("--manifest", o.manifest, "scan manifest");
  cv->add_option("--out", o.out, "output directory")->required();

  auto* ge = app.add_subcommand("generalize", "train on one study, test on others");
  ge->add_option("--config", o.config, "run config file");
  ge->add_option("--train-manifest", o.train_manifest, "training manifest");
  ge->add_option("--test-manifests", o.test_manifests, "comma-separated test manifests")
      ->delimiter(',');
  ge->add_option("--out", o.out, "output directory")->required();

  std::vector<const char*> argv{"ratlesnet"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return exit_code::kUsage;
  }

  const std::size_t previous_threads = num_threads();
  set_num_threads(o.threads ? o.threads : std::max(1u, std::thread::hardware_concurrency()));
  const ProgressFn log = [&](const std::string& msg) {
    if (!o.quiet) err << msg << '\n' << std::flush;
  };

  int code = exit_code::kOk;
  try {
    if (gen->parsed()) code = cmd_generate(o, log);
    else if (tr->parsed()) code = cmd_train(o, log);
    else if (pr->parsed()) code = cmd_predict(o, log);
    else if (ev->parsed()) code = cmd_evaluate(o, log);
    else if (cv->parsed()) code = cmd_crossval(o, log);
    else if (ge->parsed()) code = cmd_generalize(o, log);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    code = exit_code::kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    code = exit_code::kNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    code = exit_code::kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = exit_code::kData;
  }
  set_num_threads(previous_threads);
  return code;
}

}  // namespace ratlesnet
