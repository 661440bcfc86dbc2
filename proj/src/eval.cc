#include "ratlesnet/eval.h"

#include <map>
#include <set>
#include <sstream>

namespace ratlesnet {

namespace {

std::vector<std::string> ids_of(std::span<const ScanRecord> records) {
  std::vector<std::string> ids;
  for (const ScanRecord& r : records) ids.push_back(r.id);
  return ids;
}

std::vector<Sample> pick(const std::map<std::string, const Sample*>& by_id,
                         std::span<const ScanRecord> records) {
  std::vector<Sample> out;
  for (const ScanRecord& r : records) out.push_back(*by_id.at(r.id));
  return out;
}

std::string epoch_line(const EpochRecord& r) {
  std::ostringstream out;
  out << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss;
  return out.str();
}

}  // namespace

std::vector<DiceResult> score_samples(const Model<float>& model, std::span<const Sample> samples,
                                      std::span<const ScanRecord> records,
                                      std::vector<Mask>* predictions) {
  std::vector<DiceResult> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const Shape& in = s.input.shape();
    Mask pred = argmax_mask(model.infer(s.input), {in.x(), in.y(), in.z()}, s.voxel_size);
    const ScanRecord& r = records[i];
    out.push_back({r.id, dice(pred.values, s.labels), r.time_point, r.sham, r.study});
    if (predictions) predictions->push_back(std::move(pred));
  }
  return out;
}

CrossvalResult crossval(const Manifest& manifest, std::size_t k, const ModelConfig& model_config,
                        const TrainConfig& train_config, std::uint64_t seed, GroupBy group_by,
                        const ProgressFn& progress) {
  if (manifest.records.empty()) throw ConfigError("crossval: empty manifest");
  for (const ScanRecord& r : manifest.records) {
    if (r.study != manifest.records.front().study) {
      throw ConfigError("crossval: manifest mixes studies " + manifest.records.front().study +
                        " and " + r.study);
    }
  }
  const FoldSplit split = split_folds(manifest, k, seed);
  const std::vector<Sample> samples = load_samples(manifest.records);
  std::map<std::string, const Sample*> by_id;
  for (const Sample& s : samples) by_id[s.id] = &s;

  CrossvalResult result;
  for (std::size_t fold = 0; fold < k; ++fold) {
    const std::set<std::string> test_ids(split.folds[fold].begin(), split.folds[fold].end());
    std::vector<ScanRecord> pool, test;
    for (const ScanRecord& r : manifest.records) (test_ids.count(r.id) ? test : pool).push_back(r);
    const TrainValSplit tv = split_train_val(pool, train_config.val_fraction, seed + 1000 + fold);
    FoldAudit audit{fold, ids_of(tv.train), ids_of(tv.val), ids_of(test)};
    if (progress) {
      progress("fold " + std::to_string(fold + 1) + "/" + std::to_string(k) + ": " +
               std::to_string(tv.train.size()) + " train, " + std::to_string(tv.val.size()) +
               " val, " + std::to_string(test.size()) + " test");
    }
    try {
      const std::vector<Sample> train_s = pick(by_id, tv.train);
      const std::vector<Sample> val_s = pick(by_id, tv.val);
      TrainResult tr = train(build_model<float>(model_config), train_s, val_s, train_config.policy,
                             train_config.adam, seed + fold, [&](const EpochRecord& r) {
                               if (progress) progress("  fold " + std::to_string(fold + 1) + " " + epoch_line(r));
                             });
      const std::vector<Sample> test_s = pick(by_id, test);
      for (DiceResult& d : score_samples(tr.model, test_s, test, &result.predictions)) result.scans.push_back(std::move(d));
      result.models.push_back(std::move(tr.model));
      result.histories.push_back(std::move(tr.history));
    } catch (const NumericError& e) {
      throw NumericError("fold " + std::to_string(fold) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("fold " + std::to_string(fold) + ": " + e.what());
    }
    result.audit.push_back(std::move(audit));
  }
  result.report = aggregate(result.scans, group_by);
  return result;
}

GeneralizationResult generalization_eval(const Manifest& train_manifest,
                                         std::span<const Manifest> test_manifests,
                                         const ModelConfig& model_config,
                                         const TrainConfig& train_config, std::uint64_t seed,
                                         const ProgressFn& progress) {
  if (train_manifest.records.empty()) throw ConfigError("generalize: empty training manifest");
  if (test_manifests.empty()) throw ConfigError("generalize: no test manifests");
  std::set<std::string> train_ids, train_studies;
  for (const ScanRecord& r : train_manifest.records) {
    train_ids.insert(r.id);
    train_studies.insert(r.study);
  }
  std::vector<ScanRecord> test_records;
  for (const Manifest& m : test_manifests) {
    for (const ScanRecord& r : m.records) {
      if (train_ids.count(r.id)) {
        throw ConfigError("generalize: scan " + r.id + " appears in both training and test data");
      }
      if (train_studies.count(r.study)) {
        throw ConfigError("generalize: study " + r.study + " is used for both training and testing");
      }
      test_records.push_back(r);
    }
  }
  const TrainValSplit tv = split_train_val(train_manifest.records, train_config.val_fraction,
                                           seed + 1000);
  GeneralizationResult result;
  result.audit = FoldAudit{0, ids_of(tv.train), ids_of(tv.val), ids_of(test_records)};
  const std::vector<Sample> train_s = load_samples(tv.train);
  const std::vector<Sample> val_s = load_samples(tv.val);
  if (progress) {
    progress("training on " + std::to_string(train_s.size()) + " scans, validating on " +
             std::to_string(val_s.size()));
  }
  TrainResult tr = train(build_model<float>(model_config), train_s, val_s, train_config.policy,
                         train_config.adam, seed, [&](const EpochRecord& r) {
                           if (progress) progress("  " + epoch_line(r));
                         });
  const std::vector<Sample> test_s = load_samples(test_records);
  result.scans = score_samples(tr.model, test_s, test_records, &result.predictions);
  result.report = aggregate(result.scans, GroupBy::kStudy);
  result.model = std::move(tr.model);
  result.history = std::move(tr.history);
  return result;
}

std::string format_audit(std::span<const FoldAudit> audit) {
  std::ostringstream out;
  out << "fold\trole\tid\n";
  for (const FoldAudit& a : audit) {
    auto emit = [&](const char* role, const std::vector<std::string>& ids) {
      for (const std::string& id : ids) out << a.fold << '\t' << role << '\t' << id << '\n';
    };
    emit("train", a.train_ids);
    emit("val", a.val_ids);
    emit("test", a.test_ids);
  }
  return out.str();
}

}  // namespace ratlesnet
