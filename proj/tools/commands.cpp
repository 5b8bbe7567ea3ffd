#include "commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "ren/config.hpp"
#include "ren/data.hpp"
#include "ren/errors.hpp"
#include "ren/eval.hpp"
#include "ren/model.hpp"
#include "ren/predictor.hpp"
#include "ren/train.hpp"

namespace ren::cli {

std::atomic<bool> stop_requested{false};

namespace {

namespace fs = std::filesystem;

struct OrderViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// Run configuration flags

struct RunFlags {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;

  void attach(CLI::App* app, bool training) {
    app->add_option("--config", config_path, "key=value run configuration file");
    auto flag = [&](const std::string& name, const std::string& key, const std::string& help) {
      app->add_option_function<std::string>(
          name, [this, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
    };
    flag("--seed", "seed", "seed for every random stream");
    flag("--variant", "variant", "basic|basic-large|region-ensemble|region-bagging|basic-bagging");
    flag("--grid-n", "grid_n", "region grid size n (n x n regions)");
    flag("--joints", "joints", "number of joints J");
    flag("--fc-dim", "fc_dim", "width of the first FC layer");
    flag("--fc2-dim", "fc2_dim", "width of the second FC layer (0 = variant default)");
    flag("--channels", "channels", "trunk stage widths, e.g. 16,32,64");
    flag("--dropout", "dropout", "dropout rate");
    flag("--cube-size", "cube_size", "crop cube half-extent, mm");
    flag("--seg-near", "seg_near", "foreground depth band start, mm");
    flag("--seg-far", "seg_far", "foreground depth band end, mm");
    if (!training) return;
    flag("--iters", "iters", "maximum training iterations");
    flag("--batch", "batch", "mini-batch size");
    flag("--lr0", "lr0", "initial learning rate");
    flag("--lr-drop-every", "lr_drop_every", "iterations between learning-rate drops");
    flag("--weight-decay", "weight_decay", "weight decay");
    flag("--momentum", "momentum", "momentum");
    flag("--augment", "augment", "true|false");
    flag("--snapshot-every", "snapshot_every", "iterations between snapshots");
    flag("--k", "k", "members of basic-bagging");
    flag("--out", "out", "root directory for run folders");
    flag("--name", "name", "run name (output goes to <out>/<name>)");
    flag("--synthetic", "synthetic", "train on N generated samples");
    flag("--cache", "cache", "sample cache to train on");
    flag("--manifest", "manifest", "manifest to preprocess and train on");
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Predictors loaded from disk

class OwnedModel : public Predictor {
 public:
  explicit OwnedModel(Model<float> m) : model_(std::move(m)), inner_(model_) {}
  int joints() const override { return inner_.joints(); }
  void forward(const Tensor<float>& batch) override { inner_.forward(batch); }
  std::vector<HandAnnotation> predict(std::span<const CropResult> crops) override { return inner_.predict(crops); }

 private:
  Model<float> model_;
  ModelPredictor inner_;
};

struct LoadedPredictor {
  std::string label;
  std::unique_ptr<Predictor> predictor;
};

constexpr const char* kEnsembleMagic = "REN-ENSEMBLE 1";

LoadedPredictor load_predictor(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("checkpoint not found: " + path.string());
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  if (first != kEnsembleMagic) {
    LoadedModel lm = load_model(path);
    const std::string label = variant_name(lm.model.spec().variant);
    return {label, std::make_unique<OwnedModel>(std::move(lm.model))};
  }
  auto ens = std::make_unique<EnsemblePredictor>();
  bool all_basic = true;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    LoadedModel lm = load_model(path.parent_path() / line);
    all_basic = all_basic && lm.model.spec().variant == Variant::Basic;
    ens->add(std::move(lm.model));
  }
  if (ens->size() == 0) throw InputError(path.string() + ": ensemble has no members");
  return {all_basic ? "basic-bagging" : "ensemble", std::move(ens)};
}

void write_ensemble(const fs::path& path, const std::vector<std::string>& members) {
  std::string text = std::string(kEnsembleMagic) + "\n";
  for (const auto& m : members) text += m + "\n";
  spit(path, text);
}

// ---------------------------------------------------------------------------
// Evaluation data

struct EvalSet {
  int joints = 0;
  std::vector<std::string> frames;
  std::vector<CropResult> crops;
  std::vector<HandAnnotation> gts;
};

EvalSet eval_set_from_cache(const SampleCache& cache) {
  EvalSet s;
  s.joints = cache.joints;
  for (std::size_t i = 0; i < cache.samples.size(); ++i) {
    const Sample& smp = cache.samples[i];
    s.frames.push_back("record" + std::to_string(i));
    s.crops.push_back(smp.crop);
    s.gts.push_back(denormalize_joints(std::span<const float>(smp.labels), smp.crop.transform));
  }
  return s;
}

EvalSet eval_set_from_manifest(const DatasetManifest& m, const PreprocessConfig& pre) {
  EvalSet s;
  s.joints = m.joints;
  for (const ManifestEntry& e : m.entries) {
    const DepthFrame frame = read_depth_pgm(m.frame_path(e), m.intrinsics);
    s.frames.push_back(e.frame);
    s.crops.push_back(preprocess_frame(frame, pre));
    s.gts.push_back(e.annotation);
  }
  if (s.gts.empty()) throw InputError("empty dataset");
  return s;
}

SampleCache training_data(const RunConfig& cfg, std::ostream& out) {
  const int joints = cfg.model.joints;
  if (cfg.synthetic > 0) {
    out << "generating " << cfg.synthetic << " synthetic samples\n";
    return synth_cache(static_cast<std::size_t>(cfg.synthetic), joints, cfg.train.seed, CameraIntrinsics{},
                       cfg.preprocess);
  }
  if (!cfg.cache.empty()) {
    if (!fs::exists(cfg.cache)) throw InputError("cache not found: " + cfg.cache);
    return read_cache(cfg.cache);
  }
  if (!cfg.manifest.empty()) {
    if (!fs::exists(cfg.manifest)) throw InputError("manifest not found: " + cfg.manifest);
    return build_cache(load_manifest(cfg.manifest), cfg.preprocess);
  }
  throw InputError("no training data: give --synthetic N, --cache or --manifest");
}

// ---------------------------------------------------------------------------
// Commands

int cmd_config(const RunFlags& flags, std::ostream& out) {
  out << flags.resolve().echo();
  return kOk;
}

int cmd_synth(long count, int joints, std::uint64_t seed, double jitter, const std::string& dir, const std::string& name,
              std::ostream& out) {
  if (count < 1) throw InputError("--count must be at least 1");
  SynthOptions opts;
  opts.depth_jitter_mm = jitter;
  const auto samples = synth_generate(static_cast<std::size_t>(count), joints, seed, CameraIntrinsics{}, opts);
  const fs::path manifest = write_synthetic_dataset(dir, samples, CameraIntrinsics{}, name);
  out << "wrote " << count << " frames, manifest " << manifest.string() << "\n";
  return kOk;
}

int cmd_split(const std::string& manifest_path, double train_fraction, std::uint64_t seed, std::ostream& out) {
  if (!fs::exists(manifest_path)) throw InputError("manifest not found: " + manifest_path);
  const DatasetManifest m = load_manifest(manifest_path);
  auto [train, test] = split_manifest(m, {train_fraction, 1.0 - train_fraction}, seed);
  const fs::path p(manifest_path);
  const fs::path tp = p.parent_path() / (p.stem().string() + "-train.txt");
  const fs::path ep = p.parent_path() / (p.stem().string() + "-test.txt");
  write_manifest(tp, train);
  write_manifest(ep, test);
  out << "train " << train.entries.size() << " -> " << tp.string() << "\n";
  out << "test " << test.entries.size() << " -> " << ep.string() << "\n";
  return kOk;
}

int cmd_prepare(const RunFlags& flags, const std::string& manifest_path, const std::string& out_dir,
                const std::string& exclude_path, bool skip_bad, std::ostream& out, std::ostream& err) {
  if (!fs::exists(manifest_path)) throw InputError("manifest not found: " + manifest_path);
  const RunConfig cfg = flags.resolve();
  ManifestOptions mo;
  if (!exclude_path.empty()) {
    std::istringstream in(slurp(exclude_path));
    for (std::string line; std::getline(in, line);)
      if (!line.empty() && line[0] != '#') mo.exclude.insert(line);
  }
  const DatasetManifest m = load_manifest(manifest_path, mo);
  std::vector<std::string> warnings;
  const SampleCache cache = build_cache(m, cfg.preprocess, {skip_bad}, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";

  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / (m.name + ".renc");
  const std::vector<char> bytes = encode_cache(cache);
  if (fs::exists(path)) {
    const std::string old = slurp(path);
    if (old.size() == bytes.size() && std::equal(bytes.begin(), bytes.end(), old.begin())) {
      out << path.string() << " unchanged (" << cache.samples.size() << " records)\n";
      return kOk;
    }
  }
  write_cache(path, cache);
  out << "wrote " << cache.samples.size() << " records to " << path.string() << "\n";
  return kOk;
}

int cmd_train(const RunFlags& flags, std::ostream& out) {
  RunConfig cfg = flags.resolve();
  const fs::path run_dir = fs::path(cfg.out_root) / cfg.name;
  fs::create_directories(run_dir);
  const std::string echo = cfg.echo();
  out << echo;
  spit(run_dir / "config.txt", echo);

  const SampleCache data = training_data(cfg, out);
  cfg.train.snapshot_dir = run_dir / "snapshots";
  const ModelSpec spec = cfg.resolved_model();

  const long report_every = std::max(1L, cfg.train.max_iters / 20);
  TrainHooks hooks;
  hooks.stop = &stop_requested;
  hooks.on_iteration = [&](const LossRecord& r) {
    if ((r.iter + 1) % report_every == 0)
      out << "iter " << r.iter + 1 << " lr " << r.lr << " loss " << r.loss << std::endl;
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream summary;
  summary << "variant=" << cfg.variant << "\nsamples=" << data.samples.size() << "\n";
  bool interrupted = false;
  if (cfg.bagging()) {
    BaggingResult res = train_bagging(spec, data, cfg.train, cfg.bagging_k, false, hooks);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < res.ensemble.size(); ++i) {
      const std::string name = "member" + std::to_string(i) + ".ckpt";
      save_model(run_dir / name, res.ensemble.member(i),
                 {{"member", std::to_string(i)}, {"seed", std::to_string(member_seed(cfg.train.seed, int(i)))}});
      write_loss_csv(run_dir / ("loss-member" + std::to_string(i) + ".csv"), res.runs[i].log);
      names.push_back(name);
      summary << "member" << i << ".iterations=" << res.runs[i].iterations << "\n";
      if (!res.runs[i].log.empty()) summary << "member" << i << ".final_loss=" << res.runs[i].log.back().loss << "\n";
      interrupted = interrupted || res.runs[i].interrupted;
    }
    write_ensemble(run_dir / "ensemble.txt", names);
    summary << "parameters=" << param_count(res.ensemble.member(0)).total * res.ensemble.size() << "\n";
    out << "ensemble descriptor " << (run_dir / "ensemble.txt").string() << "\n";
  } else {
    Model<float> model(spec, cfg.train.seed);
    const TrainResult res = train(model, data, cfg.train, hooks);
    save_model(run_dir / "model.ckpt", model, {{"iterations", std::to_string(res.iterations)}});
    write_loss_csv(run_dir / "loss.csv", res.log);
    summary << "iterations=" << res.iterations << "\n";
    if (!res.log.empty()) summary << "final_loss=" << res.log.back().loss << "\n";
    summary << "parameters=" << param_count(model).total << "\n";
    interrupted = res.interrupted;
    out << "checkpoint " << (run_dir / "model.ckpt").string() << "\n";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  summary << "seconds=" << secs << "\ninterrupted=" << (interrupted ? "true" : "false") << "\n";
  spit(run_dir / "summary.txt", summary.str());
  return kOk;
}

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> predictions;
  std::vector<std::string> names;
  std::string cache, manifest, out_dir = "runs/eval";
  long synthetic = 0;
  int joints = 16;
  std::uint64_t seed = 1;
  bool svg = false;
};

int cmd_eval(const RunFlags& flags, const EvalArgs& a, std::ostream& out) {
  const RunConfig cfg = flags.resolve();
  if (a.checkpoints.empty() == a.predictions.empty())
    throw InputError("give either --checkpoint or --predictions");
  if (!a.predictions.empty() && a.manifest.empty()) throw InputError("--predictions needs the ground-truth --manifest");
  const int sources = !a.cache.empty() + !a.manifest.empty() + (a.synthetic > 0);
  if (sources != 1) throw InputError("give exactly one of --cache, --manifest, --synthetic");

  EvalSet set;
  DatasetManifest manifest;
  if (!a.cache.empty()) {
    if (!fs::exists(a.cache)) throw InputError("cache not found: " + a.cache);
    set = eval_set_from_cache(read_cache(a.cache));
  } else if (!a.manifest.empty()) {
    if (!fs::exists(a.manifest)) throw InputError("manifest not found: " + a.manifest);
    manifest = load_manifest(a.manifest);
    if (a.predictions.empty()) set = eval_set_from_manifest(manifest, cfg.preprocess);
  } else {
    set = eval_set_from_cache(synth_cache(static_cast<std::size_t>(a.synthetic), a.joints, a.seed, CameraIntrinsics{},
                                          cfg.preprocess));
  }

  const auto& sources_list = a.checkpoints.empty() ? a.predictions : a.checkpoints;
  if (!a.names.empty() && a.names.size() != sources_list.size())
    throw InputError("--name must be given once per evaluated input");
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < sources_list.size(); ++i) {
    const std::string name = a.names.empty() ? fs::path(sources_list[i]).stem().string() : a.names[i];
    std::vector<HandAnnotation> preds, gts;
    if (!a.checkpoints.empty()) {
      LoadedPredictor lp = load_predictor(sources_list[i]);
      if (lp.predictor->joints() != set.joints)
        throw InputError("checkpoint " + sources_list[i] + " predicts J=" + std::to_string(lp.predictor->joints()) +
                         " but the data has J=" + std::to_string(set.joints));
      preds = lp.predictor->predict(set.crops);
      gts = set.gts;
    } else {
      if (!fs::exists(sources_list[i])) throw InputError("predictions not found: " + sources_list[i]);
      const DatasetManifest p = load_manifest(sources_list[i]);
      if (p.joints != manifest.joints)
        throw InputError("predictions have J=" + std::to_string(p.joints) + " but the ground truth has J=" +
                         std::to_string(manifest.joints));
      if (p.entries.size() != manifest.entries.size())
        throw InputError("predictions cover " + std::to_string(p.entries.size()) + " frames, ground truth " +
                         std::to_string(manifest.entries.size()));
      for (std::size_t f = 0; f < p.entries.size(); ++f) {
        if (p.entries[f].frame != manifest.entries[f].frame)
          throw InputError("prediction frame '" + p.entries[f].frame + "' does not match '" +
                           manifest.entries[f].frame + "'");
        preds.push_back(p.entries[f].annotation);
        gts.push_back(manifest.entries[f].annotation);
      }
    }
    reports.push_back(evaluate(name, preds, gts));
  }

  fs::create_directories(a.out_dir);
  for (const auto& r : reports) {
    write_report_json(fs::path(a.out_dir) / (r.name + ".json"), r);
    write_curve_csv(fs::path(a.out_dir) / (r.name + "-curve.csv"), r.success_curve);
  }
  const ComparisonTable table = compare_report(reports);
  spit(fs::path(a.out_dir) / "comparison.txt", table.text);
  spit(fs::path(a.out_dir) / "comparison.csv", table.csv);
  if (a.svg) write_curve_svg(fs::path(a.out_dir) / "curves.svg", reports);
  out << table.text;
  return kOk;
}

struct BenchArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> variants;
  int reps = 20, warmup = 3, batch = 1, k = 4;
  std::string assert_order;
};

int cmd_bench(const RunFlags& flags, const BenchArgs& a, std::ostream& out) {
  const RunConfig cfg = flags.resolve();
  if (a.checkpoints.empty() && a.variants.empty()) throw InputError("give --checkpoint or --bench-variant");
  if (a.batch < 1) throw InputError("--batch must be positive");
  std::vector<LoadedPredictor> entries;
  for (const auto& c : a.checkpoints) entries.push_back(load_predictor(c));
  for (const auto& v : a.variants) {
    RunConfig c = cfg;
    c.set("variant", v);
    const ModelSpec spec = c.resolved_model();
    if (c.bagging()) {
      auto ens = std::make_unique<EnsemblePredictor>();
      for (int i = 0; i < a.k; ++i) ens->add(Model<float>(spec, member_seed(cfg.train.seed, i)));
      entries.push_back({v, std::move(ens)});
    } else {
      entries.push_back({v, std::make_unique<OwnedModel>(Model<float>(spec, cfg.train.seed))});
    }
  }

  const std::size_t s = cfg.model.input_size;
  Tensor<float> batch({static_cast<std::size_t>(a.batch), 1, s, s});
  CounterRng rng(cfg.train.seed);
  for (float& v : batch.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  std::vector<std::pair<std::string, TimingStats>> rows;
  for (auto& e : entries) rows.emplace_back(e.label, benchmark_forward(*e.predictor, batch, a.warmup, a.reps));

  std::size_t w = 7;
  for (const auto& r : rows) w = std::max(w, r.first.size());
  out << std::left << std::setw(static_cast<int>(w)) << "variant" << std::right << std::setw(12) << "mean_ms"
      << std::setw(12) << "p50_ms" << std::setw(12) << "p95_ms" << "\n";
  out << std::fixed << std::setprecision(3);
  for (const auto& [label, t] : rows)
    out << std::left << std::setw(static_cast<int>(w)) << label << std::right << std::setw(12) << t.mean_ms
        << std::setw(12) << t.p50_ms << std::setw(12) << t.p95_ms << "\n";

  if (!a.assert_order.empty()) {
    std::vector<std::string> order;
    std::istringstream in(a.assert_order);
    for (std::string tok; std::getline(in, tok, '<');) order.push_back(tok);
    std::vector<double> p50s;
    for (const auto& name : order) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.first == name; });
      if (it == rows.end()) throw InputError("--assert-order names '" + name + "', which was not benchmarked");
      p50s.push_back(it->second.p50_ms);
    }
    for (std::size_t i = 1; i < p50s.size(); ++i)
      if (!(p50s[i - 1] < p50s[i])) {
        out << "order " << a.assert_order << ": VIOLATED (" << order[i - 1] << " p50 " << p50s[i - 1] << " ms >= "
            << order[i] << " p50 " << p50s[i] << " ms)\n";
        throw OrderViolation("timing order violated");
      }
    out << "order " << a.assert_order << ": OK\n";
  }
  return kOk;
}

int cmd_predict(const RunFlags& flags, const std::string& checkpoint, const std::string& manifest_path,
                const std::vector<std::string>& frames, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = flags.resolve();
  if (manifest_path.empty() == frames.empty()) throw InputError("give either --manifest or --frames");
  LoadedPredictor lp = load_predictor(checkpoint);

  DatasetManifest result;
  std::vector<CropResult> crops;
  if (!manifest_path.empty()) {
    if (!fs::exists(manifest_path)) throw InputError("manifest not found: " + manifest_path);
    const DatasetManifest m = load_manifest(manifest_path);
    result.name = m.name + "-predictions";
    result.intrinsics = m.intrinsics;
    result.split = m.split;
    for (const auto& e : m.entries) {
      crops.push_back(preprocess_frame(read_depth_pgm(m.frame_path(e), m.intrinsics), cfg.preprocess));
      result.entries.push_back({e.frame, {}});
    }
  } else {
    result.name = "predictions";
    for (const auto& f : frames) {
      if (!fs::exists(f)) throw InputError("frame not found: " + f);
      crops.push_back(preprocess_frame(read_depth_pgm(f, result.intrinsics), cfg.preprocess));
      result.entries.push_back({f, {}});
    }
  }
  result.joints = lp.predictor->joints();
  const auto preds = lp.predictor->predict(crops);
  for (std::size_t i = 0; i < preds.size(); ++i) result.entries[i].annotation = preds[i];
  if (out_path.empty()) {
    out << format_manifest(result);
  } else {
    write_manifest(out_path, result);
    out << "wrote " << preds.size() << " predictions to " << out_path << "\n";
  }
  return kOk;
}

int cmd_import_icvl(const std::string& labels, const std::string& out_path, const std::string& name, int joints,
                    std::ostream& out) {
  if (!fs::exists(labels)) throw InputError("label file not found: " + labels);
  const std::string text = convert_icvl_labels(slurp(labels), CameraIntrinsics{}, name, joints);
  spit(out_path, text);
  out << "wrote " << out_path << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region ensemble network for 3D hand pose estimation from depth images", "ren"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  auto* config = app.add_subcommand("config", "Print the fully resolved run configuration");
  RunFlags config_flags;
  config_flags.attach(config, true);

  auto* synth = app.add_subcommand("synth", "Render a synthetic depth-hand dataset");
  long synth_count = 100;
  int synth_joints = 16;
  std::uint64_t synth_seed = 1;
  double synth_jitter = 0.0;
  std::string synth_out, synth_name = "synthetic";
  synth->add_option("--count", synth_count, "number of frames")->capture_default_str();
  synth->add_option("--joints", synth_joints, "joints per hand (5..16)")->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth->add_option("--jitter", synth_jitter, "uniform depth noise amplitude, mm")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--name", synth_name, "dataset name")->capture_default_str();

  auto* split = app.add_subcommand("split", "Split a manifest into train and test manifests");
  std::string split_manifest_path;
  double split_train = 0.8;
  std::uint64_t split_seed = 1;
  split->add_option("--manifest", split_manifest_path, "manifest to split")->required();
  split->add_option("--train", split_train, "train fraction")->capture_default_str();
  split->add_option("--seed", split_seed, "shuffle seed")->capture_default_str();

  auto* prepare = app.add_subcommand("prepare", "Preprocess a manifest into a sample cache");
  RunFlags prepare_flags;
  prepare_flags.attach(prepare, false);
  std::string prepare_manifest, prepare_out, prepare_exclude;
  bool prepare_skip = false;
  prepare->add_option("--manifest", prepare_manifest, "dataset manifest")->required();
  prepare->add_option("--out", prepare_out, "cache directory")->required();
  prepare->add_option("--exclude", prepare_exclude, "file listing frame refs to drop");
  prepare->add_flag("--skip-bad-frames", prepare_skip, "warn about unreadable frames instead of failing");

  auto* train_cmd = app.add_subcommand("train", "Train a model (or a basic-bagging ensemble)");
  RunFlags train_flags;
  train_flags.attach(train_cmd, true);

  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints or prediction files");
  RunFlags eval_flags;
  eval_flags.attach(eval, false);
  EvalArgs eval_args;
  eval->add_option("--checkpoint", eval_args.checkpoints, "model checkpoint or ensemble descriptor (repeatable)");
  eval->add_option("--predictions", eval_args.predictions, "prediction file from `ren predict` (repeatable)");
  eval->add_option("--name", eval_args.names, "report name per input (repeatable)");
  eval->add_option("--cache", eval_args.cache, "sample cache");
  eval->add_option("--manifest", eval_args.manifest, "dataset manifest");
  eval->add_option("--synthetic", eval_args.synthetic, "evaluate on N generated samples");
  eval->add_option("--synthetic-joints", eval_args.joints, "J of generated samples")->capture_default_str();
  eval->add_option("--synthetic-seed", eval_args.seed, "seed of generated samples")->capture_default_str();
  eval->add_option("--out", eval_args.out_dir, "report directory")->capture_default_str();
  eval->add_flag("--svg", eval_args.svg, "also write curves.svg");

  auto* bench = app.add_subcommand("bench", "Time forward passes");
  RunFlags bench_flags;
  bench_flags.attach(bench, false);
  BenchArgs bench_args;
  bench->add_option("--checkpoint", bench_args.checkpoints, "checkpoint or ensemble descriptor (repeatable)");
  bench->add_option("--bench-variant", bench_args.variants, "randomly initialised variant to time (repeatable)");
  bench->add_option("--reps", bench_args.reps, "timed repetitions (>= 10)")->capture_default_str();
  bench->add_option("--warmup", bench_args.warmup, "untimed warmup passes")->capture_default_str();
  bench->add_option("--batch", bench_args.batch, "batch size")->capture_default_str();
  bench->add_option("--k", bench_args.k, "members of a basic-bagging bench variant")->capture_default_str();
  bench->add_option("--assert-order", bench_args.assert_order, "e.g. basic<region-ensemble<basic-bagging");

  auto* predict = app.add_subcommand("predict", "Predict world-space joints for frames");
  RunFlags predict_flags;
  predict_flags.attach(predict, false);
  std::string predict_ckpt, predict_manifest, predict_out;
  std::vector<std::string> predict_frames;
  predict->add_option("--checkpoint", predict_ckpt, "model checkpoint or ensemble descriptor")->required();
  predict->add_option("--manifest", predict_manifest, "frames listed in a manifest");
  predict->add_option("--frames", predict_frames, "16-bit PGM depth frames");
  predict->add_option("--out", predict_out, "output file (default stdout)");

  auto* icvl = app.add_subcommand("import-icvl", "Convert an ICVL label file to a manifest");
  std::string icvl_labels, icvl_out, icvl_name = "icvl";
  int icvl_joints = 16;
  icvl->add_option("--labels", icvl_labels, "ICVL labels text file")->required();
  icvl->add_option("--out", icvl_out, "manifest to write")->required();
  icvl->add_option("--name", icvl_name, "dataset name")->capture_default_str();
  icvl->add_option("--joints", icvl_joints, "joints per line")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*config) return cmd_config(config_flags, out);
    if (*synth) return cmd_synth(synth_count, synth_joints, synth_seed, synth_jitter, synth_out, synth_name, out);
    if (*split) return cmd_split(split_manifest_path, split_train, split_seed, out);
    if (*prepare)
      return cmd_prepare(prepare_flags, prepare_manifest, prepare_out, prepare_exclude, prepare_skip, out, err);
    if (*train_cmd) return cmd_train(train_flags, out);
    if (*eval) return cmd_eval(eval_flags, eval_args, out);
    if (*bench) return cmd_bench(bench_flags, bench_args, out);
    if (*predict) return cmd_predict(predict_flags, predict_ckpt, predict_manifest, predict_frames, predict_out, out);
    if (*icvl) return cmd_import_icvl(icvl_labels, icvl_out, icvl_name, icvl_joints, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumericError;
  } catch (const OrderViolation& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kInputError;
}

}  // namespace ren::cli
