#include "poolnet/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "poolnet/inference.hpp"
#include "poolnet/kernels.hpp"
#include "poolnet/ops.hpp"

namespace poolnet {

namespace fs = std::filesystem;

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

namespace {

// Flags shared by the model-building subcommands.
struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> ablation_row;
  bool enable_edge = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file");
    app->add_option("--set", sets, "Override one config key (key=value); repeatable");
    app->add_option("--seed", seed, "Seed for all randomness (default 0)");
    app->add_option("--ablation-row", ablation_row,
                    "Use ablation row 1-6 for the PPM/GGF/FAM switches")
        ->check(CLI::Range(1, 6));
    app->add_flag("--enable-edge", enable_edge, "Build the edge branch");
  }

  RunConfig resolve() const {
    RunConfig rc;
    if (!config.empty()) load_config_file(config, rc);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      apply_config_key(rc, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) rc.train.seed = *seed;
    if (ablation_row) rc.model = ModelConfig::ablation_row(*ablation_row, rc.model);
    if (enable_edge) rc.model.enable_edge = true;
    rc.model.validate();
    return rc;
  }
};

struct TrainFlags {
  std::string train_manifest;
  std::string edge_manifest;
  std::string output_dir;
  std::string resume;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch_size;
  bool joint_edge = false;
  bool no_augment = false;
};

void require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing required setting: ") + what);
}

std::string checkpoint_name(int epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(3) << std::setfill('0') << epoch + 1 << ".pnlb";
  return os.str();
}

int cmd_train(RunConfig rc, const TrainFlags& f, std::ostream& out) {
  if (!f.train_manifest.empty()) rc.train_manifest = f.train_manifest;
  if (!f.edge_manifest.empty()) rc.edge_manifest = f.edge_manifest;
  if (!f.output_dir.empty()) rc.output_dir = f.output_dir;
  if (f.epochs) {
    rc.train.epochs = *f.epochs;
    rc.train.lr_drop_epoch = std::min(rc.train.lr_drop_epoch, std::max(0, *f.epochs - 1));
  }
  if (f.lr) rc.train.lr = *f.lr;
  if (f.batch_size) rc.train.batch_size = *f.batch_size;
  if (f.joint_edge) rc.train.joint_edge = true;
  if (f.no_augment) rc.train.augment = false;

  rc.train.validate();
  if (rc.train.joint_edge && !rc.model.enable_edge) {
    throw ConfigError("--joint-edge requires the edge branch (--enable-edge)");
  }
  require_path(rc.train_manifest, "train_manifest");
  require_path(rc.output_dir, "output_dir");
  if (rc.train.joint_edge) require_path(rc.edge_manifest, "edge_manifest");

  const auto sal = load_samples<float>(read_manifest(rc.train_manifest, SampleKind::saliency));
  std::vector<Sample<float>> edge;
  if (rc.train.joint_edge) {
    edge = load_samples<float>(read_manifest(rc.edge_manifest, SampleKind::edge));
  }
  if (sal.empty()) throw DataError("training manifest is empty");
  if (rc.train.joint_edge && edge.empty()) throw DataError("edge manifest is empty");
  std::optional<std::vector<CheckpointRecord>> resume;
  if (!f.resume.empty()) resume = load_checkpoint(f.resume);

  PoolNet<float> model(rc.model, rc.train.seed);
  Trainer<float> trainer(model, rc.train);
  if (resume) trainer.restore(*resume);

  fs::create_directories(rc.output_dir);
  {
    std::ofstream cfg(rc.output_dir / "model.cfg", std::ios::trunc);
    cfg << format_model_config(rc.model);
  }
  const fs::path log_path = rc.output_dir / "train_log.csv";
  const bool append = resume.has_value() && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!append) write_log_header(log);

  for (int epoch = trainer.next_epoch(); epoch < rc.train.epochs; ++epoch) {
    const auto summary = trainer.train_epoch(sal, rc.train.joint_edge ? &edge : nullptr, epoch,
                                             [&log](const StepRecord& r) { write_log_row(log, r); });
    save_checkpoint(rc.output_dir / checkpoint_name(epoch), trainer.checkpoint_records());
    out << "epoch " << epoch + 1 << "/" << rc.train.epochs << " step " << trainer.global_step()
        << " sal_loss " << summary.saliency_loss;
    if (summary.edge_steps > 0) out << " edge_loss " << summary.edge_loss;
    out << "\n";
  }
  save_checkpoint(rc.output_dir / "final.pnlb", trainer.checkpoint_records());
  return kExitOk;
}

int cmd_infer(RunConfig rc, const std::string& checkpoint, const std::string& manifest,
              const std::string& output_dir, std::ostream& out) {
  if (!output_dir.empty()) rc.output_dir = output_dir;
  require_path(rc.output_dir, "output_dir");
  const auto records = load_checkpoint(checkpoint);
  const auto m = read_manifest(manifest, SampleKind::saliency);
  PoolNet<float> model(rc.model, rc.train.seed);
  load_parameters(model.parameters(), records);

  fs::create_directories(rc.output_dir);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const Sample<float> s = load_sample<float>(m, i);
    const Prediction<float> p = predict(model, s);
    save_map(p.saliency, rc.output_dir / (s.stem + ".pgm"));
    for (std::size_t k = 0; k < p.edges.size(); ++k) {
      save_map(p.edges[k], rc.output_dir / (s.stem + "_edge" + std::to_string(k + 1) + ".pgm"));
    }
  }
  out << "wrote " << m.entries.size() << " saliency maps to " << rc.output_dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& manifest, const std::string& output,
             std::ostream& out) {
  const auto m = read_manifest(manifest, SampleKind::saliency);
  if (m.entries.empty()) throw DataError("evaluation manifest is empty");
  std::vector<MapPair> pairs;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    const Image gt = read_pnm(m.root / e.target);
    const fs::path pred_path = fs::path(pred_dir) / (e.image.stem().string() + ".pgm");
    const Image pred = read_pnm(pred_path);
    if (gt.channels != 1 || pred.channels != 1) {
      throw DataError("prediction and ground truth must be grayscale: " + pred_path.string());
    }
    if (gt.width != pred.width || gt.height != pred.height) {
      throw DataError("prediction " + pred_path.string() + " size differs from ground truth");
    }
    std::vector<double> s(pred.pixels.size());
    std::vector<double> g(gt.pixels.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      s[j] = pred.pixels[j] / 255.0;
      g[j] = gt.pixels[j] / 255.0;
    }
    pairs.emplace_back(SaliencyMap::from(pred.width, pred.height, std::move(s)),
                       GroundTruth::from(gt.width, gt.height, std::move(g)));
  }
  const MetricsRecord rec = evaluate(pairs);
  if (output.empty()) {
    write_metrics_csv(out, rec);
  } else {
    std::ofstream f(output, std::ios::trunc);
    if (!f) throw DataError("cannot write '" + output + "'");
    write_metrics_csv(f, rec);
    out << "max_f " << rec.max_f << " mae " << rec.mae << "\n";
  }
  return kExitOk;
}

int cmd_bench(const RunConfig& rc, const std::string& checkpoint, int width, int height,
              int iters, int warmup, std::ostream& out) {
  if (width < 1 || height < 1) throw ConfigError("bench size must be positive");
  if (iters < 1) throw ConfigError("--iters must be >= 1");
  if (warmup < 0) throw ConfigError("--warmup must be >= 0");
  PoolNet<float> model(rc.model, rc.train.seed);
  if (!checkpoint.empty()) load_parameters(model.parameters(), load_checkpoint(checkpoint));
  const BenchStats s = bench_forward(model, width, height, iters, warmup, rc.train.seed);
  out << "width,height,iters,threads,mean_ms,p50_ms,p95_ms\n"
      << s.width << "," << s.height << "," << s.iters << "," << kernels::max_threads() << ","
      << std::fixed << std::setprecision(3) << s.mean_ms << "," << s.p50_ms << "," << s.p95_ms
      << "\n";
  return kExitOk;
}

int cmd_synth(const std::string& kind, std::size_t n, int size, std::uint64_t seed,
              const std::string& output_dir, std::ostream& out) {
  if (output_dir.empty()) throw ConfigError("--output-dir is required");
  if (n == 0) throw ConfigError("--n must be >= 1");
  if (size < 1) throw ConfigError("--size must be >= 1");
  DatasetManifest m;
  if (kind == "saliency") {
    m = synth_saliency_dataset(output_dir, n, size, seed);
  } else if (kind == "edge") {
    m = synth_edge_dataset(output_dir, n, size, seed);
  } else {
    throw ConfigError("--kind must be 'saliency' or 'edge'");
  }
  out << "wrote " << m.entries.size() << " " << kind << " samples to "
      << (fs::path(output_dir) / "manifest.tsv").string() << "\n";
  return kExitOk;
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& base,
                                      const std::vector<Sample<float>>& train,
                                      const std::vector<Sample<float>>& eval,
                                      const std::vector<int>& rows, int seeds,
                                      std::ostream* progress) {
  if (seeds < 1) throw ConfigError("ablation needs at least one seed");
  std::vector<AblationRow> out;
  for (int row : rows) {
    const ModelConfig mc = ModelConfig::ablation_row(row, base.model);
    AblationRow r;
    r.row = row;
    r.ppm = mc.enable_ppm;
    r.ggf = mc.enable_ggf;
    r.fam = mc.enable_fam;
    for (int k = 0; k < seeds; ++k) {
      TrainConfig tc = base.train;
      tc.seed = base.train.seed + static_cast<std::uint64_t>(k);
      tc.joint_edge = false;
      PoolNet<float> model(mc, tc.seed);
      Trainer<float> trainer(model, tc);
      for (int epoch = 0; epoch < tc.epochs; ++epoch) trainer.train_epoch(train, nullptr, epoch);
      const MetricsRecord rec = evaluate_model(model, eval);
      r.max_f.push_back(rec.max_f);
      r.mae.push_back(rec.mae);
      if (progress) {
        *progress << "row " << row << " seed " << tc.seed << " max_f " << rec.max_f << " mae "
                  << rec.mae << "\n";
      }
    }
    r.median_max_f = median(r.max_f);
    r.median_mae = median(r.mae);
    out.push_back(std::move(r));
  }
  return out;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "row,ppm,ggf,fam,seeds,max_f,mae\n" << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.row << "," << r.ppm << "," << r.ggf << "," << r.fam << "," << r.max_f.size() << ","
        << r.median_max_f << "," << r.median_mae << "\n";
  }
}

BenchStats bench_forward(const PoolNet<float>& model, int width, int height, int iters,
                         int warmup, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x62656e6368ULL));
  Sample<float> s;
  s.width = width;
  s.height = height;
  std::vector<float> img(static_cast<std::size_t>(3) * width * height);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  s.image = Tensor<float>::from(Shape{1, 3, height, width}, std::move(img));
  s.target = Tensor<float>::zeros(Shape{1, 1, height, width});

  std::vector<double> times;
  for (int i = 0; i < warmup + iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    predict(model, s);
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= warmup) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  BenchStats st;
  st.width = width;
  st.height = height;
  st.iters = iters;
  for (double t : times) st.mean_ms += t;
  st.mean_ms /= static_cast<double>(times.size());
  std::sort(times.begin(), times.end());
  auto pct = [&times](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(times.size()))) - 1;
    return times[std::min(idx, times.size() - 1)];
  };
  st.p50_ms = pct(0.50);
  st.p95_ms = pct(0.95);
  return st;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (const char* env = std::getenv("POOLNET_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) kernels::set_max_threads(n);
  }

  CLI::App app{"Pooling-based salient object detection: train, infer, evaluate, ablate, benchmark",
               "poolnet"};
  app.require_subcommand(1);

  CommonFlags train_common;
  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "Train a model; writes per-epoch and final checkpoints");
  train_common.attach(train);
  train->add_option("--train-manifest", train_flags.train_manifest, "Saliency manifest (TSV)");
  train->add_option("--edge-manifest", train_flags.edge_manifest, "Edge manifest for --joint-edge");
  train->add_option("--output-dir", train_flags.output_dir, "Directory for checkpoints and log");
  train->add_option("--resume", train_flags.resume, "Checkpoint to resume from");
  train->add_option("--epochs", train_flags.epochs, "Number of epochs");
  train->add_option("--lr", train_flags.lr, "Initial learning rate");
  train->add_option("--batch-size", train_flags.batch_size, "Samples per step");
  train->add_flag("--joint-edge", train_flags.joint_edge,
                  "Alternate saliency and edge steps (needs --enable-edge)");
  train->add_flag("--no-augment", train_flags.no_augment, "Disable random horizontal flips");

  CommonFlags infer_common;
  std::string infer_ckpt, infer_manifest, infer_out;
  auto* infer = app.add_subcommand("infer", "Write 8-bit saliency (and edge) maps");
  infer_common.attach(infer);
  infer->add_option("--checkpoint", infer_ckpt, "Checkpoint to load")->required();
  infer->add_option("--manifest", infer_manifest, "Manifest of input images")->required();
  infer->add_option("--output-dir", infer_out, "Directory for the maps");

  std::string eval_pred, eval_manifest, eval_out;
  auto* eval = app.add_subcommand("eval", "Compute MaxF, MAE and the PR curve");
  eval->add_option("--pred-dir", eval_pred, "Directory of <image stem>.pgm predictions")
      ->required();
  eval->add_option("--manifest", eval_manifest, "Ground-truth manifest")->required();
  eval->add_option("--output", eval_out, "CSV path (default: stdout)");

  CommonFlags ablate_common;
  std::string ablate_train, ablate_eval, ablate_out;
  int ablate_seeds = 1;
  std::optional<int> ablate_epochs;
  std::optional<double> ablate_lr;
  std::vector<int> ablate_rows{1, 2, 3, 4, 5, 6};
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the PPM/GGF/FAM ablation rows");
  ablate_common.attach(ablate);
  ablate->add_option("--train-manifest", ablate_train, "Saliency manifest used for training");
  ablate->add_option("--eval-manifest", ablate_eval, "Manifest to evaluate on (default: train)");
  ablate->add_option("--output", ablate_out, "CSV path (default: stdout)");
  ablate->add_option("--seeds", ablate_seeds, "Seeds per row; medians are reported")
      ->check(CLI::PositiveNumber);
  ablate->add_option("--rows", ablate_rows, "Rows to run (1-6)")->check(CLI::Range(1, 6));
  ablate->add_option("--epochs", ablate_epochs, "Number of epochs");
  ablate->add_option("--lr", ablate_lr, "Initial learning rate");

  CommonFlags bench_common;
  std::string bench_ckpt;
  int bench_w = 400, bench_h = 300, bench_iters = 10, bench_warmup = 2;
  auto* bench = app.add_subcommand("bench", "Measure forward latency");
  bench_common.attach(bench);
  bench->add_option("--checkpoint", bench_ckpt, "Optional checkpoint to load");
  bench->add_option("--width", bench_w, "Input width")->capture_default_str();
  bench->add_option("--height", bench_h, "Input height")->capture_default_str();
  bench->add_option("--iters", bench_iters, "Timed iterations")->capture_default_str();
  bench->add_option("--warmup", bench_warmup, "Untimed warm-up iterations")->capture_default_str();

  std::string synth_kind = "saliency", synth_out;
  std::size_t synth_n = 20;
  int synth_size = 64;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and manifest");
  synth->add_option("--kind", synth_kind, "saliency or edge")
      ->check(CLI::IsMember({"saliency", "edge"}))
      ->capture_default_str();
  synth->add_option("--n", synth_n, "Number of samples")->capture_default_str();
  synth->add_option("--size", synth_size, "Image side length")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--output-dir", synth_out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_common.resolve(), train_flags, out);
    if (*infer) return cmd_infer(infer_common.resolve(), infer_ckpt, infer_manifest, infer_out, out);
    if (*eval) return cmd_eval(eval_pred, eval_manifest, eval_out, out);
    if (*ablate) {
      RunConfig rc = ablate_common.resolve();
      if (!ablate_train.empty()) rc.train_manifest = ablate_train;
      if (!ablate_eval.empty()) rc.eval_manifest = ablate_eval;
      if (ablate_epochs) {
        rc.train.epochs = *ablate_epochs;
        rc.train.lr_drop_epoch = std::min(rc.train.lr_drop_epoch, std::max(0, *ablate_epochs - 1));
      }
      if (ablate_lr) rc.train.lr = *ablate_lr;
      rc.train.validate();
      require_path(rc.train_manifest, "train_manifest");
      const auto train_set = load_samples<float>(read_manifest(rc.train_manifest, SampleKind::saliency));
      const auto eval_set =
          rc.eval_manifest.empty()
              ? train_set
              : load_samples<float>(read_manifest(rc.eval_manifest, SampleKind::saliency));
      std::ofstream file;
      if (!ablate_out.empty()) {
        file.open(ablate_out, std::ios::trunc);
        if (!file) throw DataError("cannot write '" + ablate_out + "'");
      }
      const auto rows = run_ablation(rc, train_set, eval_set, ablate_rows, ablate_seeds, &err);
      write_ablation_csv(ablate_out.empty() ? out : file, rows);
      return kExitOk;
    }
    if (*bench) {
      return cmd_bench(bench_common.resolve(), bench_ckpt, bench_w, bench_h, bench_iters,
                       bench_warmup, out);
    }
    if (*synth) return cmd_synth(synth_kind, synth_n, synth_size, synth_seed, synth_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace poolnet
