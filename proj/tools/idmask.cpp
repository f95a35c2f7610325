// idmask command-line front end.
//
//   idmask train-model [--config F] [--held-out]
//   idmask protect     [--config F] (--benchmark | IMAGE.png...) [--targets T.png...]
//   idmask evaluate    [--config F] [--gamma-sweep]
//   idmask bench       [--config F]
//
// Exit codes: 0 ok, 2 config/argument error, 3 I/O error, 4 audit failure,
// 5 shape mismatch between inputs and model.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "idmask/config.hpp"
#include "idmask/error.hpp"
#include "idmask/io.hpp"
#include "idmask/metrics.hpp"
#include "idmask/protocol.hpp"

namespace fs = std::filesystem;
using namespace idmask;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kAudit = 4, kShape = 5 };

class AuditFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<double> epsilon;  // 0-255 scale, like the config key
  std::optional<std::size_t> threads;
  std::string output_dir;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "Config file (key = value lines)");
  cmd->add_option("--set", o.sets, "Override one config key, KEY=VALUE (repeatable)")->allow_extra_args(false);
  cmd->add_option("--seed", o.seed, "Seed override (train.seed for train-model, else benchmark.seed)");
  cmd->add_option("--gamma", o.gamma, "attack.gamma override");
  cmd->add_option("--epsilon", o.epsilon, "attack.epsilon override, 0-255 scale");
  cmd->add_option("--threads", o.threads, "Worker thread cap");
  cmd->add_option("-o,--output", o.output_dir, "output_dir override");
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

RunConfig resolve(const CommonOptions& o, bool seed_is_training) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) apply_config_value(cfg, seed_is_training ? "train.seed" : "benchmark.seed", std::to_string(*o.seed));
  if (o.gamma) apply_config_value(cfg, "attack.gamma", num(*o.gamma));
  if (o.epsilon) apply_config_value(cfg, "attack.epsilon", num(*o.epsilon));
  if (o.threads) apply_config_value(cfg, "threads", std::to_string(*o.threads));
  if (!o.output_dir.empty()) apply_config_value(cfg, "output_dir", o.output_dir);
  if (cfg.threads == 0) throw ConfigError("config key 'threads': must be at least 1");
  cfg.attack.threads = cfg.threads;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoErrorKind::kUnwritable, "cannot write " + path.string());
  out << text;
  if (!out) throw IoError(IoErrorKind::kUnwritable, "write failed for " + path.string());
}

void prepare_output(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError(IoErrorKind::kUnwritable, "cannot create " + cfg.output_dir.string() + ": " + ec.message());
  write_text(cfg.output_dir / "config.resolved", cfg.to_text());
}

EmbeddingModel load_surrogate(const RunConfig& cfg) {
  if (cfg.surrogate_model.empty()) throw ConfigError("config key 'model.surrogate' is required");
  return load_model(cfg.surrogate_model);
}

std::string model_name(const fs::path& p) { return p.stem().string(); }

// Report names for evaluation models: file stems, qualified by the parent
// directory when two stems collide.
std::vector<std::string> eval_names(const std::vector<fs::path>& paths) {
  std::map<std::string, int> seen;
  for (const auto& p : paths) ++seen[model_name(p)];
  std::vector<std::string> out;
  for (const auto& p : paths) {
    std::string name = model_name(p);
    if (seen[name] > 1) name = p.parent_path().filename().string() + "_" + name;
    out.push_back(name);
  }
  return out;
}

// ---------------------------------------------------------------- train-model

int cmd_train_model(const CommonOptions& o, bool held_out) {
  RunConfig cfg = resolve(o, true);
  prepare_output(cfg);
  const TrainConfig& tc = held_out ? cfg.models.held_out : cfg.models.surrogate;
  const auto data = build_training_set(cfg.benchmark.shape, cfg.models);
  const TrainResult r = train_mlp_model(data, tc);
  const fs::path out = cfg.model_output.empty() ? cfg.output_dir / "model.embm" : cfg.model_output;
  save_model(r.model, out);

  std::ostringstream s;
  s << "model = " << out.string() << "\n"
    << "role = " << (held_out ? "held_out" : "surrogate") << "\n"
    << "identities = " << cfg.models.training_identities << "\n"
    << "images = " << data.size() << "\n"
    << "epochs = " << r.epochs_run << "\n"
    << "train_accuracy = " << num(r.train_accuracy) << "\n"
    << "final_loss = " << num(r.final_loss) << "\n"
    << "checksum = " << parameter_checksum(r.model) << "\n";
  write_text(cfg.output_dir / "train_summary.txt", s.str());
  std::cout << s.str();
  return kOk;
}

// -------------------------------------------------------------------- protect

struct ProtectInputs {
  std::vector<Image> images;
  std::vector<std::string> names;
};

// Re-reads everything protect wrote and checks it against the originals.
void audit_protect_outputs(const RunConfig& cfg, const std::vector<Image>& originals,
                           const std::vector<fs::path>& png_paths, const fs::path& mask_path) {
  const auto masks = read_tensor_file(mask_path);
  if (masks.size() != originals.size()) throw AuditFailure("audit: mask count differs from image count");
  for (std::size_t i = 0; i < originals.size(); ++i) {
    require_same_shape(masks[i].shape(), originals[i].shape(), "audit");
    const double n = norm_of(masks[i].values(), cfg.attack.norm);
    if (n > cfg.attack.epsilon + 1e-9) {
      throw AuditFailure("audit: mask " + std::to_string(i) + " has norm " + num(n) + " > epsilon");
    }
    std::vector<double> px(originals[i].size());
    for (std::size_t k = 0; k < px.size(); ++k) {
      px[k] = originals[i][k] + masks[i][k];
      if (px[k] < -1e-12 || px[k] > 1.0 + 1e-12) {
        throw AuditFailure("audit: image " + std::to_string(i) + " leaves [0, 1]");
      }
    }
    const Image expected = quantize_8bit(Image::clamped(originals[i].shape(), std::move(px)));
    if (!(read_image_file(png_paths[i]) == expected)) {
      throw AuditFailure("audit: " + png_paths[i].string() + " does not match original + mask");
    }
  }
}

int cmd_protect(const CommonOptions& o, bool use_benchmark, const std::vector<std::string>& inputs,
                const std::vector<std::string>& target_paths) {
  RunConfig cfg = resolve(o, false);
  if (use_benchmark == !inputs.empty()) {
    throw ConfigError("protect: give either --benchmark or input images, not both or neither");
  }
  prepare_output(cfg);
  const EmbeddingModel model = load_surrogate(cfg);

  ProtectInputs in;
  std::optional<Benchmark> bench;
  if (use_benchmark) {
    bench = build_benchmark(cfg.benchmark);
    for (std::size_t i = 0; i < bench->probes.size(); ++i) {
      in.images.push_back(bench->probes[i].image);
      in.names.push_back("probe_" + std::to_string(i));
    }
  } else {
    for (const auto& p : inputs) {
      in.images.push_back(read_image_file(p));
      in.names.push_back(fs::path(p).stem().string());
    }
  }

  std::vector<Image> targets;
  if (!target_paths.empty()) {
    for (const auto& p : target_paths) targets.push_back(read_image_file(p));
  } else {
    if (!bench) bench = build_benchmark(cfg.benchmark);
    targets = bench->target_set.images();
  }
  for (const auto& img : in.images) require_same_shape(img.shape(), model.input_shape(), "protect input");
  for (const auto& img : targets) require_same_shape(img.shape(), model.input_shape(), "protect target");
  const TargetSet target_set(targets);

  std::vector<Image> protected_images;
  if (cfg.attack.epsilon == 0.0) {
    protected_images = in.images;  // zero budget: nothing may change
  } else if (in.images.size() == 1) {
    const ProtectResult r =
        protect_single(in.images[0], target_set, model, cfg.attack, cfg.mmd_batch, cfg.augment_seed);
    protected_images.push_back(r.protected_images[0]);
  } else {
    const ProtectResult r = protect_batch(ImageBatch(in.images), target_set, model, cfg.attack);
    protected_images.assign(r.protected_images.begin(), r.protected_images.end());
  }

  const fs::path dir = cfg.output_dir / "protected";
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(IoErrorKind::kUnwritable, "cannot create " + dir.string());

  std::vector<PixelArray> masks;
  std::vector<fs::path> pngs;
  std::ostringstream log;
  log << "image,psnr,ssim\n";
  for (std::size_t i = 0; i < in.images.size(); ++i) {
    masks.push_back(difference(protected_images[i], in.images[i]));
    pngs.push_back(dir / (in.names[i] + ".png"));
    write_image_file(protected_images[i], pngs.back());
    const Image written = quantize_8bit(protected_images[i]);
    const Shape& s = written.shape();
    const bool windowed = s.height >= 11 && s.width >= 11;
    log << in.names[i] << ',' << num(psnr(written, in.images[i])) << ','
        << (windowed ? num(ssim(written, in.images[i])) : std::string("nan")) << '\n';
  }
  const fs::path mask_path = cfg.output_dir / "masks.imsk";
  write_tensor_file(masks, mask_path);
  write_text(cfg.output_dir / "quality.csv", log.str());

  audit_protect_outputs(cfg, in.images, pngs, mask_path);
  std::cout << "protected " << in.images.size() << " image(s) into " << dir.string() << "\n";
  return kOk;
}

// ------------------------------------------------------------------- evaluate

ExperimentConfig experiment_config(const RunConfig& cfg) { return ExperimentConfig{cfg.attack, cfg.diversity}; }

void write_report(const fs::path& dir, const std::string& stem, const ProtectionReport& r) {
  write_text(dir / (stem + ".txt"), r.to_text());
  write_text(dir / (stem + ".csv"), r.to_csv());
}

int cmd_evaluate(const CommonOptions& o, bool gamma_sweep) {
  RunConfig cfg = resolve(o, false);
  if (cfg.eval_models.empty()) throw ConfigError("config key 'model.eval' is required");
  prepare_output(cfg);
  const EmbeddingModel surrogate = load_surrogate(cfg);
  std::vector<EmbeddingModel> loaded;
  loaded.reserve(cfg.eval_models.size());
  for (const auto& p : cfg.eval_models) loaded.push_back(load_model(p));

  const NamedModel sur{model_name(cfg.surrogate_model), &surrogate};
  const auto names = eval_names(cfg.eval_models);
  std::vector<NamedModel> evals;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    // The same file as the surrogate is the white-box row.
    const bool same = fs::weakly_canonical(cfg.eval_models[i]) == fs::weakly_canonical(cfg.surrogate_model);
    evals.push_back(NamedModel{names[i], same ? &surrogate : &loaded[i]});
  }

  const Benchmark bench = build_benchmark(cfg.benchmark);
  std::ostringstream summary;
  summary << "run," << summary_csv_header() << "\n";
  auto emit = [&](const std::string& run, const ExperimentResult& res) {
    for (const auto& r : res.reports) {
      write_report(cfg.output_dir, "report_" + run + "_" + r.eval_model, r);
      summary << run << ',' << summary_csv_row(r) << "\n";
    }
  };

  emit("clean", run_experiment(bench, Method::kClean, sur, evals, experiment_config(cfg)));
  if (gamma_sweep) {
    const std::vector<double> gammas = cfg.gammas.empty() ? std::vector<double>{0, 1, 2, 3} : cfg.gammas;
    for (double g : gammas) {
      ExperimentConfig ec = experiment_config(cfg);
      ec.attack.gamma = g;
      emit("tip-im_gamma" + num(g), run_experiment(bench, Method::kTipIm, sur, evals, ec));
    }
  } else {
    for (Method m : cfg.methods) {
      if (m == Method::kClean) continue;
      emit(method_name(m), run_experiment(bench, m, sur, evals, experiment_config(cfg)));
    }
  }
  write_text(cfg.output_dir / "summary.csv", summary.str());
  std::cout << summary.str();
  return kOk;
}

// ---------------------------------------------------------------------- bench

int cmd_bench(const CommonOptions& o) {
  RunConfig cfg = resolve(o, false);
  prepare_output(cfg);
  const DeskModels models = train_desk_models(cfg.benchmark.shape, cfg.models);
  save_model(models.surrogate, cfg.output_dir / "surrogate.embm");
  save_model(models.held_out, cfg.output_dir / "held_out.embm");
  const NamedModel sur{"surrogate", &models.surrogate};
  const NamedModel held{"held_out", &models.held_out};

  const std::vector<Method> methods =
      cfg.methods.empty() ? std::vector<Method>{Method::kTipIm, Method::kMtDim, Method::kDim, Method::kMim}
                          : cfg.methods;
  const std::vector<double> gammas = cfg.gammas.empty() ? std::vector<double>{0, 1, 2, 3} : cfg.gammas;
  const std::vector<std::size_t> counts =
      cfg.target_counts.empty() ? std::vector<std::size_t>{1, 2, 5, 10} : cfg.target_counts;

  std::ostringstream out;
  out << "seed,sweep,setting," << summary_csv_header() << "\n";
  auto emit = [&](std::uint64_t seed, const std::string& sweep, const std::string& setting,
                  const ExperimentResult& res) {
    for (const auto& r : res.reports) {
      out << seed << ',' << sweep << ',' << setting << ',' << summary_csv_row(r) << "\n";
    }
  };

  for (std::uint64_t seed : cfg.bench_seeds) {
    BenchmarkConfig bc = cfg.benchmark;
    bc.seed = seed;
    const Benchmark bench = build_benchmark(bc);
    const ExperimentConfig base = experiment_config(cfg);
    emit(seed, "clean", "-", run_experiment(bench, Method::kClean, sur, {sur, held}, base));
    for (Method m : methods) {
      if (m == Method::kClean) continue;
      emit(seed, "method", method_name(m), run_experiment(bench, m, sur, {sur, held}, base));
    }
    for (double g : gammas) {
      ExperimentConfig ec = base;
      ec.attack.gamma = g;
      emit(seed, "gamma", num(g), run_experiment(bench, Method::kTipIm, sur, {sur, held}, ec));
    }
    for (std::size_t k : counts) {
      if (k > bench.target_set.size()) throw ConfigError("evaluate.target_counts: " + std::to_string(k) + " exceeds the target set");
      emit(seed, "targets", std::to_string(k),
           run_experiment(bench.with_target_count(k), Method::kTipIm, sur, {sur, held}, base));
    }
    std::cerr << "bench: seed " << seed << " done\n";
  }
  write_text(cfg.output_dir / "bench.csv", out.str());
  std::cout << out.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial identity masks: training, protection and evaluation"};
  app.require_subcommand(1);

  CommonOptions opts;
  bool held_out = false, use_benchmark = false, gamma_sweep = false;
  std::vector<std::string> inputs, targets;

  auto* train = app.add_subcommand("train-model", "Train an MLP recognizer on synthetic identities");
  add_common(train, opts);
  train->add_flag("--held-out", held_out, "Use the train.held_out_* settings");

  auto* protect = app.add_subcommand("protect", "Protect PNG images or the benchmark probes");
  add_common(protect, opts);
  protect->add_flag("--benchmark", use_benchmark, "Protect the configured benchmark's probes");
  protect->add_option("--targets", targets, "Target PNG (repeatable; default: benchmark target set)")->allow_extra_args(false);
  protect->add_option("inputs", inputs, "Input PNG images");

  auto* evaluate = app.add_subcommand("evaluate", "Score methods on the open-set benchmark");
  add_common(evaluate, opts);
  evaluate->add_flag("--gamma-sweep", gamma_sweep, "Run TIP-IM once per evaluate.gammas value");

  auto* bench = app.add_subcommand("bench", "Train desk models and run every sweep");
  add_common(bench, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train_model(opts, held_out);
    if (*protect) return cmd_protect(opts, use_benchmark, inputs, targets);
    if (*evaluate) return cmd_evaluate(opts, gamma_sweep);
    if (*bench) return cmd_bench(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const AuditFailure& e) {
    std::cerr << e.what() << "\n";
    return kAudit;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kShape;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfig;
  }
  return kOk;
}
