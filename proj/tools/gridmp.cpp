// gridmp: data synthesis, positional encodings, training, and evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gridmp/checkpoint.hpp"
#include "gridmp/errors.hpp"
#include "gridmp/grid.hpp"
#include "gridmp/manifest.hpp"
#include "gridmp/report.hpp"
#include "gridmp/resistance.hpp"
#include "gridmp/run_config.hpp"
#include "gridmp/sample.hpp"
#include "gridmp/synth.hpp"
#include "gridmp/train.hpp"

namespace fs = std::filesystem;
using namespace gridmp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCompat = 4;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigMismatch:
      return kExitCompat;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NotConverged:
    case ErrorCode::SingularJacobian:
    case ErrorCode::NegativeResistance:
      return kExitNumerical;
    default:
      return kExitInput;
  }
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

PeCache make_cache() {
  if (const char* dir = std::getenv("GRIDMP_CACHE_DIR"); dir && *dir) return PeCache(fs::path(dir));
  return PeCache();
}

int default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

void record_checkpoint(RunManifest& m, const fs::path& p) {
  record_input(m, p);
  record_input(m, blob_path(p));
}

/// Runs `body` with the manifest already holding its input digests; the
/// manifest is written whatever the outcome.
template <typename Body>
int run_with_manifest(RunManifest& m, const fs::path& manifest_path, Body&& body) {
  m.started_at = utc_timestamp();
  int code = kExitOk;
  try {
    body();
    m.status = "ok";
  } catch (const Error& e) {
    code = exit_code_for(e);
    m.status = "error";
    m.error = std::string(to_string(e.code())) + ": " + e.what();
  } catch (const nlohmann::json::exception& e) {
    code = kExitInput;
    m.status = "error";
    m.error = std::string("ParseError: ") + e.what();
  } catch (const std::exception& e) {
    code = kExitInput;
    m.status = "error";
    m.error = e.what();
  }
  m.exit_code = code;
  m.finished_at = utc_timestamp();
  if (code != kExitOk) std::cerr << "error: " << m.error << '\n';
  try {
    if (!manifest_path.parent_path().empty()) fs::create_directories(manifest_path.parent_path());
    write_manifest(m, manifest_path);
  } catch (const std::exception& e) {
    std::cerr << "error: could not write run manifest: " << e.what() << '\n';
    if (code == kExitOk) code = kExitInput;
  }
  return code;
}

RunManifest start_manifest(const std::string& command, int argc, char** argv) {
  RunManifest m;
  m.command = command;
  m.argv.assign(argv, argv + argc);
  return m;
}

// synth -----------------------------------------------------------------

struct SynthArgs {
  fs::path grid, out;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double range = 0.2;
  bool n1 = false;
  bool split = false;
};

fs::path split_path(const fs::path& out, const std::string& part) {
  fs::path p = out;
  const std::string ext = p.extension().string();
  p.replace_extension();
  return fs::path(p.string() + "." + part + (ext.empty() ? ".jsonl" : ext));
}

int cmd_synth(const SynthArgs& a, int argc, char** argv) {
  RunManifest m = start_manifest("synth", argc, argv);
  m.seed = a.seed;
  m.config = {{"n", a.n}, {"seed", a.seed}, {"range", a.range}, {"n1", a.n1}, {"split", a.split}};
  return run_with_manifest(m, with_suffix(a.out, ".manifest.json"), [&] {
    record_input(m, a.grid);
    if (!(a.range >= 0.0 && a.range < 1.0)) throw ValidationError("--range must be in [0, 1)");
    const PowerGrid grid = load_grid(a.grid);
    const SynthReport rep = synthesize_dataset(grid, a.n, a.seed, a.range, a.n1);

    const fs::path discards = with_suffix(a.out, ".discards.json");
    const nlohmann::json dj = {{"requested", a.n}, {"kept", rep.samples.size()}, {"discarded", rep.discarded}};
    write_text(discards, dj.dump(2) + "\n");
    m.outputs.push_back(discards.string());
    if (rep.samples.empty())
      throw ValidationError("all " + std::to_string(a.n) +
                            " samples were discarded (power flow did not converge); check loading and limits");

    save_samples(rep.samples, a.out);
    m.outputs.push_back(a.out.string());
    if (a.split) {
      const DatasetSplit s = split_dataset(rep.samples, a.seed);
      for (const auto& [name, part] : {std::pair{"train", &s.train}, {"val", &s.val}, {"test", &s.test}}) {
        save_samples(*part, split_path(a.out, name));
        m.outputs.push_back(split_path(a.out, name).string());
      }
    }
    std::cout << "kept " << rep.samples.size() << " of " << a.n << " samples (" << rep.discarded
              << " discarded)\n";
  });
}

// pe --------------------------------------------------------------------

struct PeArgs {
  fs::path grid, out, omega;
};

std::string matrix_csv(const PowerGrid& grid, const Matrix& mat, const std::vector<std::string>& cols) {
  std::string text = csv_quote("bus");
  for (const auto& c : cols) text += "," + csv_quote(c);
  text += '\n';
  for (Eigen::Index i = 0; i < mat.rows(); ++i) {
    text += std::to_string(grid.buses[static_cast<std::size_t>(i)].id);
    for (Eigen::Index j = 0; j < mat.cols(); ++j) text += "," + format_number(mat(i, j));
    text += '\n';
  }
  return text;
}

int cmd_pe(const PeArgs& a, int argc, char** argv) {
  RunManifest m = start_manifest("pe", argc, argv);
  return run_with_manifest(m, with_suffix(a.out, ".manifest.json"), [&] {
    record_input(m, a.grid);
    const PowerGrid grid = load_grid(a.grid);
    Matrix omega;
    try {
      omega = effective_resistance(build_laplacian(grid));
    } catch (const RankDeficientError&) {
      throw DisconnectedError(a.grid.string() + ": grid is disconnected; effective resistance is undefined");
    }
    write_text(a.out, matrix_csv(grid, pe_moments(omega), {"min", "max", "std", "median", "mean"}));
    m.outputs.push_back(a.out.string());
    if (!a.omega.empty()) {
      std::vector<std::string> cols;
      for (const Bus& b : grid.buses) cols.push_back(std::to_string(b.id));
      write_text(a.omega, matrix_csv(grid, omega, cols));
      m.outputs.push_back(a.omega.string());
    }
  });
}

// train / finetune ------------------------------------------------------

struct TrainArgs {
  std::vector<fs::path> grids, samples, val;
  fs::path config, out, history, resume_from, pretrained;
  ConfigOverrides overrides;
  int save_every = 10;
  bool quiet = false;
};

std::vector<GridData> load_sets(const std::vector<PowerGrid>& grids, const std::vector<fs::path>& files,
                                const char* what) {
  if (files.empty()) return {};
  if (files.size() != grids.size())
    throw ValidationError(std::string("expected one ") + what + " file per --grid (" + std::to_string(grids.size()) +
                          "), got " + std::to_string(files.size()));
  std::vector<GridData> sets;
  for (std::size_t i = 0; i < files.size(); ++i) sets.push_back({&grids[i], load_samples(files[i])});
  return sets;
}

bool has_outages(const std::vector<GridData>& sets) {
  for (const auto& s : sets)
    for (const auto& x : s.samples)
      if (!x.outage.is_none()) return true;
  return false;
}

/// Keeps the header and rows up to `through_epoch` of an existing history file.
std::string history_prefix(const fs::path& path, int through_epoch) {
  std::ifstream in(path);
  std::string line, kept;
  if (!in || !std::getline(in, line)) return {};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoi(line.substr(0, line.find(','))) <= through_epoch) kept += line + '\n';
  }
  return kept;
}

int cmd_train(const TrainArgs& a, bool finetune, int argc, char** argv) {
  RunManifest m = start_manifest(finetune ? "finetune" : "train", argc, argv);
  const fs::path history_path = a.history.empty() ? with_suffix(a.out, ".history.csv") : a.history;
  const fs::path resume_path = with_suffix(a.out, ".resume");
  return run_with_manifest(m, with_suffix(a.out, ".manifest.json"), [&] {
    for (const auto& p : a.grids) record_input(m, p);
    for (const auto& p : a.samples) record_input(m, p);
    for (const auto& p : a.val) record_input(m, p);
    record_input(m, a.config);
    if (!a.resume_from.empty()) record_checkpoint(m, a.resume_from);
    if (!a.pretrained.empty()) record_checkpoint(m, a.pretrained);

    RunConfig cfg = load_run_config(a.config, a.overrides);
    m.config = run_config_to_json(cfg);
    m.seed = cfg.train.seed;
    if (a.save_every < 1) throw ValidationError("--save-every must be >= 1");

    std::vector<PowerGrid> grids;
    for (const auto& p : a.grids) grids.push_back(load_grid(p));
    if (grids.empty()) throw ValidationError("at least one --grid is required");
    const std::vector<GridData> train_sets = load_sets(grids, a.samples, "--samples");
    const std::vector<GridData> val_sets = load_sets(grids, a.val, "--val");

    CheckpointMeta meta;
    meta.trained_on_outages = has_outages(train_sets);
    meta.train_config = run_config_to_json(cfg);
    nn::ModelState init;
    TrainOptions opts;
    std::string history_text;
    if (!a.resume_from.empty()) {
      Checkpoint r = load_checkpoint(a.resume_from);
      if (!(r.state.config == cfg.model))
        throw ConfigMismatchError(a.resume_from.string() + ": model configuration differs from " + a.config.string());
      if (!r.optimizer) throw ConfigMismatchError(a.resume_from.string() + ": no optimizer state to resume from");
      init = std::move(r.state);
      opts.resume = std::move(r.optimizer);
      opts.start_epoch = r.meta.epochs_completed;
      opts.best_val_loss = r.meta.best_val_loss;
      if (!r.meta.best_checkpoint.empty()) {
        const fs::path best = a.resume_from.parent_path() / r.meta.best_checkpoint;
        if (fs::exists(best)) opts.best = load_checkpoint(best).state;
      }
      meta.lineage = r.meta.lineage;
      meta.trained_on_outages = meta.trained_on_outages || r.meta.trained_on_outages;
      history_text = history_prefix(history_path, opts.start_epoch);
      std::cout << "resuming after epoch " << opts.start_epoch << '\n';
    } else if (finetune) {
      Checkpoint p = load_checkpoint(a.pretrained);
      if (p.state.config.hidden_dim != cfg.model.hidden_dim || p.state.config.layers != cfg.model.layers ||
          p.state.config.heads != cfg.model.heads || p.state.config.mode != cfg.model.mode ||
          p.state.config.random_features != cfg.model.random_features)
        throw ConfigMismatchError(a.pretrained.string() + ": pretrained model (hidden_dim " +
                                  std::to_string(p.state.config.hidden_dim) + ", layers " +
                                  std::to_string(p.state.config.layers) + ", mode " +
                                  nn::to_string(p.state.config.mode) + ") does not match " + a.config.string());
      init = std::move(p.state);
      meta.lineage = "pretrain:" + a.pretrained.filename().string();
      meta.trained_on_outages = meta.trained_on_outages || p.meta.trained_on_outages;
    } else {
      init = nn::init_model(cfg.model);
    }

    TrainConfig tc = cfg.train;
    tc.epochs = std::max(0, cfg.train.epochs - opts.start_epoch);
    std::vector<EpochRecord> history;
    auto save = [&](const TrainResult& r) {
      Checkpoint best{r.best, meta, std::nullopt};
      best.meta.epochs_completed = r.epochs_completed;
      best.meta.best_val_loss = r.best_val_loss;
      save_checkpoint(best, a.out);
      Checkpoint last{r.last, best.meta, r.optimizer};
      last.meta.best_checkpoint = a.out.filename().string();
      save_checkpoint(last, resume_path);
      const std::string rows = history_csv(history);
      write_text(history_path, history_csv({}) + history_text + rows.substr(rows.find('\n') + 1));
    };
    opts.on_epoch = [&](const EpochRecord& rec) {
      history.push_back(rec);
      if (!a.quiet)
        std::printf("epoch %d/%d  train %.6e  val %.6e  (%.1fs)\n", rec.epoch, cfg.train.epochs, rec.train_loss,
                    rec.val_loss, rec.wall_seconds);
      std::fflush(stdout);
    };
    opts.on_progress = [&](const TrainResult& r) {
      if (r.epochs_completed % a.save_every == 0) save(r);
    };

    PeCache cache = make_cache();
    const TrainResult result = finetune ? fine_tune(init, cfg.model, train_sets, val_sets, tc, cache, opts)
                                        : train(init, train_sets, val_sets, tc, cache, opts);
    save(result);
    for (const auto& p : {a.out, blob_path(a.out), resume_path, blob_path(resume_path), history_path})
      m.outputs.push_back(p.string());
    std::cout << "best validation loss " << format_number(result.best_val_loss) << " after "
              << result.epochs_completed << " epochs; wrote " << a.out.string() << '\n';
  });
}

// eval ------------------------------------------------------------------

struct EvalArgs {
  std::vector<fs::path> checkpoints, train_samples;
  std::vector<std::string> labels;
  fs::path grid, samples, out_dir;
  bool zero_shot = false;
  bool pf_correct = false;
  bool timing = false;
  std::optional<std::size_t> high_impact;
  int threads = 1;
};

int cmd_eval(const EvalArgs& a, int argc, char** argv) {
  RunManifest m = start_manifest("eval", argc, argv);
  return run_with_manifest(m, a.out_dir / "manifest.json", [&] {
    for (const auto& p : a.checkpoints) record_checkpoint(m, p);
    record_input(m, a.grid);
    record_input(m, a.samples);
    for (const auto& p : a.train_samples) record_input(m, p);
    m.config = {{"zero_shot", a.zero_shot}, {"pf_correct", a.pf_correct}, {"threads", a.threads}};
    if (a.high_impact) m.config["high_impact"] = *a.high_impact;
    if (!a.labels.empty() && a.labels.size() != a.checkpoints.size())
      throw ValidationError("expected one --label per --checkpoint");
    if (a.threads < 1) throw ValidationError("--threads must be >= 1");

    const PowerGrid grid = load_grid(a.grid);
    const std::vector<Sample> samples = load_samples(a.samples);
    std::vector<Checkpoint> ckpts;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
      ckpts.push_back(load_checkpoint(a.checkpoints[i]));
      labels.push_back(a.labels.empty() ? a.checkpoints[i].stem().string() : a.labels[i]);
      if (a.zero_shot && ckpts.back().meta.trained_on_outages)
        std::cerr << "warning: " << a.checkpoints[i].string()
                  << " was trained on outage samples; zero-shot results are not out-of-distribution\n";
    }

    std::vector<Sample> data = samples;
    if (a.high_impact) data = select_high_impact(samples, *a.high_impact);

    PeCache cache = make_cache();
    EvalOptions eo;
    eo.pf_correct = a.pf_correct;
    eo.threads = a.threads;
    std::vector<ReportRow> before, after;
    nlohmann::json models = nlohmann::json::array();
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
      EvalReport rep = a.zero_shot ? evaluate_zero_shot(ckpts[i].state, grid, data, cache, eo)
                                   : evaluate(ckpts[i].state, grid, data, cache, eo);
      if (a.timing) {
        const PreparedSample p = prepare_sample(grid, data.front(), 0, cache);
        rep.before.inference_seconds = time_inference(ckpts[i].state, p.graph);
      }
      before.push_back({labels[i], rep.before});
      nlohmann::json entry = {{"label", labels[i]},
                              {"checkpoint", a.checkpoints[i].string()},
                              {"lineage", ckpts[i].meta.lineage},
                              {"trained_on_outages", ckpts[i].meta.trained_on_outages},
                              {"parameter_count", ckpts[i].state.parameter_count()},
                              {"summary", summary_to_json(rep.before)}};
      if (rep.after) {
        after.push_back({labels[i], *rep.after});
        entry["after_pf"] = summary_to_json(*rep.after);
      }
      models.push_back(entry);
      write_text(a.out_dir / (labels[i] + ".summary.csv"), summary_csv(rep.before));
      m.outputs.push_back((a.out_dir / (labels[i] + ".summary.csv")).string());
      std::printf("%-16s gap %.4f%%  mse θ %.3e V %.3e PG %.3e QG %.3e  (%zu samples, %zu skipped)\n",
                  labels[i].c_str(), rep.before.gap_percent, rep.before.mse.theta, rep.before.mse.vm,
                  rep.before.mse.pg, rep.before.mse.qg, rep.before.count, rep.before.skipped);
    }

    auto emit = [&](const std::string& name, const std::string& text) {
      write_text(a.out_dir / name, text);
      m.outputs.push_back((a.out_dir / name).string());
    };
    emit("mse.csv", mse_table_csv(before));
    emit("gap.csv", gap_table_csv(before));
    emit("violations.csv", violation_table_csv(before));
    if (a.pf_correct) {
      emit("pf_gap.csv", pf_gap_table_csv(before, after));
      emit("pf_violations.csv", pf_violation_table_csv(after));
    }

    nlohmann::json doc = {{"samples", data.size()}, {"zero_shot", a.zero_shot}, {"models", models}};
    if (a.high_impact) {
      if (a.train_samples.size() != ckpts.size())
        throw ValidationError("--high-impact needs one --train-samples file per --checkpoint");
      std::vector<HighImpactRow> rows;
      EvalOptions hi;
      hi.threads = a.threads;
      for (std::size_t i = 0; i < ckpts.size(); ++i) {
        const double inc = mean_cost_increase(load_samples(a.train_samples[i]), data);
        if (ckpts[i].meta.trained_on_outages) {
          hi.skip_inadmissible = true;
          rows.push_back({"base", labels[i], inc, evaluate(ckpts[i].state, grid, data, cache, hi).before});
        } else {
          rows.push_back({"naive", labels[i], inc, evaluate_naive(ckpts[i].state, grid, data, cache, hi).before});
          rows.push_back(
              {"zero_shot", labels[i], inc, evaluate_zero_shot(ckpts[i].state, grid, data, cache, hi).before});
        }
      }
      emit("high_impact.csv", high_impact_csv(rows));
      doc["high_impact"] = nlohmann::json::array();
      for (const auto& r : rows)
        doc["high_impact"].push_back({{"experiment", r.experiment},
                                      {"model", r.model},
                                      {"mean_cost_increase_percent", r.cost_increase_percent},
                                      {"summary", summary_to_json(r.summary)}});
      for (const auto& r : rows)
        std::printf("%-10s %-16s cost +%.2f%%  gap %.4f%%\n", r.experiment.c_str(), r.model.c_str(),
                    r.cost_increase_percent, r.summary.gap_percent);
    }
    emit("summary.json", doc.dump(2) + "\n");
  });
}

void add_overrides(CLI::App* cmd, ConfigOverrides& o) {
  cmd->add_option("--hidden-dim", o.hidden_dim, "Override model.hidden_dim");
  cmd->add_option("--layers", o.layers, "Override model.layers");
  cmd->add_option("--heads", o.heads, "Override model.attention_heads");
  cmd->add_option("--random-features", o.random_features, "Override model.random_features");
  cmd->add_option("--mode", o.mode, "Override model.mode (hybrid, mpnn_only, exact_attention)");
  cmd->add_option("--model-seed", o.model_seed, "Override model.seed");
  cmd->add_option("--lr", o.learning_rate, "Override train.learning_rate");
  cmd->add_option("--weight-decay", o.weight_decay, "Override train.weight_decay");
  cmd->add_option("--epochs", o.epochs, "Override train.epochs");
  cmd->add_option("--batch-size", o.batch_size, "Override train.batch_size");
  cmd->add_option("--seed", o.seed, "Override train.seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous graph transformer for AC optimal power flow"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate labeled samples by load scaling and power flow");
  synth->add_option("--grid", sa.grid, "Grid JSON file")->required()->check(CLI::ExistingFile);
  synth->add_option("--n", sa.n, "Number of samples to attempt")->required();
  synth->add_option("--seed", sa.seed, "Random seed")->required();
  synth->add_option("--range", sa.range, "Load scaling half-range as a fraction")->capture_default_str();
  synth->add_flag("--n1", sa.n1, "Draw one admissible outage per sample");
  synth->add_flag("--split", sa.split, "Also write 90/5/5 train/val/test files");
  synth->add_option("--out", sa.out, "Output JSON Lines file")->required();

  PeArgs pa;
  auto* pe = app.add_subcommand("pe", "Positional encodings from effective resistance");
  pe->add_option("--grid", pa.grid, "Grid JSON file")->required()->check(CLI::ExistingFile);
  pe->add_option("--out", pa.out, "PE CSV output")->required();
  pe->add_option("--dump-omega", pa.omega, "Also write the effective resistance matrix");

  TrainArgs ta, fa;
  auto* tr = app.add_subcommand("train", "Train a model from scratch");
  auto* ft = app.add_subcommand("finetune", "Fine-tune a pretrained checkpoint");
  for (auto [cmd, args] : {std::pair{tr, &ta}, {ft, &fa}}) {
    cmd->add_option("--grid", args->grids, "Grid JSON file (repeatable)")->required();
    cmd->add_option("--samples", args->samples, "Training samples, one file per --grid")->required();
    cmd->add_option("--val", args->val, "Validation samples, one file per --grid");
    cmd->add_option("--config", args->config, "TOML config")->required();
    cmd->add_option("--out", args->out, "Best-validation checkpoint path")->required();
    cmd->add_option("--history", args->history, "History CSV (default <out>.history.csv)");
    cmd->add_option("--resume-from", args->resume_from, "Resume file written by an earlier run (<out>.resume)");
    cmd->add_option("--save-every", args->save_every, "Write checkpoints every N epochs")->capture_default_str();
    cmd->add_flag("--quiet", args->quiet, "No per-epoch output");
    add_overrides(cmd, args->overrides);
  }
  ft->add_option("--pretrained", fa.pretrained, "Pretrained checkpoint")->required();

  EvalArgs ea;
  ea.threads = default_threads();
  auto* ev = app.add_subcommand("eval", "Evaluate checkpoints on a sample file");
  ev->add_option("--checkpoint", ea.checkpoints, "Checkpoint (repeatable)")->required();
  ev->add_option("--label", ea.labels, "Row label per checkpoint");
  ev->add_option("--grid", ea.grid, "Grid JSON file")->required();
  ev->add_option("--samples", ea.samples, "Samples to evaluate")->required();
  ev->add_option("--out-dir", ea.out_dir, "Report directory")->required();
  ev->add_flag("--zero-shot", ea.zero_shot, "Skip inadmissible outages; encodings follow each sample's topology");
  ev->add_option("--high-impact", ea.high_impact, "Restrict to the K costliest samples and add comparison rows");
  ev->add_option("--train-samples", ea.train_samples, "Training samples per checkpoint (cost increase baseline)");
  ev->add_flag("--pf-correct", ea.pf_correct, "Also report metrics after power-flow post-processing");
  ev->add_flag("--timing", ea.timing, "Measure single-sample inference time");
  ev->add_option("--threads", ea.threads, "Evaluation threads")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  if (*synth) return cmd_synth(sa, argc, argv);
  if (*pe) return cmd_pe(pa, argc, argv);
  if (*tr) return cmd_train(ta, false, argc, argv);
  if (*ft) return cmd_train(fa, true, argc, argv);
  if (!ea.out_dir.empty()) fs::create_directories(ea.out_dir);
  return cmd_eval(ea, argc, argv);
}
