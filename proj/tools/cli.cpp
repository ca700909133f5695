#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mods/gradsuite.hpp"

namespace mods::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = {
      {"mosi-like", 3e-5, 32, 128, 3, 0.1, 1e-3, 25, {-3.0, 3.0}},
      {"mosei-like", 1e-5, 64, 128, 3, 0.1, 1e-3, 15, {-3.0, 3.0}},
      {"sims-like", 1e-5, 32, 64, 3, 0.01, 1e-2, 25, {-1.0, 1.0}},
      {"simsv2-like", 1e-5, 32, 128, 4, 0.01, 1e-2, 25, {-1.0, 1.0}},
  };
  return all;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw ConfigError("unknown preset '" + name + "' (expected mosi-like, mosei-like, sims-like, simsv2-like)");
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

fs::path require_out(const RunConfig& rc, const char* command) {
  if (rc.out.empty()) throw ConfigError(std::string(command) + " needs an output directory (--out or \"out\")");
  fs::create_directories(rc.out);
  return rc.out;
}

Dataset load_data(const RunConfig& rc) {
  if (rc.data.empty()) throw ConfigError("no dataset given (--data or \"data\")");
  return read_dataset(rc.data);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Fills model fields the config left open from the dataset itself.
trainer::ModelConfig fit_to_data(const RunConfig& rc, const Dataset& data) {
  trainer::ModelConfig m = rc.model;
  const json& o = rc.model_overrides;
  if (!o.contains("input_dims")) m.input_dims = data.manifest.dims;
  std::size_t longest_l = 1, longest_av = 1;
  for (const auto& s : data.samples) {
    longest_l = std::max(longest_l, s.language.rows());
    longest_av = std::max({longest_av, s.acoustic.rows(), s.visual.rows()});
  }
  if (!o.contains("max_nodes")) m.max_nodes = longest_l;
  if (!o.contains("max_len")) m.max_len = longest_av;
  m.validate();
  return m;
}

int cmd_gen_data(const RunConfig& rc, std::ostream& out) {
  const fs::path dir = require_out(rc, "gen-data");
  auto g = generate_synthetic(rc.synth);
  write_dataset(g.samples, g.manifest, dir);
  std::array<std::size_t, 3> planted{};
  for (const auto& s : g.samples)
    if (s.planted_primary) ++planted[static_cast<std::size_t>(*s.planted_primary)];
  out << "dataset " << g.manifest.name << " -> " << dir.string() << "\n";
  for (const auto& [split, ids] : g.manifest.splits) out << "  " << split << ": " << ids.size() << " samples\n";
  out << "  dims (l, a, v): " << g.manifest.dims[0] << ", " << g.manifest.dims[1] << ", " << g.manifest.dims[2] << "\n";
  out << "  planted primary (l, a, v): " << planted[0] << ", " << planted[1] << ", " << planted[2] << "\n";
  out << "  redundancy " << rc.synth.redundancy << ", noise_std " << rc.synth.noise_std << ", seed " << rc.synth.seed
      << "\n";
  return kOk;
}

int cmd_train(const RunConfig& rc, const std::string& resume_path, std::ostream& out, std::ostream& err) {
  const Dataset data = load_data(rc);
  const trainer::ModelConfig model = fit_to_data(rc, data);
  const fs::path dir = require_out(rc, "train");

  std::optional<trainer::Checkpoint> resume;
  trainer::TrainOptions opts;
  if (!resume_path.empty()) {
    resume = trainer::load_checkpoint(resume_path, &model);
    opts.resume = &*resume;
    out << "resuming from " << resume_path << " at epoch " << resume->epoch << "\n";
  }
  opts.on_epoch = [&](const trainer::EpochRecord& r) {
    out << "epoch " << r.epoch << "  loss " << fmt(r.train_loss) << "  train_mae " << fmt(r.train_mae) << "  val_mae "
        << fmt(r.val_mae) << "  val_corr " << fmt(r.val_corr) << (r.improved ? "  *" : "") << "\n";
  };

  const auto result = trainer::train(data, model, rc.train, opts);
  trainer::save_checkpoint(result.last, (dir / "last.ckpt").string());
  write_text(dir / "history.json", trainer::history_to_json(result, model, rc.train).dump(2) + "\n");
  if (result.diverged) {
    err << "error: training diverged (" << result.divergence << "); last finite state written to "
        << (dir / "last.ckpt").string() << "\n";
    return kNumerical;
  }
  trainer::save_checkpoint(result.best, (dir / "best.ckpt").string());
  const auto eval = trainer::evaluate(data, rc.split, result.best);
  write_text(dir / "metrics.json", objective::metrics_to_json(eval.metrics).dump(2) + "\n");
  out << "best epoch " << result.last.early.best_epoch << ", " << rc.split << " MAE " << fmt(eval.metrics.mae)
      << (result.early_stopped ? " (early stop)" : "") << "\n";
  out << "wrote best.ckpt, last.ckpt, history.json, metrics.json to " << dir.string() << "\n";
  return kOk;
}

trainer::Checkpoint load_for_eval(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint or \"checkpoint\")");
  return trainer::load_checkpoint(rc.checkpoint);
}

int cmd_eval(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const trainer::Checkpoint ckpt = load_for_eval(rc);
  const Dataset data = load_data(rc);
  const auto eval = trainer::evaluate(data, rc.split, ckpt);
  RunConfig where = rc;
  if (where.out.empty()) where.out = fs::path(rc.checkpoint).parent_path().string();
  if (where.out.empty()) where.out = ".";
  const fs::path dir = require_out(where, "eval");
  write_text(dir / "metrics.json", objective::metrics_to_json(eval.metrics).dump(2) + "\n");
  write_text(dir / "selections.csv", trainer::selections_csv(eval.rows));
  const auto& m = eval.metrics;
  out << rc.split << " (" << eval.rows.size() << " samples): MAE " << fmt(m.mae) << "  Corr " << fmt(m.corr)
      << "  Acc2 " << fmt(m.acc2_nonneg) << "/" << fmt(m.acc2_posneg) << "  Acc7 " << fmt(m.acc7) << "\n";
  if (m.corr_degenerate) err << "warning: predictions or labels are constant; Corr reported as 0\n";
  out << "wrote metrics.json, selections.csv to " << dir.string() << "\n";
  return kOk;
}

int cmd_inspect(const RunConfig& rc, std::ostream& out) {
  const trainer::Checkpoint ckpt = load_for_eval(rc);
  const Dataset data = load_data(rc);
  out << trainer::selections_csv(trainer::evaluate(data, rc.split, ckpt).rows);
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& corrupt, std::ostream& out) {
  GradCheckOptions opts;
  opts.corrupt_parameter = corrupt;
  bool ok = true;
  char line[160];
  for (const auto& e : run_gradcheck_suite(seed, opts)) {
    std::snprintf(line, sizeof line, "%-14s params %6zu  max_rel_error %.3e  %6.2fs  %s\n", e.module.c_str(),
                  e.parameters, e.report.max_rel_error, e.seconds, e.report.passed ? "PASS" : "FAIL");
    out << line;
    if (!e.report.passed) {
      ok = false;
      for (const auto& [name, rel] : e.report.per_parameter) {
        if (rel >= e.report.tol) out << "    " << name << "  rel_error " << rel << "\n";
      }
    }
  }
  out << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tol " << opts.tol << ", step " << opts.step << ")\n";
  return ok ? kOk : kFailure;
}

}  // namespace

SynthConfig synth_from_json(const json& j, SynthConfig c) {
  const std::string where = "synth";
  reject_unknown(j,
                 {"name", "n_train", "n_val", "n_test", "dims", "language_len", "base_len", "dominance_mix",
                  "redundancy", "noise_std", "content_std", "signal_gain", "label_range", "seed"},
                 where);
  read(j, "name", c.name, where);
  read(j, "n_train", c.n_train, where);
  read(j, "n_val", c.n_val, where);
  read(j, "n_test", c.n_test, where);
  read(j, "dims", c.dims, where);
  read(j, "language_len", c.language_len, where);
  read(j, "base_len", c.base_len, where);
  read(j, "dominance_mix", c.dominance_mix, where);
  read(j, "redundancy", c.redundancy, where);
  read(j, "noise_std", c.noise_std, where);
  read(j, "content_std", c.content_std, where);
  read(j, "signal_gain", c.signal_gain, where);
  read(j, "label_range", c.label_range, where);
  read(j, "seed", c.seed, where);
  return c;
}

json synth_to_json(const SynthConfig& c) {
  json j;
  j["name"] = c.name;
  j["n_train"] = c.n_train;
  j["n_val"] = c.n_val;
  j["n_test"] = c.n_test;
  j["dims"] = c.dims;
  j["language_len"] = c.language_len;
  j["base_len"] = c.base_len;
  j["dominance_mix"] = c.dominance_mix;
  j["redundancy"] = c.redundancy;
  j["noise_std"] = c.noise_std;
  j["content_std"] = c.content_std;
  j["signal_gain"] = c.signal_gain;
  j["label_range"] = c.label_range;
  j["seed"] = c.seed;
  return j;
}

RunConfig resolve(const Flags& flags) {
  json file = json::object();
  if (!flags.config.empty()) {
    file = read_json_file(flags.config);
    reject_unknown(file, {"preset", "data", "out", "checkpoint", "split", "seed", "synth", "model", "train"}, "config");
  }
  RunConfig rc;
  read(file, "preset", rc.preset, "config");
  read(file, "data", rc.data, "config");
  read(file, "out", rc.out, "config");
  read(file, "checkpoint", rc.checkpoint, "config");
  read(file, "split", rc.split, "config");
  if (!flags.preset.empty()) rc.preset = flags.preset;
  if (!flags.data.empty()) rc.data = flags.data;
  if (!flags.out.empty()) rc.out = flags.out;
  if (!flags.checkpoint.empty()) rc.checkpoint = flags.checkpoint;
  if (!flags.split.empty()) rc.split = flags.split;

  json model = trainer::ModelConfig{}.to_json();
  json train = trainer::TrainConfig{}.to_json();
  SynthConfig synth;
  if (!rc.preset.empty()) {
    const Preset& p = find_preset(rc.preset);
    model["d"] = p.hidden;
    model["pcca_depth"] = p.depth;
    model["alpha"] = p.alpha;
    train["learning_rate"] = p.learning_rate;
    train["batch_size"] = p.batch_size;
    train["weight_decay"] = p.weight_decay;
    train["patience"] = p.patience;
    synth.label_range = p.label_range;
  }
  if (file.contains("model")) {
    rc.model_overrides = file.at("model");
    if (!rc.model_overrides.is_object()) throw ConfigError("model must be a JSON object");
    model.merge_patch(rc.model_overrides);
  }
  if (!flags.ablation.empty()) {
    model["ablation"] = flags.ablation;
    rc.model_overrides["ablation"] = flags.ablation;
  }
  if (file.contains("train")) {
    if (!file.at("train").is_object()) throw ConfigError("train must be a JSON object");
    train.merge_patch(file.at("train"));
  }
  if (file.contains("synth")) synth = synth_from_json(file.at("synth"), synth);

  std::optional<std::uint64_t> seed;
  if (file.contains("seed")) {
    std::uint64_t s = 0;
    read(file, "seed", s, "config");
    seed = s;
  }
  if (flags.has_seed) seed = flags.seed;
  if (seed) {
    train["seed"] = *seed;
    synth.seed = *seed;
  }

  rc.model = trainer::ModelConfig::from_json(model);
  rc.train = trainer::TrainConfig::from_json(train);
  synth.validate();
  rc.synth = synth;
  return rc;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MODS multimodal sentiment model: data generation, training, evaluation, gradient checks", "mods"};
  app.require_subcommand(1);
  Flags flags;
  std::string resume, corrupt;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON run config");
    sub->add_option("--seed", seed, "seed for data generation and training");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--preset", flags.preset, "mosi-like | mosei-like | sims-like | simsv2-like");
  };
  auto* gen = app.add_subcommand("gen-data", "generate a seeded synthetic dataset");
  common(gen);
  auto* tr = app.add_subcommand("train", "train a model, write best.ckpt, last.ckpt, history.json, metrics.json");
  common(tr);
  tr->add_option("--data", flags.data, "dataset directory");
  tr->add_option("--ablation", flags.ablation, "none | no_gdc | no_caps | no_pcca | fixed_l|a|v, joined with '+'");
  tr->add_option("--resume", resume, "continue from a last.ckpt");
  tr->add_option("--split", flags.split, "split for the final metrics.json (default val)");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint, write metrics.json and selections.csv");
  common(ev);
  ev->add_option("--data", flags.data, "dataset directory");
  ev->add_option("--checkpoint", flags.checkpoint, "checkpoint file");
  ev->add_option("--split", flags.split, "split to evaluate (default val)");
  auto* insp = app.add_subcommand("inspect-weights", "print per-sample modality weights as CSV");
  common(insp);
  insp->add_option("--data", flags.data, "dataset directory");
  insp->add_option("--checkpoint", flags.checkpoint, "checkpoint file");
  insp->add_option("--split", flags.split, "split to inspect (default val)");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every module");
  gc->add_option("--seed", seed, "parameter seed");
  gc->add_option("--corrupt", corrupt, "test hook: perturb the analytic gradient of this parameter");

  std::vector<const char*> argv{"mods"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }
  const auto chosen = app.get_subcommands();
  flags.has_seed = std::any_of(chosen.begin(), chosen.end(), [](const CLI::App* s) { return s->count("--seed") > 0; });
  flags.seed = seed;

  try {
    if (gc->parsed()) return cmd_gradcheck(seed, corrupt, out);
    const RunConfig rc = resolve(flags);
    if (gen->parsed()) return cmd_gen_data(rc, out);
    if (tr->parsed()) return cmd_train(rc, resume, out, err);
    if (ev->parsed()) return cmd_eval(rc, out, err);
    if (insp->parsed()) return cmd_inspect(rc, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace mods::cli
