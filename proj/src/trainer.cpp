#include "mods/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace mods::trainer {

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw ConfigError("unknown key '" + key + "' in " + section);
    }
  }
}

template <class T>
void read_key(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

}  // namespace

std::string Ablation::name() const {
  std::vector<std::string> parts;
  if (no_gdc) parts.emplace_back("no_gdc");
  if (no_caps) parts.emplace_back("no_caps");
  if (no_pcca) parts.emplace_back("no_pcca");
  if (fixed_primary) parts.push_back(std::string("fixed_") + modality_code(*fixed_primary));
  if (parts.empty()) return "none";
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

Ablation Ablation::parse(const std::string& s) {
  Ablation a;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    if (tok == "none" || tok.empty()) continue;
    if (tok == "no_gdc") {
      a.no_gdc = true;
    } else if (tok == "no_caps") {
      a.no_caps = true;
    } else if (tok == "no_pcca") {
      a.no_pcca = true;
    } else if (tok.rfind("fixed_", 0) == 0) {
      try {
        a.fixed_primary = parse_modality(tok.substr(6));
      } catch (const Error&) {
        throw ConfigError("unknown ablation '" + tok + "'");
      }
    } else {
      throw ConfigError("unknown ablation '" + tok + "' (expected none, no_gdc, no_caps, no_pcca, fixed_l|a|v)");
    }
  }
  if (a.no_gdc && a.no_caps) throw ConfigError("no_gdc and no_caps are mutually exclusive");
  return a;
}

void ModelConfig::validate() const {
  if (d == 0) throw ConfigError("d must be at least 1");
  if (pcca_depth == 0) throw ConfigError("pcca_depth must be at least 1");
  if (heads == 0 || d % heads != 0) throw ConfigError("heads must divide d");
  if (routing_iters == 0) throw ConfigError("routing_iters must be at least 1");
  if (max_nodes == 0 || max_len == 0) throw ConfigError("max_nodes and max_len must be positive");
  for (std::size_t k : input_dims)
    if (k == 0) throw ConfigError("input dims must be positive");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite nonnegative number");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
}

json ModelConfig::to_json() const {
  json j;
  j["input_dims"] = input_dims;
  j["d"] = d;
  j["pcca_depth"] = pcca_depth;
  j["heads"] = heads;
  j["routing_iters"] = routing_iters;
  j["gcn_layers"] = gcn_layers;
  j["capsule_mode"] = gdc::capsule_mode_name(capsule_mode);
  j["max_nodes"] = max_nodes;
  j["max_len"] = max_len;
  j["ablation"] = ablation.name();
  j["alpha"] = alpha;
  j["tau"] = tau;
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  const std::string section = "model";
  reject_unknown(j,
                 {"input_dims", "d", "pcca_depth", "heads", "routing_iters", "gcn_layers", "capsule_mode", "max_nodes",
                  "max_len", "ablation", "alpha", "tau"},
                 section);
  ModelConfig c;
  read_key(j, "input_dims", c.input_dims, section);
  read_key(j, "d", c.d, section);
  read_key(j, "pcca_depth", c.pcca_depth, section);
  read_key(j, "heads", c.heads, section);
  read_key(j, "routing_iters", c.routing_iters, section);
  read_key(j, "gcn_layers", c.gcn_layers, section);
  std::string mode = gdc::capsule_mode_name(c.capsule_mode);
  read_key(j, "capsule_mode", mode, section);
  c.capsule_mode = gdc::parse_capsule_mode(mode);
  read_key(j, "max_nodes", c.max_nodes, section);
  read_key(j, "max_len", c.max_len, section);
  std::string abl = "none";
  read_key(j, "ablation", abl, section);
  c.ablation = Ablation::parse(abl);
  read_key(j, "alpha", c.alpha, section);
  read_key(j, "tau", c.tau, section);
  c.validate();
  return c;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t ModelConfig::fingerprint() const { return fnv1a64(to_json().dump()); }

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be nonnegative");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

json TrainConfig::to_json() const {
  json j;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["weight_decay"] = weight_decay;
  j["patience"] = patience;
  j["max_epochs"] = max_epochs;
  j["seed"] = seed;
  j["dropout"] = dropout;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  const std::string section = "train";
  reject_unknown(j, {"learning_rate", "batch_size", "weight_decay", "patience", "max_epochs", "seed", "dropout"}, section);
  TrainConfig c;
  read_key(j, "learning_rate", c.learning_rate, section);
  read_key(j, "batch_size", c.batch_size, section);
  read_key(j, "weight_decay", c.weight_decay, section);
  read_key(j, "patience", c.patience, section);
  read_key(j, "max_epochs", c.max_epochs, section);
  read_key(j, "seed", c.seed, section);
  read_key(j, "dropout", c.dropout, section);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(const ModelConfig& cfg) : config_(cfg) {
  cfg.validate();
  const std::size_t d = cfg.d;
  proj_l_ = Linear::create("proj_l", cfg.input_dims[0], d);
  if (cfg.ablation.no_gdc) {
    bypass_a_ = Linear::create("bypass_a", cfg.input_dims[1], d);
    bypass_v_ = Linear::create("bypass_v", cfg.input_dims[2], d);
  } else {
    gdc::GdcConfig g;
    g.hidden = d;
    g.max_nodes = cfg.max_nodes;
    g.max_len = cfg.max_len;
    g.mode = cfg.capsule_mode;
    g.routing_iters = cfg.routing_iters;
    g.gcn_layers = cfg.gcn_layers;
    g.in_dim = cfg.input_dims[1];
    gdc_a_ = gdc::GdcParams::create("gdc_a", g);
    g.in_dim = cfg.input_dims[2];
    gdc_v_ = gdc::GdcParams::create("gdc_v", g);
  }
  selector_ = mselector::MSelectorParams::create("selector", d);
  if (!cfg.ablation.no_pcca) pcca_ = pcca::create_stack("pcca", d, cfg.pcca_depth, cfg.heads);
  agg_out_ = mselector::AggregationParams::create("agg_out", d);
  head_hidden_ = Linear::create("head0", d, d);
  head_out_ = Linear::create("head1", d, 1);
  reverse_ = objective::ReverseMaps::create("reverse", d);

  proj_l_.collect(params_);
  if (gdc_a_) {
    gdc_a_->collect(params_);
    gdc_v_->collect(params_);
  } else {
    bypass_a_->collect(params_);
    bypass_v_->collect(params_);
  }
  if (cfg.ablation.fixed_primary) {
    // The weight MLP is unused; the aggregators still feed the contrastive term.
    selector_.agg_a.collect(params_);
    selector_.agg_l.collect(params_);
    selector_.agg_v.collect(params_);
  } else {
    selector_.collect(params_);
  }
  for (auto& layer : pcca_) layer.collect(params_);
  agg_out_.collect(params_);
  head_hidden_.collect(params_);
  head_out_.collect(params_);
  reverse_.collect(params_);

  std::set<std::string> names;
  for (const Parameter* p : params_) {
    if (!names.insert(p->name).second) throw ConfigError("duplicate parameter name " + p->name);
  }
}

Parameter* Model::find(const std::string& name) const {
  for (Parameter* p : params_)
    if (p->name == name) return p;
  return nullptr;
}

void Model::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  initialize_parameters(params_, rng);
}

Var Model::compress(Tape& tape, Var x, Modality m, std::size_t J) const {
  if (config_.ablation.no_gdc) {
    const Linear& bypass = m == Modality::acoustic ? *bypass_a_ : *bypass_v_;
    return matmul(tape.constant(gdc::slice_pooling_matrix(x.rows(), J)), bypass(tape, x));
  }
  const gdc::GdcParams& g = m == Modality::acoustic ? *gdc_a_ : *gdc_v_;
  return gdc::compress_sequence(tape, x, g, J, config_.ablation.no_caps);
}

Model::Forward Model::forward(Tape& tape, const MultimodalSample& sample, const Dropout& drop) const {
  return forward(tape, tape.constant(sample.language), tape.constant(sample.acoustic), tape.constant(sample.visual), drop);
}

Model::Forward Model::forward(Tape& tape, Var x_l, Var x_a, Var x_v, const Dropout& drop) const {
  const Var xs[] = {x_l, x_a, x_v};
  for (std::size_t k = 0; k < 3; ++k) {
    if (xs[k].cols() != config_.input_dims[k]) {
      throw DimensionError(modality_name(kModalities[k]) + " features have width " + std::to_string(xs[k].cols()) +
                           ", model expects " + std::to_string(config_.input_dims[k]));
    }
  }
  Forward f;
  f.seq_l = proj_l_(tape, x_l);
  const std::size_t J = f.seq_l.rows();
  f.seq_a = compress(tape, x_a, Modality::acoustic, J);
  f.seq_v = compress(tape, x_v, Modality::visual, J);

  f.h_a = mselector::adaptive_aggregate(tape, f.seq_a, selector_.agg_a);
  f.h_l = mselector::adaptive_aggregate(tape, f.seq_l, selector_.agg_l);
  f.h_v = mselector::adaptive_aggregate(tape, f.seq_v, selector_.agg_v);

  if (const auto fixed = config_.ablation.fixed_primary) {
    auto& s = f.selection;
    s.weights = {0.0, 0.0, 0.0};
    s.weights[mselector::weight_index(*fixed)] = 1.0;
    s.weight_row = tape.constant(Tensor({1, 3}, std::vector<double>(s.weights.begin(), s.weights.end())));
    s.primary = *fixed;
    s.roles = mselector::rank_modalities(s.weights);
    auto seq = [&](Modality m) { return m == Modality::language ? f.seq_l : (m == Modality::acoustic ? f.seq_a : f.seq_v); };
    s.h_p = seq(s.roles[0]);
    s.h_a1 = seq(s.roles[1]);
    s.h_a2 = seq(s.roles[2]);
  } else {
    Var w = mselector::modality_weights(tape, f.h_a, f.h_l, f.h_v, selector_);
    f.selection = mselector::select_primary(w, f.seq_a, f.seq_l, f.seq_v);
  }

  const auto& s = f.selection;
  Var fused = config_.ablation.no_pcca ? s.h_p : pcca::pcca_stack(tape, pcca::PccaState{s.h_p, s.h_a1, s.h_a2}, pcca_, drop);
  f.h_p = mselector::adaptive_aggregate(tape, fused, agg_out_);
  f.y = head_out_(tape, relu(head_hidden_(tape, f.h_p)));
  return f;
}

Model::BatchLoss Model::batch_loss(Tape& tape, const std::vector<const MultimodalSample*>& batch,
                                   const Dropout& drop) const {
  if (batch.empty()) throw DataError("empty batch");
  BatchLoss out;
  std::vector<Var> ys, hp, hl, ha, hv;
  Tensor truth({batch.size(), 1});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.outputs.push_back(forward(tape, *batch[i], drop));
    const Forward& f = out.outputs.back();
    ys.push_back(f.y);
    hp.push_back(f.h_p);
    hl.push_back(f.h_l);
    ha.push_back(f.h_a);
    hv.push_back(f.h_v);
    truth(i, 0) = batch[i]->label;
  }
  out.reg = objective::regression_loss(concat_rows(ys), tape.constant(std::move(truth)));
  if (config_.alpha > 0.0) {
    objective::BatchRepresentations reps{concat_rows(hp), concat_rows(hl), concat_rows(ha), concat_rows(hv)};
    out.nce = objective::nce_total(tape, reps, reverse_, config_.tau);
    out.total = objective::total_loss(out.reg, out.nce, config_.alpha);
  } else {
    out.nce = tape.constant(Tensor::scalar(0.0));
    out.total = out.reg;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

void AdamW::init(const ParamList& params) {
  m.clear();
  v.clear();
  for (const Parameter* p : params) {
    m.emplace_back(p->value.shape(), 0.0);
    v.emplace_back(p->value.shape(), 0.0);
  }
  step = 0;
}

void AdamW::update(const ParamList& params, const std::vector<Tensor>& grads) {
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& w = params[k]->value;
    Tensor& mk = m[k];
    Tensor& vk = v[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      mk[i] = beta1 * mk[i] + (1.0 - beta1) * g[i];
      vk[i] = beta2 * vk[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = mk[i] / bc1;
      const double vhat = vk[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[i]);
    }
    round_to_f32(w);
    round_to_f32(mk);
    round_to_f32(vk);
  }
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<std::pair<std::string, Tensor>> snapshot(const ParamList& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.emplace_back(p->name, p->value);
  return out;
}

std::vector<std::pair<std::string, Tensor>> named(const ParamList& params, const std::vector<Tensor>& values) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t k = 0; k < params.size(); ++k) out.emplace_back(params[k]->name, values[k]);
  return out;
}

std::vector<Tensor> unnamed(const ParamList& params, const std::vector<std::pair<std::string, Tensor>>& records,
                            const char* what) {
  std::vector<Tensor> out;
  for (const Parameter* p : params) {
    auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.first == p->name; });
    if (it == records.end()) throw DataError(std::string("checkpoint lacks ") + what + " for " + p->name);
    if (it->second.shape() != p->value.shape()) throw DataError(std::string("checkpoint ") + what + " shape mismatch for " + p->name);
    out.push_back(it->second);
  }
  return out;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::vector<const MultimodalSample*> gather(const Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<const MultimodalSample*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&data.samples[i]);
  return out;
}

}  // namespace

void Checkpoint::load_into(Model& model, bool best) const {
  const auto& records = best ? best_params : params;
  if (model.config().fingerprint() != this->model.fingerprint()) {
    throw ConfigError("checkpoint incompatible with model configuration (fingerprint mismatch)");
  }
  std::vector<Tensor> values = unnamed(model.parameters(), records, best ? "best parameters" : "parameters");
  for (std::size_t k = 0; k < values.size(); ++k) model.parameters()[k]->value = std::move(values[k]);
}

TrainResult train(const Dataset& data, const ModelConfig& mcfg, const TrainConfig& tcfg, const TrainOptions& opts) {
  mcfg.validate();
  tcfg.validate();
  if (mcfg.input_dims != data.manifest.dims) {
    throw DimensionError("model input dims do not match dataset '" + data.manifest.name + "'");
  }
  const auto train_idx = data.split_indices(opts.train_split);
  const auto val_idx = data.split_indices(opts.val_split);
  if (train_idx.empty() || val_idx.empty()) throw DataError("training needs non-empty train and validation splits");

  Model model(mcfg);
  AdamW adam;
  adam.lr = tcfg.learning_rate;
  adam.weight_decay = tcfg.weight_decay;
  adam.init(model.parameters());
  std::mt19937_64 drop_rng(tcfg.seed ^ 0x9e3779b97f4a7c15ull);

  TrainResult result;
  EarlyStopState early;
  std::vector<std::pair<std::string, Tensor>> best_params;
  std::size_t start_epoch = 0;

  if (opts.resume) {
    const Checkpoint& ck = *opts.resume;
    if (ck.model.fingerprint() != mcfg.fingerprint()) {
      throw ConfigError("resume checkpoint was written for a different model configuration");
    }
    ck.load_into(model);
    adam.m = unnamed(model.parameters(), ck.adam_m, "first moments");
    adam.v = unnamed(model.parameters(), ck.adam_v, "second moments");
    adam.step = ck.step;
    early = ck.early;
    best_params = ck.best_params;
    std::istringstream is(ck.rng_state);
    is >> drop_rng;
    if (!is) throw DataError("checkpoint RNG state is unreadable");
    for (const auto& rec : ck.history) result.history.push_back(epoch_from_json(rec));
    start_epoch = ck.epoch;
    result.initial_train_loss = ck.initial_train_loss;
  } else {
    model.initialize(tcfg.seed);
    // Loss of the untrained model over the first epoch's batches, no updates.
    double sum = 0.0;
    try {
      for (const auto& b : iterate_batches(data, opts.train_split, tcfg.batch_size, tcfg.seed, 0)) {
        Tape tape;
        sum += model.batch_loss(tape, gather(data, b)).total.value()[0] * static_cast<double>(b.size());
      }
    } catch (const NumericalError&) {
      // The first training epoch hits the same failure and records it.
      sum = std::numeric_limits<double>::quiet_NaN();
    }
    result.initial_train_loss = sum / static_cast<double>(train_idx.size());
  }

  auto capture = [&](Checkpoint& ck) {
    ck.params = snapshot(model.parameters());
    ck.adam_m = named(model.parameters(), adam.m);
    ck.adam_v = named(model.parameters(), adam.v);
    ck.step = adam.step;
    ck.rng_state = rng_to_string(drop_rng);
  };
  // Refreshed after every completed epoch so a divergence falls back to it.
  capture(result.last);

  const Dropout drop{tcfg.dropout, &drop_rng};
  std::size_t epoch = start_epoch;
  bool finished = opts.resume && opts.resume->finished;
  result.early_stopped = finished && early.bad_epochs >= tcfg.patience;
  for (; epoch < tcfg.max_epochs && !finished; ++epoch) {
    double loss_sum = 0.0, reg_sum = 0.0, nce_sum = 0.0;
    EpochRecord rec;
    try {
      for (const auto& b : iterate_batches(data, opts.train_split, tcfg.batch_size, tcfg.seed, epoch)) {
        Tape tape;
        auto bl = model.batch_loss(tape, gather(data, b), drop);
        tape.backward(bl.total);
        std::vector<Tensor> grads;
        grads.reserve(model.parameters().size());
        for (const Parameter* p : model.parameters()) grads.push_back(tape.param_grad(*p));
        for (const Tensor& g : grads)
          if (!g.all_finite()) throw NumericalError("non-finite gradient");
        adam.update(model.parameters(), grads);
        const double k = static_cast<double>(b.size());
        loss_sum += bl.total.value()[0] * k;
        reg_sum += bl.reg.value()[0] * k;
        nce_sum += bl.nce.value()[0] * k;
      }
      const double n = static_cast<double>(train_idx.size());
      rec.epoch = epoch;
      rec.train_loss = loss_sum / n;
      rec.train_mae = reg_sum / n;
      rec.train_nce = nce_sum / n;
      const auto val = evaluate(model, data, opts.val_split);
      if (!std::isfinite(val.metrics.mae)) throw NumericalError("non-finite validation MAE");
      rec.val_mae = val.metrics.mae;
      rec.val_corr = val.metrics.corr;
    } catch (const NumericalError& e) {
      // result.last still holds the state after the last completed epoch.
      result.diverged = true;
      result.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    if (!early.has_best || rec.val_mae < early.best_val) {
      early.has_best = true;
      early.best_val = rec.val_mae;
      early.best_epoch = epoch;
      early.bad_epochs = 0;
      best_params = snapshot(model.parameters());
      rec.improved = true;
    } else {
      ++early.bad_epochs;
    }
    result.history.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);

    capture(result.last);

    if (early.bad_epochs >= tcfg.patience) {
      result.early_stopped = true;
      finished = true;
    }
  }

  Checkpoint& last = result.last;
  last.model = mcfg;
  last.train = tcfg;
  last.epoch = std::max(epoch, start_epoch);
  last.early = early;
  last.initial_train_loss = result.initial_train_loss;
  last.best_params = best_params.empty() ? last.params : best_params;
  last.history = json::array();
  for (const auto& r : result.history) last.history.push_back(epoch_to_json(r));
  last.finished = finished || result.diverged;

  result.best = last;
  result.best.params = last.best_params;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult evaluate(const Model& model, const Dataset& data, const std::string& split) {
  if (model.config().input_dims != data.manifest.dims) {
    throw DimensionError("checkpoint dims do not match dataset '" + data.manifest.name + "'");
  }
  EvalResult out;
  std::vector<double> preds, truths;
  for (std::size_t i : data.split_indices(split)) {
    const MultimodalSample& s = data.samples[i];
    Tape tape;
    auto f = model.forward(tape, s);
    SelectionRow row;
    row.id = s.id;
    row.weights = f.selection.weights;
    row.primary = f.selection.primary;
    row.planted = s.planted_primary;
    row.y_true = s.label;
    row.y_pred = f.y.value()[0];
    preds.push_back(row.y_pred);
    truths.push_back(row.y_true);
    out.rows.push_back(std::move(row));
  }
  if (out.rows.empty()) throw DataError("split '" + split + "' is empty");
  out.metrics = objective::compute_metrics(preds, truths, data.manifest.label_range);
  return out;
}

EvalResult evaluate(const Dataset& data, const std::string& split, const Checkpoint& ckpt, bool best) {
  Model model(ckpt.model);
  ckpt.load_into(model, best);
  return evaluate(model, data, split);
}

json epoch_to_json(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["train_mae"] = r.train_mae;
  j["train_nce"] = r.train_nce;
  j["val_mae"] = r.val_mae;
  j["val_corr"] = r.val_corr;
  j["improved"] = r.improved;
  return j;
}

EpochRecord epoch_from_json(const json& j) {
  EpochRecord r;
  try {
    r.epoch = j.at("epoch").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.train_mae = j.at("train_mae").get<double>();
    r.train_nce = j.at("train_nce").get<double>();
    r.val_mae = j.at("val_mae").get<double>();
    r.val_corr = j.at("val_corr").get<double>();
    r.improved = j.at("improved").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed history record: ") + e.what());
  }
  return r;
}

json history_to_json(const TrainResult& result, const ModelConfig& mcfg, const TrainConfig& tcfg) {
  json j;
  j["ablation"] = mcfg.ablation.name();
  j["model"] = mcfg.to_json();
  j["train"] = tcfg.to_json();
  j["initial_train_loss"] = result.initial_train_loss;
  j["epochs"] = json::array();
  for (const auto& r : result.history) j["epochs"].push_back(epoch_to_json(r));
  j["best_epoch"] = result.last.early.best_epoch;
  j["best_val_mae"] = result.last.early.best_val;
  j["early_stopped"] = result.early_stopped;
  j["diverged"] = result.diverged;
  if (result.diverged) j["divergence"] = result.divergence;
  return j;
}

std::string selections_csv(const std::vector<SelectionRow>& rows) {
  std::string out = "id,w_a,w_t,w_v,primary,planted_primary,y_true,y_pred\n";
  char buf[256];
  for (const auto& r : rows) {
    const std::string planted = r.planted ? std::string(1, modality_code(*r.planted)) : "";
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%c,%s,%.17g,%.17g\n", r.weights[0], r.weights[1], r.weights[2],
                  modality_code(r.primary), planted.c_str(), r.y_true, r.y_pred);
    out += r.id;
    out += buf;
  }
  return out;
}

}  // namespace mods::trainer
