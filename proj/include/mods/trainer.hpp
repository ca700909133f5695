#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mods/dataio.hpp"
#include "mods/gdc.hpp"
#include "mods/mselector.hpp"
#include "mods/objective.hpp"
#include "mods/pcca.hpp"

namespace mods::trainer {

using json = nlohmann::ordered_json;

struct Ablation {
  // Linear projection plus mean-pool resampling in place of the GDC.
  bool no_gdc = false;
  // GDC with slice-average nodes in place of dynamic routing.
  bool no_caps = false;
  // Regress on the weighted primary alone.
  bool no_pcca = false;
  // Primary pinned to one modality, every sequence weighted 1.
  std::optional<Modality> fixed_primary;

  bool any() const { return no_gdc || no_caps || no_pcca || fixed_primary.has_value(); }
  // "none", "no_gdc", "no_caps", "no_pcca", "fixed_l", ...; combined with '+'.
  std::string name() const;
  static Ablation parse(const std::string& s);
};

struct ModelConfig {
  // Input feature widths (l, a, v); taken from the dataset manifest.
  std::array<std::size_t, 3> input_dims{8, 8, 8};
  std::size_t d = 8;
  std::size_t pcca_depth = 3;
  std::size_t heads = 1;
  std::size_t routing_iters = 3;
  std::size_t gcn_layers = 1;
  gdc::CapsuleMode capsule_mode = gdc::CapsuleMode::shared;
  // Upper bound on J (the language length).
  std::size_t max_nodes = 64;
  // Longest acoustic/visual sequence accepted by full-mode capsules.
  std::size_t max_len = 64;
  Ablation ablation;
  double alpha = 0.1;
  double tau = 1.0;

  void validate() const;
  json to_json() const;
  // Rejects unknown keys.
  static ModelConfig from_json(const json& j);
  // FNV-1a 64 over the canonical JSON text.
  std::uint64_t fingerprint() const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  double weight_decay = 0.0;
  std::size_t patience = 25;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  double dropout = 0.0;

  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& j);
};

/// All trainable parameters of one MODS model.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  // Stable order; names are unique module paths.
  const ParamList& parameters() const { return params_; }
  Parameter* find(const std::string& name) const;
  void initialize(std::uint64_t seed);

  struct Forward {
    Var y;  // 1×1
    mselector::SelectionOutcome selection;
    Var h_p;  // aggregated fused vector, 1×d
    Var h_l;
    Var h_a;
    Var h_v;
    // Compressed (T_l × d) sequences before weighting.
    Var seq_l;
    Var seq_a;
    Var seq_v;
  };

  Forward forward(Tape& tape, const MultimodalSample& sample, const Dropout& drop = {}) const;
  // Same computation with caller-provided feature nodes (used by grad checks on inputs).
  Forward forward(Tape& tape, Var x_l, Var x_a, Var x_v, const Dropout& drop = {}) const;

  // Union loss over a batch of samples: MAE + α·L_NCE.
  struct BatchLoss {
    Var total;
    Var reg;
    Var nce;
    std::vector<Forward> outputs;
  };
  BatchLoss batch_loss(Tape& tape, const std::vector<const MultimodalSample*>& batch, const Dropout& drop = {}) const;

 private:
  Var compress(Tape& tape, Var x, Modality m, std::size_t J) const;

  ModelConfig config_;
  Linear proj_l_;
  std::optional<gdc::GdcParams> gdc_a_, gdc_v_;
  std::optional<Linear> bypass_a_, bypass_v_;
  mselector::MSelectorParams selector_;
  std::vector<pcca::PccaLayerParams> pcca_;
  mselector::AggregationParams agg_out_;
  Linear head_hidden_;
  Linear head_out_;
  objective::ReverseMaps reverse_;
  ParamList params_;
};

struct EarlyStopState {
  double best_val = 0.0;
  std::size_t best_epoch = 0;
  std::size_t bad_epochs = 0;
  bool has_best = false;
};

/// Everything needed to reproduce forward passes and resume training.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> adam_m;
  std::vector<std::pair<std::string, Tensor>> adam_v;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  EarlyStopState early;
  // Loss of the untrained model, carried along so resumed runs report it.
  double initial_train_loss = 0.0;
  std::vector<std::pair<std::string, Tensor>> best_params;
  std::string rng_state;
  // Per-epoch records so far, as written by epoch_to_json.
  json history = json::array();
  bool finished = false;

  // Model holding `params` (or `best_params` when asked).
  void load_into(Model& model, bool best = false) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on corruption or version mismatch, ConfigError when
/// `expected` is given and its fingerprint differs.
Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source, const ModelConfig* expected = nullptr);

/// Adam with decoupled weight decay; values and moments kept float32-exact.
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  void init(const ParamList& params);
  void update(const ParamList& params, const std::vector<Tensor>& grads);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_mae = 0.0;
  double train_nce = 0.0;
  double val_mae = 0.0;
  double val_corr = 0.0;
  bool improved = false;
};

struct TrainResult {
  Checkpoint best;  // parameters from the best validation epoch
  Checkpoint last;  // state after the final completed epoch
  std::vector<EpochRecord> history;
  bool early_stopped = false;
  bool diverged = false;
  std::string divergence;
  double initial_train_loss = 0.0;
};

struct TrainOptions {
  std::string train_split = "train";
  std::string val_split = "val";
  // Continue from this state; max_epochs counts from epoch 0.
  const Checkpoint* resume = nullptr;
  // Called after each epoch (progress reporting).
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainResult train(const Dataset& data, const ModelConfig& mcfg, const TrainConfig& tcfg, const TrainOptions& opts = {});

struct SelectionRow {
  std::string id;
  std::array<double, 3> weights{};  // (a, l, v)
  Modality primary = Modality::language;
  std::optional<Modality> planted;
  double y_true = 0.0;
  double y_pred = 0.0;
};

struct EvalResult {
  objective::MetricReport metrics;
  std::vector<SelectionRow> rows;
};

EvalResult evaluate(const Model& model, const Dataset& data, const std::string& split);
EvalResult evaluate(const Dataset& data, const std::string& split, const Checkpoint& ckpt, bool best = false);

json epoch_to_json(const EpochRecord& r);
EpochRecord epoch_from_json(const json& j);
json history_to_json(const TrainResult& result, const ModelConfig& mcfg, const TrainConfig& tcfg);
std::string selections_csv(const std::vector<SelectionRow>& rows);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 1469598103934665603ull);

}  // namespace mods::trainer
