#ifndef FDRNN_TRAINER_HPP
#define FDRNN_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fdrnn/data.hpp"
#include "fdrnn/network.hpp"
#include "fdrnn/optim.hpp"

namespace fdrnn {

enum class Precision { F32, F64 };

inline const char* to_string(Precision p) {
  return p == Precision::F32 ? "f32" : "f64";
}

inline Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw std::invalid_argument("unknown precision: " + s);
}

/// Everything one training run needs.  Weight initialization: W_rec through
/// init_recurrent with rho_target/nu and init_sigma2_rec_out, W_out Gaussian
/// with init_sigma2_rec_out, W_in Gaussian with init_sigma2_in, b_h = 0,
/// b_y = b_y_const, h0 = 0.
struct RunConfig {
  int hidden_units = 100;
  TransferKind transfer = TransferKind::Tanh;
  double p_in = 1.0;
  double p_hid = 1.0;
  double p_out = 1.0;
  bool fd_final_layer = true;
  double step_rate = 0.001;
  double momentum = 0.9;
  double decay = 0.9;
  double init_sigma2_rec_out = 0.01;
  double init_sigma2_in = 0.01;
  double rho_target = 1.1;
  std::optional<int> nu;
  double b_y_const = -0.8;
  int chunk_len = 100;
  int batch_size = 64;
  int epochs = 100;
  std::uint64_t seed = 0;
  Precision precision = Precision::F32;
  int log_interval = 1;  // epochs between metrics rows

  DropoutConfig dropout() const {
    return DropoutConfig{KeepProb(p_in), KeepProb(p_hid), KeepProb(p_out),
                         fd_final_layer};
  }
  void validate() const;
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Gradient clipping threshold used by the trainer.
inline constexpr double kClipThreshold = 225.0;

struct MetricsRow {
  int epoch = 0;
  long step = 0;
  double train_nll = 0.0;
  double valid_nll = 0.0;
  double spectral_radius = 0.0;
  double wallclock_s = 0.0;
};

struct RunRecord {
  RunConfig config;
  std::vector<MetricsRow> metrics;
  bool failed = false;
  std::string failure;
  double best_valid_nll = 0.0;
  int best_epoch = -1;
  std::optional<double> test_nll;
  int run_index = 0;
};

std::string run_record_to_json(const RunRecord& rec);
RunRecord run_record_from_json(const std::string& text);

/// Self-describing parameter container; params are stored as doubles
/// regardless of the run precision (exact for f32 values).
struct Checkpoint {
  RunConfig config;
  RnnParams<double> params;
  std::string rng_state;
};

inline constexpr const char* kCheckpointMagic = "FDRNN1";

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Run one training job: chunked train/valid data, rmsprop with Nesterov
/// momentum and clip threshold 225, metrics row every log_interval epochs
/// (train/valid NLL, rho(W_rec), wallclock), best-validation checkpoint at
/// <out_dir>/best.ckpt, metrics at <out_dir>/metrics.csv, record at
/// <out_dir>/record.json.  Divergence marks the run failed and keeps the
/// last good checkpoint.
RunRecord train(const RunConfig& cfg, const PianoRollDataset& dataset,
                const std::filesystem::path& out_dir);

/// Per-timestep NLL averaged within each unsplit sequence, then across
/// sequences of the split.
double evaluate(const Checkpoint& ck, const PianoRollDataset& dataset,
                const std::string& split);

/// NLL of the constant per-note Bernoulli predictor whose rates are the
/// train-split note frequencies; scored like evaluate().
double marginal_baseline_nll(const PianoRollDataset& dataset,
                             const std::string& split);

}  // namespace fdrnn

#endif  // FDRNN_TRAINER_HPP
