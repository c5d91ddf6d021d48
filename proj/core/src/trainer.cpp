#include "fdrnn/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "fdrnn/gradients.hpp"
#include "fdrnn/losses.hpp"

namespace fdrnn {

namespace {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <class S>
RnnParams<S> init_params(const RunConfig& cfg, int input_dim, int output_dim,
                         std::mt19937_64& rng) {
  const int gamma = cfg.hidden_units;
  InitSpec spec{cfg.rho_target, cfg.nu, cfg.init_sigma2_rec_out,
                cfg.b_y_const};
  RnnParams<S> p = RnnParams<S>::zeros(input_dim, gamma, output_dim);
  p.w_rec = init_recurrent(spec, gamma, rng).template cast<S>();
  std::normal_distribution<double> n_in(0.0, std::sqrt(cfg.init_sigma2_in));
  for (Eigen::Index j = 0; j < p.w_in.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.w_in.rows(); ++i) p.w_in(i, j) = S(n_in(rng));
  }
  std::normal_distribution<double> n_out(0.0,
                                         std::sqrt(cfg.init_sigma2_rec_out));
  for (Eigen::Index j = 0; j < p.w_out.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.w_out.rows(); ++i) {
      p.w_out(i, j) = S(n_out(rng));
    }
  }
  p.b_y.setConstant(S(cfg.b_y_const));
  return p;
}

/// NLL over a whole chunk set, evaluated in deterministic index order and
/// weighted by batch rows.
template <class S>
double chunkset_nll(const RnnParams<S>& params, const RunConfig& cfg,
                    const ChunkedBatch& chunked) {
  const DropoutConfig drop = cfg.dropout();
  double total = 0.0;
  long rows = 0;
  const int n = static_cast<int>(chunked.chunks.size());
  for (int at = 0; at < n; at += cfg.batch_size) {
    std::vector<int> idx;
    for (int i = at; i < std::min(at + cfg.batch_size, n); ++i) {
      idx.push_back(i);
    }
    const auto batch = assemble_batch<S>(chunked, idx);
    const auto outputs =
        forward_fd(params, drop, cfg.transfer, TransferKind::Sigmoid, batch);
    total += double(sequence_bce_nll(outputs, batch.steps)) *
             double(idx.size());
    rows += static_cast<long>(idx.size());
  }
  return total / double(rows);
}

template <class S>
RunRecord train_impl(const RunConfig& cfg, const PianoRollDataset& dataset,
                     const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  RunRecord rec;
  rec.config = cfg;
  rec.best_valid_nll = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(cfg.seed);
  RnnParams<S> params =
      init_params<S>(cfg, dataset.dims, dataset.dims, rng);

  const ChunkedBatch train_chunks = chunk_split(
      dataset.train, dataset.dims, dataset.pitch_offset, cfg.chunk_len);
  const ChunkedBatch valid_chunks = chunk_split(
      dataset.valid, dataset.dims, dataset.pitch_offset, cfg.chunk_len);

  std::ofstream csv(out_dir / "metrics.csv");
  if (!csv) {
    throw std::runtime_error("train: cannot write metrics.csv in " +
                             out_dir.string());
  }
  csv << "epoch,step,train_nll,valid_nll,spectral_radius,wallclock_s\n";
  csv.flush();

  auto state = RmsPropState<S>::make(params.parameter_count(),
                                     S(cfg.step_rate), S(cfg.decay),
                                     S(cfg.momentum));
  VectorX<S> theta = params.flatten();
  const DropoutConfig drop = cfg.dropout();

  RnnParams<S> probe = params;
  long step_counter = 0;
  const auto t0 = std::chrono::steady_clock::now();

  auto log_row = [&](int epoch) {
    params.set_from_flat(theta);
    MetricsRow row;
    row.epoch = epoch;
    row.step = step_counter;
    row.train_nll = chunkset_nll(params, cfg, train_chunks);
    row.valid_nll = chunkset_nll(params, cfg, valid_chunks);
    row.spectral_radius = spectral_radius(params.w_rec);
    row.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    rec.metrics.push_back(row);
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.3f", row.wallclock_s);
    csv << row.epoch << ',' << row.step << ',' << fmt_g17(row.train_nll)
        << ',' << fmt_g17(row.valid_nll) << ',' << fmt_g17(row.spectral_radius)
        << ',' << wall << "\n";
    csv.flush();
    return row;
  };

  auto save_best = [&](double valid_nll, int epoch) {
    rec.best_valid_nll = valid_nll;
    rec.best_epoch = epoch;
    Checkpoint ck;
    ck.config = cfg;
    params.set_from_flat(theta);
    ck.params.w_in = params.w_in.template cast<double>();
    ck.params.w_rec = params.w_rec.template cast<double>();
    ck.params.w_out = params.w_out.template cast<double>();
    ck.params.b_h = params.b_h.template cast<double>();
    ck.params.b_y = params.b_y.template cast<double>();
    ck.params.h0 = params.h0.template cast<double>();
    std::ostringstream ss;
    ss << rng;
    ck.rng_state = ss.str();
    save_checkpoint(ck, out_dir / "best.ckpt");
  };

  // epoch 0: the initialized model, before any update
  {
    const MetricsRow row = log_row(0);
    if (std::isfinite(row.valid_nll)) save_best(row.valid_nll, 0);
  }

  for (int epoch = 1; epoch <= cfg.epochs && !rec.failed; ++epoch) {
    const auto batches = make_epoch_batches(
        static_cast<int>(train_chunks.chunks.size()), cfg.batch_size, rng);
    for (const auto& idx : batches) {
      const auto batch = assemble_batch<S>(train_chunks, idx);
      auto grad_fn = [&](const VectorX<S>& flat) {
        probe.set_from_flat(flat);
        return backward_fd(probe, drop, cfg.transfer, TransferKind::Sigmoid,
                           batch, batch.steps)
            .grads.flatten();
      };
      try {
        rmsprop_nesterov_step<S>(state, theta, grad_fn, S(kClipThreshold));
      } catch (const std::runtime_error& e) {
        rec.failed = true;
        rec.failure = e.what();
        break;
      }
      ++step_counter;
    }

    if (rec.failed || epoch % cfg.log_interval == 0 || epoch == cfg.epochs) {
      const MetricsRow row = log_row(epoch);
      if (!rec.failed && std::isfinite(row.valid_nll) &&
          row.valid_nll < rec.best_valid_nll) {
        save_best(row.valid_nll, epoch);
      }
    }
  }

  std::ofstream recfile(out_dir / "record.json");
  recfile << run_record_to_json(rec) << "\n";
  return rec;
}

template <class S>
double evaluate_impl(const Checkpoint& ck, const PianoRollDataset& dataset,
                     const std::string& split) {
  const RunConfig& cfg = ck.config;
  RnnParams<S> params;
  params.w_in = ck.params.w_in.cast<S>();
  params.w_rec = ck.params.w_rec.cast<S>();
  params.w_out = ck.params.w_out.cast<S>();
  params.b_h = ck.params.b_h.cast<S>();
  params.b_y = ck.params.b_y.cast<S>();
  params.h0 = ck.params.h0.cast<S>();

  const DropoutConfig drop = cfg.dropout();
  double total = 0.0;
  long scored = 0;
  for (const auto& seq : dataset.split(split)) {
    if (seq.size() < 2) continue;  // nothing to score
    const auto batch =
        sequence_as_batch<S>(seq, dataset.dims, dataset.pitch_offset);
    const auto outputs =
        forward_fd(params, drop, cfg.transfer, TransferKind::Sigmoid, batch);
    total += double(sequence_bce_nll(outputs, batch.steps));
    ++scored;
  }
  if (scored == 0) {
    throw std::runtime_error("evaluate: no scorable sequence in split " +
                             split);
  }
  return total / double(scored);
}

}  // namespace

RunRecord train(const RunConfig& cfg, const PianoRollDataset& dataset,
                const std::filesystem::path& out_dir) {
  cfg.validate();
  if (dataset.train.empty() || dataset.valid.empty()) {
    throw std::invalid_argument("train: dataset needs train and valid splits");
  }
  if (cfg.precision == Precision::F64) {
    return train_impl<double>(cfg, dataset, out_dir);
  }
  return train_impl<float>(cfg, dataset, out_dir);
}

double evaluate(const Checkpoint& ck, const PianoRollDataset& dataset,
                const std::string& split) {
  if (ck.config.precision == Precision::F64) {
    return evaluate_impl<double>(ck, dataset, split);
  }
  return evaluate_impl<float>(ck, dataset, split);
}

double marginal_baseline_nll(const PianoRollDataset& dataset,
                             const std::string& split) {
  VectorX<double> counts = VectorX<double>::Zero(dataset.dims);
  long steps = 0;
  for (const auto& seq : dataset.train) {
    const MatrixXu8 bin = to_binary(seq, dataset.dims, dataset.pitch_offset);
    for (Eigen::Index t = 0; t < bin.rows(); ++t) {
      for (int j = 0; j < dataset.dims; ++j) counts[j] += double(bin(t, j));
    }
    steps += static_cast<long>(bin.rows());
  }
  VectorX<double> rate = counts / double(steps);
  for (int j = 0; j < dataset.dims; ++j) {
    rate[j] = std::min(1.0 - kProbEps, std::max(kProbEps, rate[j]));
  }

  double total = 0.0;
  long scored = 0;
  for (const auto& seq : dataset.split(split)) {
    if (seq.size() < 2) continue;
    const MatrixXu8 bin = to_binary(seq, dataset.dims, dataset.pitch_offset);
    double nll = 0.0;
    for (Eigen::Index t = 1; t < bin.rows(); ++t) {
      for (int j = 0; j < dataset.dims; ++j) {
        const double x = double(bin(t, j));
        nll -= x * std::log(rate[j]) + (1.0 - x) * std::log(1.0 - rate[j]);
      }
    }
    total += nll / double(bin.rows() - 1);
    ++scored;
  }
  if (scored == 0) {
    throw std::runtime_error("marginal_baseline_nll: no scorable sequence");
  }
  return total / double(scored);
}

}  // namespace fdrnn
