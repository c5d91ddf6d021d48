#ifndef FDRNN_SEARCH_HPP
#define FDRNN_SEARCH_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fdrnn/trainer.hpp"

namespace fdrnn {

/// One finite candidate set per sampled hyperparameter; run settings that
/// are not searched over (chunking, batching, epochs, precision) are single
/// values.
struct SearchSpace {
  std::vector<int> hidden_units{200, 400, 600};
  std::vector<std::string> transfer{"tanh"};
  // keep probabilities (complements of the dropout rates)
  std::vector<double> p_in{1.0, 0.9, 0.8};
  std::vector<double> p_hid{1.0, 0.9, 0.8, 0.7, 0.6, 0.5};
  std::vector<double> p_out{1.0, 0.8, 0.5};
  std::vector<bool> fd_final_layer{true, false};
  std::vector<double> step_rate{0.01, 0.005, 0.001, 0.0005, 0.0001, 0.00001};
  std::vector<double> momentum{0.0, 0.9, 0.95, 0.99, 0.995};
  std::vector<double> decay{0.8, 0.9};
  std::vector<double> init_sigma2_rec_out{0.1, 0.01, 0.001, 0.0001};
  std::vector<double> init_sigma2_in{0.1, 0.01, 0.001, 0.0001};
  std::vector<double> rho_target{1.0, 1.05, 1.1, 1.2};
  std::vector<std::optional<int>> nu{15, 25, 35, 50, std::nullopt};
  std::vector<double> b_y_const{-0.8};

  int chunk_len = 100;
  int batch_size = 64;
  int epochs = 100;
  Precision precision = Precision::F32;
  int log_interval = 1;

  void validate() const;
};

std::string search_space_to_json(const SearchSpace& space);
SearchSpace search_space_from_json(const std::string& text);
SearchSpace load_search_space(const std::filesystem::path& path);

/// One configuration drawn uniformly and independently per candidate set.
RunConfig sample_config(const SearchSpace& space, std::mt19937_64& rng);

/// Deterministic per-run seed stream derived from (master_seed, run index).
std::uint64_t derive_run_seed(std::uint64_t master_seed, int run_index);

struct SearchResult {
  std::vector<RunRecord> records;
  int best_index = -1;  // -1 when every run failed
};

/// Sample n_runs configs, train each under <out_dir>/run_<i>, select the
/// lowest validation NLL (ties -> earliest run index) and evaluate that
/// model's test NLL on the unsplit test sequences.  Non-selected runs never
/// touch the test split.  Runs execute on `jobs` worker threads, each with
/// its own derived seed.
SearchResult random_search(const SearchSpace& space, int n_runs,
                           const PianoRollDataset& dataset,
                           const std::filesystem::path& out_dir,
                           std::uint64_t master_seed, int jobs = 1);

}  // namespace fdrnn

#endif  // FDRNN_SEARCH_HPP
