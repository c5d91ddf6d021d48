// Command line driver: training runs, random hyperparameter search,
// checkpoint evaluation, loss-field export and spectral-radius inspection.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fdrnn/losses.hpp"
#include "fdrnn/search.hpp"
#include "fdrnn/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, long long seed, bool seed_given) {
  fdrnn::RunConfig cfg = fdrnn::load_run_config(config_path);
  if (seed_given) cfg.seed = static_cast<std::uint64_t>(seed);
  const auto dataset = fdrnn::load_dataset(data_path);
  const auto rec = fdrnn::train(cfg, dataset, out_dir);
  if (rec.failed) {
    std::cerr << "run failed: " << rec.failure << "\n";
    return 1;
  }
  std::cout << "best_valid_nll " << g17(rec.best_valid_nll) << " at epoch "
            << rec.best_epoch << "\n";
  return 0;
}

int cmd_search(const std::string& space_path, int runs,
               const std::string& data_path, const std::string& out_dir,
               long long seed, int jobs) {
  const auto space = space_path.empty()
                         ? fdrnn::SearchSpace{}
                         : fdrnn::load_search_space(space_path);
  const auto dataset = fdrnn::load_dataset(data_path);
  const auto result = fdrnn::random_search(
      space, runs, dataset, out_dir, static_cast<std::uint64_t>(seed), jobs);
  if (result.best_index < 0) {
    std::cerr << "all runs failed\n";
    return 1;
  }
  const auto& best = result.records[size_t(result.best_index)];
  std::cout << "best run " << result.best_index << " valid_nll "
            << g17(best.best_valid_nll) << " test_nll " << g17(*best.test_nll)
            << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& split) {
  const auto ck = fdrnn::load_checkpoint(ckpt_path);
  const auto dataset = fdrnn::load_dataset(data_path);
  std::cout << g17(fdrnn::evaluate(ck, dataset, split)) << "\n";
  return 0;
}

int cmd_field(const std::string& loss, double target,
              const std::string& out_path, const fdrnn::GridSpec& mean_grid,
              const fdrnn::GridSpec& var_grid) {
  const auto rows = fdrnn::loss_field(fdrnn::loss_kind_from_string(loss),
                                      target, mean_grid, var_grid);
  std::ofstream out(out_path);
  if (!out) {
    throw std::runtime_error("field: cannot write " + out_path);
  }
  out << "mean,var,loss,dloss_dmean,dloss_dvar\n";
  for (const auto& r : rows) {
    out << g17(r.mean) << ',' << g17(r.var) << ',' << g17(r.loss) << ','
        << g17(r.d_mean) << ',' << g17(r.d_var) << "\n";
  }
  std::cout << rows.size() << " rows -> " << out_path << "\n";
  return 0;
}

int cmd_spectrum(const std::string& ckpt_path) {
  const auto ck = fdrnn::load_checkpoint(ckpt_path);
  std::cout << g17(fdrnn::spectral_radius(ck.params.w_rec)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fast-dropout recurrent network trainer"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir, space_path, ckpt_path;
  std::string split = "test", loss = "bernoulli";
  long long seed = 0;
  int runs = 32, jobs = 1;
  double target = 0.2;
  fdrnn::GridSpec mean_grid{-3.0, 3.0, 50};
  fdrnn::GridSpec var_grid{0.01, 4.0, 50};

  auto* train = app.add_subcommand("train", "run one training job");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--data", data_path, "dataset JSON")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  auto* seed_opt = train->add_option("--seed", seed, "overrides config seed");

  auto* search = app.add_subcommand("search", "random hyperparameter search");
  search->add_option("--space", space_path,
                     "search space JSON (omit for the default grid)");
  search->add_option("--runs", runs, "number of runs")->required();
  search->add_option("--data", data_path, "dataset JSON")->required();
  search->add_option("--out", out_dir, "output directory")->required();
  search->add_option("--seed", seed, "master seed")->required();
  search->add_option("--jobs", jobs, "concurrent runs");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  eval->add_option("--data", data_path, "dataset JSON")->required();
  eval->add_option("--split", split, "train|valid|test")->required();

  auto* field = app.add_subcommand("field", "export a unit loss field CSV");
  field->add_option("--loss", loss, "squared|gaussian|bernoulli")->required();
  field->add_option("--target", target, "target value");
  field->add_option("--out", out_dir, "output CSV path")->required();
  field->add_option("--mean-min", mean_grid.lo);
  field->add_option("--mean-max", mean_grid.hi);
  field->add_option("--mean-count", mean_grid.count);
  field->add_option("--var-min", var_grid.lo);
  field->add_option("--var-max", var_grid.hi);
  field->add_option("--var-count", var_grid.count);

  auto* spectrum =
      app.add_subcommand("spectrum", "spectral radius of a checkpoint");
  spectrum->add_option("--checkpoint", ckpt_path, "checkpoint path")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(config_path, data_path, out_dir, seed,
                       seed_opt->count() > 0);
    }
    if (search->parsed()) {
      return cmd_search(space_path, runs, data_path, out_dir, seed, jobs);
    }
    if (eval->parsed()) return cmd_eval(ckpt_path, data_path, split);
    if (field->parsed()) {
      return cmd_field(loss, target, out_dir, mean_grid, var_grid);
    }
    if (spectrum->parsed()) return cmd_spectrum(ckpt_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
