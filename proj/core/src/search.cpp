#include "fdrnn/search.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace fdrnn {

using nlohmann::json;

void SearchSpace::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) {
      throw std::invalid_argument(std::string("SearchSpace: empty set: ") +
                                  what);
    }
  };
  need(!hidden_units.empty(), "hidden_units");
  need(!transfer.empty(), "transfer");
  need(!p_in.empty(), "p_in");
  need(!p_hid.empty(), "p_hid");
  need(!p_out.empty(), "p_out");
  need(!fd_final_layer.empty(), "fd_final_layer");
  need(!step_rate.empty(), "step_rate");
  need(!momentum.empty(), "momentum");
  need(!decay.empty(), "decay");
  need(!init_sigma2_rec_out.empty(), "init_sigma2_rec_out");
  need(!init_sigma2_in.empty(), "init_sigma2_in");
  need(!rho_target.empty(), "rho_target");
  need(!nu.empty(), "nu");
  need(!b_y_const.empty(), "b_y_const");
}

namespace {

template <class T>
T pick(const std::vector<T>& set, std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> d(0, set.size() - 1);
  return set[d(rng)];
}

}  // namespace

RunConfig sample_config(const SearchSpace& space, std::mt19937_64& rng) {
  space.validate();
  RunConfig c;
  c.hidden_units = pick(space.hidden_units, rng);
  c.transfer = transfer_from_string(pick(space.transfer, rng));
  c.p_in = pick(space.p_in, rng);
  c.p_hid = pick(space.p_hid, rng);
  c.p_out = pick(space.p_out, rng);
  c.fd_final_layer = pick(space.fd_final_layer, rng);
  c.step_rate = pick(space.step_rate, rng);
  c.momentum = pick(space.momentum, rng);
  c.decay = pick(space.decay, rng);
  c.init_sigma2_rec_out = pick(space.init_sigma2_rec_out, rng);
  c.init_sigma2_in = pick(space.init_sigma2_in, rng);
  c.rho_target = pick(space.rho_target, rng);
  c.nu = pick(space.nu, rng);
  c.b_y_const = pick(space.b_y_const, rng);
  c.chunk_len = space.chunk_len;
  c.batch_size = space.batch_size;
  c.epochs = space.epochs;
  c.precision = space.precision;
  c.log_interval = space.log_interval;
  c.validate();
  return c;
}

std::uint64_t derive_run_seed(std::uint64_t master_seed, int run_index) {
  // splitmix64 over master_seed advanced by the run index
  std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ULL *
                                      (std::uint64_t(run_index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string search_space_to_json(const SearchSpace& s) {
  json j;
  j["hidden_units"] = s.hidden_units;
  j["transfer"] = s.transfer;
  j["p_in"] = s.p_in;
  j["p_hid"] = s.p_hid;
  j["p_out"] = s.p_out;
  j["fd_final_layer"] = s.fd_final_layer;
  j["step_rate"] = s.step_rate;
  j["momentum"] = s.momentum;
  j["decay"] = s.decay;
  j["init_sigma2_rec_out"] = s.init_sigma2_rec_out;
  j["init_sigma2_in"] = s.init_sigma2_in;
  j["rho_target"] = s.rho_target;
  json nus = json::array();
  for (const auto& n : s.nu) {
    if (n) nus.push_back(*n); else nus.push_back(nullptr);
  }
  j["nu"] = std::move(nus);
  j["b_y_const"] = s.b_y_const;
  j["chunk_len"] = s.chunk_len;
  j["batch_size"] = s.batch_size;
  j["epochs"] = s.epochs;
  j["precision"] = to_string(s.precision);
  j["log_interval"] = s.log_interval;
  return j.dump(2);
}

SearchSpace search_space_from_json(const std::string& text) {
  const json j = json::parse(text);
  SearchSpace s;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("hidden_units", s.hidden_units);
  get("transfer", s.transfer);
  get("p_in", s.p_in);
  get("p_hid", s.p_hid);
  get("p_out", s.p_out);
  get("fd_final_layer", s.fd_final_layer);
  get("step_rate", s.step_rate);
  get("momentum", s.momentum);
  get("decay", s.decay);
  get("init_sigma2_rec_out", s.init_sigma2_rec_out);
  get("init_sigma2_in", s.init_sigma2_in);
  get("rho_target", s.rho_target);
  if (j.contains("nu")) {
    s.nu.clear();
    for (const auto& n : j.at("nu")) {
      if (n.is_null()) s.nu.push_back(std::nullopt);
      else s.nu.push_back(n.get<int>());
    }
  }
  get("b_y_const", s.b_y_const);
  get("chunk_len", s.chunk_len);
  get("batch_size", s.batch_size);
  get("epochs", s.epochs);
  if (j.contains("precision")) {
    s.precision = precision_from_string(j.at("precision").get<std::string>());
  }
  get("log_interval", s.log_interval);
  s.validate();
  return s;
}

SearchSpace load_search_space(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("search space: cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return search_space_from_json(ss.str());
}

SearchResult random_search(const SearchSpace& space, int n_runs,
                           const PianoRollDataset& dataset,
                           const std::filesystem::path& out_dir,
                           std::uint64_t master_seed, int jobs) {
  if (n_runs < 1) {
    throw std::invalid_argument("random_search: n_runs must be >= 1");
  }
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  // All configs are drawn up front from the master stream so that the
  // sampled list depends only on master_seed.
  std::mt19937_64 master(master_seed);
  std::vector<RunConfig> configs;
  configs.reserve(size_t(n_runs));
  for (int i = 0; i < n_runs; ++i) {
    RunConfig c = sample_config(space, master);
    c.seed = derive_run_seed(master_seed, i);
    configs.push_back(c);
  }

  SearchResult result;
  result.records.resize(size_t(n_runs));

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_runs) return;
      char sub[32];
      std::snprintf(sub, sizeof(sub), "run_%03d", i);
      RunRecord rec;
      try {
        rec = train(configs[size_t(i)], dataset, out_dir / sub);
      } catch (const std::exception& e) {
        rec.config = configs[size_t(i)];
        rec.failed = true;
        rec.failure = e.what();
      }
      rec.run_index = i;
      result.records[size_t(i)] = std::move(rec);
    }
  };

  const int n_threads = std::max(1, std::min(jobs, n_runs));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  // Lowest validation NLL wins; ties break to the earliest run index.
  for (int i = 0; i < n_runs; ++i) {
    const RunRecord& r = result.records[size_t(i)];
    if (r.failed || !std::isfinite(r.best_valid_nll)) continue;
    if (result.best_index < 0 ||
        r.best_valid_nll <
            result.records[size_t(result.best_index)].best_valid_nll) {
      result.best_index = i;
    }
  }

  if (result.best_index >= 0) {
    char sub[32];
    std::snprintf(sub, sizeof(sub), "run_%03d", result.best_index);
    const Checkpoint best = load_checkpoint(out_dir / sub / "best.ckpt");
    const double test_nll = evaluate(best, dataset, "test");
    RunRecord& r = result.records[size_t(result.best_index)];
    r.test_nll = test_nll;
    std::ofstream recfile(out_dir / sub / "record.json");
    recfile << run_record_to_json(r) << "\n";
  }

  json summary;
  summary["master_seed"] = master_seed;
  summary["n_runs"] = n_runs;
  summary["best_index"] = result.best_index;
  if (result.best_index >= 0) {
    const RunRecord& r = result.records[size_t(result.best_index)];
    summary["best_valid_nll"] = r.best_valid_nll;
    summary["test_nll"] = *r.test_nll;
  }
  json runs = json::array();
  for (const auto& r : result.records) {
    runs.push_back({{"run_index", r.run_index},
                    {"failed", r.failed},
                    {"best_valid_nll", r.best_valid_nll},
                    {"best_epoch", r.best_epoch}});
  }
  summary["runs"] = std::move(runs);
  std::ofstream sumfile(out_dir / "summary.json");
  sumfile << summary.dump(2) << "\n";

  return result;
}

}  // namespace fdrnn
