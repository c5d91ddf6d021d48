#include <fstream>
#include <sstream>

#include "fdrnn/trainer.hpp"
#include "json.hpp"

namespace fdrnn {

using nlohmann::json;

void RunConfig::validate() const {
  if (hidden_units < 1) {
    throw std::invalid_argument("RunConfig: hidden_units must be >= 1");
  }
  KeepProb{p_in};
  KeepProb{p_hid};
  KeepProb{p_out};
  if (!(step_rate > 0.0)) {
    throw std::invalid_argument("RunConfig: step_rate must be > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("RunConfig: momentum must be in [0, 1)");
  }
  if (!(decay > 0.0 && decay < 1.0)) {
    throw std::invalid_argument("RunConfig: decay must be in (0, 1)");
  }
  if (!(init_sigma2_rec_out > 0.0) || !(init_sigma2_in > 0.0)) {
    throw std::invalid_argument("RunConfig: init variances must be > 0");
  }
  if (!(rho_target > 0.0)) {
    throw std::invalid_argument("RunConfig: rho_target must be > 0");
  }
  if (nu && *nu < 1) {
    throw std::invalid_argument("RunConfig: nu must be >= 1");
  }
  if (chunk_len < 2) {
    throw std::invalid_argument("RunConfig: chunk_len must be >= 2");
  }
  if (batch_size < 1 || epochs < 1 || log_interval < 1) {
    throw std::invalid_argument("RunConfig: batch_size/epochs/log_interval");
  }
}

namespace {

json config_to_json_obj(const RunConfig& c) {
  json j;
  j["hidden_units"] = c.hidden_units;
  j["transfer"] = to_string(c.transfer);
  j["p_in"] = c.p_in;
  j["p_hid"] = c.p_hid;
  j["p_out"] = c.p_out;
  j["fd_final_layer"] = c.fd_final_layer;
  j["step_rate"] = c.step_rate;
  j["momentum"] = c.momentum;
  j["decay"] = c.decay;
  j["init_sigma2_rec_out"] = c.init_sigma2_rec_out;
  j["init_sigma2_in"] = c.init_sigma2_in;
  j["rho_target"] = c.rho_target;
  if (c.nu) j["nu"] = *c.nu; else j["nu"] = nullptr;
  j["b_y_const"] = c.b_y_const;
  j["chunk_len"] = c.chunk_len;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["precision"] = to_string(c.precision);
  j["log_interval"] = c.log_interval;
  return j;
}

RunConfig config_from_json_obj(const json& j) {
  RunConfig c;
  c.hidden_units = j.at("hidden_units").get<int>();
  c.transfer = transfer_from_string(j.value("transfer", "tanh"));
  c.p_in = j.at("p_in").get<double>();
  c.p_hid = j.at("p_hid").get<double>();
  c.p_out = j.at("p_out").get<double>();
  c.fd_final_layer = j.at("fd_final_layer").get<bool>();
  c.step_rate = j.at("step_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.decay = j.at("decay").get<double>();
  c.init_sigma2_rec_out = j.at("init_sigma2_rec_out").get<double>();
  c.init_sigma2_in = j.at("init_sigma2_in").get<double>();
  c.rho_target = j.at("rho_target").get<double>();
  if (j.contains("nu") && !j["nu"].is_null()) c.nu = j["nu"].get<int>();
  c.b_y_const = j.value("b_y_const", -0.8);
  c.chunk_len = j.value("chunk_len", 100);
  c.batch_size = j.value("batch_size", 64);
  c.epochs = j.value("epochs", 100);
  c.seed = j.value("seed", std::uint64_t(0));
  c.precision = precision_from_string(j.value("precision", "f32"));
  c.log_interval = j.value("log_interval", 1);
  c.validate();
  return c;
}

json matrix_to_json(const MatrixX<double>& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixX<double> matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  MatrixX<double> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(i, c) = j[size_t(i)][size_t(c)].get<double>();
    }
  }
  return m;
}

json vector_to_json(const VectorX<double>& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

VectorX<double> vector_from_json(const json& j) {
  VectorX<double> v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[size_t(i)].get<double>();
  return v;
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) {
  return config_to_json_obj(cfg).dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
  return config_from_json_obj(json::parse(text));
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("config: cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

std::string run_record_to_json(const RunRecord& rec) {
  json j;
  j["config"] = config_to_json_obj(rec.config);
  j["failed"] = rec.failed;
  j["failure"] = rec.failure;
  j["best_valid_nll"] = rec.best_valid_nll;
  j["best_epoch"] = rec.best_epoch;
  if (rec.test_nll) j["test_nll"] = *rec.test_nll; else j["test_nll"] = nullptr;
  j["run_index"] = rec.run_index;
  json rows = json::array();
  for (const auto& m : rec.metrics) {
    rows.push_back({{"epoch", m.epoch},
                    {"step", m.step},
                    {"train_nll", m.train_nll},
                    {"valid_nll", m.valid_nll},
                    {"spectral_radius", m.spectral_radius},
                    {"wallclock_s", m.wallclock_s}});
  }
  j["metrics"] = std::move(rows);
  return j.dump(2);
}

RunRecord run_record_from_json(const std::string& text) {
  const json j = json::parse(text);
  RunRecord rec;
  rec.config = config_from_json_obj(j.at("config"));
  rec.failed = j.value("failed", false);
  rec.failure = j.value("failure", "");
  rec.best_valid_nll = j.value("best_valid_nll", 0.0);
  rec.best_epoch = j.value("best_epoch", -1);
  if (j.contains("test_nll") && !j["test_nll"].is_null()) {
    rec.test_nll = j["test_nll"].get<double>();
  }
  rec.run_index = j.value("run_index", 0);
  for (const auto& row : j.value("metrics", json::array())) {
    MetricsRow m;
    m.epoch = row.at("epoch").get<int>();
    m.step = row.at("step").get<long>();
    m.train_nll = row.at("train_nll").get<double>();
    m.valid_nll = row.at("valid_nll").get<double>();
    m.spectral_radius = row.at("spectral_radius").get<double>();
    m.wallclock_s = row.at("wallclock_s").get<double>();
    rec.metrics.push_back(m);
  }
  return rec;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  json j;
  j["magic"] = kCheckpointMagic;
  j["config"] = config_to_json_obj(ck.config);
  j["rng"] = ck.rng_state;
  j["params"]["w_in"] = matrix_to_json(ck.params.w_in);
  j["params"]["w_rec"] = matrix_to_json(ck.params.w_rec);
  j["params"]["w_out"] = matrix_to_json(ck.params.w_out);
  j["params"]["b_h"] = vector_to_json(ck.params.b_h);
  j["params"]["b_y"] = vector_to_json(ck.params.b_y);
  j["params"]["h0"] = vector_to_json(ck.params.h0);

  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("checkpoint: cannot write " + path.string());
  }
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("checkpoint: cannot open " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("checkpoint: " + path.string() + ": " + e.what());
  }
  if (j.value("magic", "") != kCheckpointMagic) {
    throw std::runtime_error("checkpoint: bad or missing magic in " +
                             path.string());
  }
  Checkpoint ck;
  ck.config = config_from_json_obj(j.at("config"));
  ck.rng_state = j.value("rng", "");
  const json& p = j.at("params");
  ck.params.w_in = matrix_from_json(p.at("w_in"));
  ck.params.w_rec = matrix_from_json(p.at("w_rec"));
  ck.params.w_out = matrix_from_json(p.at("w_out"));
  ck.params.b_h = vector_from_json(p.at("b_h"));
  ck.params.b_y = vector_from_json(p.at("b_y"));
  ck.params.h0 = vector_from_json(p.at("h0"));
  ck.params.validate();
  return ck;
}

}  // namespace fdrnn
