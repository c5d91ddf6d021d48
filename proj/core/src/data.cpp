#include "fdrnn/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace fdrnn {

using nlohmann::json;

const std::vector<NoteSequence>& PianoRollDataset::split(
    const std::string& which) const {
  if (which == "train") return train;
  if (which == "valid") return valid;
  if (which == "test") return test;
  throw std::invalid_argument("unknown split: " + which);
}

namespace {

std::vector<NoteSequence> parse_split(const json& j, const std::string& name,
                                      int dims, int pitch_offset) {
  if (!j.is_array() || j.empty()) {
    throw std::runtime_error("dataset: split '" + name +
                             "' must be a non-empty array");
  }
  std::vector<NoteSequence> out;
  out.reserve(j.size());
  for (size_t s = 0; s < j.size(); ++s) {
    const json& jseq = j[s];
    if (!jseq.is_array() || jseq.empty()) {
      throw std::runtime_error("dataset: " + name + "[" + std::to_string(s) +
                               "] must be a non-empty sequence");
    }
    NoteSequence seq;
    seq.reserve(jseq.size());
    for (size_t t = 0; t < jseq.size(); ++t) {
      const json& jstep = jseq[t];
      if (!jstep.is_array()) {
        throw std::runtime_error("dataset: " + name + "[" + std::to_string(s) +
                                 "][" + std::to_string(t) +
                                 "] must be a pitch list");
      }
      std::vector<int> step;
      step.reserve(jstep.size());
      for (const json& jp : jstep) {
        if (!jp.is_number_integer()) {
          throw std::runtime_error("dataset: non-integer pitch in " + name +
                                   "[" + std::to_string(s) + "][" +
                                   std::to_string(t) + "]");
        }
        const int q = jp.get<int>();
        if (q < pitch_offset || q - pitch_offset >= dims) {
          throw std::runtime_error(
              "dataset: pitch " + std::to_string(q) + " out of range in " +
              name + "[" + std::to_string(s) + "][" + std::to_string(t) + "]");
        }
        step.push_back(q);
      }
      seq.push_back(std::move(step));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace

PianoRollDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("dataset: cannot open " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("dataset: " + path.string() + ": " + e.what());
  }

  PianoRollDataset ds;
  ds.name = j.value("name", path.stem().string());
  ds.dims = j.value("dims", 88);
  ds.pitch_offset = j.value("pitch_offset", 21);
  if (ds.dims <= 0) {
    throw std::runtime_error("dataset: dims must be positive");
  }
  if (!j.contains("splits")) {
    throw std::runtime_error("dataset: missing 'splits'");
  }
  const json& splits = j["splits"];
  for (const char* name : {"train", "valid", "test"}) {
    if (!splits.contains(name)) {
      throw std::runtime_error(std::string("dataset: missing split '") + name +
                               "'");
    }
  }
  ds.train = parse_split(splits["train"], "train", ds.dims, ds.pitch_offset);
  ds.valid = parse_split(splits["valid"], "valid", ds.dims, ds.pitch_offset);
  ds.test = parse_split(splits["test"], "test", ds.dims, ds.pitch_offset);
  return ds;
}

void save_dataset(const PianoRollDataset& ds,
                  const std::filesystem::path& path) {
  json j;
  j["name"] = ds.name;
  j["dims"] = ds.dims;
  j["pitch_offset"] = ds.pitch_offset;
  auto dump_split = [](const std::vector<NoteSequence>& split) {
    json arr = json::array();
    for (const auto& seq : split) {
      json jseq = json::array();
      for (const auto& step : seq) jseq.push_back(step);
      arr.push_back(std::move(jseq));
    }
    return arr;
  };
  j["splits"]["train"] = dump_split(ds.train);
  j["splits"]["valid"] = dump_split(ds.valid);
  j["splits"]["test"] = dump_split(ds.test);

  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("dataset: cannot write " + path.string());
  }
  out << j.dump() << "\n";
}

MatrixXu8 to_binary(const NoteSequence& seq, int dims, int pitch_offset) {
  MatrixXu8 m = MatrixXu8::Zero(static_cast<Eigen::Index>(seq.size()), dims);
  for (size_t t = 0; t < seq.size(); ++t) {
    for (int q : seq[t]) {
      const int idx = q - pitch_offset;
      if (idx < 0 || idx >= dims) {
        throw std::invalid_argument("to_binary: pitch " + std::to_string(q) +
                                    " out of range");
      }
      m(static_cast<Eigen::Index>(t), idx) = 1;
    }
  }
  return m;
}

ChunkedBatch chunk_split(const std::vector<NoteSequence>& sequences, int dims,
                         int pitch_offset, int chunk_len) {
  if (chunk_len < 2) {
    throw std::invalid_argument("chunk_split: chunk_len must be >= 2");
  }
  ChunkedBatch out;
  out.chunk_len = chunk_len;
  out.dims = dims;
  for (size_t s = 0; s < sequences.size(); ++s) {
    const MatrixXu8 bin = to_binary(sequences[s], dims, pitch_offset);
    const int t_total = static_cast<int>(bin.rows());
    for (int start = 0; start < t_total; start += chunk_len) {
      const int len = std::min(chunk_len, t_total - start);
      Chunk c;
      c.seq_id = static_cast<int>(s);
      c.offset = start;
      c.valid_len = len;
      c.data = MatrixXu8::Zero(chunk_len, dims);
      c.data.bottomRows(len) = bin.middleRows(start, len);
      out.chunks.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<std::vector<int>> make_epoch_batches(int n_chunks, int batch_size,
                                                 std::mt19937_64& rng) {
  if (batch_size < 1) {
    throw std::invalid_argument("make_epoch_batches: batch_size must be >= 1");
  }
  std::vector<int> order(static_cast<size_t>(n_chunks));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> batches;
  for (int at = 0; at < n_chunks; at += batch_size) {
    const int len = std::min(batch_size, n_chunks - at);
    batches.emplace_back(order.begin() + at, order.begin() + at + len);
  }
  return batches;
}

}  // namespace fdrnn
