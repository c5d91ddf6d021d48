#ifndef FDRNN_DATA_HPP
#define FDRNN_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fdrnn/network.hpp"

namespace fdrnn {

using MatrixXu8 = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// One sequence as a list of timesteps, each the list of active pitches.
using NoteSequence = std::vector<std::vector<int>>;

/// Train/valid/test splits of binary note sequences.  Pitches q map to
/// vector index q - pitch_offset.
struct PianoRollDataset {
  std::string name;
  int dims = 88;
  int pitch_offset = 21;
  std::vector<NoteSequence> train;
  std::vector<NoteSequence> valid;
  std::vector<NoteSequence> test;

  const std::vector<NoteSequence>& split(const std::string& which) const;
};

/// Parse and validate the dataset JSON document; rejects malformed files,
/// out-of-range pitches and empty splits with the offending location.
PianoRollDataset load_dataset(const std::filesystem::path& path);

void save_dataset(const PianoRollDataset& ds,
                  const std::filesystem::path& path);

/// Multi-hot T x dims binary matrix of one sequence.
MatrixXu8 to_binary(const NoteSequence& seq, int dims, int pitch_offset);

/// One fixed-length segment plus where it came from.  Padded all-zero rows
/// precede the real data; valid_len counts the real rows.
struct Chunk {
  MatrixXu8 data;
  int seq_id = 0;
  int offset = 0;     // start of the segment within the source sequence
  int valid_len = 0;
};

struct ChunkedBatch {
  std::vector<Chunk> chunks;
  int chunk_len = 0;
  int dims = 0;
};

/// Cut every sequence into consecutive chunk_len segments; a short final
/// segment is zero-prepended to exactly chunk_len rows.
ChunkedBatch chunk_split(const std::vector<NoteSequence>& sequences, int dims,
                         int pitch_offset, int chunk_len = 100);

/// Shuffled minibatch index sets for one epoch.
std::vector<std::vector<int>> make_epoch_batches(int n_chunks, int batch_size,
                                                 std::mt19937_64& rng);

/// Assemble the chosen chunks into a step-major sequence batch.
template <class S>
SequenceBatch<S> assemble_batch(const ChunkedBatch& chunked,
                                const std::vector<int>& indices) {
  if (indices.empty()) {
    throw std::invalid_argument("assemble_batch: empty index set");
  }
  const int t_len = chunked.chunk_len;
  const Eigen::Index n = static_cast<Eigen::Index>(indices.size());
  std::vector<MatrixX<S>> steps(static_cast<size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    MatrixX<S> step(n, chunked.dims);
    for (Eigen::Index k = 0; k < n; ++k) {
      const MatrixXu8& d = chunked.chunks[size_t(indices[size_t(k)])].data;
      for (int j = 0; j < chunked.dims; ++j) {
        step(k, j) = S(d(t, j));
      }
    }
    steps[size_t(t)] = std::move(step);
  }
  return SequenceBatch<S>(std::move(steps));
}

/// A single unsplit sequence as a batch of one.
template <class S>
SequenceBatch<S> sequence_as_batch(const NoteSequence& seq, int dims,
                                   int pitch_offset) {
  const MatrixXu8 bin = to_binary(seq, dims, pitch_offset);
  std::vector<MatrixX<S>> steps(static_cast<size_t>(bin.rows()));
  for (Eigen::Index t = 0; t < bin.rows(); ++t) {
    MatrixX<S> step(1, dims);
    for (int j = 0; j < dims; ++j) step(0, j) = S(bin(t, j));
    steps[size_t(t)] = std::move(step);
  }
  return SequenceBatch<S>(std::move(steps));
}

}  // namespace fdrnn

#endif  // FDRNN_DATA_HPP
