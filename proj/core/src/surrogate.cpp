#include "fdrnn/surrogate.hpp"

#include <random>

namespace fdrnn {

namespace {

NoteSequence make_sequence(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> root_d(45, 65);
  std::uniform_int_distribution<int> len_d(40, 120);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const int root = root_d(rng);
  const int length = len_d(rng);

  // triads over the root: I, IV, V, vi
  const int chords[4][3] = {{0, 4, 7}, {5, 9, 12}, {7, 11, 14}, {9, 12, 16}};
  const int progression[6] = {0, 1, 2, 0, 3, 2};

  NoteSequence seq;
  seq.reserve(static_cast<size_t>(length));
  int prog_at = 0;
  int chord = progression[0];
  for (int t = 0; t < length; ++t) {
    if (t % 4 == 0 && t > 0) {
      prog_at = (prog_at + 1) % 6;
      chord = u(rng) < 0.1 ? int(u(rng) * 4) % 4 : progression[prog_at];
    }
    std::vector<int> step;
    for (int k = 0; k < 3; ++k) {
      if (u(rng) < 0.05) continue;  // dropped chord tone
      step.push_back(root + chords[chord][k]);
    }
    if (t % 4 == 0) step.push_back(root - 12);  // bass on chord boundaries
    if (u(rng) < 0.1) step.push_back(root + 2);
    seq.push_back(std::move(step));
  }
  return seq;
}

}  // namespace

PianoRollDataset make_surrogate_dataset(std::uint64_t seed, int n_train,
                                        int n_valid, int n_test) {
  std::mt19937_64 rng(seed);
  PianoRollDataset ds;
  ds.name = "surrogate-chorales";
  ds.dims = 88;
  ds.pitch_offset = 21;
  for (int i = 0; i < n_train; ++i) ds.train.push_back(make_sequence(rng));
  for (int i = 0; i < n_valid; ++i) ds.valid.push_back(make_sequence(rng));
  for (int i = 0; i < n_test; ++i) ds.test.push_back(make_sequence(rng));
  return ds;
}

}  // namespace fdrnn
