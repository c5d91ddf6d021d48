#ifndef FDRNN_SURROGATE_HPP
#define FDRNN_SURROGATE_HPP

#include <cstdint>

#include "fdrnn/data.hpp"

namespace fdrnn {

/// Deterministic synthetic piano-roll dataset in the standard schema:
/// chord progressions over a small diatonic vocabulary, chords held for a
/// few steps with occasional substitutions, dropped tones and passing tones.
/// Strong short-range temporal structure, so a sequence model has something
/// to gain over per-note base rates.
PianoRollDataset make_surrogate_dataset(std::uint64_t seed, int n_train = 60,
                                        int n_valid = 15, int n_test = 15);

}  // namespace fdrnn

#endif  // FDRNN_SURROGATE_HPP
