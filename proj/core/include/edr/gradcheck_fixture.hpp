#pragma once

#include "edr/corpus.hpp"
#include "edr/gradcheck.hpp"
#include "edr/reconstructor.hpp"

namespace edr {

// Deterministic toy setup for end-to-end gradient checks: a model and
// reconstructor with shared source embeddings, all weights re-randomized at
// kGradCheckWeightRange, and a fixed two-pair batch.
struct GradCheckFixture {
  ModelParams theta;
  ReconstructorParams gamma;
  Batch batch;

  NamedTensors all_params();
};

GradCheckFixture make_gradcheck_fixture(const Dims& dims, std::uint64_t seed,
                                        double weight_range = kGradCheckWeightRange);

}  // namespace edr
