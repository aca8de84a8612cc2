#include "edr/gradcheck_fixture.hpp"

namespace edr {

NamedTensors GradCheckFixture::all_params() {
  NamedTensors all = theta.named();
  for (auto& [name, t] : gamma.named()) all.emplace_back(name, t);
  return all;
}

GradCheckFixture make_gradcheck_fixture(const Dims& dims, std::uint64_t seed,
                                        double weight_range) {
  if (dims.src_vocab < 5 || dims.tgt_vocab < 5)
    throw config_error("gradcheck fixture needs vocab sizes >= 5");
  Rng init_rng = Rng::substream(seed, "gradcheck/init");
  GradCheckFixture f{ModelParams::init(dims, init_rng), {}, {}};
  f.gamma = ReconstructorParams::init(dims, f.theta.src_embed, init_rng);

  Rng weight_rng = Rng::substream(seed, "reinit");
  for (auto& [name, t] : f.all_params())
    for (std::size_t i = 0; i < t->numel(); ++i)
      t->set(i, weight_rng.uniform(-weight_range, weight_range));

  auto clamp = [&](std::initializer_list<int> ids, std::size_t vocab) {
    std::vector<int> out;
    for (int id : ids)
      out.push_back(4 + (id - 4) % static_cast<int>(vocab - Vocabulary::kReserved));
    out.push_back(Vocabulary::kEos);
    return out;
  };
  ParallelCorpus c;
  c.pairs.push_back({clamp({4, 7, 9, 12, 5, 16, 11}, dims.src_vocab),
                     clamp({5, 11, 8, 15, 7, 19}, dims.tgt_vocab)});
  c.pairs.push_back({clamp({6, 12, 14, 9, 18, 10}, dims.src_vocab),
                     clamp({8, 4, 13, 6, 10, 17, 9}, dims.tgt_vocab)});
  f.batch = make_batches(c, 2, 1)[0];
  return f;
}

}  // namespace edr
