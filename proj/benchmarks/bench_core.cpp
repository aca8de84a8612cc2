#include <benchmark/benchmark.h>

#include "edr/trainer.hpp"

using namespace edr;

namespace {

ModelParams desk_model(std::size_t vocab = 200) {
  set_precision(Precision::f32);
  Rng rng(1);
  return ModelParams::init(Dims{32, 64, vocab, vocab}, rng);
}

std::vector<int> sentence(std::size_t len, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> x;
  for (std::size_t i = 0; i < len; ++i)
    x.push_back(4 + static_cast<int>(rng.below(vocab - 4)));
  x.push_back(Vocabulary::kEos);
  return x;
}

void BM_GruCellForward(benchmark::State& state) {
  set_precision(Precision::f32);
  Rng rng(2);
  GruParams p = GruParams::init(32, 64, rng);
  Tensor in = Tensor::uniform({32}, -1.0, 1.0, rng);
  Tensor prev = Tensor::uniform({64}, -1.0, 1.0, rng);
  for (auto _ : state) {
    Tensor out = gru_cell(in, prev, p);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_GruCellForward);

void BM_Encode(benchmark::State& state) {
  ModelParams m = desk_model();
  std::vector<int> x = sentence(static_cast<std::size_t>(state.range(0)), 200, 3);
  for (auto _ : state) {
    EncodedSource enc = encode(x, m);
    benchmark::DoNotOptimize(enc);
  }
}
BENCHMARK(BM_Encode)->Arg(8)->Arg(20);

void BM_LikelihoodBackward(benchmark::State& state) {
  ModelParams m = desk_model();
  std::vector<int> x = sentence(10, 200, 4);
  std::vector<int> y = sentence(10, 200, 5);
  for (auto _ : state) {
    for (auto& [name, t] : m.named()) t->zero_grad();
    Tape tape;
    ModelRefs refs = ModelRefs::trainable(tape, m);
    LikelihoodGraph g = log_likelihood_graph(tape, x, y, refs);
    tape.backward(scale(g.logp, -1.0));
    benchmark::DoNotOptimize(m);
  }
}
BENCHMARK(BM_LikelihoodBackward);

void BM_CombinedLossBackward(benchmark::State& state) {
  set_precision(Precision::f32);
  Rng rng(6);
  ModelParams m = ModelParams::init(Dims{32, 64, 200, 200}, rng);
  ReconstructorParams r = ReconstructorParams::init(m.dims, m.src_embed, rng);
  ParallelCorpus c;
  for (std::uint64_t i = 0; i < 8; ++i)
    c.pairs.push_back({sentence(8, 200, 10 + i), sentence(8, 200, 20 + i)});
  Batch b = make_batches(c, 8, 1)[0];
  NamedTensors params = m.named();
  for (auto& [name, t] : r.named()) params.emplace_back(name, t);
  for (auto _ : state) {
    for (auto& [name, t] : params) t->zero_grad();
    Tape tape;
    ModelRefs mrefs = ModelRefs::trainable(tape, m);
    ReconstructorRefs rrefs = ReconstructorRefs::trainable(tape, r);
    LossGraph loss = combined_loss_graph(tape, b, mrefs, &rrefs, 1.0, false);
    tape.backward(loss.total);
    benchmark::DoNotOptimize(loss.parts.total);
  }
}
BENCHMARK(BM_CombinedLossBackward);

void BM_BeamSearch(benchmark::State& state) {
  ModelParams m = desk_model(50);
  std::vector<int> x = sentence(10, 50, 7);
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    std::vector<Hypothesis> hyps = beam_search(x, m, k);
    benchmark::DoNotOptimize(hyps);
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_ReconstructionScore(benchmark::State& state) {
  set_precision(Precision::f32);
  Rng rng(8);
  ModelParams m = ModelParams::init(Dims{32, 64, 50, 50}, rng);
  ReconstructorParams r = ReconstructorParams::init(m.dims, m.src_embed, rng);
  std::vector<int> x = sentence(10, 50, 9);
  std::vector<int> y = sentence(10, 50, 10);
  auto trace = log_likelihood(x, y, m).second;
  for (auto _ : state) {
    auto [log_rec, rt] = reconstruction_score(x, trace.states, r);
    benchmark::DoNotOptimize(log_rec);
  }
}
BENCHMARK(BM_ReconstructionScore);

void BM_CorpusBleu(benchmark::State& state) {
  Rng rng(11);
  TokenLines cands, refs;
  for (int s = 0; s < 1000; ++s) {
    std::vector<std::string> c, r;
    const std::size_t len = 5 + rng.below(15);
    for (std::size_t i = 0; i < len; ++i) {
      c.push_back("w" + std::to_string(rng.below(80)));
      r.push_back("w" + std::to_string(rng.below(80)));
    }
    cands.push_back(c);
    refs.push_back(r);
  }
  for (auto _ : state) {
    BleuReport r = bleu(cands, refs);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_CorpusBleu)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
