#include <doctest.h>

#include <cmath>

#include "edr/beam.hpp"
#include "test_util.hpp"

using namespace edr;

namespace {

ModelParams tiny_model(std::uint64_t seed, std::size_t tgt_vocab = 6,
                       std::size_t src_vocab = 6) {
  Rng rng = Rng::substream(seed, "test/beam");
  ModelParams m = ModelParams::init(Dims{3, 4, src_vocab, tgt_vocab}, rng);
  // Spread the weights so scores are well separated.
  Rng spread = Rng::substream(seed, "test/spread");
  for (auto& [name, t] : m.named())
    for (std::size_t i = 0; i < t->numel(); ++i) t->set(i, spread.uniform(-0.9, 0.9));
  return m;
}

// Independent iterative enumeration (odometer over non-EOS alphabets),
// scoring each EOS-terminated sequence with the teacher-forced likelihood.
std::pair<std::vector<int>, std::size_t> iterative_argmax(std::span<const int> x,
                                                          const ModelParams& m,
                                                          std::size_t max_len) {
  std::vector<int> alphabet;
  for (std::size_t v = 0; v < m.dims.tgt_vocab; ++v)
    if (static_cast<int>(v) != Vocabulary::kEos) alphabet.push_back(static_cast<int>(v));

  std::vector<int> best;
  double best_score = -1e300;
  std::size_t count = 0;
  for (std::size_t body = 0; body + 1 <= max_len; ++body) {
    std::vector<std::size_t> odo(body, 0);
    while (true) {
      std::vector<int> y;
      for (std::size_t i = 0; i < body; ++i) y.push_back(alphabet[odo[i]]);
      y.push_back(Vocabulary::kEos);
      ++count;
      const double score = log_likelihood(x, y, m).first;
      if (score > best_score ||
          (score == best_score &&
           std::lexicographical_compare(y.begin(), y.end(), best.begin(), best.end()))) {
        best_score = score;
        best = y;
      }
      // Advance the odometer.
      std::size_t pos = 0;
      for (; pos < body; ++pos) {
        if (++odo[pos] < alphabet.size()) break;
        odo[pos] = 0;
      }
      if (pos == body) break;
      if (body == 0) break;
    }
    if (body == 0 && max_len >= 1) continue;
  }
  return {best, count};
}

}  // namespace

TEST_CASE("beam width 1 reproduces greedy decoding") {
  set_precision(Precision::f32);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelParams m = tiny_model(seed, 8, 8);
    std::vector<int> x = {4, 6, 5, Vocabulary::kEos};
    std::vector<Hypothesis> hyps = beam_search(x, m, 1);
    REQUIRE(hyps.size() == 1);
    const std::size_t max_len =
        static_cast<std::size_t>(std::ceil(2.0 * static_cast<double>(x.size())));
    CHECK(hyps[0].tokens == greedy_decode(x, m, max_len));
    CHECK(hyps[0].complete);
    CHECK(hyps[0].states.size() == hyps[0].tokens.size());
  }
}

TEST_CASE("beam with a huge width equals exhaustive search") {
  set_precision(Precision::f64);
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    ModelParams m = tiny_model(seed);
    std::vector<int> x = {4, Vocabulary::kEos};
    Hypothesis best = exhaustive_search(x, m, 4);
    std::vector<Hypothesis> hyps = beam_search(x, m, 1000, 2.0);
    REQUIRE(!hyps.empty());
    CHECK(hyps[0].tokens == best.tokens);
    CHECK(hyps[0].log_lik == doctest::Approx(best.log_lik).epsilon(1e-9));
  }
}

TEST_CASE("exhaustive search agrees with an independent iterative enumeration") {
  set_precision(Precision::f64);
  ModelParams m = tiny_model(7);
  std::vector<int> x = {5, Vocabulary::kEos};
  Hypothesis best = exhaustive_search(x, m, 4);
  auto [iter_best, count] = iterative_argmax(x, m, 4);
  CHECK(best.tokens == iter_best);
  // Candidate count: sum over lengths of (|V|-1)^(len-1).
  CHECK(count == 1 + 5 + 25 + 125);
}

TEST_CASE("exhaustive search with max_len 1 returns just EOS") {
  set_precision(Precision::f64);
  ModelParams m = tiny_model(8);
  std::vector<int> x = {4, Vocabulary::kEos};
  Hypothesis best = exhaustive_search(x, m, 1);
  CHECK(best.tokens == std::vector<int>{Vocabulary::kEos});
}

TEST_CASE("exhaustive search guards the search space size") {
  set_precision(Precision::f64);
  ModelParams m = tiny_model(9, 50, 6);
  std::vector<int> x = {4, Vocabulary::kEos};
  CHECK_THROWS_AS((void)exhaustive_search(x, m, 5), config_error);
}

TEST_CASE("doubling the beam never lowers the best completed likelihood") {
  set_precision(Precision::f32);
  for (std::uint64_t seed = 20; seed < 28; ++seed) {
    ModelParams m = tiny_model(seed, 10, 10);
    std::vector<int> x = {4, 7, 9, Vocabulary::kEos};
    for (std::size_t k : {1ul, 2ul, 4ul, 8ul}) {
      std::vector<Hypothesis> narrow = beam_search(x, m, k);
      std::vector<Hypothesis> wide = beam_search(x, m, 2 * k);
      REQUIRE(!narrow.empty());
      REQUIRE(!wide.empty());
      CHECK(wide[0].log_lik >= narrow[0].log_lik - 1e-6);
    }
  }
}

TEST_CASE("beam hypotheses reproduce under teacher forcing") {
  set_precision(Precision::f32);
  ModelParams m = tiny_model(30, 9, 9);
  std::vector<int> x = {4, 6, 8, Vocabulary::kEos};
  std::vector<Hypothesis> hyps = beam_search(x, m, 5);
  REQUIRE(!hyps.empty());
  for (const Hypothesis& h : hyps) {
    auto [logp, trace] = log_likelihood(x, h.tokens, m);
    CHECK(logp == doctest::Approx(h.log_lik).epsilon(1e-5));
    REQUIRE(trace.states.size() == h.states.size());
    for (std::size_t i = 0; i < h.states.size(); ++i)
      CHECK(testutil::max_abs_diff(trace.states[i].to_vector(), h.states[i].to_vector()) <
            1e-5);
  }
}

TEST_CASE("rerank with lambda 0 is the identity permutation") {
  set_precision(Precision::f32);
  ModelParams m = tiny_model(31);
  std::vector<int> x = {4, 5, Vocabulary::kEos};
  std::vector<Hypothesis> hyps = beam_search(x, m, 6);
  REQUIRE(hyps.size() >= 2);
  std::vector<RerankedCandidate> ranked = rerank(hyps, x, nullptr, 0.0);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(ranked[i].rank_final == i + 1);
    CHECK(ranked[i].rank_phase1 == i + 1);
    CHECK(ranked[i].score == ranked[i].hyp.log_lik);
    CHECK(ranked[i].log_rec == 0.0);
  }
}

TEST_CASE("rerank of a single candidate is rank 1 regardless of scores") {
  set_precision(Precision::f32);
  Hypothesis h;
  h.tokens = {4, Vocabulary::kEos};
  h.log_lik = -3.5;
  std::vector<int> x = {4, Vocabulary::kEos};
  std::vector<RerankedCandidate> ranked = rerank({h}, x, nullptr, 0.0);
  REQUIRE(ranked.size() == 1);
  CHECK(ranked[0].rank_final == 1);
}

TEST_CASE("a short high-likelihood candidate flips once reconstruction weighs in") {
  set_precision(Precision::f64);
  Rng rng = Rng::substream(77, "test/flip");
  Dims dims{4, 5, 10, 10};
  ModelParams theta = ModelParams::init(dims, rng);
  ReconstructorParams gamma = ReconstructorParams::init(dims, theta.src_embed, rng);
  std::vector<int> x = {4, 6, 8, 5, Vocabulary::kEos};

  Rng srng(3);
  Hypothesis short_hyp, long_hyp;
  short_hyp.tokens = {7, Vocabulary::kEos};
  long_hyp.tokens = {7, 9, 6, 4, Vocabulary::kEos};
  for (std::size_t i = 0; i < short_hyp.tokens.size(); ++i)
    short_hyp.states.push_back(testutil::random_tensor({dims.hidden}, srng, 1.0));
  for (std::size_t i = 0; i < long_hyp.tokens.size(); ++i)
    long_hyp.states.push_back(testutil::random_tensor({dims.hidden}, srng, 1.0));

  double rec_short = reconstruction_score(x, short_hyp.states, gamma).first;
  double rec_long = reconstruction_score(x, long_hyp.states, gamma).first;
  if (rec_short > rec_long) {  // orient the fixture: short candidate reconstructs worse
    std::swap(short_hyp.states, long_hyp.states);
    std::swap(rec_short, rec_long);
  }
  // Give the short candidate a likelihood edge of half the reconstruction gap.
  long_hyp.log_lik = -5.0;
  short_hyp.log_lik = -5.0 + 0.5 * (rec_long - rec_short);
  REQUIRE(short_hyp.log_lik > long_hyp.log_lik);

  std::vector<RerankedCandidate> phase1 = rerank({short_hyp, long_hyp}, x, &gamma, 0.0);
  CHECK(phase1[0].hyp.log_lik == short_hyp.log_lik);

  std::vector<RerankedCandidate> reranked = rerank({short_hyp, long_hyp}, x, &gamma, 1.0);
  CHECK(reranked[0].hyp.log_lik == long_hyp.log_lik);  // the flip
  CHECK(reranked[0].rank_phase1 == 2);
  CHECK(reranked[0].rank_final == 1);
  for (const auto& c : reranked)
    CHECK(c.score == doctest::Approx(c.hyp.log_lik + 1.0 * c.log_rec).epsilon(1e-12));
}

TEST_CASE("rerank error paths") {
  set_precision(Precision::f32);
  std::vector<int> x = {4, Vocabulary::kEos};
  CHECK_THROWS_AS(rerank({}, x, nullptr, 0.0), data_error);
  Hypothesis no_states;
  no_states.tokens = {4, Vocabulary::kEos};
  Rng rng(1);
  Dims dims{3, 4, 6, 6};
  ModelParams theta = ModelParams::init(dims, rng);
  ReconstructorParams gamma = ReconstructorParams::init(dims, theta.src_embed, rng);
  CHECK_THROWS_AS(rerank({no_states}, x, &gamma, 1.0), data_error);
  CHECK_THROWS_AS(rerank({no_states}, x, nullptr, 1.0), config_error);
}

TEST_CASE("normalize_likelihood arithmetic") {
  CHECK(normalize_likelihood(-10.0, 5) == -2.0);
  CHECK(normalize_likelihood(0.0, 3) == 0.0);
  // Normalization can invert an ordering.
  CHECK(normalize_likelihood(-10.0, 10) > normalize_likelihood(-6.0, 4));
  CHECK(-10.0 < -6.0);
  CHECK_THROWS_AS(normalize_likelihood(-1.0, 0), numeric_error);
}
