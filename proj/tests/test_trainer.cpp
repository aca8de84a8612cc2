#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "edr/checkpoint.hpp"
#include "edr/trainer.hpp"
#include "test_util.hpp"

using namespace edr;
namespace fs = std::filesystem;

namespace {

struct Toy {
  ModelParams theta;
  ReconstructorParams gamma;
};

Toy toy(std::uint64_t seed, Dims dims = Dims{4, 5, 10, 10}) {
  Rng rng = Rng::substream(seed, "test/trainer");
  Toy t{ModelParams::init(dims, rng), {}};
  t.gamma = ReconstructorParams::init(dims, t.theta.src_embed, rng);
  return t;
}

ParallelCorpus small_corpus(std::size_t n, std::uint64_t seed, std::size_t vocab = 10) {
  Rng rng(seed);
  ParallelCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> src, tgt;
    const std::size_t ls = 1 + rng.below(4), lt = 1 + rng.below(4);
    for (std::size_t k = 0; k < ls; ++k) src.push_back(4 + static_cast<int>(rng.below(vocab - 4)));
    for (std::size_t k = 0; k < lt; ++k) tgt.push_back(4 + static_cast<int>(rng.below(vocab - 4)));
    src.push_back(Vocabulary::kEos);
    tgt.push_back(Vocabulary::kEos);
    c.pairs.push_back({std::move(src), std::move(tgt)});
  }
  return c;
}

Vocabulary numbered_vocab(std::size_t content) {
  std::vector<std::vector<std::string>> lines;
  for (std::size_t i = 0; i < content; ++i) lines.push_back({"w" + std::to_string(i)});
  return Vocabulary::build(lines, content + Vocabulary::kReserved);
}

}  // namespace

TEST_CASE("combined_loss with lambda 0 is exactly the likelihood loss") {
  set_precision(Precision::f64);
  Toy t = toy(1);
  Batch b = make_batches(small_corpus(4, 2), 4, 3)[0];
  LossParts with_rec = combined_loss(b, t.theta, &t.gamma, 0.0);
  LossParts no_rec = combined_loss(b, t.theta, nullptr, 0.0);
  CHECK(with_rec.total == no_rec.total);
  CHECK(with_rec.total == with_rec.neg_log_lik);
  CHECK(std::isnan(with_rec.neg_log_rec));
  CHECK_THROWS_AS(combined_loss(b, t.theta, nullptr, 1.0), config_error);
}

TEST_CASE("combined_loss on a uniform-readout model is 2 log V per token") {
  set_precision(Precision::f64);
  Toy t = toy(2);
  t.theta.out_w.fill(0.0);
  t.theta.out_b.fill(0.0);
  t.gamma.out_w.fill(0.0);
  t.gamma.out_b.fill(0.0);
  ParallelCorpus c;
  c.pairs.push_back({{4, Vocabulary::kEos}, {5, 6, Vocabulary::kEos}});  // J=2, I=3
  Batch b = make_batches(c, 1, 1)[0];
  LossParts parts = combined_loss(b, t.theta, &t.gamma, 1.0);
  CHECK(parts.neg_log_lik == doctest::Approx(std::log(10.0)).epsilon(1e-9));
  CHECK(parts.neg_log_rec == doctest::Approx(std::log(10.0)).epsilon(1e-9));
  CHECK(parts.total == doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-9));
  CHECK(parts.total == doctest::Approx(4.6052).epsilon(1e-4));
}

TEST_CASE("combined_loss equals per-sentence scores combined independently") {
  set_precision(Precision::f64);
  Toy t = toy(3);
  ParallelCorpus c = small_corpus(5, 4);
  Batch b = make_batches(c, 5, 5)[0];
  const double lambda = 0.7;
  LossParts parts = combined_loss(b, t.theta, &t.gamma, lambda);

  double sum_lik = 0.0, sum_rec = 0.0;
  std::size_t lik_tokens = 0, rec_tokens = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto [lp, trace] = log_likelihood(b.src_row(i), b.tgt_row(i), t.theta);
    auto [lr, rtrace] = reconstruction_score(b.src_row(i), trace.states, t.gamma);
    sum_lik += lp;
    sum_rec += lr;
    lik_tokens += b.tgt_len[i];
    rec_tokens += b.src_len[i];
  }
  CHECK(parts.neg_log_lik ==
        doctest::Approx(-sum_lik / static_cast<double>(lik_tokens)).epsilon(1e-9));
  CHECK(parts.neg_log_rec ==
        doctest::Approx(-sum_rec / static_cast<double>(rec_tokens)).epsilon(1e-9));
  CHECK(parts.total ==
        doctest::Approx(parts.neg_log_lik + lambda * parts.neg_log_rec).epsilon(1e-12));

  LossParts raw = combined_loss(b, t.theta, &t.gamma, lambda, /*raw_sum=*/true);
  CHECK(raw.neg_log_lik == doctest::Approx(-sum_lik).epsilon(1e-9));
  CHECK(raw.neg_log_rec == doctest::Approx(-sum_rec).epsilon(1e-9));
}

TEST_CASE("PAD embedding rows never reach the loss") {
  set_precision(Precision::f64);
  Toy t = toy(4);
  ParallelCorpus c = small_corpus(6, 6);  // mixed lengths force padding
  Batch b = make_batches(c, 6, 7)[0];
  LossParts before = combined_loss(b, t.theta, &t.gamma, 1.0);
  for (std::size_t k = 0; k < t.theta.dims.embed; ++k) {
    t.theta.src_embed->set(Vocabulary::kPad * t.theta.dims.embed + k, 123.0 + k);
    t.theta.tgt_embed.set(Vocabulary::kPad * t.theta.dims.embed + k, -77.0 - k);
  }
  LossParts after = combined_loss(b, t.theta, &t.gamma, 1.0);
  CHECK(before.total == after.total);
}

TEST_CASE("adadelta zero gradient decays accumulators and keeps parameters") {
  set_precision(Precision::f64);
  Tensor p = Tensor::row({1.0, -2.0});
  p.set_requires_grad(true);
  std::map<std::string, AdadeltaAccum> opt;
  opt["p"].sq_grad = Tensor::row({0.4, 0.9});
  opt["p"].sq_update = Tensor::row({0.1, 0.2});
  NamedTensors params = {{"p", &p}};
  adadelta_update(params, opt, 0.95, 1e-6);
  CHECK(p.at(0) == 1.0);
  CHECK(p.at(1) == -2.0);
  CHECK(opt["p"].sq_grad.at(0) == doctest::Approx(0.95 * 0.4).epsilon(1e-12));
  CHECK(opt["p"].sq_update.at(1) == doctest::Approx(0.95 * 0.2).epsilon(1e-12));
}

TEST_CASE("adadelta first step matches the closed form and then shrinks") {
  set_precision(Precision::f64);
  const double g = 0.3, rho = 0.95, eps = 1e-6;
  Tensor p = Tensor::row({2.0});
  p.set_requires_grad(true);
  p.grad().set(0, g);
  std::map<std::string, AdadeltaAccum> opt;
  NamedTensors params = {{"p", &p}};
  adadelta_update(params, opt, rho, eps);
  const double delta1 = -std::sqrt(eps / (0.05 * g * g + eps)) * g;
  CHECK(p.at(0) == doctest::Approx(2.0 + delta1).epsilon(1e-12));

  // Second identical step, scalar oracle: both accumulators carry one decay
  // round. Under a constant gradient the update ratio is
  // sqrt((0.1 g^2 + eps) / (0.0975 g^2 + eps)) > 1, so steps grow from the
  // sqrt(eps) scale rather than shrink.
  const double p_after_1 = p.at(0);
  p.grad().set(0, g);
  adadelta_update(params, opt, rho, eps);
  const double delta2 = p.at(0) - p_after_1;
  const double eg2 = rho * (1 - rho) * g * g + (1 - rho) * g * g;
  const double ex1 = (1 - rho) * delta1 * delta1;
  const double expect2 = -std::sqrt((ex1 + eps) / (eg2 + eps)) * g;
  CHECK(delta2 == doctest::Approx(expect2).epsilon(1e-12));
  CHECK(delta2 < 0.0);
  CHECK(std::abs(delta2) > std::abs(delta1));
}

TEST_CASE("gradient clipping caps the global norm") {
  set_precision(Precision::f64);
  Rng rng(8);
  Tensor a = testutil::random_tensor({20}, rng, 1.0, true);
  Tensor b = testutil::random_tensor({30}, rng, 1.0, true);
  for (std::size_t i = 0; i < a.numel(); ++i) a.grad().set(i, rng.uniform(-3.0, 3.0));
  for (std::size_t i = 0; i < b.numel(); ++i) b.grad().set(i, rng.uniform(-3.0, 3.0));
  NamedTensors params = {{"a", &a}, {"b", &b}};
  const double pre = clip_gradients(params, 1.0);
  CHECK(pre > 1.0);
  double post_sq = 0.0;
  for (auto& [name, p] : params)
    for (std::size_t i = 0; i < p->grad().numel(); ++i)
      post_sq += p->grad().at(i) * p->grad().at(i);
  CHECK(std::sqrt(post_sq) <= 1.0 + 1e-6);

  // Below the threshold nothing changes.
  Tensor c = Tensor::row({0.1});
  c.set_requires_grad(true);
  c.grad().set(0, 0.5);
  NamedTensors small = {{"c", &c}};
  CHECK(clip_gradients(small, 1.0) == doctest::Approx(0.5));
  CHECK(c.grad().at(0) == 0.5);
}

TEST_CASE("checkpoint round trip reproduces the loss bit for bit") {
  set_precision(Precision::f32);  // production mode
  TrainConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 5;
  cfg.lambda = 1.0;
  cfg.seed = 10;
  TrainState st = init_state(cfg, 10, 10);
  add_reconstructor(st);
  st.updates = 321;
  Batch b = make_batches(small_corpus(4, 11), 4, 12)[0];
  LossParts before = combined_loss(b, st.theta, &*st.gamma, 1.0);

  fs::path dir = fs::temp_directory_path() / "edr_trainer_tests";
  fs::create_directories(dir);
  fs::path path = dir / "roundtrip.edrc";
  save_checkpoint(st, path);
  TrainState loaded = load_checkpoint(path);
  CHECK(loaded.updates == 321);
  CHECK(loaded.config.lambda == 1.0);
  CHECK(loaded.config.seed == 10);
  REQUIRE(loaded.gamma.has_value());
  LossParts after = combined_loss(b, loaded.theta, &*loaded.gamma, 1.0);
  CHECK(before.total == after.total);
  CHECK(before.neg_log_lik == after.neg_log_lik);
  CHECK(before.neg_log_rec == after.neg_log_rec);
}

TEST_CASE("checkpoint manifest holds exactly one source embedding and opt names") {
  set_precision(Precision::f32);
  TrainConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 5;
  TrainState st = init_state(cfg, 8, 8);
  st.opt["tgt_embed"].sq_grad = Tensor({8, 4});
  st.opt["tgt_embed"].sq_update = Tensor({8, 4});
  fs::path path = fs::temp_directory_path() / "edr_trainer_tests" / "manifest.edrc";
  fs::create_directories(path.parent_path());
  save_checkpoint(st, path);
  std::vector<std::string> names = checkpoint_manifest(path);
  std::size_t src_embed_count = 0, rec_count = 0, opt_count = 0;
  for (const auto& n : names) {
    if (n == "src_embed") ++src_embed_count;
    if (n.rfind("rec.", 0) == 0) ++rec_count;
    if (n.rfind("opt/", 0) == 0) ++opt_count;
  }
  CHECK(src_embed_count == 1);
  CHECK(rec_count == 0);  // stage-1 checkpoint carries no reconstructor
  CHECK(opt_count == 2);
}

TEST_CASE("truncated checkpoints fail naming the missing tensor") {
  set_precision(Precision::f32);
  TrainConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 5;
  TrainState st = init_state(cfg, 8, 8);
  fs::path dir = fs::temp_directory_path() / "edr_trainer_tests";
  fs::create_directories(dir);
  fs::path full = dir / "full.edrc";
  save_checkpoint(st, full);

  // Cut the file in the middle of the payload block.
  std::ifstream in(full, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  fs::path cut = dir / "cut.edrc";
  std::ofstream out(cut, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() * 2 / 3));
  out.close();
  try {
    load_checkpoint(cut);
    FAIL("expected data_error");
  } catch (const data_error& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }

  fs::path garbage = dir / "garbage.edrc";
  std::ofstream g(garbage, std::ios::binary);
  g << "NOPE";
  g.close();
  CHECK_THROWS_AS(load_checkpoint(garbage), data_error);
}

TEST_CASE("stage-1 checkpoint feeds stage 2 with theta preserved and gamma fresh") {
  set_precision(Precision::f32);
  TrainConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 5;
  cfg.lambda = 1.0;
  cfg.epochs_stage1 = 1;
  cfg.epochs_stage2 = 1;
  cfg.batch_size = 4;
  cfg.dropout = 0.0;
  cfg.checkpoint_every = 0;
  cfg.seed = 13;
  ParallelCorpus train_c = small_corpus(8, 14);
  ParallelCorpus dev_c = small_corpus(2, 15);
  Vocabulary v = numbered_vocab(6);

  TrainState s1 = train(train_c, dev_c, cfg, v, v, Stage::stage1);
  CHECK_FALSE(s1.gamma.has_value());
  fs::path dir = fs::temp_directory_path() / "edr_trainer_tests";
  fs::create_directories(dir);
  fs::path path = dir / "stage1.edrc";
  save_checkpoint(s1, path);
  std::vector<double> theta_before = s1.theta.src_embed->to_vector();
  std::vector<double> out_w_before = s1.theta.out_w.to_vector();

  TrainState resumed = load_checkpoint(path);
  CHECK(resumed.theta.src_embed->to_vector() == theta_before);
  CHECK(resumed.theta.out_w.to_vector() == out_w_before);
  CHECK_FALSE(resumed.gamma.has_value());

  add_reconstructor(resumed);
  REQUIRE(resumed.gamma.has_value());
  CHECK(resumed.gamma->src_embed.get() == resumed.theta.src_embed.get());
  CHECK(resumed.theta.out_w.to_vector() == out_w_before);  // untouched by gamma init
}

TEST_CASE("train with zero epochs returns an untrained state and no metrics") {
  set_precision(Precision::f32);
  TrainConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 5;
  cfg.epochs_stage1 = 0;
  cfg.epochs_stage2 = 0;
  cfg.seed = 16;
  ParallelCorpus c = small_corpus(4, 17);
  Vocabulary v = numbered_vocab(6);
  TrainState st = train(c, c, cfg, v, v, Stage::both);
  CHECK(st.updates == 0);
  CHECK(st.history.empty());
  CHECK(st.loss_log.empty());

  TrainState fresh = init_state(cfg, v.size(), v.size());
  CHECK(st.theta.out_w.to_vector() == fresh.theta.out_w.to_vector());
}

TEST_CASE("training twice with one seed gives a bit-identical loss trajectory") {
  set_precision(Precision::f32);
  TrainConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 5;
  cfg.lambda = 1.0;
  cfg.epochs_stage1 = 2;
  cfg.epochs_stage2 = 2;
  cfg.batch_size = 4;
  cfg.dropout = 0.2;
  cfg.checkpoint_every = 0;
  cfg.seed = 18;
  ParallelCorpus train_c = small_corpus(12, 19);
  ParallelCorpus dev_c = small_corpus(3, 20);
  Vocabulary v = numbered_vocab(6);
  TrainState a = train(train_c, dev_c, cfg, v, v, Stage::both);
  TrainState b = train(train_c, dev_c, cfg, v, v, Stage::both);
  REQUIRE(a.loss_log.size() == b.loss_log.size());
  CHECK(a.loss_log == b.loss_log);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    CHECK(a.history[i].dev_bleu == b.history[i].dev_bleu);
}

TEST_CASE("metrics rows print nan for absent reconstruction columns") {
  MetricsRow row;
  row.update = 5;
  row.neg_log_lik = 1.5;
  row.neg_log_rec = std::numeric_limits<double>::quiet_NaN();
  row.dev_bleu = 12.5;
  row.dev_rec_bleu = std::numeric_limits<double>::quiet_NaN();
  std::ostringstream os;
  write_metrics_header(os);
  write_metrics_row(os, row);
  CHECK(os.str() == "update\tneg_log_lik\tneg_log_rec\tdev_bleu\tdev_rec_bleu\n"
                    "5\t1.5\tnan\t12.5\tnan\n");
}
