#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ebml/defense.hpp"
#include "ebml/metrics.hpp"

using namespace ebml;

namespace {

Classifier linear_classifier(Matrix a, std::vector<double> b) {
  Layer l;
  l.w = std::move(a);
  l.b = std::move(b);
  return Classifier{DenseNet({l})};
}

DefenseConfig unit_defense(std::size_t k, std::size_t h) {
  DefenseConfig cfg;
  cfg.langevin_steps = k;
  cfg.defense_reps = h;
  cfg.langevin_epsilon = 0.05;
  cfg.temperature = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("argmax breaks ties toward the lowest index") {
  REQUIRE(argmax_class(std::vector<double>{1.0, 1.0, 0.5}) == 0);
  REQUIRE(argmax_class(std::vector<double>{0.1, 1.0, 1.0}) == 1);
}

TEST_CASE("cross entropy gradient is softmax minus onehot") {
  const std::vector<double> logits{2.0, -1.0, 0.5};
  const auto g = cross_entropy_grad(logits, 2);
  const auto p = softmax(logits);
  REQUIRE(g[0] == Catch::Approx(p[0]));
  REQUIRE(g[1] == Catch::Approx(p[1]));
  REQUIRE(g[2] == Catch::Approx(p[2] - 1.0));
}

TEST_CASE("purify with zero steps is the identity") {
  const EnergyModel ebm = EnergyModel::quadratic(2);
  const Batch x{{0.5, -0.5}};
  REQUIRE(purify(ebm, x, 0, unit_defense(0, 1), RngKey::root(1)) == x);
}

TEST_CASE("independent purification replicates differ") {
  const EnergyModel ebm = EnergyModel::quadratic(1);
  const Batch x{{0.5}, {0.5}};
  const Batch out = purify(ebm, x, 10, unit_defense(10, 1), RngKey::root(2));
  REQUIRE(out[0] != out[1]);
}

TEST_CASE("purification returns displaced points to the nearest mode") {
  const ToyDataset ds = ToyDataset::by_name("bimodal2d");
  const EnergyModel ebm = ds.data_energy();
  int hits = 0;
  const int reps = 50;
  for (int r = 0; r < reps; ++r) {
    const Batch out =
        purify(ebm, Batch{{1.0, 0.0}}, 500, unit_defense(500, 1), RngKey::root(100 + r));
    const double dx = out[0][0] - 1.5, dy = out[0][1];
    if (std::sqrt(dx * dx + dy * dy) <= 3.0 * 0.3) ++hits;
  }
  REQUIRE(hits >= 45);  // frequency >= 0.9
}

TEST_CASE("ensemble prediction with zero purification equals plain logits") {
  const Classifier f = linear_classifier(Matrix(2, 1, {1.0, -1.0}), {0.0, 0.0});
  const EnergyModel ebm = EnergyModel::quadratic(1);
  const std::vector<double> x{0.7};
  const auto direct = f.logits(x);
  for (std::size_t h : {1u, 4u, 16u}) {
    const auto ens = ensemble_predict(f, ebm, x, h, unit_defense(0, h), RngKey::root(3));
    REQUIRE(ens == direct);
  }
}

TEST_CASE("H = 1 ensemble equals the classifier at one purified draw") {
  const Classifier f = linear_classifier(Matrix(2, 1, {1.0, -1.0}), {0.1, -0.1});
  const EnergyModel ebm = EnergyModel::quadratic(1);
  const std::vector<double> x{0.4};
  const DefenseConfig cfg = unit_defense(20, 1);
  const auto ens = ensemble_predict(f, ebm, x, 1, cfg, RngKey::root(4));
  const Batch purified = purify(ebm, Batch{{0.4}}, 20, cfg, RngKey::root(4));
  REQUIRE(ens == f.logits(purified[0]));
}

TEST_CASE("ensemble variance decays like one over H") {
  const Classifier f = linear_classifier(Matrix(1, 1, {1.0}), {0.0});
  const EnergyModel ebm = EnergyModel::quadratic(1);
  const std::vector<double> x{0.3};
  const DefenseConfig base = unit_defense(20, 1);

  std::vector<double> log_h, log_var;
  for (std::size_t h : {1u, 2u, 4u, 8u, 16u}) {
    DefenseConfig cfg = base;
    double mean = 0.0, sq = 0.0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
      const auto v =
          ensemble_predict(f, ebm, x, h, cfg, RngKey::root(5).child(h).child(r));
      mean += v[0];
      sq += v[0] * v[0];
    }
    mean /= reps;
    log_h.push_back(std::log(static_cast<double>(h)));
    log_var.push_back(std::log(sq / reps - mean * mean));
  }
  // Least squares slope of log var against log H.
  double mh = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    mh += log_h[i] / log_h.size();
    mv += log_var[i] / log_var.size();
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    num += (log_h[i] - mh) * (log_var[i] - mv);
    den += (log_h[i] - mh) * (log_h[i] - mh);
  }
  REQUIRE(num / den == Catch::Approx(-1.0).margin(0.15));
}

TEST_CASE("bpda gradient with no purification is the plain input gradient") {
  const Classifier f = linear_classifier(Matrix(2, 2, {1.0, 0.5, -0.5, 1.0}), {0.0, 0.2});
  const EnergyModel ebm = EnergyModel::quadratic(2);
  const std::vector<double> x{0.3, -0.6};
  const auto grad = bpda_eot_gradient(f, ebm, x, 1, 1, AttackConfig{}, unit_defense(0, 1),
                                      RngKey::root(6));
  const auto bundle = backward(f.net, x, cross_entropy_grad(f.logits(x), 1));
  REQUIRE(grad == bundle.input_grad);
}

TEST_CASE("bpda gradient averages per-replicate gradients at purified points") {
  const Classifier f = linear_classifier(Matrix(2, 1, {0.8, -0.8}), {0.0, 0.0});
  const EnergyModel ebm = EnergyModel::quadratic(1);
  const std::vector<double> x{0.5};
  const DefenseConfig cfg = unit_defense(15, 1);
  const std::size_t h = 4;
  const RngKey key = RngKey::root(7);
  const auto grad = bpda_eot_gradient(f, ebm, x, 0, h, AttackConfig{}, cfg, key);

  const Batch purified = purify(ebm, Batch(h, x), 15, cfg, key);
  std::vector<double> mean_logits(2, 0.0);
  for (const auto& xp : purified) {
    const auto lg = f.logits(xp);
    mean_logits[0] += lg[0] / h;
    mean_logits[1] += lg[1] / h;
  }
  const auto seed = cross_entropy_grad(mean_logits, 0);
  double expected = 0.0;
  for (const auto& xp : purified)
    expected += backward(f.net, xp, seed).input_grad[0] / h;
  REQUIRE(grad[0] == Catch::Approx(expected).margin(1e-14));
}

TEST_CASE("for a linear classifier the gradient is the mean-logit gradient") {
  // Constant Jacobian: averaging per-replicate gradients equals
  // evaluating at the averaged logits, for any replicate count.
  const Matrix a(2, 2, {1.0, -0.3, 0.4, 0.9});
  const Classifier f = linear_classifier(a, {0.05, -0.05});
  const EnergyModel ebm = EnergyModel::quadratic(2);
  const std::vector<double> x{0.2, 0.6};
  for (std::size_t h : {1u, 8u}) {
    const RngKey key = RngKey::root(8).child(h);
    const DefenseConfig cfg = unit_defense(25, h);
    const auto grad =
        bpda_eot_gradient(f, ebm, x, 0, h, AttackConfig{}, cfg, key);
    const auto mean_logits = ensemble_predict(f, ebm, x, h, cfg, key);
    const auto seed = cross_entropy_grad(mean_logits, 0);
    // A^T seed.
    std::vector<double> expected(2, 0.0);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 2; ++c) expected[c] += a(r, c) * seed[r];
    REQUIRE(grad[0] == Catch::Approx(expected[0]).margin(1e-12));
    REQUIRE(grad[1] == Catch::Approx(expected[1]).margin(1e-12));
  }
}

TEST_CASE("pgd step arithmetic and projection") {
  const std::vector<double> zero_grad{0.0};
  REQUIRE(pgd_step(std::vector<double>{0.5}, zero_grad, std::vector<double>{0.5}, 0.1,
                   0.05) == std::vector<double>{0.5});

  // Ball clamp: 0.58 + 0.05 exceeds 0.5 + 0.1.
  const auto stepped = pgd_step(std::vector<double>{0.58}, std::vector<double>{3.0},
                                std::vector<double>{0.5}, 0.1, 0.05);
  REQUIRE(stepped[0] == Catch::Approx(0.6));
}

TEST_CASE("pgd iterates never leave the ball or declared bounds") {
  CounterRng rng(RngKey::root(9));
  const std::vector<double> orig{0.4, 0.6};
  std::vector<double> x = orig;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> grad{rng.gaussian(), rng.gaussian()};
    x = pgd_step(x, grad, orig, 0.15, 0.04, std::pair{0.0, 1.0});
    for (std::size_t j = 0; j < 2; ++j) {
      REQUIRE(std::abs(x[j] - orig[j]) <= 0.15 + 1e-12);
      REQUIRE(x[j] >= 0.0);
      REQUIRE(x[j] <= 1.0);
    }
  }
}

TEST_CASE("zero-epsilon attack leaves robust accuracy at natural accuracy") {
  const ToyDataset ds = ToyDataset::by_name("bimodal2d");
  const Classifier f = fit_classifier(ds, {8}, 200, 400, 0.5, RngKey::root(10));
  const EnergyModel ebm = ds.data_energy();
  const Batch x = ds.sample(16, RngKey::root(11));
  std::vector<int> y;
  for (const auto& xi : x) y.push_back(ds.label(xi));

  AttackConfig attack;
  attack.epsilon = 0.0;
  attack.alpha = 0.0;
  attack.steps = 5;
  attack.attack_reps = 2;
  DefenseConfig defense = unit_defense(0, 4);  // deterministic purification
  const DefenseRecord rec =
      evaluate_defense(x, y, f, ebm, attack, defense, RngKey::root(12));
  REQUIRE(rec.robust_accuracy == rec.natural_accuracy);
}

TEST_CASE("record bits are monotone and robust accuracy never beats natural") {
  const ToyDataset ds = ToyDataset::by_name("bimodal2d");
  const Classifier f = fit_classifier(ds, {8}, 200, 400, 0.5, RngKey::root(13));
  const EnergyModel ebm = ds.data_energy();
  const Batch x = ds.sample(12, RngKey::root(14));
  std::vector<int> y;
  for (const auto& xi : x) y.push_back(ds.label(xi));

  AttackConfig attack;
  attack.epsilon = 0.8;
  attack.alpha = 0.2;
  attack.steps = 10;
  attack.attack_reps = 2;
  const DefenseConfig defense = unit_defense(50, 4);
  const DefenseRecord rec =
      evaluate_defense(x, y, f, ebm, attack, defense, RngKey::root(15));
  REQUIRE(rec.robust_accuracy <= rec.natural_accuracy + 1e-12);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (rec.robust_bits[i] == 0) REQUIRE(rec.first_break_step[i] >= 1);
    if (rec.robust_bits[i] == 1) REQUIRE(rec.first_break_step[i] == -1);
  }
}

TEST_CASE("K = 0, H = 1 evaluation reproduces plain PGD bit-exactly") {
  const ToyDataset ds = ToyDataset::by_name("bimodal2d");
  const Classifier f = fit_classifier(ds, {8}, 150, 300, 0.5, RngKey::root(16));
  const EnergyModel ebm = ds.data_energy();
  const Batch x = ds.sample(10, RngKey::root(17));
  std::vector<int> y;
  for (const auto& xi : x) y.push_back(ds.label(xi));

  AttackConfig attack;
  attack.epsilon = 0.6;
  attack.alpha = 0.15;
  attack.steps = 12;
  attack.attack_reps = 1;
  DefenseConfig defense = unit_defense(0, 1);
  const RngKey key = RngKey::root(18);
  const DefenseRecord rec = evaluate_defense(x, y, f, ebm, attack, defense, key);

  // Plain PGD oracle sharing the random-start stream.
  for (std::size_t i = 0; i < x.size(); ++i) {
    const RngKey ekey = key.child(streams::kDefense).child(i);
    std::uint8_t bit = 1;
    int natural = argmax_class(f.logits(x[i]));
    std::vector<double> adv = x[i];
    CounterRng rng(ekey.child(1));
    for (double& v : adv) v += attack.epsilon * (2.0 * rng.uniform() - 1.0);
    for (std::size_t j = 1; j <= attack.steps; ++j) {
      const auto logits = f.logits(adv);
      if (argmax_class(logits) != y[i]) bit = 0;
      const auto g = backward(f.net, adv, cross_entropy_grad(logits, y[i]));
      adv = pgd_step(adv, g.input_grad, x[i], attack.epsilon, attack.alpha);
    }
    REQUIRE(rec.natural_pred[i] == natural);
    REQUIRE(rec.robust_bits[i] == bit);
  }
}
