#include <doctest.h>

#include <filesystem>

#include "oplearn/convnet.hpp"
#include "oplearn/rng.hpp"
#include "oplearn/train.hpp"

using namespace oplearn;

namespace {

Mat randm(Index r, Index c, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Mat m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

double dotm(const Mat& a, const Mat& b) {
  return (a.array() * b.array()).sum();
}

}  // namespace

TEST_CASE("a fresh model starts near the identity") {
  ConvCorrection m = model_build(0);
  Mat u = randm(12, 12, 5);
  Mat v = m.value(u);
  CHECK((v - u).norm() / u.norm() < 0.1);
}

TEST_CASE("zero parameters give the exact identity") {
  ConvCorrection m = model_build(1);
  m.set_params(Vec::Zero(m.num_params()));
  Mat u = randm(9, 7, 6);
  CHECK((m.value(u) - u).cwiseAbs().maxCoeff() == 0.0);
  Mat w = randm(9, 7, 7);
  CHECK((m.input_vjp(u, w) - w).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("input vjp matches directional finite differences") {
  ConvCorrection m = model_build(3);
  const double h = 1e-5;
  for (int probe = 0; probe < 5; ++probe) {
    auto s = static_cast<std::uint64_t>(probe);
    Mat u = randm(10, 10, 100 + s);
    Mat w = randm(10, 10, 200 + s);
    Mat d = randm(10, 10, 300 + s);
    double fd =
        (dotm(m.value(u + h * d), w) - dotm(m.value(u - h * d), w)) / (2 * h);
    double an = dotm(m.input_vjp(u, w), d);
    CHECK(std::abs(fd - an) < 1e-4 * std::max(1.0, std::abs(an)));
  }
}

TEST_CASE("parameter gradient matches directional finite differences") {
  ConvCorrection m = model_build(4);
  Vec p = m.params();
  const double h = 1e-5;
  for (int probe = 0; probe < 5; ++probe) {
    auto s = static_cast<std::uint64_t>(probe);
    Mat u = randm(8, 8, 400 + s);
    Mat w = randm(8, 8, 500 + s);
    SplitMix64 rng(600 + s);
    Vec dp(p.size());
    for (Index i = 0; i < dp.size(); ++i) dp[i] = rng.normal();
    ConvCorrection mp = m, mm = m;
    mp.set_params(p + h * dp);
    mm.set_params(p - h * dp);
    double fd = (dotm(mp.value(u), w) - dotm(mm.value(u), w)) / (2 * h);
    double an = m.param_grad(u, w).dot(dp);
    CHECK(std::abs(fd - an) < 1e-4 * std::max(1.0, std::abs(an)));
  }
}

TEST_CASE("checkpoints round-trip bitwise and validate their fingerprint") {
  ConvCorrection m = model_build(9);
  auto path =
      (std::filesystem::temp_directory_path() / "oplearn_model.opds").string();
  save_model(path, m, 0xfeedbeef);
  ConvCorrection back = load_model(path, 0xfeedbeef);
  CHECK((back.params() - m.params()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.descriptor() == m.descriptor());
  CHECK_THROWS_AS(load_model(path, 0xfeedbee0), IoError);
  CHECK_THROWS_AS(load_model(path + ".absent", 0xfeedbeef), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("the model memorises a two-sample pool") {
  ConvCorrection m = model_build(12);
  Pool pool;
  pool.cell_measure = 1.0 / 64.0;
  for (int i = 0; i < 2; ++i) {
    auto s = static_cast<std::uint64_t>(i);
    Mat u = randm(8, 8, 700 + s);
    // target u + 0.3 shift(u): one off-centre tap of a 5x5 kernel, so the
    // architecture can represent it exactly
    Mat t = 1.05 * u;
    t.block(1, 0, 7, 8) += 0.3 * u.block(0, 0, 7, 8);
    pool.add(u, t, "sample");
  }
  TrainOpt opt;
  opt.lr = 3e-3;
  opt.batch = 2;
  opt.epochs = 1500;
  opt.seed = 1;
  TrainResult res = train_correction(m, pool, opt);
  REQUIRE(!res.diverged);
  CHECK(res.epoch_loss.back() < 1e-4 * res.epoch_loss.front());
}

TEST_CASE("training is bit-reproducible") {
  Pool pool;
  pool.cell_measure = 1.0;
  pool.add(randm(6, 6, 11), randm(6, 6, 12), "a");
  pool.add(randm(6, 6, 13), randm(6, 6, 14), "b");
  pool.add(randm(6, 6, 15), randm(6, 6, 16), "c");
  TrainOpt opt;
  opt.lr = 1e-3;
  opt.batch = 2;
  opt.epochs = 12;
  opt.seed = 77;
  ConvCorrection m1 = model_build(21), m2 = model_build(21);
  TrainResult r1 = train_correction(m1, pool, opt);
  TrainResult r2 = train_correction(m2, pool, opt);
  CHECK((m1.params() - m2.params()).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(r1.epoch_loss.size() == r2.epoch_loss.size());
  for (std::size_t i = 0; i < r1.epoch_loss.size(); ++i)
    CHECK(r1.epoch_loss[i] == r2.epoch_loss[i]);
}

TEST_CASE("a runaway learning rate trips the divergence guard") {
  Pool pool;
  pool.cell_measure = 1.0;
  pool.add(randm(6, 6, 31), Mat(100.0 * randm(6, 6, 32)), "a");
  pool.add(randm(6, 6, 33), Mat(100.0 * randm(6, 6, 34)), "b");
  TrainOpt opt;
  opt.lr = 50.0;
  opt.batch = 1;
  opt.epochs = 400;
  opt.seed = 3;
  ConvCorrection m = model_build(40);
  TrainResult res = train_correction(m, pool, opt);
  CHECK(res.diverged);
  CHECK(res.epoch_loss.size() < 400);
}

TEST_CASE("training inputs are validated") {
  Pool empty;
  ConvCorrection m = model_build(2);
  CHECK_THROWS_AS(train_correction(m, empty, TrainOpt{}), ConfigError);
  Pool pool;
  pool.add(randm(4, 4, 1), randm(4, 4, 2), "a");
  TrainOpt bad;
  bad.batch = 0;
  CHECK_THROWS_AS(train_correction(m, pool, bad), ConfigError);
  CHECK_THROWS_AS(pool.add(randm(4, 4, 3), randm(5, 4, 4), "b"), ConfigError);
  CHECK_THROWS_AS(m.set_params(Vec::Zero(3)), ConfigError);
  CHECK_THROWS_AS(model_build(0, 0), ConfigError);
}
