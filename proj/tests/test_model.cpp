#include <doctest.h>

#include <cmath>
#include <random>

#include "mrt/error.hpp"
#include "mrt/grad_check.hpp"
#include "mrt/model.hpp"
#include "mrt/training.hpp"
#include "support.hpp"

using namespace mrt;
using mrt::test::micro_config;
using mrt::test::random_scene;
using mrt::test::random_tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.joints = 3;
  c.history = 5;
  c.k_out = 4;
  c.layers = 2;
  c.heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  return c;
}

std::vector<double> last_pose(const Scene& s, std::size_t person) {
  const auto row = s.persons[person].poses.row(s.steps() - 1);
  return {row.begin(), row.end()};
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.k_out = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  nlohmann::json j = c;
  CHECK(j.get<ModelConfig>() == c);
}

TEST_CASE("local encoder: shapes, static persons, errors") {
  MrtParams p(small_config());
  initialize(p.param_set(), 1);
  std::mt19937_64 rng(1);
  for (std::size_t k : {4, 15, 30, 45}) {
    Tape tape;
    CHECK(local_encode(tape, random_tensor(k, 9, rng), p).value().shape() == Shape{k, 8});
  }
  Tape tape;
  const Tensor a = local_encode(tape, Tensor(6, 9, 1.0), p).value();
  const Tensor b = local_encode(tape, Tensor(6, 9, -4.5), p).value();
  CHECK(a == b);
  CHECK_THROWS_AS(local_encode(tape, Tensor(1, 9), p), InvalidInput);
  CHECK_THROWS_AS(local_encode(tape, Tensor(5, 6), p), DimensionError);
}

TEST_CASE("local encoder golden vector") {
  // Formula weights on a fixed walk; reference from tests/oracles/golden.py.
  const double row0[] = {0.19783036409195368,  1.5206148876190544,    -1.5261084447428497,
                         -0.30481286074712333, -0.778423743091327,    -0.39213125356479245,
                         -0.097176840414741908, 2.4338019204486763};
  const double row14[] = {1.9166625773852943,  -1.6304980768108051, 0.6650074129183714,
                          -0.57893400831572106, -0.69228350667797911, -0.34412282331135274,
                          -0.5292285762293778,  1.9823996171399951};
  ModelConfig c = small_config();
  c.history = 15;
  MrtParams p(c);
  test::fill_formula(p.param_set());
  Tape tape;
  const Tensor e = local_encode(tape, test::formula_walk(15, 3), p).value();
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(std::abs(e(0, i) - row0[i]) < 1e-10);
    CHECK(std::abs(e(14, i) - row14[i]) < 1e-10);
  }
}

TEST_CASE("local encoder is translation invariant") {
  MrtParams p(small_config());
  initialize(p.param_set(), 2);
  std::mt19937_64 rng(2);
  const Tensor h = random_tensor(15, 9, rng);
  Tensor moved = h;
  for (std::size_t r = 0; r < 15; ++r)
    for (std::size_t c = 0; c < 9; ++c) moved(r, c) += (c % 3 == 0 ? 4.0 : c % 3 == 1 ? -2.5 : 0.75);
  Tape tape;
  CHECK(max_abs_diff(local_encode(tape, h, p).value(), local_encode(tape, moved, p).value()) < 1e-9);
}

TEST_CASE("global encoder: labels, degenerate crowd, person equivariance, translation sensitivity") {
  ModelConfig c = small_config();
  c.history = 15;
  MrtParams p(c);
  initialize(p.param_set(), 3);
  std::mt19937_64 rng(3);
  const Scene s = random_scene(3, 15, 3, rng);
  Tape tape;
  const GlobalContext ctx = global_encode(tape, s, p);
  CHECK(ctx.tokens.value().shape() == Shape{45, 8});
  REQUIRE(ctx.labels.size() == 45);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t t = 0; t < 15; ++t) {
      const TokenLabel& l = ctx.labels[n * 15 + t];
      CHECK(l.source == TokenLabel::Source::Global);
      CHECK(l.person == n);
      CHECK(l.time == t);
    }

  CHECK(global_encode(tape, random_scene(1, 15, 3, rng), p).tokens.value().shape() == Shape{15, 8});

  const std::size_t order[] = {2, 0, 1};
  const Tensor perm = global_encode(tape, s.permuted(order), p).tokens.value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 15; ++t)
      for (std::size_t d = 0; d < 8; ++d)
        CHECK(std::abs(perm(i * 15 + t, d) - ctx.tokens.value()(order[i] * 15 + t, d)) < 1e-9);

  Scene moved = s;
  for (std::size_t r = 0; r < 15; ++r)
    for (std::size_t col = 0; col < 9; ++col) moved.persons[1].poses(r, col) += 1.0;
  const Tensor after = global_encode(tape, moved, p).tokens.value();
  double change = 0.0;
  for (std::size_t t = 0; t < 15; ++t)
    for (std::size_t d = 0; d < 8; ++d)
      change = std::max(change, std::abs(after(15 + t, d) - ctx.tokens.value()(15 + t, d)));
  CHECK(change > 1e-6);

  Scene ragged = s;
  ragged.persons[2].poses = random_tensor(14, 9, rng);
  CHECK_THROWS_AS(global_encode(tape, ragged, p), InvalidInput);
}

TEST_CASE("zero output head freezes the query pose") {
  MrtParams p(small_config());
  initialize(p.param_set(), 4);
  p.head_fc2.weight.value.fill(0.0);
  p.head_fc2.bias.value.fill(0.0);
  std::mt19937_64 rng(4);
  const Scene s = random_scene(2, 5, 3, rng);
  const auto chunks = predict_scene(s, p);
  REQUIRE(chunks.size() == 2);
  for (std::size_t n = 0; n < 2; ++n) {
    const auto q = last_pose(s, n);
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t c = 0; c < 9; ++c) {
        CHECK(chunks[n].offsets(t, c) == 0.0);
        CHECK(chunks[n].poses(t, c) == q[c]);
      }
  }
}

TEST_CASE("prediction chunk integration identity") {
  MrtParams p(small_config());
  initialize(p.param_set(), 5);
  std::mt19937_64 rng(5);
  const Scene s = random_scene(3, 5, 3, rng);
  const auto chunks = predict_scene(s, p);
  for (std::size_t n = 0; n < 3; ++n) {
    const auto q = last_pose(s, n);
    const auto& ch = chunks[n];
    CHECK(ch.attention.size() == 2);
    for (std::size_t c = 0; c < 9; ++c) {
      CHECK(ch.poses(0, c) == q[c] + ch.offsets(0, c));
      for (std::size_t t = 1; t < 4; ++t) CHECK(ch.poses(t, c) == ch.poses(t - 1, c) + ch.offsets(t, c));
    }
  }
}

TEST_CASE("other persons' order does not affect a prediction") {
  ModelConfig c = small_config();
  c.heads = 4;
  MrtParams p(c);
  initialize(p.param_set(), 6);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Scene s = random_scene(3, 5, 3, rng);
    const auto base = predict_scene(s, p);
    const std::size_t order[] = {0, 2, 1};
    const auto perm = predict_scene(s.permuted(order), p);
    CHECK(max_abs_diff(perm[0].poses, base[0].poses) < 1e-12);
    CHECK(max_abs_diff(perm[1].poses, base[2].poses) < 1e-12);
    CHECK(max_abs_diff(perm[2].poses, base[1].poses) < 1e-12);
  }
}

TEST_CASE("predict_scene composes decode_person with a shared context") {
  MrtParams p(small_config());
  initialize(p.param_set(), 7);
  std::mt19937_64 rng(7);
  const Scene s = random_scene(3, 5, 3, rng);
  const auto chunks = predict_scene(s, p);
  CHECK(chunks.size() == 3);
  Tape tape;
  const GlobalContext ctx = global_encode(tape, s, p, false);
  for (std::size_t n = 0; n < 3; ++n) {
    Var local = local_encode(tape, s.persons[n].poses, p, false);
    const auto alone = to_chunk(decode_person(tape, local, ctx, s, n, last_pose(s, n), p, false));
    CHECK(alone.poses == chunks[n].poses);
    CHECK(alone.offsets == chunks[n].offsets);
    const auto& keys = alone.attention[0].keys;
    REQUIRE(keys.size() == 5 + 15);
    CHECK(keys[0].source == TokenLabel::Source::Local);
    CHECK(keys[0].person == n);
    CHECK(keys[5].source == TokenLabel::Source::Global);
  }
  CHECK(predict_scene(random_scene(1, 5, 3, rng), p).size() == 1);

  const Scene other = random_scene(2, 5, 3, rng);
  Var local = local_encode(tape, s.persons[0].poses, p, false);
  CHECK_THROWS_AS(decode_person(tape, local, ctx, other, 0, last_pose(s, 0), p, false), InvalidInput);
}

TEST_CASE("discriminator scores") {
  MrtParams unused(small_config());
  DiscriminatorParams d(small_config());
  initialize(d.param_set(), 8);
  std::mt19937_64 rng(8);
  for (std::size_t m : {1, 4, 15}) {
    const Tensor s = discriminate(random_tensor(m, 9, rng), d);
    CHECK(s.shape() == Shape{m, 1});
    CHECK(s.all_finite());
  }
}

TEST_CASE("predictor and discriminator losses pass grad check on the micro configuration") {
  const ModelConfig c = micro_config();
  TrainingState state(c);
  initialize(state.predictor.param_set(), 9);
  initialize(state.discriminator.param_set(), 10);
  std::mt19937_64 rng(9);
  const Scene s = random_scene(2, 8, 3, rng, 1.0);
  const auto samples = make_samples(s, c);
  REQUIRE(!samples.empty());
  const TrainSample& sample = samples.front();
  const Tensor real = random_tensor(4, 9, rng);

  const auto predictor_loss = [&](Tape& t) {
    const GlobalContext ctx = global_encode(t, sample.history, state.predictor);
    Var total = t.constant(Tensor::scalar(0.0));
    for (std::size_t n = 0; n < 2; ++n) {
      Var local = local_encode(t, sample.history.persons[n].poses, state.predictor);
      const auto out = decode_person(t, local, ctx, sample.history, n, sample.queries[n].coords,
                                     state.predictor);
      Var scores = discriminate(t, out.poses, state.discriminator, false);
      total = total + loss_rec(out.offsets, sample.target_offsets[n]) + 0.5 * loss_adv(scores);
    }
    return total;
  };
  const auto rp = grad_check(predictor_loss, state.predictor.param_set());
  CHECK(rp.max_rel_error < 1e-4);

  const Tensor fake = predict_scene(sample.history, state.predictor)[0].poses;
  const auto disc_loss = [&](Tape& t) {
    return loss_disc(discriminate(t, t.constant(fake), state.discriminator),
                     discriminate(t, t.constant(real), state.discriminator));
  };
  const auto rd = grad_check(disc_loss, state.discriminator.param_set());
  CHECK(rd.max_rel_error < 1e-4);
}

}  // TEST_SUITE
