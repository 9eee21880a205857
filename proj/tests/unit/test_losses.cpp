#include <doctest.h>

#include <cmath>

#include "dagan/error.hpp"
#include "dagan/losses.hpp"
#include "dagan/ops.hpp"
#include "helpers.hpp"

using namespace dagan;
using ag::Var;

namespace {

Var img(std::vector<float> v) { return ag::constant(Tensor(Shape{1, 1, 2, 2}, std::move(v))); }
Var filled(float v) { return ag::constant(Tensor(Shape{1, 1, 2, 2}, v)); }
Var zero_field() { return ag::constant(Tensor(Shape{1, 2, 2, 2}, 0.0f)); }
FieldSet zero_fields() { return {zero_field(), zero_field(), zero_field(), zero_field()}; }

double softplus(double v) { return std::log1p(std::exp(v)); }

// Logits are the pixel values themselves.
Critic identity_critic(Domain d) {
  return {d, [](const Var& v) { return v; }};
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("similarity on a 2x2 example") {
  const Var x = img({0, 0, 0, 0}), y = img({1, 1, 1, 1});
  const Var g = img({1, 1, 1, 0}), f = img({0, 0.5f, 0, 0});
  // Zero fields: |y-g| twice (0.25 each) plus |x-f| twice (0.125 each).
  CHECK(sim_loss(x, y, g, f, zero_fields()).item() == doctest::Approx(0.75));
  CHECK(smoothness_loss(zero_fields()).item() == 0.0f);
  LossWeights w;
  CHECK(symmetric_registration_loss(ag::constant(Tensor::scalar(0.75f)), ag::constant(Tensor::scalar(0.5f)), w)
            .item() == doctest::Approx(20 * 0.75 + 10 * 0.5));
}

TEST_CASE("similarity with a shift field") {
  // g shifted one column right equals y; warping g by dx=+1 samples the right neighbour.
  const Var y = img({1, 0, 3, 0}), g = img({0, 1, 0, 3});
  FieldSet fs = zero_fields();
  Tensor t(Shape{1, 2, 2, 2}, 0.0f);
  t.at(0, 1, 0, 0) = 1.0f;
  t.at(0, 1, 1, 0) = 1.0f;
  fs.y_fwd = ag::constant(t);
  const Var x = filled(0), f = filled(0);
  // y vs g o y_fwd: column 0 matches, column 1 clamps to g's column 1 -> |0-1|,|0-3| -> mean 1.
  // g vs y o 0: mean |g - y| = (1+1+3+3)/4 = 2.
  CHECK(sim_loss(x, y, g, f, fs).item() == doctest::Approx(3.0));
}

TEST_CASE("smoothness of a linear field") {
  FieldSet fs = zero_fields();
  Tensor t(Shape{1, 2, 2, 2}, 0.0f);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) t.at(0, 1, r, c) = static_cast<float>(c);
  fs.x_bwd = ag::constant(t);
  CHECK(smoothness_loss(fs).item() == doctest::Approx(ag::gradient_energy(fs.x_bwd).item()));
  CHECK(smoothness_loss(fs).item() > 0.0f);
}

TEST_CASE("inverse consistency terms vanish for identity maps") {
  const Var x = img({0.1f, 0.2f, 0.3f, 0.4f}), y = img({-0.5f, 0.5f, 0.0f, 1.0f});
  const ImageMap id = [](const Var& v) { return v; };
  CHECK(ic_reg_loss(x, y, zero_fields()).item() == 0.0f);
  CHECK(ic_gen_loss(x, y, id, id).item() == 0.0f);
  CHECK(ic_joint_loss(x, y, x, y, id, id, zero_fields()).item() == 0.0f);
  // Swapped translations give |y - x| in both directions.
  CHECK(ic_joint_loss(x, y, y, x, id, id, zero_fields()).item() == doctest::Approx(2 * 0.45).epsilon(1e-5));
}

TEST_CASE("cycle loss with a constant offset map") {
  const Var x = filled(0.0f), y = filled(0.0f);
  const ImageMap plus = [](const Var& v) { return ag::add_scalar(v, 0.25f); };
  // F(G(x)) - x = 0.5 and G(F(y)) - y = 0.5.
  CHECK(ic_gen_loss(x, y, plus, plus).item() == doctest::Approx(1.0));
}

TEST_CASE("mic combines only enabled terms") {
  const Var a = ag::constant(Tensor::scalar(1.0f)), b = ag::constant(Tensor::scalar(2.0f)),
            c = ag::constant(Tensor::scalar(4.0f));
  LossWeights w;
  CHECK(mic_loss(a, b, c, w, {}).item() == doctest::Approx(70.0));
  CHECK(mic_loss(a, b, c, w, {true, false, false}).item() == doctest::Approx(10.0));
  CHECK(mic_loss(a, b, c, w, {false, true, true}).item() == doctest::Approx(60.0));
  CHECK(mic_loss(a, b, c, w, {false, false, false}).item() == 0.0f);
  CHECK(mic_loss(a, Var(), c, w, {}).item() == doctest::Approx(50.0));
}

TEST_CASE("adversarial closed forms") {
  const Critic d = identity_critic(Domain::y);
  const Var real = filled(0.5f), fake = filled(-0.5f);
  CHECK(adv_da_discriminator_loss(d, Domain::y, real, fake, zero_field(), zero_field()).item() ==
        doctest::Approx(4 * softplus(-0.5)));
  CHECK(adv_da_generator_loss(d, Domain::y, fake, zero_field()).item() == doctest::Approx(2 * softplus(0.5)));
  CHECK(adv_da_generator_loss(d, Domain::y, fake, zero_field(), true).item() ==
        doctest::Approx(-2 * softplus(-0.5)));
  CHECK(conventional_discriminator_loss(d, Domain::y, filled(0.3f), filled(-0.3f)).item() ==
        doctest::Approx(2 * softplus(-0.3)));
  CHECK(conventional_generator_loss(d, Domain::y, filled(-0.3f)).item() == doctest::Approx(softplus(0.3)));
  CHECK(conventional_generator_loss(d, Domain::y, filled(-0.3f), true).item() == doctest::Approx(-softplus(-0.3)));
  const Var zero = filled(0.0f);
  CHECK(adv_da_discriminator_loss(d, Domain::y, zero, zero, zero_field(), zero_field()).item() ==
        doctest::Approx(4 * std::log(2.0)));
}

TEST_CASE("a critic is bound to its domain") {
  const Critic d = identity_critic(Domain::x);
  CHECK_THROWS_AS(adv_da_discriminator_loss(d, Domain::y, filled(0), filled(0), zero_field(), zero_field()),
                  ArgumentError);
  CHECK_THROWS_AS(conventional_generator_loss(d, Domain::y, filled(0)), ArgumentError);
}

TEST_CASE("shape checks") {
  CHECK_THROWS_AS(sim_loss(filled(0), ag::constant(Tensor(Shape{1, 1, 2, 3})), filled(0), filled(0), zero_fields()),
                  ArgumentError);
  FieldSet bad = zero_fields();
  bad.x_fwd = Var();
  CHECK_THROWS_AS(ic_reg_loss(filled(0), filled(0), bad), ArgumentError);
  LossWeights w;
  w.lambda_smt = -1;
  CHECK_THROWS_AS(w.validate(), ArgumentError);
}

TEST_CASE("active term names") {
  ObjectiveConfig c;
  CHECK(active_terms(c) == std::vector<std::string>{"sim", "smt", "ic_reg", "ic_gen", "ic_joint", "adv_da"});
  c.adv_mode = AdvMode::conventional;
  c.ic = {false, true, false};
  CHECK(active_terms(c) == std::vector<std::string>{"sim", "smt", "ic_gen", "adv"});
  c.registration = false;
  c.ic = {};
  CHECK(active_terms(c) == std::vector<std::string>{"l1", "ic_gen", "adv"});
  c.weights.lambda_ic_gen = 0;
  CHECK(active_terms(c) == std::vector<std::string>{"l1", "adv"});
  CHECK_THROWS_AS(parse_adv_mode("wgan"), ConfigError);
}

TEST_CASE("objective totals match their reports") {
  DaganModel m(ModelSpec::toy(), 3);
  Rng rng(4);
  ForwardState s;
  s.x = ag::constant(testing::random_tensor(Shape{1, 1, 16, 16}, rng));
  s.y = ag::constant(testing::random_tensor(Shape{1, 1, 16, 16}, rng));
  const ImageMap G = [&](const Var& v) { return m.g(v); };
  const ImageMap F = [&](const Var& v) { return m.f(v); };
  s.g_out = G(s.x);
  s.f_out = F(s.y);
  s.fields = {m.a_y->forward(s.g_out, s.y), m.a_y->backward(s.y, s.g_out), m.a_x->forward(s.f_out, s.x),
              m.a_x->backward(s.x, s.f_out)};
  ObjectiveConfig c;
  const Objective o = generator_objective(s, G, F, critic(m.d_y), critic(m.d_x), c);
  CHECK(o.report.names() == active_terms(c));
  CHECK(o.total.item() == doctest::Approx(o.report.weighted_sum()).epsilon(1e-5));
  CHECK(o.report.total == doctest::Approx(o.total.item()));

  SUBCASE("a single weight isolates its term") {
    ObjectiveConfig only;
    only.weights = {0, 0, 0, 7.0f, 0, 0};
    const Objective g = generator_objective(s, G, F, critic(m.d_y), critic(m.d_x), only);
    CHECK(g.report.names() == std::vector<std::string>{"ic_gen"});
    CHECK(g.total.item() == doctest::Approx(7.0 * o.report.value("ic_gen")).epsilon(1e-5));
  }
  SUBCASE("discriminator objective") {
    const Objective d = discriminator_objective(s, critic(m.d_y), critic(m.d_x), c);
    CHECK(d.report.names() == std::vector<std::string>{"d_adv_da"});
    CHECK(d.total.item() > 0.0f);
  }
}

}
