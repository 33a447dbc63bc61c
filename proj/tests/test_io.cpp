#include <doctest.h>

#include <sstream>

#include "seqmim/io.hpp"

using namespace seqmim;

TEST_SUITE("io") {

TEST_CASE("model specs round trip through JSON") {
  for (const auto& name : zoo_names()) {
    CAPTURE(name);
    const auto z = make_instance(name, 1.25);
    const auto back = model_from_json(model_to_json(z));
    CHECK(model_to_json(back) == model_to_json(z));
    CHECK(back.spec.dims.alpha == 1.25);
    CHECK(validate_spec(back.spec).ok());
  }
}

TEST_CASE("instance references with overrides") {
  const auto z = model_from_json(Json::parse(R"({"instance": "logistic_gmm", "alpha": 3, "lambda": 0.2, "d": 64})"));
  CHECK(z.spec.dims.alpha == 3.0);
  CHECK(z.spec.dims.lambda == 0.2);
  CHECK(z.spec.dims.d == 64);
  CHECK(z.spec.loss.name == "logistic");
  CHECK_THROWS_AS(model_from_json(Json::parse(R"({"instance": "nope"})")), Error);
}

TEST_CASE("inline model description") {
  const auto j = Json::parse(R"({
    "name": "custom",
    "dimensions": {"L": 1, "r": 1, "t": 1, "K": [2], "alpha": 1.0, "lambda": 0.1, "d": 100},
    "class_law": [{"classes": [1], "prob": 0.3}, {"classes": [2], "prob": 0.7}],
    "spectral_atoms": [{"weight": 1.0, "gamma": [[1.0, 2.0]], "tau": [[1.0, -1.0]], "pi": [0.0]}],
    "loss": {"name": "logistic", "test": "misclassification"}
  })");
  const auto z = model_from_json(j);
  CHECK(z.spec.law.support[1] == ClassTuple{1});
  CHECK(z.spec.law.probs[1] == 0.7);
  CHECK(z.nu.atoms[0].gamma(1) == 2.0);
  CHECK(validate_spec(z.spec).ok());
}

TEST_CASE("solver and plan sections") {
  const auto j = Json::parse(R"({"damping": 0.2, "tol": 1e-9, "init": "informed", "hat_form": "stein"})");
  const auto cfg = solver_config_from_json(j);
  CHECK(cfg.damping == 0.2);
  CHECK(cfg.init == InitKind::informed);
  CHECK(cfg.hat_form == HatForm::stein);
  McPlan plan;
  plan.n_samples = 123;
  plan.method = QuadratureMethod::gauss_hermite;
  const auto back = mc_plan_from_json(mc_plan_to_json(plan));
  CHECK(back.n_samples == 123);
  CHECK(back.method == QuadratureMethod::gauss_hermite);
  CHECK_THROWS_AS(solver_config_from_json(Json::parse(R"({"init": "bogus"})")), Error);
}

TEST_CASE("tables round trip") {
  Table t;
  t.meta = {{"tool", "seqmim"}, {"seed", "7"}};
  t.columns = {"alpha", "eg", "note"};
  t.add_row({format_number(0.1), format_number(1.0 / 3.0), "ok"});
  t.add_row({format_number(2.0), format_number(-1e-300), "x"});
  std::stringstream ss;
  write_table(ss, t);
  const auto back = read_table(ss);
  CHECK(back.meta == t.meta);
  CHECK(back.columns == t.columns);
  CHECK(back.rows == t.rows);
  CHECK(back.number(0, "eg") == 1.0 / 3.0);
  std::stringstream again;
  write_table(again, back);
  std::stringstream first;
  write_table(first, t);
  CHECK(again.str() == first.str());
}

TEST_CASE("matrices") {
  Matrix A(2, 3);
  A << 1, 2, 3, 4, 5, 6.5;
  CHECK(matrix_from_json(matrix_to_json(A)) == A);
}

}  // TEST_SUITE
