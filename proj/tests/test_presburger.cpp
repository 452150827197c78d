#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "ksum/presburger.hpp"

using namespace ksum;

namespace {

bool sem_equiv(const F& a, const F& b) {
  return !is_sat(land(a, lnot(b))) && !is_sat(land(b, lnot(a)));
}

// Random quantifier-free formulas over the given variables: coefficients and
// constants in [-5, 5], moduli in [2, 5], boolean depth <= 3.
struct Gen {
  std::mt19937 rng;
  std::vector<std::string> vars;

  Int ri(Int lo, Int hi) { return std::uniform_int_distribution<Int>(lo, hi)(rng); }

  Term term(int maxvars) {
    Term t = Term::cst(ri(-5, 5));
    int n = (int)ri(1, maxvars);
    for (int i = 0; i < n; ++i) {
      Int c = ri(-5, 5);
      if (c != 0) t = t.add(Term::var(vars[ri(0, (Int)vars.size() - 1)], c));
    }
    return t;
  }

  F atom() {
    switch (ri(0, 3)) {
      case 0: case 1: return le0(term(3));
      case 2: return divides(ri(2, 5), term(2));
      default: return eq(term(2), term(2));
    }
  }

  F formula(int depth) {
    if (depth == 0) return atom();
    switch (ri(0, 3)) {
      case 0: return land(formula(depth - 1), formula(depth - 1));
      case 1: return lor(formula(depth - 1), formula(depth - 1));
      case 2: return lnot(formula(depth - 1));
      default: return atom();
    }
  }
};

// Enumerate all valuations of `vars` over [lo, hi].
template <typename Fn>
void for_box(const std::vector<std::string>& vars, Int lo, Int hi, Fn fn) {
  Valuation v;
  std::vector<Int> cur(vars.size(), lo);
  for (;;) {
    for (size_t i = 0; i < vars.size(); ++i) v[vars[i]] = cur[i];
    fn(v);
    size_t i = 0;
    while (i < vars.size() && ++cur[i] > hi) cur[i++] = lo;
    if (i == vars.size()) return;
  }
}

Relation parse_rel(const std::vector<std::string>& frame, const std::string& body) {
  return Relation{frame, frame, parse_formula(body)};
}

}  // namespace

TEST_CASE("terms: arithmetic and evaluation") {
  Term t = Term::var("x", 2).add(Term::var("y", -1)).add(Term::cst(3));
  CHECK(t.eval({{"x", 4}, {"y", 5}}) == 6);
  CHECK(t.sub(t).is_const());
  CHECK(t.scale(3).eval({{"x", 1}, {"y", 1}}) == 12);
  CHECK(t.subst("x", Term::var("y")).eval({{"y", 2}}) == 5);
}

TEST_CASE("formula parsing and printing round-trips") {
  for (const char* src : {
           "x + -1*y <= 0",
           "2*x + 3*y + -4 <= 0",
           "div(2, x)",
           "!div(3, x + y)",
           "x = y + 1 && (z <= 0 || x >= 5)",
           "!(x < y) || x != 3",
           "true",
           "false",
       }) {
    F f = parse_formula(src);
    F g = parse_formula(to_string(f));
    CHECK(fm_equal(f, g));
  }
}

TEST_CASE("atom evaluation") {
  F f = parse_formula("x + -1*y <= 0");
  CHECK(eval(f, {{"x", 1}, {"y", 2}}));
  CHECK(!eval(f, {{"x", 3}, {"y", 2}}));
  CHECK(!eval(parse_formula("div(2, x)"), {{"x", 3}}));
  CHECK(eval(parse_formula("div(2, x)"), {{"x", -4}}));
  CHECK(eval(parse_formula("!div(2, x)"), {{"x", 3}}));
}

TEST_CASE("satisfiability basics") {
  CHECK(!is_sat(parse_formula("x <= 0 && x >= 1")));
  CHECK(is_sat(parse_formula("x <= 0 && x >= 0")));
  CHECK(valid(parse_formula("x <= 0 || x >= 0")));
  CHECK(!is_sat(parse_formula("div(2, x) && div(2, x + 1)")));
  CHECK(is_sat(parse_formula("div(2, x) && div(3, x) && x >= 7")));
}

TEST_CASE("projection: existential divisibility") {
  // exists y. x = 2y  is  div(2, x)
  F f = parse_formula("x = 2*y");
  F p = project(f, {"y"});
  CHECK(sem_equiv(p, parse_formula("div(2, x)")));
}

TEST_CASE("projection: bounds") {
  // exists y. x <= y && y <= z  is  x <= z
  F p = project(parse_formula("x <= y && y <= z"), {"y"});
  CHECK(sem_equiv(p, parse_formula("x <= z")));
  // exists y. y >= 0 && x = y + 3  is  x >= 3
  F q = project(parse_formula("y >= 0 && x = y + 3"), {"y"});
  CHECK(sem_equiv(q, parse_formula("x >= 3")));
}

TEST_CASE("relations: identity, compose, subsumption") {
  std::vector<std::string> fr{"x"};
  Relation inc = parse_rel(fr, "x' = x + 1");
  Relation two = compose(inc, inc);
  CHECK(equivalent(two, parse_rel(fr, "x' = x + 2")));
  CHECK(two.eval_pair({{"x", 3}}, {{"x", 5}}));
  CHECK(!two.eval_pair({{"x", 3}}, {{"x", 4}}));

  Relation guarded = parse_rel(fr, "x >= 0 && x' = x + 1");
  CHECK(subsumes(inc, guarded));
  CHECK(!subsumes(guarded, inc));
  CHECK(equivalent(Relation::identity(fr), parse_rel(fr, "x' = x")));
  CHECK(!is_sat(Relation::bottom(fr)));
}

TEST_CASE("frame relation") {
  Relation fr = frame_relation({"x", "y", "z"}, {"y"});
  CHECK(fr.eval_pair({{"x", 1}, {"y", 2}, {"z", 3}}, {{"x", 1}, {"y", 9}, {"z", 3}}));
  CHECK(!fr.eval_pair({{"x", 1}, {"y", 2}, {"z", 3}}, {{"x", 2}, {"y", 2}, {"z", 3}}));
}

TEST_CASE("octagonal recognizer") {
  std::vector<std::string> fr{"x", "y"};
  CHECK(recognize_octagonal(parse_rel(fr, "x + -1*y <= 3 && 0 - x <= 0")));
  CHECK(recognize_octagonal(parse_rel(fr, "x' <= x && y' + x <= 2")));
  // 2x <= 3 normalizes to x <= 1 over the integers, hence octagonal.
  CHECK(recognize_octagonal(parse_rel(fr, "2*x <= 3")));
  CHECK(!recognize_octagonal(parse_rel(fr, "2*x + y <= 3")));
  CHECK(recognize_octagonal(parse_rel(fr, "x' - x <= 0 - 10 && x - x' <= 10")));
  CHECK(!recognize_octagonal(parse_rel(fr, "x + y + x' <= 0")));
  CHECK(!recognize_octagonal(parse_rel(fr, "div(2, x)")));
}

TEST_CASE("finite monoid recognizer: swap has period (0, 2)") {
  std::vector<std::string> fr{"x", "y"};
  Relation swp = parse_rel(fr, "x' = y && y' = x");
  auto res = recognize_finite_monoid_affine(swp);
  REQUIRE(res.verdict == MonoidVerdict::Yes);
  CHECK(res.data->prefix == 0);
  CHECK(res.data->period == 2);
}

TEST_CASE("finite monoid recognizer: doubling is not recognized") {
  Relation dbl = parse_rel({"x"}, "x' = 2*x");
  auto res = recognize_finite_monoid_affine(dbl);
  CHECK(res.verdict == MonoidVerdict::Unknown);
}

TEST_CASE("finite monoid recognizer: havoc component is rejected") {
  Relation r = parse_rel({"x", "h"}, "x' = x");
  CHECK(recognize_finite_monoid_affine(r).verdict == MonoidVerdict::No);
}

TEST_CASE("guarded translation acceleration matches composition powers") {
  std::vector<std::string> fr{"x"};
  Relation r = parse_rel(fr, "x <= 100 && x' = x + 11");
  ClosedForm cf = accelerate_guarded_translation(r);
  for (int n = 0; n <= 5; ++n) {
    CHECK(equivalent(cf.instantiate(n), power(r, n)));
  }
  // The star contains every power.
  Relation st = cf.star();
  CHECK(subsumes(st, power(r, 3)));
}

TEST_CASE("guarded translation with a havoc component") {
  std::vector<std::string> fr{"x", "h"};
  Relation r = parse_rel(fr, "x + h <= 10 && x' = x + 1");
  ClosedForm cf = accelerate_guarded_translation(r);
  for (int n = 0; n <= 4; ++n) {
    CHECK(equivalent(cf.instantiate(n), power(r, n)));
  }
}

TEST_CASE("acceleration rejects non-translations") {
  CHECK_THROWS_AS(accelerate_guarded_translation(parse_rel({"x"}, "x' = 2*x")), Error);
  CHECK_THROWS_AS(accelerate_guarded_translation(
                      parse_rel({"x"}, "div(2, x) && x' = x + 1")),
                  Error);
  CHECK(!try_accelerate_guarded_translation(parse_rel({"x", "y"}, "x' = y && y' = x")));
}

TEST_CASE("finite monoid closed form matches composition powers") {
  std::vector<std::string> fr{"x", "y"};
  SUBCASE("swap") {
    Relation r = parse_rel(fr, "x' = y && y' = x");
    auto res = recognize_finite_monoid_affine(r);
    REQUIRE(res.verdict == MonoidVerdict::Yes);
    ClosedForm cf = closed_form_finite_monoid(r, *res.data);
    for (int n = 0; n <= 5; ++n) CHECK(equivalent(cf.instantiate(n), power(r, n)));
  }
  SUBCASE("guarded counter") {
    Relation r = parse_rel(fr, "x >= 0 && x' = x + 1 && y' = y");
    auto res = recognize_finite_monoid_affine(r);
    REQUIRE(res.verdict == MonoidVerdict::Yes);
    ClosedForm cf = closed_form_finite_monoid(r, *res.data);
    for (int n = 0; n <= 5; ++n) CHECK(equivalent(cf.instantiate(n), power(r, n)));
  }
  SUBCASE("reset then hold") {
    Relation r = parse_rel(fr, "x' = 3 && y' = x + y");
    auto res = recognize_finite_monoid_affine(r);
    if (res.verdict == MonoidVerdict::Yes) {
      ClosedForm cf = closed_form_finite_monoid(r, *res.data);
      for (int n = 0; n <= 5; ++n) CHECK(equivalent(cf.instantiate(n), power(r, n)));
    }
  }
  SUBCASE("swap with drift and guard") {
    Relation r = parse_rel(fr, "x <= 20 && x' = y + 1 && y' = x + 2");
    auto res = recognize_finite_monoid_affine(r);
    REQUIRE(res.verdict == MonoidVerdict::Yes);
    CHECK(res.data->period == 2);
    ClosedForm cf = closed_form_finite_monoid(r, *res.data);
    for (int n = 0; n <= 6; ++n) CHECK(equivalent(cf.instantiate(n), power(r, n)));
  }
}

TEST_CASE("random formulas: projection agrees with a bounded witness search") {
  // With |coefficients| <= 5, |constants| <= 5, at most 4 variables and free
  // variables in [-8, 8], any satisfiable existential has a witness within
  // [-200, 200] (boundary + divisibility period margin).
  Gen g;
  g.rng.seed(12345);
  g.vars = {"x", "y", "z", "w"};
  const Int BOX = 8, WIT = 200;
  int checked = 0;
  for (int iter = 0; iter < 120; ++iter) {
    F f = g.formula(2);
    std::string ev = g.vars[g.ri(0, 3)];
    F p;
    try {
      p = project(f, {ev});
    } catch (const Error& e) {
      continue;  // resource cap hit on an adversarial random instance
    }
    std::vector<std::string> rest;
    for (auto& v : g.vars)
      if (v != ev) rest.push_back(v);
    for_box(rest, -BOX, BOX, [&](const Valuation& v) {
      bool want = false;
      Valuation vv = v;
      for (Int w = -WIT; w <= WIT && !want; ++w) {
        vv[ev] = w;
        want = eval(f, vv);
      }
      bool got = eval(p, v);
      if (want != got) {
        CAPTURE(to_string(f));
        CAPTURE(ev);
        CHECK(want == got);
      }
      ++checked;
    });
  }
  CHECK(checked > 0);
}

TEST_CASE("random formulas: satisfiability is sound and excluded middle holds") {
  Gen g;
  g.rng.seed(777);
  g.vars = {"x", "y", "z"};
  for (int iter = 0; iter < 150; ++iter) {
    F f = g.formula(2);
    bool sat;
    try {
      sat = is_sat(f);
    } catch (const Error&) {
      continue;
    }
    CHECK(!is_sat(land(f, lnot(f))));
    CHECK(valid(lor(f, lnot(f))));
    if (!sat) {
      // No model may exist anywhere; spot check a box.
      bool found = false;
      for_box(g.vars, -6, 6, [&](const Valuation& v) { found = found || eval(f, v); });
      CHECK(!found);
    }
  }
}

TEST_CASE("random guarded translations: closed forms match powers") {
  Gen g;
  g.rng.seed(4242);
  std::vector<std::string> fr{"x", "y"};
  for (int iter = 0; iter < 25; ++iter) {
    Int dx = g.ri(-3, 3), dy = g.ri(-3, 3);
    Int gx = g.ri(0, 30);
    std::ostringstream body;
    body << "x <= " << gx << " && x' = x + " << (dx >= 0 ? "" : "0 - ") << std::abs(dx)
         << " && y' = y + " << (dy >= 0 ? "" : "0 - ") << std::abs(dy);
    Relation r = parse_rel(fr, body.str());
    ClosedForm cf = accelerate_guarded_translation(r);
    for (int n = 0; n <= 6; ++n) CHECK(equivalent(cf.instantiate(n), power(r, n)));
  }
}
