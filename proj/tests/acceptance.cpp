// End-to-end acceptance checks.  Each numbered criterion prints exactly one
// PASS/FAIL line; the process exits with the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ksum/bounded.hpp"
#include "ksum/summarize.hpp"

using namespace ksum;

namespace {

int failures = 0;
std::vector<std::string> notes;

Program load(const std::string& name) {
  return parse_program_file(std::string(KSUM_FIXTURES) + "/" + name);
}

void note(const std::string& s) { notes.push_back(s); }

struct Criterion {
  int n;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  explicit Criterion(int n) : n(n) { notes.clear(); }
  void finish(bool ok, const std::string& what, double limit_s) {
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = s <= limit_s;
    std::printf("criterion %d: %s  %s  (%.1fs, limit %.0fs)\n", n,
                ok && in_time ? "PASS" : "FAIL", what.c_str(), s, limit_s);
    for (auto& m : notes) std::printf("    %s\n", m.c_str());
    if (!(ok && in_time)) ++failures;
    std::fflush(stdout);
  }
};

bool expect(bool cond, const std::string& msg) {
  if (!cond) note("check failed: " + msg);
  return cond;
}

// Box-restricted i/o pairs of a summary, per state.
std::map<std::string, std::set<IOPair>> summary_pairs(const Program& p,
                                                      const Summary& s,
                                                      Int lo, Int hi) {
  std::map<std::string, std::set<IOPair>> out;
  for (auto& [q, r] : s.rel)
    out[q] = box_pairs(r, p.owner_of_state(q)->locals, lo, hi);
  return out;
}

// ---------------------------------------------------------------------------
// 1. The doubling program: grammar shape, word semantics, index-2 coverage.
// ---------------------------------------------------------------------------
void criterion1() {
  Criterion c(1);
  bool ok = true;

  Program p = load("fig1.rip");
  Grammar g = build_vpg(p);
  ok &= expect(g.productions.size() == 7, "expected 7 productions");
  auto is = [&](const char* id, char kind, const char* head, const char* tau,
                const char* Y, const char* Z) {
    const Production* pr = g.find(id);
    return pr && pr->kind == kind && pr->head == head && pr->tau == tau &&
           pr->Y == Y && pr->Z == Z;
  };
  ok &= expect(is("p1", 'b', "P_q1", "t1", "P_q2", ""), "p1 shape");
  ok &= expect(is("p2", 'b', "P_q2", "t2", "P_q3", ""), "p2 shape");
  ok &= expect(is("p3", 'c', "P_q3", "t3", "P_q1", "P_q4"), "p3 shape");
  ok &= expect(is("p4", 'a', "P_q4", "t4", "", ""), "p4 shape");
  ok &= expect(is("p5", 'b', "P_q2", "t5", "P_q5", ""), "p5 shape");
  ok &= expect(is("p6", 'b', "P_q5", "t6", "P_q6", ""), "p6 shape");
  ok &= expect(is("p7", 'a', "P_q6", "t7", "", ""), "p7 shape");

  // The n = 1 word: one completed inner call.  On inputs/outputs it denotes
  // exactly "input 1 maps to output 2".
  Word theta = parse_word("t1 t2 <t3 t1 t5 t6 t7 t3> t4");
  Relation sem = io_restrict(word_semantics(theta, p), {"x"}, {"z"});
  Relation want{{"x"}, {"z"}, parse_formula("x = 1 && z' = 2")};
  ok &= expect(equivalent(sem, want), "word relation is x = 1 && z' = 2");

  // Index 2 already yields the whole language (up to length 30).
  GGrammar gg = to_generic(g);
  const std::string X0 = p.procedures[0].initial;
  ok &= expect(enumerate_words(gg, X0, 2, 30) == enumerate_words(gg, X0, 64, 30),
               "index-2 language equals the unrestricted language to length 30");

  c.finish(ok, "doubling program: grammar, word semantics, index-2 coverage", 10);
}

// ---------------------------------------------------------------------------
// 2. Backend agreement on the doubling program for k = 1..3.
// ---------------------------------------------------------------------------
void criterion2() {
  Criterion c(2);
  bool ok = true;
  Program p = load("fig1.rip");
  Bounds b;
  b.box_lo = -5;
  b.box_hi = 10;
  for (int k = 1; k <= 3; ++k) {
    auto ps = summary_pairs(p, k_index_summary(p, k, Backend::Symbolic, b),
                            b.box_lo, b.box_hi);
    auto pe = summary_pairs(p, k_index_summary(p, k, Backend::Enumerate, b),
                            b.box_lo, b.box_hi);
    auto pc = summary_pairs(p, k_index_summary(p, k, Backend::Concrete, b),
                            b.box_lo, b.box_hi);
    for (auto& q : p.state_order) {
      if (p.owner_of_state(q)->is_final(q)) continue;
      ok &= expect(ps.at(q) == pe.at(q) && pe.at(q) == pc.at(q),
                   "backends disagree at k=" + std::to_string(k) + " state " + q);
    }
  }
  c.finish(ok, "symbolic / enumerate / concrete agree on the box, k = 1..3", 60);
}

// ---------------------------------------------------------------------------
// 3. Stabilization indices across the fixture suite (concrete backend).
// ---------------------------------------------------------------------------
void criterion3() {
  Criterion c(3);
  bool ok = true;

  Bounds b;  // box [-10, 10]
  for (const char* name : {"timestwo.rip", "leq.rip", "parity.rip", "plus.rip"}) {
    auto k = find_stable_k(load(name), Backend::Concrete, b, 4);
    bool good = k && *k == 2;
    ok &= expect(good, std::string(name) + ": expected k* = 2, measured " +
                           (k ? std::to_string(*k) : std::string("none")));
  }

  Bounds bm;
  bm.box_lo = 85;
  bm.box_hi = 120;
  bm.max_depth = 400;
  auto k2 = find_stable_k(load("mccarthy_f2.rip"), Backend::Concrete, bm, 5);
  ok &= expect(k2 && *k2 == 3, "mccarthy_f2: expected k* = 3, measured " +
                                   (k2 ? std::to_string(*k2) : std::string("none")));

  Bounds b8 = bm;
  b8.box_lo = 95;
  b8.box_hi = 120;
  auto k8 = find_stable_k(load("mccarthy_f8.rip"), Backend::Concrete, b8, 6);
  bool f8ok = k8 && *k8 == 4;
  if (!f8ok) {
    note("mccarthy_f8: expected k* = 4, measured " +
         (k8 ? std::to_string(*k8) : std::string("none")) +
         " — on the box [95, 120] every reachable entry value already");
    note("stabilizes at index 2: the inputs that need deeper nesting lie");
    note("below 30, outside the box, and their runs end at 91, which the");
    note("box restriction on output values also excludes.");
  }
  ok &= f8ok;

  // Non-gating stretch: the offset-12 doubly recursive family.
  for (const char* name : {"g12.rip", "g13.rip", "g14.rip"}) {
    auto kg = find_stable_k(load(name), Backend::Concrete, bm, 5);
    note(std::string("info (non-gating) ") + name + ": measured k* = " +
         (kg ? std::to_string(*kg) : std::string("none")) + " (expected 3)");
  }

  c.finish(ok, "stabilization indices on the fixture suite", 600);
}

// ---------------------------------------------------------------------------
// 4. Inductiveness certificates for the index-2 symbolic summaries.
// ---------------------------------------------------------------------------
void criterion4() {
  Criterion c(4);
  bool ok = true;
  Bounds b;
  for (const char* name : {"timestwo.rip", "fig1.rip"}) {
    Program p = load(name);
    Summary s = k_index_summary(p, 2, Backend::Symbolic, b);
    ok &= expect(s.status != SummaryStatus::Truncated,
                 std::string(name) + ": symbolic summary truncated");
    ok &= expect(!s.box_relative, std::string(name) + ": summary is box-relative");
    ok &= expect(check_inductive(p, s),
                 std::string(name) + ": index-2 summary is not inductive");
  }
  c.finish(ok, "index-2 symbolic summaries carry an inductiveness certificate", 60);
}

// ---------------------------------------------------------------------------
// 5. Randomized grammars: index monotonicity, two-nonterminal splits,
//    depth-first completeness, and control-word determinism.
// ---------------------------------------------------------------------------
struct GrammarGen {
  std::mt19937 rng;
  Int ri(Int lo, Int hi) { return std::uniform_int_distribution<Int>(lo, hi)(rng); }

  GGrammar make() {
    GGrammar g;
    int n = (int)ri(2, 6);
    for (int i = 1; i <= n; ++i) g.nts.push_back("X" + std::to_string(i));
    const char* plain[] = {"a", "b", "c"};
    const char* calls[] = {"u", "v"};
    int m = (int)ri(n, 12);
    for (int i = 0; i < m; ++i) {
      GProd pr;
      pr.id = "p" + std::to_string(i + 1);
      // Every nonterminal gets at least one production.
      pr.head = i < n ? g.nts[i] : g.nts[ri(0, n - 1)];
      int kind = (int)ri(0, 9);
      if (kind < 5) {  // X -> t
        pr.items = {GItem::T(Sym{plain[ri(0, 2)], Tag::Plain})};
      } else if (kind < 8) {  // X -> t Y
        pr.items = {GItem::T(Sym{plain[ri(0, 2)], Tag::Plain}),
                    GItem::N(g.nts[ri(0, n - 1)])};
      } else {  // X -> <t Y t> Z
        std::string t = calls[ri(0, 1)];
        pr.items = {GItem::T(Sym{t, Tag::Open}), GItem::N(g.nts[ri(0, n - 1)]),
                    GItem::T(Sym{t, Tag::Close}), GItem::N(g.nts[ri(0, n - 1)])};
      }
      g.prods.push_back(std::move(pr));
    }
    return g;
  }
};

void criterion5() {
  Criterion c(5);
  bool ok = true;
  GrammarGen gen;
  gen.rng.seed(20240901);
  const int LEN = 12;
  int split_words = 0, df_checked = 0, control_checked = 0;

  for (int iter = 0; iter < 200 && ok; ++iter) {
    GGrammar g = gen.make();
    int k = (int)gen.ri(2, 3);
    std::string X = g.nts[gen.ri(0, (Int)g.nts.size() - 1)];

    // Raising the index never loses words.
    std::set<Word> wk = enumerate_words(g, X, k, LEN);
    std::set<Word> wk1 = enumerate_words(g, X, k + 1, LEN);
    for (auto& w : wk)
      if (!wk1.count(w)) {
        ok = expect(false, "index " + std::to_string(k) + " word missing at " +
                               std::to_string(k + 1) + ": " + word_str(w));
        break;
      }

    // A word of a two-nonterminal form splits so that one side gets by with
    // index k - 1.
    std::string B = g.nts[gen.ri(0, (Int)g.nts.size() - 1)];
    std::string C = g.nts[gen.ri(0, (Int)g.nts.size() - 1)];
    GGrammar g2 = g;
    g2.nts.push_back("S#");
    g2.prods.push_back(GProd{"p#", "S#", {GItem::N(B), GItem::N(C)}});
    std::set<Word> pair_words = enumerate_words(g2, "S#", k, 10);
    std::set<Word> blo = enumerate_words(g, B, k - 1, 10);
    std::set<Word> bhi = enumerate_words(g, B, k, 10);
    std::set<Word> clo = enumerate_words(g, C, k - 1, 10);
    std::set<Word> chi = enumerate_words(g, C, k, 10);
    for (auto& w : pair_words) {
      bool split = false;
      for (size_t i = 0; i <= w.size() && !split; ++i) {
        Word w1(w.begin(), w.begin() + i), w2(w.begin() + i, w.end());
        split = (blo.count(w1) && chi.count(w2)) || (bhi.count(w1) && clo.count(w2));
      }
      if (!split) {
        ok = expect(false, "no low-index split for " + word_str(w) + " from " +
                               B + " " + C + " at k=" + std::to_string(k));
        break;
      }
      ++split_words;
    }

    // Depth-first derivations reach every k-index word; when no production
    // repeats a nonterminal in its tail, a control word moreover determines
    // its depth-first derivation.
    bool distinct_tails = true;
    for (auto& pr : g.prods) {
      std::set<std::string> seen;
      for (auto& it : pr.items)
        if (it.is_nt && !seen.insert(it.nt).second) distinct_tails = false;
    }
    EnumBudget budget;
    budget.max_len = LEN;
    budget.max_steps = 40;
    budget.max_derivations = 300000;
    bool truncated = false;
    auto ders = enumerate_derivations(g, X, k, budget, &truncated);
    if (!truncated) {
      std::set<Word> df_words;
      std::map<std::vector<std::string>, std::set<Word>> by_control;
      for (auto& d : ders)
        if (is_depth_first(g, d.trace)) {
          df_words.insert(d.word);
          by_control[d.control].insert(d.word);
        }
      if (df_words != wk) {
        ok = expect(false, "depth-first words differ from the k-index language");
      }
      ++df_checked;
      if (distinct_tails) {
        for (auto& [gamma, words] : by_control) {
          if (words.size() != 1) {
            ok = expect(false, "control word with two depth-first words");
            break;
          }
          auto replay = depth_first_derive(g, X, gamma);
          if (!replay || *replay != *words.begin()) {
            ok = expect(false, "depth-first replay disagrees");
            break;
          }
          ++control_checked;
        }
      }
    }
  }
  note("split decompositions checked: " + std::to_string(split_words));
  note("depth-first language comparisons: " + std::to_string(df_checked));
  note("control-word replays: " + std::to_string(control_checked));
  ok &= expect(split_words > 1000, "too few split decompositions exercised");
  ok &= expect(df_checked > 60, "too few depth-first comparisons");
  ok &= expect(control_checked > 60, "too few control-word replays");
  c.finish(ok, "200 randomized grammars: index and depth-first laws", 300);
}

// ---------------------------------------------------------------------------
// 6. Randomized arithmetic: projection / satisfiability / equivalence against
//    brute force, and translation closed forms against composition powers.
// ---------------------------------------------------------------------------
struct FormulaGen {
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

void criterion6() {
  Criterion c(6);
  bool ok = true;
  FormulaGen gen;
  gen.rng.seed(99201);
  gen.vars = {"x", "y", "z", "w"};
  const Int BOX = 6, WIT = 200;
  int proj_checked = 0, sat_checked = 0, equiv_checked = 0, skipped = 0;

  for (int iter = 0; iter < 500 && ok; ++iter) {
    F f = gen.formula(2);

    // Satisfiability: excluded middle, and unsat verdicts have no model in
    // the box.
    bool sat;
    try {
      sat = is_sat(f);
      if (is_sat(land(f, lnot(f))) || !valid(lor(f, lnot(f))))
        ok = expect(false, "excluded middle violated: " + to_string(f));
    } catch (const Error&) {
      ++skipped;
      continue;
    }
    if (!sat) {
      bool found = false;
      for_box(gen.vars, -BOX, BOX, [&](const Valuation& v) { found = found || eval(f, v); });
      if (found) ok = expect(false, "unsat verdict with a model: " + to_string(f));
    }
    ++sat_checked;

    // Projection of one variable against a bounded witness search.  With
    // coefficients and constants bounded by 5 a satisfiable existential has a
    // witness within [-200, 200] of the box.
    if (iter % 2 == 0) {
      std::string ev = gen.vars[gen.ri(0, 3)];
      F p;
      try {
        p = project(f, {ev});
      } catch (const Error&) {
        ++skipped;
        continue;
      }
      std::vector<std::string> rest;
      for (auto& v : gen.vars)
        if (v != ev) rest.push_back(v);
      bool bad = false;
      for_box(rest, -BOX, BOX, [&](const Valuation& v) {
        if (bad) return;
        bool want = false;
        Valuation vv = v;
        for (Int w = -WIT; w <= WIT && !want; ++w) {
          vv[ev] = w;
          want = eval(f, vv);
        }
        if (want != eval(p, v)) bad = true;
      });
      if (bad) ok = expect(false, "projection mismatch: " + to_string(f));
      ++proj_checked;
    }

    // Equivalence verdicts against pointwise evaluation over the box.
    if (iter % 5 == 0) {
      F g2 = gen.formula(2);
      bool verdict;
      try {
        verdict = equivalent(Relation{gen.vars, {}, f}, Relation{gen.vars, {}, g2});
      } catch (const Error&) {
        ++skipped;
        continue;
      }
      bool differ = false;
      for_box(gen.vars, -BOX, BOX, [&](const Valuation& v) {
        differ = differ || (eval(f, v) != eval(g2, v));
      });
      if (verdict && differ)
        ok = expect(false, "equivalent pair differs at a point: " + to_string(f));
      if (!verdict) {
        // The engine's refutation must be real: the negated equivalence is
        // satisfiable.
        if (!is_sat(lor(land(f, lnot(g2)), land(g2, lnot(f)))))
          ok = expect(false, "inequivalence verdict without a witness");
      }
      ++equiv_checked;
    }
  }

  // Translation closed forms against the composition-power oracle.
  int cf_checked = 0;
  std::vector<std::string> fr{"x", "y"};
  for (int iter = 0; iter < 100 && ok; ++iter) {
    Int dx = gen.ri(-3, 3), dy = gen.ri(-3, 3), gx = gen.ri(0, 30);
    std::ostringstream body;
    body << "x <= " << gx << " && x' = x + " << (dx >= 0 ? "" : "0 - ") << std::abs(dx)
         << " && y' = y + " << (dy >= 0 ? "" : "0 - ") << std::abs(dy);
    Relation r{fr, fr, parse_formula(body.str())};
    ClosedForm cf = accelerate_guarded_translation(r);
    for (int n = 0; n <= 6 && ok; ++n)
      if (!equivalent(cf.instantiate(n), power(r, n)))
        ok = expect(false, "closed form differs from power " + std::to_string(n));
    ++cf_checked;
  }

  note("satisfiability checks: " + std::to_string(sat_checked) +
       ", projections: " + std::to_string(proj_checked) +
       ", equivalences: " + std::to_string(equiv_checked) +
       ", closed forms: " + std::to_string(cf_checked) +
       ", skipped on resource caps: " + std::to_string(skipped));
  ok &= expect(sat_checked >= 450, "too many formulas skipped");
  ok &= expect(cf_checked == 100, "closed-form loop exited early");
  c.finish(ok, "500 randomized formulas and 100 translation closed forms", 300);
}

// ---------------------------------------------------------------------------
// 7. Bounded-expression constructions on the doubling program.
// ---------------------------------------------------------------------------
void criterion7() {
  Criterion c(7);
  bool ok = true;
  Program p = load("fig1.rip");
  GGrammar g = to_generic(build_vpg(p));
  const std::string X0 = p.procedures[0].initial;
  BoundedExpression b = parse_bounded_expression("(t1 t2 <t3)* t1* t5* t6* t7* (t3> t4)*");

  ProductGrammar pg = build_product_grammar(g, X0, b);
  for (int k = 1; k <= 3; ++k)
    ok &= expect(enumerate_words(g, X0, k, 30) == enumerate_words(pg.g, pg.start, k, 30),
                 "product language differs at k=" + std::to_string(k));

  LetterGrammar lg = build_letter_grammar(pg, b);
  for (int k = 1; k <= 2; ++k) {
    std::set<Word> img;
    for (auto& w : enumerate_words(lg.g, lg.start, k, 30)) {
      Word hw = lg.apply_h(w);
      if ((int)hw.size() <= 30) img.insert(hw);
    }
    ok &= expect(img == enumerate_words(pg.g, pg.start, k, 30),
                 "letter-grammar image differs at k=" + std::to_string(k));
  }

  // The terminal count of a derived word is the production count of its
  // control word times the per-production terminal yield.
  std::map<std::string, ParikhVector> yield;
  for (auto& pr : g.prods) {
    ParikhVector& y = yield[pr.id];
    for (auto& it : pr.items)
      if (!it.is_nt) ++y[sym_str(it.sym)];
  }
  EnumBudget budget;
  budget.max_len = 19;
  budget.max_steps = 40;
  int parikh_checked = 0;
  for (auto& d : enumerate_derivations(g, X0, 2, budget)) {
    ParikhVector want;
    for (auto& [pid, cnt] : parikh(d.control))
      for (auto& [t, n] : yield.at(pid)) want[t] += cnt * n;
    if (parikh(d.word) != want) {
      ok = expect(false, "terminal counts differ from the control-word image");
      break;
    }
    ++parikh_checked;
  }
  note("derivations with matching letter counts: " + std::to_string(parikh_checked));
  ok &= expect(parikh_checked > 50, "too few derivations sampled");

  c.finish(ok, "bounded-expression product and letter grammars to length 30", 120);
}

// ---------------------------------------------------------------------------
// 8. Query-program size is affine in the bound; index-0 queries are vacuous.
// ---------------------------------------------------------------------------
void criterion8() {
  Criterion c(8);
  bool ok = true;
  for (const char* name : {"fig1.rip", "timestwo.rip"}) {
    Program p = load(name);
    std::vector<int> counts;
    for (int K = 1; K <= 5; ++K)
      counts.push_back(statement_count(generate_query_program(p, K)));
    int step = counts[1] - counts[0];
    ok &= expect(step > 0, std::string(name) + ": size not increasing");
    for (int K = 3; K <= 5; ++K)
      ok &= expect(counts[K - 1] == counts[0] + step * (K - 1),
                   std::string(name) + ": size not affine at K=" + std::to_string(K));
    note(std::string(name) + ": statements " + std::to_string(counts[0]) + " + " +
         std::to_string(step) + " * (K - 1), exact for K = 1..5");

    // Every index-0 query procedure body is the single statement
    // "assume false;".
    QueryProgram qp = generate_query_program(p, 2);
    std::istringstream src(qp.source);
    std::string line;
    int zero_procs = 0;
    while (std::getline(src, line)) {
      if (line.rfind("proc query_k0_", 0) != 0) continue;
      std::string begin_kw, body, end_kw;
      std::getline(src, begin_kw);
      std::getline(src, body);
      std::getline(src, end_kw);
      while (!body.empty() && body.front() == ' ') body.erase(body.begin());
      if (begin_kw != "begin" || body != "assume false;" || end_kw != "end") {
        ok = expect(false, std::string(name) + ": malformed index-0 query body");
        break;
      }
      ++zero_procs;
    }
    ok &= expect(zero_procs == (int)qp.origin.state_order.size(),
                 std::string(name) + ": missing index-0 query procedures");
  }
  c.finish(ok, "query-program size affine in K; index-0 queries vacuous", 30);
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  std::printf("%d of 8 criteria passed\n", 8 - failures);
  return failures;
}
