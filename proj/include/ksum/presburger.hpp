#pragma once
// Linear integer arithmetic formulas (Presburger), relations over primed
// frames, quantifier elimination, and closed forms for periodic relations.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ksum {

struct Error : std::runtime_error {
  std::string code;
  Error(std::string c, const std::string& msg)
      : std::runtime_error(c + ": " + msg), code(std::move(c)) {}
};

using Int = long long;

// ---------------------------------------------------------------------------
// Linear terms: k + sum_i c_i * x_i, normalized (no zero coefficients).
// ---------------------------------------------------------------------------
struct Term {
  Int k = 0;
  std::map<std::string, Int> c;

  static Term cst(Int v) { Term t; t.k = v; return t; }
  static Term var(const std::string& v, Int coef = 1) {
    Term t;
    if (coef != 0) t.c[v] = coef;
    return t;
  }
  bool is_const() const { return c.empty(); }
  Term add(const Term& o) const;
  Term sub(const Term& o) const;
  Term scale(Int m) const;
  Term subst(const std::string& v, const Term& repl) const;
  Term rename(const std::map<std::string, std::string>& m) const;
  Int eval(const std::map<std::string, Int>& v) const;
  Int coeff(const std::string& v) const {
    auto it = c.find(v);
    return it == c.end() ? 0 : it->second;
  }
  bool operator==(const Term& o) const { return k == o.k && c == o.c; }
  bool operator<(const Term& o) const {
    if (k != o.k) return k < o.k;
    return c < o.c;
  }
  std::string str() const;
};

// ---------------------------------------------------------------------------
// Formulas. Atoms are t <= 0 and d | t (plus the negation of the latter so
// that negation normal form stays within the node kinds).
// ---------------------------------------------------------------------------
enum class FK { True, False, Le0, Div, NotDiv, And, Or, Not, Exists, Forall };

struct Fm;
using F = std::shared_ptr<const Fm>;

struct Fm {
  FK kind;
  Term t;               // Le0 / Div / NotDiv
  Int d = 0;            // Div / NotDiv modulus (> 0)
  std::vector<F> kids;  // And / Or / Not / quantifiers (1 kid)
  std::string var;      // Exists / Forall
  std::size_t lit_id = 0;  // interning id of atom nodes (0 = not interned)
};

F tru();
F fls();
F le0(const Term& t);              // t <= 0
F leq(const Term& a, const Term& b);   // a <= b
F geq(const Term& a, const Term& b);   // a >= b
F lt(const Term& a, const Term& b);    // a < b
F gt(const Term& a, const Term& b);    // a > b
F eq(const Term& a, const Term& b);    // a = b
F divides(Int d, const Term& t);       // d | t
F notdivides(Int d, const Term& t);
F land(std::vector<F> ks);
F land(const F& a, const F& b);
F lor(std::vector<F> ks);
F lor(const F& a, const F& b);
F lnot(const F& a);
F exists(const std::string& v, const F& body);
F forall(const std::string& v, const F& body);

bool is_true(const F& f);
bool is_false(const F& f);
bool fm_equal(const F& a, const F& b);  // structural
std::set<std::string> free_vars(const F& f);
F subst(const F& f, const std::string& v, const Term& t);
F rename_vars(const F& f, const std::map<std::string, std::string>& m);
std::string to_string(const F& f);
F parse_formula(const std::string& text);  // syntax used by .rip files
Term parse_term(const std::string& text);  // linear term, same syntax

using Valuation = std::map<std::string, Int>;

// Evaluation of a quantifier-free formula under a total valuation.
bool eval(const F& f, const Valuation& v);

// Quantifier elimination: quantifier-free formula equivalent to
// (exists vars. f) over the integers. `f` must be quantifier-free.
F project(const F& f, const std::vector<std::string>& vars);

// Equivalent formula in pruned disjunctive normal form: unsatisfiable
// disjuncts dropped, syntactically absorbed disjuncts removed.
F simplify(const F& f);

// The disjuncts of simplify(f), each a satisfiable conjunction of literals.
std::vector<F> disjuncts(const F& f);

// Decision procedures (QE to a variable-free formula, then evaluate).
bool is_sat(const F& f);
bool valid(const F& f);

// ---------------------------------------------------------------------------
// Relations over a frame of variables.  The body is a formula whose free
// variables range over frame_in (unprimed) and frame_out (primed, the
// variable name suffixed with ').
// ---------------------------------------------------------------------------
std::string primed(const std::string& v);

struct Relation {
  std::vector<std::string> in;   // unprimed frame
  std::vector<std::string> out;  // base names; body uses primed(name)
  F body;

  static Relation identity(const std::vector<std::string>& frame);
  static Relation top(const std::vector<std::string>& frame);
  static Relation bottom(const std::vector<std::string>& frame);
  bool eval_pair(const Valuation& pre, const Valuation& post) const;
  std::string str() const;
};

Relation compose(const Relation& r1, const Relation& r2);
Relation rel_and(const Relation& r1, const Relation& r2);
Relation rel_or(const Relation& r1, const Relation& r2);
bool is_sat(const Relation& r);
// subsumes(a, b): a subsumes b, i.e. b is included in a.
bool subsumes(const Relation& a, const Relation& b);
bool equivalent(const Relation& a, const Relation& b);
// Conjunction of x'=x for every local not in `touched`.
Relation frame_relation(const std::vector<std::string>& locals,
                        const std::vector<std::string>& touched);

// ---------------------------------------------------------------------------
// Periodic relation recognizers and closed forms.
// ---------------------------------------------------------------------------
bool recognize_octagonal(const Relation& r);

struct AffineShape {
  std::vector<std::string> vars;          // frame order
  std::vector<std::vector<Int>> A;        // x' = A x + b
  std::vector<Int> b;
  std::vector<F> guard;                   // conjunction of atoms over unprimed
};
std::optional<AffineShape> affine_shape(const Relation& r);

struct PeriodData {
  AffineShape shape;
  Int prefix = 0;  // p
  Int period = 1;  // l : A^(p+l) = A^p
};
enum class MonoidVerdict { Yes, No, Unknown };
struct MonoidResult {
  MonoidVerdict verdict;
  std::optional<PeriodData> data;
};
MonoidResult recognize_finite_monoid_affine(const Relation& r, int power_bound = 64);

// Closed form: body is a formula over {param} u frame u primed(frame); at
// param = 0 it denotes the identity relation on the frame.
struct ClosedForm {
  std::string param = "n";
  std::vector<std::string> frame;
  F body;
  Relation instantiate(Int n) const;           // substitute a concrete n
  Relation star(const std::string& tmp = "n@cf") const;  // exists n >= 0
};

// r must be  g(x) /\ x' = x + b  componentwise, where g is a conjunction of
// linear inequalities over the unprimed frame; components may also be
// unconstrained (havoc).  Throws Error("NotATranslation") otherwise.
ClosedForm accelerate_guarded_translation(const Relation& r);
std::optional<ClosedForm> try_accelerate_guarded_translation(const Relation& r);

// Requires recognize_finite_monoid_affine(r) == Yes with the given data.
ClosedForm closed_form_finite_monoid(const Relation& r, const PeriodData& pd);

// n-fold composition power (identity at n = 0); oracle for closed forms.
Relation power(const Relation& r, int n);

// Reflexive-transitive closure by inductive generalization: an affine-in-n
// hypothesis for r^n is interpolated from r^2 and r^3 and proved by
// induction.  Exact whenever it returns a value.
std::optional<Relation> star_by_induction(const Relation& r);

}  // namespace ksum
