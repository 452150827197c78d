#include "ksum/presburger.hpp"

#include <functional>

#include <algorithm>
#include <cassert>
#include <cctype>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ksum {

// ---------------------------------------------------------------------------
// Terms
// ---------------------------------------------------------------------------

static Int gcd_ll(Int a, Int b) { return std::gcd(a < 0 ? -a : a, b < 0 ? -b : b); }

static Int checked_mul(Int a, Int b) {
  Int r;
  if (__builtin_mul_overflow(a, b, &r)) throw Error("ResourceExceeded", "integer overflow");
  return r;
}

static Int lcm_ll(Int a, Int b) {
  if (a == 0 || b == 0) return 0;
  return checked_mul(a / gcd_ll(a, b), b < 0 ? -b : b);
}

static Int floordiv(Int a, Int b) {  // b > 0
  Int q = a / b, r = a % b;
  return (r != 0 && r < 0) ? q - 1 : q;
}

Term Term::add(const Term& o) const {
  Term r = *this;
  r.k += o.k;
  for (auto& [v, c2] : o.c) {
    Int nc = r.coeff(v) + c2;
    if (nc == 0) r.c.erase(v); else r.c[v] = nc;
  }
  return r;
}

Term Term::sub(const Term& o) const { return add(o.scale(-1)); }

Term Term::scale(Int m) const {
  Term r;
  if (m == 0) return r;
  r.k = checked_mul(k, m);
  for (auto& [v, c2] : c) r.c[v] = checked_mul(c2, m);
  return r;
}

Term Term::subst(const std::string& v, const Term& repl) const {
  auto it = c.find(v);
  if (it == c.end()) return *this;
  Int a = it->second;
  Term r = *this;
  r.c.erase(v);
  return r.add(repl.scale(a));
}

Term Term::rename(const std::map<std::string, std::string>& m) const {
  Term r;
  r.k = k;
  for (auto& [v, a] : c) {
    auto it = m.find(v);
    const std::string& nv = it == m.end() ? v : it->second;
    Int nc = (r.c.count(nv) ? r.c[nv] : 0) + a;
    if (nc == 0) r.c.erase(nv); else r.c[nv] = nc;
  }
  return r;
}

Int Term::eval(const std::map<std::string, Int>& v) const {
  Int r = k;
  for (auto& [x, a] : c) {
    auto it = v.find(x);
    if (it == v.end()) throw Error("IncompleteValuation", "no value for " + x);
    r += checked_mul(a, it->second);
  }
  return r;
}

std::string Term::str() const {
  std::ostringstream os;
  bool first = true;
  for (auto& [v, a] : c) {
    if (!first) os << " + ";
    first = false;
    if (a == 1) os << v;
    else os << a << "*" << v;
  }
  if (k != 0 || first) {
    if (!first) os << " + ";
    os << k;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Formula constructors with local simplification
// ---------------------------------------------------------------------------

static F mk(FK kind) {
  auto n = std::make_shared<Fm>();
  n->kind = kind;
  return n;
}

F tru() { static F t = mk(FK::True); return t; }
F fls() { static F f = mk(FK::False); return f; }
bool is_true(const F& f) { return f->kind == FK::True; }
bool is_false(const F& f) { return f->kind == FK::False; }

// Hash-consing of atoms: structurally equal atoms share one node, so keys
// and equality on literals are O(1).
static F intern_atom(FK kind, Int d, const Term& t) {
  static std::unordered_map<std::string, F> table;
  std::string key;
  key += (char)('0' + (int)kind);
  key += std::to_string(d);
  key += '|';
  key += std::to_string(t.k);
  for (auto& [v, a] : t.c) {
    key += ';';
    key += v;
    key += ':';
    key += std::to_string(a);
  }
  auto it = table.find(key);
  if (it != table.end()) return it->second;
  auto f = std::make_shared<Fm>();
  f->kind = kind;
  f->t = t;
  f->d = d;
  f->lit_id = table.size() + 1;
  table.emplace(std::move(key), f);
  return f;
}

F le0(const Term& t) {
  if (t.is_const()) return t.k <= 0 ? tru() : fls();
  // gcd-normalize: g*t' + k <= 0  <=>  t' + ceil(k/g) <= 0
  Int g = 0;
  for (auto& [v, a] : t.c) g = gcd_ll(g, a);
  Term n;
  for (auto& [v, a] : t.c) n.c[v] = a / g;
  n.k = -floordiv(-t.k, g);
  return intern_atom(FK::Le0, 0, n);
}

F leq(const Term& a, const Term& b) { return le0(a.sub(b)); }
F geq(const Term& a, const Term& b) { return le0(b.sub(a)); }
F lt(const Term& a, const Term& b) { return le0(a.sub(b).add(Term::cst(1))); }
F gt(const Term& a, const Term& b) { return lt(b, a); }
F eq(const Term& a, const Term& b) { return land(leq(a, b), geq(a, b)); }

static F mkdiv(FK kind, Int d, const Term& t) {
  if (d < 0) d = -d;
  if (d == 0) throw Error("InvalidModulus", "div(0, t)");
  if (d == 1) return kind == FK::Div ? tru() : fls();
  Term n;
  for (auto& [v, a] : t.c) {
    Int m = ((a % d) + d) % d;
    if (m != 0) n.c[v] = m;
  }
  n.k = ((t.k % d) + d) % d;
  if (n.c.empty()) {
    bool holds = n.k == 0;
    if (kind == FK::Div) return holds ? tru() : fls();
    return holds ? fls() : tru();
  }
  return intern_atom(kind, d, n);
}

F divides(Int d, const Term& t) { return mkdiv(FK::Div, d, t); }
F notdivides(Int d, const Term& t) { return mkdiv(FK::NotDiv, d, t); }

static std::string key_of(const F& f);

F land(std::vector<F> ks) {
  std::vector<F> out;
  std::unordered_set<std::string> seen;
  for (auto& k : ks) {
    if (is_true(k)) continue;
    if (is_false(k)) return fls();
    if (k->kind == FK::And) {
      for (auto& kk : k->kids)
        if (seen.insert(key_of(kk)).second) out.push_back(kk);
    } else if (seen.insert(key_of(k)).second) {
      out.push_back(k);
    }
  }
  if (out.empty()) return tru();
  if (out.size() == 1) return out[0];
  auto f = std::make_shared<Fm>();
  f->kind = FK::And;
  f->kids = std::move(out);
  return f;
}
F land(const F& a, const F& b) { return land(std::vector<F>{a, b}); }

F lor(std::vector<F> ks) {
  std::vector<F> out;
  std::unordered_set<std::string> seen;
  for (auto& k : ks) {
    if (is_false(k)) continue;
    if (is_true(k)) return tru();
    if (k->kind == FK::Or) {
      for (auto& kk : k->kids)
        if (seen.insert(key_of(kk)).second) out.push_back(kk);
    } else if (seen.insert(key_of(k)).second) {
      out.push_back(k);
    }
  }
  if (out.empty()) return fls();
  if (out.size() == 1) return out[0];
  auto f = std::make_shared<Fm>();
  f->kind = FK::Or;
  f->kids = std::move(out);
  return f;
}
F lor(const F& a, const F& b) { return lor(std::vector<F>{a, b}); }

F lnot(const F& a) {
  if (is_true(a)) return fls();
  if (is_false(a)) return tru();
  if (a->kind == FK::Not) return a->kids[0];
  auto f = std::make_shared<Fm>();
  f->kind = FK::Not;
  f->kids = {a};
  return f;
}

F exists(const std::string& v, const F& body) {
  auto f = std::make_shared<Fm>();
  f->kind = FK::Exists;
  f->var = v;
  f->kids = {body};
  return f;
}

F forall(const std::string& v, const F& body) {
  auto f = std::make_shared<Fm>();
  f->kind = FK::Forall;
  f->var = v;
  f->kids = {body};
  return f;
}

// ---------------------------------------------------------------------------
// Traversals
// ---------------------------------------------------------------------------

static void fv(const F& f, std::set<std::string>& out) {
  switch (f->kind) {
    case FK::Le0: case FK::Div: case FK::NotDiv:
      for (auto& [v, a] : f->t.c) out.insert(v);
      break;
    case FK::And: case FK::Or: case FK::Not:
      for (auto& k : f->kids) fv(k, out);
      break;
    case FK::Exists: case FK::Forall: {
      std::set<std::string> inner;
      fv(f->kids[0], inner);
      inner.erase(f->var);
      out.insert(inner.begin(), inner.end());
      break;
    }
    default: break;
  }
}

std::set<std::string> free_vars(const F& f) {
  std::set<std::string> s;
  fv(f, s);
  return s;
}

F subst(const F& f, const std::string& v, const Term& t) {
  switch (f->kind) {
    case FK::True: case FK::False: return f;
    case FK::Le0: return le0(f->t.subst(v, t));
    case FK::Div: return divides(f->d, f->t.subst(v, t));
    case FK::NotDiv: return notdivides(f->d, f->t.subst(v, t));
    case FK::And: {
      std::vector<F> ks;
      for (auto& k : f->kids) ks.push_back(subst(k, v, t));
      return land(std::move(ks));
    }
    case FK::Or: {
      std::vector<F> ks;
      for (auto& k : f->kids) ks.push_back(subst(k, v, t));
      return lor(std::move(ks));
    }
    case FK::Not: return lnot(subst(f->kids[0], v, t));
    case FK::Exists:
      if (f->var == v) return f;
      return exists(f->var, subst(f->kids[0], v, t));
    case FK::Forall:
      if (f->var == v) return f;
      return forall(f->var, subst(f->kids[0], v, t));
  }
  return f;
}

F rename_vars(const F& f, const std::map<std::string, std::string>& m) {
  switch (f->kind) {
    case FK::True: case FK::False: return f;
    case FK::Le0: return le0(f->t.rename(m));
    case FK::Div: return divides(f->d, f->t.rename(m));
    case FK::NotDiv: return notdivides(f->d, f->t.rename(m));
    case FK::And: {
      std::vector<F> ks;
      for (auto& k : f->kids) ks.push_back(rename_vars(k, m));
      return land(std::move(ks));
    }
    case FK::Or: {
      std::vector<F> ks;
      for (auto& k : f->kids) ks.push_back(rename_vars(k, m));
      return lor(std::move(ks));
    }
    case FK::Not: return lnot(rename_vars(f->kids[0], m));
    case FK::Exists: case FK::Forall: {
      auto m2 = m;
      m2.erase(f->var);
      F body = rename_vars(f->kids[0], m2);
      return f->kind == FK::Exists ? exists(f->var, body) : forall(f->var, body);
    }
  }
  return f;
}

std::string to_string(const F& f) {
  switch (f->kind) {
    case FK::True: return "true";
    case FK::False: return "false";
    case FK::Le0: return f->t.str() + " <= 0";
    case FK::Div: {
      std::ostringstream os;
      os << "div(" << f->d << ", " << f->t.str() << ")";
      return os.str();
    }
    case FK::NotDiv: {
      std::ostringstream os;
      os << "!div(" << f->d << ", " << f->t.str() << ")";
      return os.str();
    }
    case FK::And: {
      std::string s;
      for (size_t i = 0; i < f->kids.size(); ++i) {
        if (i) s += " && ";
        const F& k = f->kids[i];
        bool par = k->kind == FK::Or;
        s += par ? "(" + to_string(k) + ")" : to_string(k);
      }
      return s;
    }
    case FK::Or: {
      std::string s;
      for (size_t i = 0; i < f->kids.size(); ++i) {
        if (i) s += " || ";
        const F& k = f->kids[i];
        bool par = k->kind == FK::And;
        s += par ? "(" + to_string(k) + ")" : to_string(k);
      }
      return s;
    }
    case FK::Not: return "!(" + to_string(f->kids[0]) + ")";
    case FK::Exists: return "exists " + f->var + ". (" + to_string(f->kids[0]) + ")";
    case FK::Forall: return "forall " + f->var + ". (" + to_string(f->kids[0]) + ")";
  }
  return "?";
}

static std::string key_of(const F& f) {
  if (f->lit_id != 0) return "#" + std::to_string(f->lit_id);
  return to_string(f);
}

bool fm_equal(const F& a, const F& b) {
  if (a.get() == b.get()) return true;
  if (a->lit_id != 0 || b->lit_id != 0) return false;  // interned atoms
  return key_of(a) == key_of(b);
}

bool eval(const F& f, const Valuation& v) {
  switch (f->kind) {
    case FK::True: return true;
    case FK::False: return false;
    case FK::Le0: return f->t.eval(v) <= 0;
    case FK::Div: return f->t.eval(v) % f->d == 0;
    case FK::NotDiv: return f->t.eval(v) % f->d != 0;
    case FK::And:
      for (auto& k : f->kids) if (!eval(k, v)) return false;
      return true;
    case FK::Or:
      for (auto& k : f->kids) if (eval(k, v)) return true;
      return false;
    case FK::Not: return !eval(f->kids[0], v);
    case FK::Exists: case FK::Forall:
      throw Error("QuantifiedEval", "eval requires a quantifier-free formula");
  }
  return false;
}

// ---------------------------------------------------------------------------
// NNF / DNF with conjunct-level pruning
// ---------------------------------------------------------------------------

namespace {

// A conjunct with cheap contradiction detection: for every (gcd-normalized)
// variable part we track the tightest lower and upper bound seen so far.
struct Conj {
  std::vector<F> lits;
  // key: canonical variable part (positive leading coeff); value: [lo, hi]
  std::map<std::map<std::string, Int>, std::pair<Int, Int>> bounds;
  bool contradictory = false;

  static constexpr Int NEG_INF = INT64_MIN / 4, POS_INF = INT64_MAX / 4;

  bool add(const F& lit) {
    if (contradictory) return false;
    if (is_true(lit)) return true;
    if (is_false(lit)) { contradictory = true; return false; }
    if (lit->kind == FK::Le0) {
      // sum a_i x_i <= -k ; canonicalize sign by first coefficient
      auto vars = lit->t.c;
      Int rhs = -lit->t.k;
      bool flip = vars.begin()->second < 0;
      if (flip) for (auto& [v, a] : vars) a = -a;
      auto& [lo, hi] = bounds.try_emplace(vars, std::make_pair(NEG_INF, POS_INF)).first->second;
      if (flip) {  // -t' <= rhs  => t' >= -rhs
        lo = std::max(lo, -rhs);
      } else {
        hi = std::min(hi, rhs);
      }
      if (lo > hi) { contradictory = true; return false; }
    }
    for (auto& l : lits) if (fm_equal(l, lit)) return true;
    lits.push_back(lit);
    return true;
  }
};

constexpr size_t DNF_CAP = 60000;

using Dnf = std::vector<Conj>;

F conj_to_formula(const Conj& c) {
  std::vector<F> ks(c.lits.begin(), c.lits.end());
  return land(std::move(ks));
}

F dnf_to_formula(const Dnf& d) {
  std::vector<F> ks;
  for (auto& c : d) ks.push_back(conj_to_formula(c));
  return lor(std::move(ks));
}

void dedupe(Dnf& d) {
  std::unordered_set<std::string> seen;
  Dnf out;
  for (auto& c : d) {
    std::vector<std::string> ks;
    for (auto& l : c.lits) ks.push_back(key_of(l));
    std::sort(ks.begin(), ks.end());
    std::string key;
    for (auto& s : ks) { key += s; key += ';'; }
    if (seen.insert(key).second) out.push_back(std::move(c));
  }
  d = std::move(out);
}

// NNF literal negation.
F neg_lit(const F& f) {
  switch (f->kind) {
    case FK::Le0: return le0(f->t.scale(-1).add(Term::cst(1)));  // t > 0
    case FK::Div: return notdivides(f->d, f->t);
    case FK::NotDiv: return divides(f->d, f->t);
    default: throw Error("Internal", "neg_lit on non-literal");
  }
}

Dnf to_dnf(const F& f, bool negate);

Dnf dnf_merge(const Dnf& a, const Dnf& b) {
  Dnf out;
  for (auto& ca : a) {
    for (auto& cb : b) {
      Conj c = ca;
      bool ok = true;
      for (auto& l : cb.lits)
        if (!c.add(l)) { ok = false; break; }
      if (ok) out.push_back(std::move(c));
      if (out.size() > DNF_CAP) throw Error("ResourceExceeded", "DNF blow-up");
    }
  }
  dedupe(out);
  return out;
}

Dnf to_dnf(const F& f, bool negate) {
  switch (f->kind) {
    case FK::True: case FK::False: {
      bool t = is_true(f) != negate;
      if (t) return Dnf{Conj{}};
      return Dnf{};
    }
    case FK::Le0: case FK::Div: case FK::NotDiv: {
      Conj c;
      c.add(negate ? neg_lit(f) : f);
      if (c.contradictory) return Dnf{};
      return Dnf{std::move(c)};
    }
    case FK::Not: return to_dnf(f->kids[0], !negate);
    case FK::And: case FK::Or: {
      bool conjunctive = (f->kind == FK::And) != negate;
      if (conjunctive) {
        Dnf acc{Conj{}};
        for (auto& k : f->kids) acc = dnf_merge(acc, to_dnf(k, negate));
        return acc;
      }
      Dnf acc;
      for (auto& k : f->kids) {
        Dnf d = to_dnf(k, negate);
        for (auto& c : d) acc.push_back(std::move(c));
        if (acc.size() > DNF_CAP) throw Error("ResourceExceeded", "DNF blow-up");
      }
      dedupe(acc);
      return acc;
    }
    case FK::Exists: case FK::Forall:
      throw Error("QuantifiedDNF", "DNF requires a quantifier-free formula");
  }
  return Dnf{};
}

// ---------------------------------------------------------------------------
// Cooper elimination of one variable from one conjunct.
// ---------------------------------------------------------------------------

Dnf cooper_one(const Conj& conj, const std::string& v) {
  Conj rest;
  std::vector<F> with_v;
  for (auto& l : conj.lits) {
    if (l->t.coeff(v) != 0) with_v.push_back(l);
    else rest.add(l);
  }
  if (with_v.empty()) return Dnf{conj};

  // Fast path: unit-coefficient equality pair defines v.
  for (size_t i = 0; i < with_v.size(); ++i) {
    const F& a = with_v[i];
    if (a->kind != FK::Le0) continue;
    Int ca = a->t.coeff(v);
    if (ca != 1 && ca != -1) continue;
    Term na = a->t.scale(-1);
    for (size_t j = 0; j < with_v.size(); ++j) {
      if (j == i || with_v[j]->kind != FK::Le0) continue;
      if (with_v[j]->t == na) {
        // a: c*v + t <= 0 together with the reverse: c*v + t = 0, c = +-1.
        Term rem = a->t;
        rem.c.erase(v);
        Term val = rem.scale(-ca);  // v = -t/c
        Conj out = rest;
        bool ok = true;
        for (auto& l : with_v)
          if (!out.add(subst(l, v, val))) { ok = false; break; }
        if (!ok) return Dnf{};
        return Dnf{std::move(out)};
      }
    }
  }

  // Normalize the coefficient of v to m everywhere (u stands for m*v).
  Int m = 1;
  for (auto& l : with_v) m = lcm_ll(m, l->t.coeff(v));
  struct UL { Term bound; };
  std::vector<Term> uppers, lowers;        // u <= U, u >= L
  std::vector<std::pair<Int, Term>> divs;  // d | u + t  (v-free t)
  std::vector<std::pair<Int, Term>> ndivs;
  for (auto& l : with_v) {
    Int a = l->t.coeff(v);
    Term t0 = l->t;
    t0.c.erase(v);
    if (l->kind == FK::Le0) {
      Int s = m / (a < 0 ? -a : a);
      if (a > 0) uppers.push_back(t0.scale(-s));        // u <= -s*t
      else lowers.push_back(t0.scale(s));               // u >= s*t
    } else {
      Int s = m / (a < 0 ? -a : a);
      Term off = a > 0 ? t0.scale(s) : t0.scale(-s);    // d' | u + off
      auto& dst = l->kind == FK::Div ? divs : ndivs;
      dst.emplace_back(checked_mul(l->d, s), off);
    }
  }
  divs.emplace_back(m, Term::cst(0));  // m | u
  Int D = 1;
  for (auto& [d, t] : divs) D = lcm_ll(D, d);
  for (auto& [d, t] : ndivs) D = lcm_ll(D, d);
  if (D > 100000) throw Error("ResourceExceeded", "divisibility lcm too large");

  auto inst = [&](const Term& u) -> std::optional<Conj> {
    Conj out = rest;
    for (auto& U : uppers) if (!out.add(le0(u.sub(U)))) return std::nullopt;
    for (auto& L : lowers) if (!out.add(le0(L.sub(u)))) return std::nullopt;
    for (auto& [d, t] : divs) if (!out.add(divides(d, u.add(t)))) return std::nullopt;
    for (auto& [d, t] : ndivs) if (!out.add(notdivides(d, u.add(t)))) return std::nullopt;
    return out;
  };

  Dnf result;
  if (lowers.empty()) {
    // No lower bound: solutions exist arbitrarily low; drop uppers.
    for (Int j = 1; j <= D; ++j) {
      Conj out = rest;
      bool ok = true;
      Term u = Term::cst(j);
      for (auto& [d, t] : divs) if (!out.add(divides(d, u.add(t)))) { ok = false; break; }
      if (ok) for (auto& [d, t] : ndivs) if (!out.add(notdivides(d, u.add(t)))) { ok = false; break; }
      if (ok) result.push_back(std::move(out));
    }
  } else {
    for (auto& L : lowers) {
      Term b = L.sub(Term::cst(1));
      for (Int j = 1; j <= D; ++j) {
        auto c = inst(b.add(Term::cst(j)));
        if (c) result.push_back(std::move(*c));
        if (result.size() > DNF_CAP) throw Error("ResourceExceeded", "Cooper blow-up");
      }
    }
  }
  dedupe(result);
  return result;
}

Dnf eliminate(Dnf d, const std::vector<std::string>& vars) {
  for (auto& v : vars) {
    Dnf next;
    for (auto& c : d) {
      Dnf part = cooper_one(c, v);
      for (auto& p : part) next.push_back(std::move(p));
      if (next.size() > DNF_CAP) throw Error("ResourceExceeded", "projection blow-up");
    }
    dedupe(next);
    d = std::move(next);
  }
  return d;
}

bool conj_ground_true(const Conj& c) {
  Valuation empty;
  for (auto& l : c.lits)
    if (!eval(l, empty)) return false;
  return true;
}

bool conj_sat(const Conj& c) {
  if (c.contradictory) return false;
  std::set<std::string> vs;
  for (auto& l : c.lits) fv(l, vs);
  Dnf one{c};
  one = eliminate(std::move(one), std::vector<std::string>(vs.begin(), vs.end()));
  for (auto& g : one)
    if (conj_ground_true(g)) return true;
  return false;
}

bool conj_implies(const Conj& c, const Conj& d);

// Keep only the tightest lower and upper bound per variable part; the Conj
// bound table already holds them.
Conj tighten(const Conj& c) {
  Conj out;
  std::set<std::pair<std::map<std::string, Int>, bool>> emitted;  // (part, is_lower)
  for (auto& l : c.lits) {
    if (l->kind != FK::Le0) {
      out.add(l);
      continue;
    }
    auto vars = l->t.c;
    Int rhs = -l->t.k;
    bool flip = vars.begin()->second < 0;
    if (flip) for (auto& [v, a] : vars) a = -a;
    auto it = c.bounds.find(vars);
    if (it == c.bounds.end()) {
      out.add(l);
      continue;
    }
    auto [lo, hi] = it->second;
    Int val = flip ? -rhs : rhs;       // lower bound if flipped, else upper
    if (val != (flip ? lo : hi)) continue;  // a slacker bound: drop
    if (!emitted.insert({l->t.c, flip}).second) continue;
    out.add(l);
  }
  return out;
}

// Satisfiable disjuncts only; syntactic absorption (a disjunct whose literal
// set contains another disjunct's literal set denotes a subset and is dropped).
Dnf simplify_dnf(Dnf d) {
  Dnf sat;
  for (auto& c : d)
    if (conj_sat(c)) sat.push_back(tighten(c));
  std::vector<std::set<std::string>> keys;
  for (auto& c : sat) {
    std::set<std::string> ks;
    for (auto& l : c.lits) ks.insert(key_of(l));
    keys.push_back(std::move(ks));
  }
  std::vector<bool> dead(sat.size(), false);
  for (size_t i = 0; i < sat.size(); ++i) {
    for (size_t j = 0; j < sat.size() && !dead[i]; ++j) {
      if (i == j || dead[j]) continue;
      bool superset = std::includes(keys[i].begin(), keys[i].end(),
                                    keys[j].begin(), keys[j].end());
      if (superset && (keys[i].size() > keys[j].size() || j < i)) dead[i] = true;
    }
  }
  // Semantic absorption: one sat check per missing literal, so only worth it
  // on moderately sized disjunctions.
  if (sat.size() <= 120) {
    for (size_t i = 0; i < sat.size(); ++i) {
      for (size_t j = 0; j < sat.size() && !dead[i]; ++j) {
        if (i == j || dead[j]) continue;
        if (conj_implies(sat[i], sat[j]) &&
            (j < i || !conj_implies(sat[j], sat[i])))
          dead[i] = true;
      }
    }
  }
  Dnf out;
  for (size_t i = 0; i < sat.size(); ++i)
    if (!dead[i]) out.push_back(std::move(sat[i]));
  return out;
}

// c implies d, i.e. the set denoted by c is contained in the one denoted by
// d.  One small sat check per literal of d not already present in c.
bool conj_implies(const Conj& c, const Conj& d) {
  std::unordered_set<std::string> have;
  for (auto& l : c.lits) have.insert(key_of(l));
  for (auto& l : d.lits) {
    if (have.count(key_of(l))) continue;
    Conj probe = c;
    if (!probe.add(neg_lit(l))) continue;
    if (conj_sat(probe)) return false;
  }
  return true;
}

// All of `c` minus the union of `cover`, as a list of satisfiable conjuncts.
// Empty result means the cover subsumes c.
Dnf conj_difference(const Conj& c, const Dnf& cover, size_t cap) {
  Dnf regions{c};
  for (auto& cv : cover) {
    Dnf next;
    for (auto& r : regions) {
      for (auto& l : cv.lits) {
        Conj sub = r;
        if (!sub.add(neg_lit(l))) continue;
        if (conj_sat(sub)) next.push_back(std::move(sub));
        if (next.size() > cap)
          throw Error("ResourceExceeded", "difference blow-up");
      }
    }
    dedupe(next);
    regions = std::move(next);
    if (regions.empty()) break;
  }
  return regions;
}

}  // namespace

F project(const F& f, const std::vector<std::string>& vars) {
  Dnf d = to_dnf(f, false);
  d = eliminate(std::move(d), vars);
  return dnf_to_formula(simplify_dnf(std::move(d)));
}

F simplify(const F& f) {
  return dnf_to_formula(simplify_dnf(to_dnf(f, false)));
}

std::vector<F> disjuncts(const F& f) {
  Dnf d = simplify_dnf(to_dnf(f, false));
  std::vector<F> out;
  for (auto& c : d) out.push_back(conj_to_formula(c));
  return out;
}

bool is_sat(const F& f) {
  Dnf d = to_dnf(f, false);
  for (auto& c : d) {
    std::set<std::string> vs;
    for (auto& l : c.lits) fv(l, vs);
    Dnf one{c};
    one = eliminate(std::move(one), std::vector<std::string>(vs.begin(), vs.end()));
    for (auto& g : one)
      if (conj_ground_true(g)) return true;
  }
  return false;
}

bool valid(const F& f) { return !is_sat(lnot(f)); }

// ---------------------------------------------------------------------------
// Formula parsing
// ---------------------------------------------------------------------------

namespace {

struct Lexer {
  const std::string& s;
  size_t i = 0;
  explicit Lexer(const std::string& src) : s(src) {}
  void skip() { while (i < s.size() && std::isspace((unsigned char)s[i])) ++i; }
  bool eat(const std::string& tok) {
    skip();
    if (s.compare(i, tok.size(), tok) == 0) {
      // Avoid eating a prefix of an identifier.
      if (std::isalpha((unsigned char)tok[0])) {
        size_t e = i + tok.size();
        if (e < s.size() && (std::isalnum((unsigned char)s[e]) || s[e] == '_')) return false;
      }
      i += tok.size();
      return true;
    }
    return false;
  }
  bool peek(const std::string& tok) {
    size_t save = i;
    bool r = eat(tok);
    i = save;
    return r;
  }
  std::optional<Int> number() {
    skip();
    size_t j = i;
    if (j < s.size() && std::isdigit((unsigned char)s[j])) {
      Int v = 0;
      while (j < s.size() && std::isdigit((unsigned char)s[j])) v = v * 10 + (s[j++] - '0');
      i = j;
      return v;
    }
    return std::nullopt;
  }
  std::optional<std::string> ident() {
    skip();
    size_t j = i;
    if (j < s.size() && (std::isalpha((unsigned char)s[j]) || s[j] == '_')) {
      while (j < s.size() && (std::isalnum((unsigned char)s[j]) || s[j] == '_')) ++j;
      while (j < s.size() && s[j] == '\'') ++j;  // primed names
      std::string r = s.substr(i, j - i);
      i = j;
      return r;
    }
    return std::nullopt;
  }
  [[noreturn]] void fail(const std::string& what) {
    throw Error("SyntaxError", what + " at offset " + std::to_string(i) + " in formula");
  }
};

Term parse_lin(Lexer& lx);

Term parse_atom_term(Lexer& lx) {
  if (lx.eat("-")) return parse_atom_term(lx).scale(-1);
  if (lx.eat("(")) {
    Term t = parse_lin(lx);
    if (!lx.eat(")")) lx.fail("expected )");
    return t;
  }
  if (auto n = lx.number()) {
    if (lx.eat("*")) {
      if (auto id = lx.ident()) return Term::var(*id, *n);
      lx.fail("expected variable after *");
    }
    return Term::cst(*n);
  }
  if (auto id = lx.ident()) return Term::var(*id);
  lx.fail("expected term");
}

Term parse_lin(Lexer& lx) {
  Term t = parse_atom_term(lx);
  for (;;) {
    if (lx.eat("+")) t = t.add(parse_atom_term(lx));
    else if (lx.eat("-")) t = t.sub(parse_atom_term(lx));
    else return t;
  }
}

F parse_or(Lexer& lx);

F parse_unary(Lexer& lx) {
  if (lx.eat("!")) return lnot(parse_unary(lx));
  if (lx.eat("true")) return tru();
  if (lx.eat("false")) return fls();
  if (lx.eat("div")) {
    if (!lx.eat("(")) lx.fail("expected ( after div");
    auto n = lx.number();
    if (!n) lx.fail("expected modulus");
    if (!lx.eat(",")) lx.fail("expected ,");
    Term t = parse_lin(lx);
    if (!lx.eat(")")) lx.fail("expected )");
    return divides(*n, t);
  }
  if (lx.eat("(")) {
    size_t save = lx.i;
    try {
      F f = parse_or(lx);
      if (!lx.eat(")")) lx.fail("expected )");
      // If a comparison operator follows, this was a parenthesized term.
      if (lx.peek("<=") || lx.peek(">=") || lx.peek("<") || lx.peek(">") ||
          lx.peek("=") || lx.peek("!=") || lx.peek("+") || lx.peek("-"))
        throw Error("Reparse", "term context");
      return f;
    } catch (const Error&) {
      lx.i = save - 1;  // rewind to the ( and parse as a term comparison
    }
  }
  Term a = parse_lin(lx);
  if (lx.eat("<=")) return leq(a, parse_lin(lx));
  if (lx.eat(">=")) return geq(a, parse_lin(lx));
  if (lx.eat("!=")) { Term b = parse_lin(lx); return lnot(eq(a, b)); }
  if (lx.eat("<")) return lt(a, parse_lin(lx));
  if (lx.eat(">")) return gt(a, parse_lin(lx));
  if (lx.eat("=")) return eq(a, parse_lin(lx));
  lx.fail("expected comparison");
}

F parse_and(Lexer& lx) {
  F f = parse_unary(lx);
  while (lx.eat("&&")) f = land(f, parse_unary(lx));
  return f;
}

F parse_or(Lexer& lx) {
  F f = parse_and(lx);
  while (lx.eat("||")) f = lor(f, parse_and(lx));
  return f;
}

}  // namespace

F parse_formula(const std::string& text) {
  Lexer lx(text);
  F f = parse_or(lx);
  lx.skip();
  if (lx.i != text.size()) lx.fail("trailing input");
  return f;
}

Term parse_term(const std::string& text) {
  Lexer lx(text);
  Term t = parse_lin(lx);
  lx.skip();
  if (lx.i != text.size()) lx.fail("trailing input");
  return t;
}

// ---------------------------------------------------------------------------
// Relations
// ---------------------------------------------------------------------------

std::string primed(const std::string& v) { return v + "'"; }

Relation Relation::identity(const std::vector<std::string>& frame) {
  std::vector<F> ks;
  for (auto& v : frame) ks.push_back(eq(Term::var(primed(v)), Term::var(v)));
  return Relation{frame, frame, land(std::move(ks))};
}

Relation Relation::top(const std::vector<std::string>& frame) {
  return Relation{frame, frame, tru()};
}

Relation Relation::bottom(const std::vector<std::string>& frame) {
  return Relation{frame, frame, fls()};
}

bool Relation::eval_pair(const Valuation& pre, const Valuation& post) const {
  Valuation v = pre;
  for (auto& x : out) {
    auto it = post.find(x);
    if (it == post.end()) throw Error("IncompleteValuation", "missing " + x);
    v[primed(x)] = it->second;
  }
  return eval(body, v);
}

std::string Relation::str() const { return to_string(body); }

static void check_frames(const Relation& a, const Relation& b) {
  if (a.in != b.in || a.out != b.out)
    throw Error("FrameMismatch", "relation frames differ");
}

Relation compose(const Relation& r1, const Relation& r2) {
  if (r1.out != r2.in)
    throw Error("FrameMismatch", "compose: output frame of r1 differs from input frame of r2");
  std::map<std::string, std::string> m1, m2;
  std::vector<std::string> mids;
  for (auto& v : r1.out) {
    std::string mid = v + "#m";
    m1[primed(v)] = mid;
    m2[v] = mid;
    mids.push_back(mid);
  }
  F b = land(rename_vars(r1.body, m1), rename_vars(r2.body, m2));
  return Relation{r1.in, r2.out, project(b, mids)};
}

Relation rel_and(const Relation& r1, const Relation& r2) {
  check_frames(r1, r2);
  return Relation{r1.in, r1.out, land(r1.body, r2.body)};
}

Relation rel_or(const Relation& r1, const Relation& r2) {
  check_frames(r1, r2);
  return Relation{r1.in, r1.out, lor(r1.body, r2.body)};
}

bool is_sat(const Relation& r) { return is_sat(r.body); }

bool subsumes(const Relation& a, const Relation& b) {
  check_frames(a, b);
  // b included in a iff every disjunct of b, minus the disjuncts of a, is
  // empty.  The difference is taken literal by literal, which avoids ever
  // negating a whole disjunction.
  Dnf da = to_dnf(a.body, false);
  Dnf db = simplify_dnf(to_dnf(b.body, false));
  for (auto& c : db) {
    // Fast path: one disjunct of a covers c by itself.
    bool covered = false;
    for (auto& ca : da)
      if (conj_implies(c, ca)) { covered = true; break; }
    if (covered) continue;
    if (!conj_difference(c, da, DNF_CAP).empty()) return false;
  }
  return true;
}

bool equivalent(const Relation& a, const Relation& b) {
  return subsumes(a, b) && subsumes(b, a);
}

Relation frame_relation(const std::vector<std::string>& locals,
                        const std::vector<std::string>& touched) {
  std::vector<F> ks;
  for (auto& v : locals) {
    if (std::find(touched.begin(), touched.end(), v) == touched.end())
      ks.push_back(eq(Term::var(primed(v)), Term::var(v)));
  }
  return Relation{locals, locals, land(std::move(ks))};
}

// ---------------------------------------------------------------------------
// Recognizers
// ---------------------------------------------------------------------------

bool recognize_octagonal(const Relation& r) {
  Dnf d = to_dnf(r.body, false);
  if (d.size() != 1) return false;
  for (auto& l : d[0].lits) {
    if (l->kind != FK::Le0) return false;
    if (l->t.c.size() > 2) return false;
    for (auto& [v, a] : l->t.c)
      if (a != 1 && a != -1) return false;
  }
  return true;
}

std::optional<AffineShape> affine_shape(const Relation& r) {
  if (r.in != r.out) return std::nullopt;
  Dnf d;
  try {
    d = to_dnf(r.body, false);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (d.size() != 1) return std::nullopt;
  const auto& lits = d[0].lits;
  auto is_primed = [](const std::string& v) { return !v.empty() && v.back() == '\''; };

  // Find equality pairs t <= 0 / -t <= 0.
  std::vector<bool> used(lits.size(), false);
  std::map<std::string, Term> defs;  // primed var -> defining term (over unprimed)
  for (size_t i = 0; i < lits.size(); ++i) {
    if (used[i] || lits[i]->kind != FK::Le0) continue;
    bool hasp = false;
    for (auto& [v, a] : lits[i]->t.c) hasp |= is_primed(v);
    if (!hasp) continue;
    Term nt = lits[i]->t.scale(-1);
    for (size_t j = 0; j < lits.size(); ++j) {
      if (j == i || used[j] || lits[j]->kind != FK::Le0) continue;
      if (lits[j]->t == nt) {
        // equality lits[i]->t = 0
        Term t = lits[i]->t;
        std::string pv;
        Int pc = 0;
        int pcount = 0;
        for (auto& [v, a] : t.c)
          if (is_primed(v)) { ++pcount; pv = v; pc = a; }
        if (pcount != 1 || (pc != 1 && pc != -1)) return std::nullopt;
        if (defs.count(pv)) return std::nullopt;
        Term rhs = t;
        rhs.c.erase(pv);
        defs[pv] = rhs.scale(-pc);  // pv = -(t - pc*pv)/pc
        used[i] = used[j] = true;
        break;
      }
    }
    if (!used[i]) return std::nullopt;  // primed var in a non-equality literal
  }
  AffineShape sh;
  sh.vars = r.in;
  size_t n = sh.vars.size();
  sh.A.assign(n, std::vector<Int>(n, 0));
  sh.b.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    auto it = defs.find(primed(sh.vars[i]));
    if (it == defs.end()) return std::nullopt;  // havoc not allowed here
    const Term& t = it->second;
    sh.b[i] = t.k;
    for (auto& [v, a] : t.c) {
      if (is_primed(v)) return std::nullopt;
      auto pos = std::find(sh.vars.begin(), sh.vars.end(), v);
      if (pos == sh.vars.end()) return std::nullopt;
      sh.A[i][pos - sh.vars.begin()] = a;
    }
  }
  for (size_t i = 0; i < lits.size(); ++i) {
    if (used[i]) continue;
    if (lits[i]->kind != FK::Le0) return std::nullopt;  // no divisibility guards
    for (auto& [v, a] : lits[i]->t.c)
      if (is_primed(v)) return std::nullopt;
    sh.guard.push_back(lits[i]);
  }
  return sh;
}

static std::vector<std::vector<Int>> mat_mul(const std::vector<std::vector<Int>>& a,
                                             const std::vector<std::vector<Int>>& b) {
  size_t n = a.size();
  std::vector<std::vector<Int>> r(n, std::vector<Int>(n, 0));
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < n; ++k)
      if (a[i][k] != 0)
        for (size_t j = 0; j < n; ++j)
          r[i][j] += checked_mul(a[i][k], b[k][j]);
  return r;
}

static std::vector<std::vector<Int>> mat_id(size_t n) {
  std::vector<std::vector<Int>> r(n, std::vector<Int>(n, 0));
  for (size_t i = 0; i < n; ++i) r[i][i] = 1;
  return r;
}

MonoidResult recognize_finite_monoid_affine(const Relation& r, int power_bound) {
  auto sh = affine_shape(r);
  if (!sh) return {MonoidVerdict::No, std::nullopt};
  size_t n = sh->vars.size();
  std::vector<std::vector<std::vector<Int>>> powers{mat_id(n)};
  for (int i = 1; i <= power_bound; ++i) {
    std::vector<std::vector<Int>> next;
    try {
      next = mat_mul(powers.back(), sh->A);
    } catch (const Error&) {
      return {MonoidVerdict::Unknown, std::nullopt};
    }
    for (size_t p = 0; p < powers.size(); ++p) {
      if (powers[p] == next) {
        PeriodData pd{*sh, (Int)p, (Int)(i - p)};
        return {MonoidVerdict::Yes, pd};
      }
    }
    powers.push_back(std::move(next));
  }
  return {MonoidVerdict::Unknown, std::nullopt};
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

Relation ClosedForm::instantiate(Int n) const {
  F b = subst(body, param, Term::cst(n));
  return Relation{frame, frame, b};
}

Relation ClosedForm::star(const std::string& tmp) const {
  std::map<std::string, std::string> m{{param, tmp}};
  F b = land(rename_vars(body, m), geq(Term::var(tmp), Term::cst(0)));
  return Relation{frame, frame, project(b, {tmp})};
}

std::optional<ClosedForm> try_accelerate_guarded_translation(const Relation& r) {
  if (r.in != r.out) return std::nullopt;
  Dnf d;
  try {
    d = to_dnf(r.body, false);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (d.size() != 1) return std::nullopt;
  const auto& lits = d[0].lits;
  auto is_primed = [](const std::string& v) { return !v.empty() && v.back() == '\''; };

  std::vector<bool> used(lits.size(), false);
  std::map<std::string, Int> delta;  // translated vars
  for (size_t i = 0; i < lits.size(); ++i) {
    if (used[i] || lits[i]->kind != FK::Le0) continue;
    bool hasp = false;
    for (auto& [v, a] : lits[i]->t.c) hasp |= is_primed(v);
    if (!hasp) continue;
    Term nt = lits[i]->t.scale(-1);
    bool matched = false;
    for (size_t j = 0; j < lits.size(); ++j) {
      if (j == i || used[j] || lits[j]->kind != FK::Le0) continue;
      if (lits[j]->t == nt) { matched = true; used[i] = used[j] = true; break; }
    }
    if (!matched) return std::nullopt;
    // Equality lits[i]->t = 0 must be  v' - v - c = 0 (up to sign).
    Term t = lits[i]->t;
    std::string pv;
    Int pc = 0;
    int pcount = 0;
    for (auto& [v, a] : t.c)
      if (is_primed(v)) { ++pcount; pv = v; pc = a; }
    if (pcount != 1 || (pc != 1 && pc != -1)) return std::nullopt;
    if (pc == -1) t = t.scale(-1);
    // t = pv + rest; require rest = -base
    std::string base = pv.substr(0, pv.size() - 1);
    Term rest = t;
    rest.c.erase(pv);
    if (rest.c.size() != 1 || rest.coeff(base) != -1) return std::nullopt;
    if (delta.count(base)) return std::nullopt;
    delta[base] = -t.k;  // pv - base + k = 0  =>  pv = base - k
  }
  std::vector<F> guard;
  for (size_t i = 0; i < lits.size(); ++i) {
    if (used[i]) continue;
    if (lits[i]->kind != FK::Le0) return std::nullopt;  // convexity needed
    for (auto& [v, a] : lits[i]->t.c)
      if (is_primed(v)) return std::nullopt;
    guard.push_back(lits[i]);
  }
  std::vector<std::string> havoc;
  for (auto& v : r.in)
    if (!delta.count(v)) havoc.push_back(v);

  const std::string N = "n";
  auto trans_at = [&](const Term& steps) {  // x' = x + steps*delta
    std::vector<F> ks;
    for (auto& [v, dv] : delta)
      ks.push_back(eq(Term::var(primed(v)), Term::var(v).add(steps.scale(dv))));
    return land(std::move(ks));
  };
  auto guard_at = [&](const F& g, const Term& steps) {  // g with x -> x + steps*delta
    F out = g;
    for (auto& [v, dv] : delta) {
      // substitute v by v + steps*dv
      out = subst(out, v, Term::var(v).add(steps.scale(dv)));
    }
    return out;
  };
  F g_all = land(std::vector<F>(guard.begin(), guard.end()));
  // Guard for intermediate steps: havoced variables were rewritten freely the
  // step before, so they are existentially quantified away.
  F g_mid = g_all;
  if (!havoc.empty()) {
    g_mid = project(g_all, havoc);
    Dnf gd;
    try {
      gd = to_dnf(g_mid, false);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (gd.size() > 1) return std::nullopt;  // endpoint discharge needs convexity
    for (auto& c : gd)
      for (auto& l : c.lits)
        if (l->kind != FK::Le0) return std::nullopt;
  }

  Term n = Term::var(N);
  F id = Relation::identity(r.in).body;
  F b0 = land(eq(n, Term::cst(0)), id);
  F b1 = land(std::vector<F>{eq(n, Term::cst(1)), g_all, trans_at(Term::cst(1))});
  F b2 = land(std::vector<F>{geq(n, Term::cst(2)), g_all,
                             guard_at(g_mid, Term::cst(1)),
                             guard_at(g_mid, n.sub(Term::cst(1))),
                             trans_at(n)});
  ClosedForm cf;
  cf.param = N;
  cf.frame = r.in;
  cf.body = lor(std::vector<F>{b0, b1, b2});
  return cf;
}

ClosedForm accelerate_guarded_translation(const Relation& r) {
  auto cf = try_accelerate_guarded_translation(r);
  if (!cf)
    throw Error("NotATranslation",
                "relation is not a guarded translation with havoc components");
  return *cf;
}

ClosedForm closed_form_finite_monoid(const Relation&, const PeriodData& pd) {
  const AffineShape& sh = pd.shape;
  size_t dim = sh.vars.size();
  Int p = pd.prefix, l = pd.period;
  // Powers A^0..A^(p+l) and prefix sums S_i = sum_{t<i} A^t.
  std::vector<std::vector<std::vector<Int>>> P{mat_id(dim)};
  std::vector<std::vector<std::vector<Int>>> S{std::vector<std::vector<Int>>(dim, std::vector<Int>(dim, 0))};
  for (Int i = 1; i <= p + l; ++i) {
    P.push_back(mat_mul(P.back(), sh.A));
    auto s = S.back();
    for (size_t a = 0; a < dim; ++a)
      for (size_t b2 = 0; b2 < dim; ++b2) s[a][b2] += P[i - 1][a][b2];
    S.push_back(std::move(s));
  }
  auto mat_vec = [&](const std::vector<std::vector<Int>>& M, const std::vector<Int>& v) {
    std::vector<Int> r2(dim, 0);
    for (size_t i = 0; i < dim; ++i)
      for (size_t j = 0; j < dim; ++j) r2[i] += checked_mul(M[i][j], v[j]);
    return r2;
  };
  // Symbolic state at step expressed as  M x + c + q * (Cyc x? no: Cyc b)  etc.
  // x_i = A^i x + S_i b for i <= p+l.
  auto state_term = [&](Int i, size_t row) {  // row of x_i as a Term over vars
    Term t = Term::cst(0);
    for (size_t j = 0; j < dim; ++j)
      if (P[i][row][j] != 0) t = t.add(Term::var(sh.vars[j], P[i][row][j]));
    t.k += mat_vec(S[i], sh.b)[row];
    return t;
  };
  auto guard_at_terms = [&](const std::vector<Term>& st) {
    std::vector<F> ks;
    for (auto& g : sh.guard) {
      Term t = Term::cst(g->t.k);
      for (auto& [v, a] : g->t.c) {
        auto pos = std::find(sh.vars.begin(), sh.vars.end(), v) - sh.vars.begin();
        t = t.add(st[pos].scale(a));
      }
      ks.push_back(le0(t));
    }
    return land(std::move(ks));
  };
  const std::string N = "n";
  Term n = Term::var(N);

  std::vector<F> branches;
  // n = j for j < p + l: explicit unrolling.
  for (Int j = 0; j < p + l; ++j) {
    std::vector<F> ks{eq(n, Term::cst(j))};
    for (Int i = 0; i < j; ++i) {
      std::vector<Term> st;
      for (size_t row = 0; row < dim; ++row) st.push_back(state_term(i, row));
      ks.push_back(guard_at_terms(st));
    }
    for (size_t row = 0; row < dim; ++row)
      ks.push_back(eq(Term::var(primed(sh.vars[row])), state_term(j, row)));
    branches.push_back(land(std::move(ks)));
  }
  // n = p + q*l + s with q >= 1.
  std::vector<Int> Scyc_b(dim, 0);
  for (Int j = 0; j < l; ++j) {
    auto v = mat_vec(P[p + j], sh.b);
    for (size_t i = 0; i < dim; ++i) Scyc_b[i] += v[i];
  }
  for (Int s = 0; s < l; ++s) {
    // l*q = n - p - s
    Term lq = n.sub(Term::cst(p + s));
    std::vector<F> ks{geq(n, Term::cst(p + l + s)), divides(l, lq)};
    // Explicit guards for steps 0..p-1.
    for (Int i = 0; i < p; ++i) {
      std::vector<Term> st;
      for (size_t row = 0; row < dim; ++row) st.push_back(state_term(i, row));
      ks.push_back(guard_at_terms(st));
    }
    // Residue classes s' with block index j in [0, Jmax], Jmax = q or q-1.
    for (Int sp = 0; sp < l; ++sp) {
      // x_{p+j*l+sp} row = A^{p+sp} x + (S_{p+sp} + j*Scyc) b
      auto base_vec = mat_vec(S[p + sp], sh.b);
      auto make_state = [&](const Term& jT) {
        std::vector<Term> st;
        for (size_t row = 0; row < dim; ++row) {
          Term t = Term::cst(0);
          for (size_t c = 0; c < dim; ++c)
            if (P[p + sp][row][c] != 0) t = t.add(Term::var(sh.vars[c], P[p + sp][row][c]));
          t.k += base_vec[row];
          t = t.add(jT.scale(Scyc_b[row]));
          st.push_back(t);
        }
        return st;
      };
      // j = 0 endpoint.
      ks.push_back(guard_at_terms(make_state(Term::cst(0))));
      // j = Jmax endpoint; l*Jmax = lq (if sp < s) or lq - l (if sp >= s).
      // Guard atom at j: alpha + beta*j <= 0; multiply by l: l*alpha + beta*(l*j) <= 0.
      Term ljmax = sp < s ? lq : lq.sub(Term::cst(l));
      {
        // Build guards with l*j = ljmax: express state rows scaled by l.
        std::vector<F> gk;
        for (auto& g : sh.guard) {
          // term over state: sum_v a_v * x_step[v] + g.k <= 0 where
          // x_step = A^{p+sp} x + base + j*ScycB
          Term alpha = Term::cst(g->t.k);
          Int beta = 0;
          for (auto& [v, a] : g->t.c) {
            size_t pos = std::find(sh.vars.begin(), sh.vars.end(), v) - sh.vars.begin();
            for (size_t c = 0; c < dim; ++c)
              if (P[p + sp][pos][c] != 0)
                alpha = alpha.add(Term::var(sh.vars[c], checked_mul(a, P[p + sp][pos][c])));
            alpha.k += checked_mul(a, base_vec[pos]);
            beta += checked_mul(a, Scyc_b[pos]);
          }
          gk.push_back(le0(alpha.scale(l).add(ljmax.scale(beta))));
        }
        ks.push_back(land(std::move(gk)));
      }
    }
    // Final state: x' = A^{p+s} x + (S_p + q*Scyc + T_s) b, T_s = S_{p+s}-S_p.
    auto base_vec = mat_vec(S[p + s], sh.b);
    for (size_t row = 0; row < dim; ++row) {
      // l*x'_row = l*(A^{p+s}x + base) + (lq)*ScycB_row
      Term rhs = Term::cst(0);
      for (size_t c = 0; c < dim; ++c)
        if (P[p + s][row][c] != 0) rhs = rhs.add(Term::var(sh.vars[c], P[p + s][row][c]));
      rhs.k += base_vec[row];
      rhs = rhs.scale(l).add(lq.scale(Scyc_b[row]));
      ks.push_back(eq(Term::var(primed(sh.vars[row]), l), rhs));
    }
    branches.push_back(land(std::move(ks)));
  }
  ClosedForm cf;
  cf.param = N;
  cf.frame = sh.vars;
  cf.body = lor(std::move(branches));
  return cf;
}

Relation power(const Relation& r, int n) {
  Relation acc = Relation::identity(r.in);
  for (int i = 0; i < n; ++i) acc = compose(acc, r);
  return acc;
}

namespace {

// Literal signature: kind, modulus, variable part. Literals of two powers are
// aligned by signature; only the constant may differ.
struct LitSig {
  int kind;
  Int d;
  std::map<std::string, Int> c;
  bool operator<(const LitSig& o) const {
    if (kind != o.kind) return kind < o.kind;
    if (d != o.d) return d < o.d;
    return c < o.c;
  }
};

std::optional<std::vector<F>> conjunct_literals(const F& f) {
  std::vector<F> out;
  std::function<bool(const F&)> walk = [&](const F& g) {
    switch (g->kind) {
      case FK::True: return true;
      case FK::Le0: case FK::Div: case FK::NotDiv:
        out.push_back(g);
        return true;
      case FK::And:
        for (auto& k : g->kids)
          if (!walk(k)) return false;
        return true;
      default: return false;
    }
  };
  if (!walk(f)) return std::nullopt;
  return out;
}

}  // namespace

std::optional<Relation> star_by_induction(const Relation& r) {
  Relation p2 = compose(r, r);
  p2.body = simplify(p2.body);
  if (is_false(p2.body)) return std::nullopt;  // caller handles nilpotent case
  Relation p3 = compose(p2, r);
  p3.body = simplify(p3.body);
  bool dbg = getenv("KSUM_DEBUG2") != nullptr;
  auto d2 = disjuncts(p2.body), d3 = disjuncts(p3.body);
  if (d2.size() != 1 || d3.size() != 1) {
    if (dbg) fprintf(stderr, "sbi: disjunct counts %zu %zu\n", d2.size(), d3.size());
    return std::nullopt;
  }
  auto l2 = conjunct_literals(d2[0]), l3 = conjunct_literals(d3[0]);
  if (!l2 || !l3 || l2->size() != l3->size()) {
    if (dbg) fprintf(stderr, "sbi: literal mismatch %zu %zu\np2: %s\np3: %s\n",
                     l2 ? l2->size() : 0, l3 ? l3->size() : 0,
                     to_string(d2[0]).c_str(), to_string(d3[0]).c_str());
    return std::nullopt;
  }

  std::map<LitSig, std::vector<Int>> k2, k3;
  for (auto& l : *l2) k2[{(int)l->kind, l->d, l->t.c}].push_back(l->t.k);
  for (auto& l : *l3) k3[{(int)l->kind, l->d, l->t.c}].push_back(l->t.k);

  // Hypothesis for the n-th power: same literals, constant affine in n,
  // pinned at n = 2 and n = 3.
  const std::string nv = "n#ind";
  std::vector<F> hyp_lits;
  for (auto& [sig, ks] : k2) {
    auto it = k3.find(sig);
    if (it == k3.end() || it->second.size() != ks.size()) return std::nullopt;
    if (ks.size() != 1) {
      // Repeated variable parts: require identical constants on both sides.
      auto a = ks, b = it->second;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (a != b) return std::nullopt;
    }
    for (size_t i = 0; i < ks.size(); ++i) {
      Int slope = ks.size() == 1 ? it->second[0] - ks[0] : 0;
      Term t;
      t.c = sig.c;
      t.k = ks[i] - 2 * slope;
      if (slope != 0) t.c[nv] = slope;
      if (sig.kind == (int)FK::Le0) hyp_lits.push_back(le0(t));
      else if (sig.kind == (int)FK::Div) hyp_lits.push_back(divides(sig.d, t));
      else hyp_lits.push_back(notdivides(sig.d, t));
    }
  }
  F hyp = land(std::move(hyp_lits));
  F side = geq(Term::var(nv), Term::cst(2));

  // Induction step: hyp(n) . r must be exactly hyp(n+1) for all n >= 2; the
  // base cases n = 2, 3 hold by construction.
  Relation lhs = compose(Relation{r.in, r.out, land(hyp, side)}, r);
  Relation rhs{r.in, r.out,
               land(subst(hyp, nv, Term::var(nv).add(Term::cst(1))), side)};
  try {
    if (!equivalent(lhs, rhs)) {
      if (dbg)
        fprintf(stderr, "sbi: induction failed\nhyp: %s\nlhs: %s\nrhs: %s\n",
                to_string(hyp).c_str(), to_string(simplify(lhs.body)).c_str(),
                to_string(rhs.body).c_str());
      return std::nullopt;
    }
  } catch (const Error& e) {
    if (dbg) fprintf(stderr, "sbi: induction error %s\n", e.what());
    return std::nullopt;
  }

  F closure = project(land(hyp, side), {nv});
  Relation out{r.in, r.out,
               simplify(lor({Relation::identity(r.in).body, r.body, closure}))};
  return out;
}

}  // namespace ksum
