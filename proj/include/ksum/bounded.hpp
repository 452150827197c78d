#pragma once
// Bounded-expression machinery: the regular grammar of a bounded expression,
// the product and letter grammars with their back-maps, Parikh images, and
// the empirical finite-index / bounded-control checks.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ksum/vpg.hpp"

namespace ksum {

// ---------------------------------------------------------------------------
// Parikh images (keys are sym_str for words, production ids for control words)
// ---------------------------------------------------------------------------
using ParikhVector = std::map<std::string, long long>;

ParikhVector parikh(const Word& w);
ParikhVector parikh(const std::vector<std::string>& control);
std::set<ParikhVector> parikh_set(const std::set<Word>& words);

// ---------------------------------------------------------------------------
// Regular grammar G of a bounded expression w1* ... wd*, plus a DFA for it.
// Nonterminals q{s}.{r} track (word index s, position r), 1-based; q{s}.1
// carries the epsilon production that ends a run.
// ---------------------------------------------------------------------------
struct BStep {           // q{s}.{r} -> sym q{s2}.{r2}
  int s = 0, r = 0;
  Sym sym;
  int s2 = 0, r2 = 0;
};

struct BexprDfa {
  std::vector<Sym> alphabet;
  std::vector<std::map<int, int>> delta;  // state -> alphabet index -> state
  std::vector<bool> accepting;
  int initial = 0;
  bool accepts(const Word& w) const;
};

struct BexprGrammar {
  BoundedExpression b;
  GGrammar g;
  std::vector<std::string> starts;  // q{s}.1 for every word
  std::vector<BStep> steps;
  BexprDfa dfa;
};

BexprGrammar build_bexpr_grammar(const BoundedExpression& b);

// ---------------------------------------------------------------------------
// Product grammar: nonterminals [q{s}.{r} X q{x}.{y}] pair a nonterminal of
// the input grammar with an entry and an exit position of the bounded
// expression; productions are instantiated against the steps of G^b.  The
// input grammar must be in visibly-pushdown shape (tails t | t Y | t Y t Z).
// ---------------------------------------------------------------------------
struct ProductGrammar {
  GGrammar g;
  std::string start;
  std::map<std::string, std::string> xi_nt;    // product NT -> input NT
  std::map<std::string, std::string> xi_prod;  // product prod -> input prod
                                               // ("" for the start prods)
  // Per product production: the G^b steps that justified its terminals
  // (one for the head terminal, a second one for the matched close).
  std::map<std::string, std::vector<BStep>> used_steps;

  // xi applied to a control word; start productions are dropped.
  std::vector<std::string> xi(const std::vector<std::string>& control) const;
};

ProductGrammar build_product_grammar(const GGrammar& g, const std::string& X0,
                                     const BoundedExpression& b);

// ---------------------------------------------------------------------------
// Letter grammar over {a1..ad}: every terminal of the product grammar is
// replaced by a_s when its G^b step closes word w_s, and dropped otherwise.
// Production ids are shared with the product grammar; nu maps them back.
// ---------------------------------------------------------------------------
struct LetterGrammar {
  GGrammar g;
  std::string start;
  std::map<std::string, Word> h;            // a_s -> w_s
  std::map<std::string, std::string> nu;    // letter prod -> product prod

  Word apply_h(const Word& letters) const;  // homomorphism on words
};

LetterGrammar build_letter_grammar(const ProductGrammar& pg,
                                   const BoundedExpression& b);

// ---------------------------------------------------------------------------
// Empirical checks
// ---------------------------------------------------------------------------

// Smallest k <= k_max whose k-index language equals the unrestricted language
// up to len_bound, or nullopt when no such k exists within the budget.
std::optional<int> empirical_finite_index(const GGrammar& g, const std::string& X,
                                          int k_max, int len_bound);

// True iff the depth-first derivations along control words from b_gamma
// (words of production ids, control length <= len_bound) that stay within
// index k produce exactly the k-index words of length <= len_bound.
bool empirical_bounded_control_check(const GGrammar& g, const std::string& X,
                                     int k, const BoundedExpression& b_gamma,
                                     int len_bound);

// Candidate control-word bounded expression: the starred simple cycles of the
// depth-first Szilard automaton, concatenated in discovery order.  A proposal
// only — feed it to empirical_bounded_control_check.
BoundedExpression propose_control_bexpr(const GGrammar& g, const std::string& X,
                                        int k);

}  // namespace ksum
