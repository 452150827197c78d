#pragma once
// Visibly pushdown grammars built from programs, k-index and depth-first
// derivation machinery, nested words and their relational semantics.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ksum/ir.hpp"

namespace ksum {

// ---------------------------------------------------------------------------
// Tagged alphabet and words
// ---------------------------------------------------------------------------
enum class Tag { Plain, Open, Close };

struct Sym {
  std::string t;  // transition symbol
  Tag tag = Tag::Plain;
  bool operator==(const Sym& o) const { return t == o.t && tag == o.tag; }
  bool operator<(const Sym& o) const { return t != o.t ? t < o.t : tag < o.tag; }
};

using Word = std::vector<Sym>;

std::string sym_str(const Sym& s);     // t3 / <t3 / t3>
Sym parse_sym(const std::string& s);
std::string word_str(const Word& w);   // space-separated
Word parse_word(const std::string& s);

// ---------------------------------------------------------------------------
// VPG productions: kind a: X -> t ; kind b: X -> t Y ; kind c: X -> <t Y t> Z
// ---------------------------------------------------------------------------
struct Production {
  std::string id;    // p1, p2, ...
  char kind = 'a';
  std::string head;
  std::string tau;   // the transition symbol
  std::string Y;     // kind b continuation / kind c inner start
  std::string Z;     // kind c continuation
};

struct Grammar {
  std::vector<std::string> nonterminals;
  std::vector<Production> productions;

  const Production* find(const std::string& id) const;
  std::vector<const Production*> of_head(const std::string& head) const;
};

Grammar build_vpg(const Program& p);
std::string grammar_to_json(const Grammar& g);

// ---------------------------------------------------------------------------
// Generic grammar form shared with the bounded-completeness constructions:
// tails are arbitrary sequences of terminals and nonterminals (possibly empty).
// ---------------------------------------------------------------------------
struct GItem {
  bool is_nt = false;
  Sym sym;         // terminal
  std::string nt;  // nonterminal
  static GItem T(Sym s) { GItem i; i.sym = std::move(s); return i; }
  static GItem N(std::string n) { GItem i; i.is_nt = true; i.nt = std::move(n); return i; }
  bool operator==(const GItem& o) const {
    return is_nt == o.is_nt && (is_nt ? nt == o.nt : sym == o.sym);
  }
};

struct GProd {
  std::string id;
  std::string head;
  std::vector<GItem> items;
};

struct GGrammar {
  std::vector<std::string> nts;
  std::vector<GProd> prods;
  std::vector<const GProd*> of_head(const std::string& head) const;
};

GGrammar to_generic(const Grammar& g);

// Words of L^(k)_X(G) with length <= max_len. Sentential forms are deduped,
// so this is fast but yields words only. `pruned` (if given) is set when the
// length budget cut anything off, i.e. the result may be a proper subset of
// the full k-index language.
std::set<Word> enumerate_words(const GGrammar& g, const std::string& X, int k,
                               int max_len, bool* pruned = nullptr);

// ---------------------------------------------------------------------------
// Full derivations (word, control word, trace)
// ---------------------------------------------------------------------------
struct Step {
  std::vector<GItem> before;
  std::string prod;
  int pos = 0;  // index of the rewritten nonterminal occurrence in `before`
};

struct DerivationTrace {
  std::string start;
  std::vector<Step> steps;
  std::vector<GItem> final_form;
  int index() const;  // max nonterminal count over all forms
};

struct Derivation {
  Word word;
  std::vector<std::string> control;
  DerivationTrace trace;
};

struct EnumBudget {
  int max_len = 12;
  int max_steps = 64;
  size_t max_derivations = 200000;
};

// All k-index derivations to terminal words within the budget, one per
// distinct (word, control word) pair; deterministic order (BFS by length,
// ties by production id then leftmost position).
std::vector<Derivation> enumerate_derivations(const GGrammar& g, const std::string& X,
                                              int k, const EnumBudget& budget,
                                              bool* truncated = nullptr);

bool is_depth_first(const GGrammar& g, const DerivationTrace& tr);

// The unique depth-first derivation along gamma, if any.  When it exists and
// `index_out` is given, the derivation's index is stored there.
std::optional<Word> depth_first_derive(const GGrammar& g, const std::string& X,
                                       const std::vector<std::string>& gamma,
                                       int* index_out = nullptr);

// ---------------------------------------------------------------------------
// Szilard automaton of depth-first k-index derivations
// ---------------------------------------------------------------------------
struct DfNfa {
  std::string initial;
  std::string accept;  // the empty sentential form
  std::vector<std::string> states;  // discovery order
  // state -> list of (production id, successor)
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> edges;

  bool accepts(const std::vector<std::string>& gamma) const;
};

DfNfa szilard_df_nfa(const GGrammar& g, const std::string& X, int k);

// ---------------------------------------------------------------------------
// Nested words
// ---------------------------------------------------------------------------
struct NestedWord {
  std::vector<std::string> letters;      // untagged transition symbols
  std::vector<std::pair<int, int>> edges;  // 1-based (i, j), i < j
};

NestedWord word_to_nested_word(const Word& w);

// Relation of a nested word over the owning procedure's locals.
Relation nested_word_semantics(const NestedWord& nw, const Program& p);
Relation word_semantics(const Word& w, const Program& p);  // convenience

// Restriction of a relation to input variables (unprimed) and output
// variables (primed); everything else is projected away.
Relation io_restrict(const Relation& r, const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs);

// Call/return/frame relations of a call transition.
Relation call_entry_relation(const Program& p, const Transition& call);   // rho_<t
Relation call_return_relation(const Program& p, const Transition& call);  // rho_t>
Relation call_frame_relation(const Program& p, const Transition& call);   // phi_t

// ---------------------------------------------------------------------------
// Bounded expressions w1* ... wd*
// ---------------------------------------------------------------------------
struct BoundedExpression {
  std::vector<Word> words;  // each nonempty
};

BoundedExpression parse_bounded_expression(const std::string& text);
std::string bexpr_str(const BoundedExpression& b);
bool in_bounded_language(const Word& w, const BoundedExpression& b);

struct BoundedCheck {
  bool holds = false;
  std::optional<Word> counterexample;
};

// Empirically checks L_X(G) (unrestricted index) up to len_bound against b.
BoundedCheck check_bounded_subset(const GGrammar& g, const std::string& X,
                                  const BoundedExpression& b, int len_bound);

}  // namespace ksum
