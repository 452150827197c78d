#include "ksum/bounded.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <set>

namespace ksum {

// ---------------------------------------------------------------------------
// Parikh images
// ---------------------------------------------------------------------------

ParikhVector parikh(const Word& w) {
  ParikhVector v;
  for (auto& s : w) ++v[sym_str(s)];
  return v;
}

ParikhVector parikh(const std::vector<std::string>& control) {
  ParikhVector v;
  for (auto& id : control) ++v[id];
  return v;
}

std::set<ParikhVector> parikh_set(const std::set<Word>& words) {
  std::set<ParikhVector> out;
  for (auto& w : words) out.insert(parikh(w));
  return out;
}

// ---------------------------------------------------------------------------
// Regular grammar and DFA of a bounded expression
// ---------------------------------------------------------------------------

namespace {

std::string bnt(int s, int r) {
  return "q" + std::to_string(s) + "." + std::to_string(r);
}

}  // namespace

bool BexprDfa::accepts(const Word& w) const {
  int st = initial;
  for (auto& sym : w) {
    int a = -1;
    for (size_t i = 0; i < alphabet.size(); ++i)
      if (alphabet[i] == sym) { a = (int)i; break; }
    if (a < 0) return false;
    auto it = delta[st].find(a);
    if (it == delta[st].end()) return false;
    st = it->second;
  }
  return accepting[st];
}

BexprGrammar build_bexpr_grammar(const BoundedExpression& b) {
  for (auto& w : b.words)
    if (w.empty()) throw Error("BadInput", "empty word in bounded expression");
  BexprGrammar out;
  out.b = b;
  int d = (int)b.words.size();
  int pid = 0;
  auto add = [&](const std::string& head, std::vector<GItem> items) {
    out.g.prods.push_back(GProd{"b" + std::to_string(++pid), head, std::move(items)});
  };
  for (int s = 1; s <= d; ++s) {
    int js = (int)b.words[s - 1].size();
    for (int r = 1; r <= js; ++r) out.g.nts.push_back(bnt(s, r));
    out.starts.push_back(bnt(s, 1));
    for (int r = 1; r < js; ++r) {
      const Sym& sym = b.words[s - 1][r - 1];
      add(bnt(s, r), {GItem::T(sym), GItem::N(bnt(s, r + 1))});
      out.steps.push_back(BStep{s, r, sym, s, r + 1});
    }
    const Sym& last = b.words[s - 1][js - 1];
    for (int s2 = s; s2 <= d; ++s2) {
      add(bnt(s, js), {GItem::T(last), GItem::N(bnt(s2, 1))});
      out.steps.push_back(BStep{s, js, last, s2, 1});
    }
    add(bnt(s, 1), {});  // epsilon: a run may stop at any word boundary
  }

  // Subset-construction DFA.  NFA states are the positions (s, r); a word is
  // accepted when some run ends at a word boundary q{s}.1.
  std::set<Sym> alpha;
  for (auto& w : b.words) alpha.insert(w.begin(), w.end());
  out.dfa.alphabet.assign(alpha.begin(), alpha.end());
  auto code = [&](int s, int r) { return s * 1000 + r; };
  std::set<int> init;
  for (int s = 1; s <= d; ++s) init.insert(code(s, 1));
  std::map<std::set<int>, int> ids;
  std::deque<std::set<int>> queue{init};
  ids[init] = 0;
  auto is_acc = [&](const std::set<int>& st) {
    for (int s = 1; s <= d; ++s)
      if (st.count(code(s, 1))) return true;
    return false;
  };
  out.dfa.delta.emplace_back();
  out.dfa.accepting.push_back(is_acc(init));
  while (!queue.empty()) {
    std::set<int> cur = queue.front();
    queue.pop_front();
    int cid = ids.at(cur);
    for (size_t a = 0; a < out.dfa.alphabet.size(); ++a) {
      std::set<int> nxt;
      for (auto& st : out.steps)
        if (st.sym == out.dfa.alphabet[a] && cur.count(code(st.s, st.r)))
          nxt.insert(code(st.s2, st.r2));
      if (nxt.empty()) continue;
      auto [it, fresh] = ids.emplace(nxt, (int)ids.size());
      if (fresh) {
        out.dfa.delta.emplace_back();
        out.dfa.accepting.push_back(is_acc(nxt));
        queue.push_back(nxt);
      }
      out.dfa.delta[cid][(int)a] = it->second;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Product grammar
// ---------------------------------------------------------------------------

namespace {

std::string pnt(int s, int r, const std::string& X, int x, int y) {
  return "[" + bnt(s, r) + " " + X + " " + bnt(x, y) + "]";
}

struct Pos {
  int s, r;
};

// Drop nonterminals that cannot derive a terminal word and productions that
// are unreachable from the start; keeps the construction outputs small.
void prune(GGrammar& g, const std::string& start,
           std::map<std::string, std::string>& xi_prod,
           std::map<std::string, std::vector<BStep>>& used) {
  std::set<std::string> productive;
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& p : g.prods) {
      if (productive.count(p.head)) continue;
      bool ok = true;
      for (auto& it : p.items)
        if (it.is_nt && !productive.count(it.nt)) ok = false;
      if (ok) {
        productive.insert(p.head);
        changed = true;
      }
    }
  }
  std::set<std::string> reach{start};
  std::deque<std::string> queue{start};
  while (!queue.empty()) {
    std::string h = queue.front();
    queue.pop_front();
    for (auto& p : g.prods) {
      if (p.head != h) continue;
      bool ok = true;
      for (auto& it : p.items)
        if (it.is_nt && !productive.count(it.nt)) ok = false;
      if (!ok) continue;
      for (auto& it : p.items)
        if (it.is_nt && reach.insert(it.nt).second) queue.push_back(it.nt);
    }
  }
  std::vector<GProd> kept;
  for (auto& p : g.prods) {
    bool ok = reach.count(p.head) && productive.count(p.head);
    for (auto& it : p.items)
      if (it.is_nt && !productive.count(it.nt)) ok = false;
    if (ok) {
      kept.push_back(p);
    } else {
      xi_prod.erase(p.id);
      used.erase(p.id);
    }
  }
  g.prods = std::move(kept);
  std::vector<std::string> nts;
  for (auto& n : g.nts)
    if (reach.count(n) && productive.count(n)) nts.push_back(n);
  g.nts = std::move(nts);
}

}  // namespace

std::vector<std::string> ProductGrammar::xi(
    const std::vector<std::string>& control) const {
  std::vector<std::string> out;
  for (auto& id : control) {
    auto it = xi_prod.find(id);
    if (it == xi_prod.end()) throw Error("BadInput", "unknown production " + id);
    if (!it->second.empty()) out.push_back(it->second);
  }
  return out;
}

ProductGrammar build_product_grammar(const GGrammar& g, const std::string& X0,
                                     const BoundedExpression& b) {
  BexprGrammar bx = build_bexpr_grammar(b);
  int d = (int)b.words.size();
  std::vector<Pos> positions;
  for (int s = 1; s <= d; ++s)
    for (int r = 1; r <= (int)b.words[s - 1].size(); ++r)
      positions.push_back(Pos{s, r});

  ProductGrammar out;
  out.start = X0 + "@bx";
  out.g.nts.push_back(out.start);
  out.xi_nt[out.start] = X0;
  std::set<std::string> have{out.start};
  auto nt = [&](int s, int r, const std::string& X, int x, int y) {
    std::string n = pnt(s, r, X, x, y);
    if (have.insert(n).second) {
      out.g.nts.push_back(n);
      out.xi_nt[n] = X;
    }
    return n;
  };
  int pid = 0;
  auto add = [&](const std::string& head, std::vector<GItem> items,
                 const std::string& orig, std::vector<BStep> steps) {
    std::string id = "x" + std::to_string(++pid);
    out.g.prods.push_back(GProd{id, head, std::move(items)});
    out.xi_prod[id] = orig;
    out.used_steps[id] = std::move(steps);
  };

  for (int s = 1; s <= d; ++s)
    for (int x = s; x <= d; ++x)
      add(out.start, {GItem::N(nt(s, 1, X0, x, 1))}, "", {});

  for (auto& p : g.prods) {
    bool kind_a = p.items.size() == 1 && !p.items[0].is_nt;
    bool kind_b = p.items.size() == 2 && !p.items[0].is_nt && p.items[1].is_nt;
    bool kind_c = p.items.size() == 4 && !p.items[0].is_nt && p.items[1].is_nt &&
                  !p.items[2].is_nt && p.items[3].is_nt;
    if (!kind_a && !kind_b && !kind_c)
      throw Error("BadGrammar", "production " + p.id + " is not in vpg shape");
    const Sym& tau = p.items[0].sym;
    for (auto& st : bx.steps) {
      if (!(st.sym == tau)) continue;
      if (kind_a) {
        // [q{s,r} X q{x,y}] -> tau   when the step lands exactly on the exit.
        if (st.s <= st.s2)
          add(pnt(st.s, st.r, p.head, st.s2, st.r2), {GItem::T(tau)}, p.id, {st});
      } else if (kind_b) {
        for (auto& ex : positions) {
          if (st.s > ex.s || st.s2 > ex.s) continue;
          add(pnt(st.s, st.r, p.head, ex.s, ex.r),
              {GItem::T(tau),
               GItem::N(nt(st.s2, st.r2, p.items[1].nt, ex.s, ex.r))},
              p.id, {st});
        }
      } else {
        const Sym& sigma = p.items[2].sym;
        for (auto& cl : bx.steps) {
          if (!(cl.sym == sigma)) continue;
          if (st.s2 > cl.s) continue;  // inner nonterminal must be well-formed
          for (auto& ex : positions) {
            if (st.s > ex.s || cl.s2 > ex.s) continue;
            add(pnt(st.s, st.r, p.head, ex.s, ex.r),
                {GItem::T(tau),
                 GItem::N(nt(st.s2, st.r2, p.items[1].nt, cl.s, cl.r)),
                 GItem::T(sigma),
                 GItem::N(nt(cl.s2, cl.r2, p.items[3].nt, ex.s, ex.r))},
                p.id, {st, cl});
          }
        }
      }
    }
  }
  prune(out.g, out.start, out.xi_prod, out.used_steps);
  return out;
}

// ---------------------------------------------------------------------------
// Letter grammar
// ---------------------------------------------------------------------------

Word LetterGrammar::apply_h(const Word& letters) const {
  Word out;
  for (auto& a : letters) {
    auto it = h.find(sym_str(a));
    if (it == h.end()) throw Error("BadInput", "not a letter: " + sym_str(a));
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

LetterGrammar build_letter_grammar(const ProductGrammar& pg,
                                   const BoundedExpression& b) {
  LetterGrammar out;
  out.start = pg.start;
  out.g.nts = pg.g.nts;
  for (size_t i = 0; i < b.words.size(); ++i)
    out.h["a" + std::to_string(i + 1)] = b.words[i];
  for (auto& p : pg.g.prods) {
    const auto& steps = pg.used_steps.at(p.id);
    GProd q;
    q.id = p.id;
    q.head = p.head;
    size_t ti = 0;
    for (auto& it : p.items) {
      if (it.is_nt) {
        q.items.push_back(it);
        continue;
      }
      const BStep& st = steps.at(ti++);
      if (st.r == (int)b.words[st.s - 1].size())  // closes word w_s
        q.items.push_back(GItem::T(Sym{"a" + std::to_string(st.s), Tag::Plain}));
      // otherwise the terminal maps to epsilon
    }
    out.g.prods.push_back(std::move(q));
    out.nu[p.id] = p.id;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Empirical checks
// ---------------------------------------------------------------------------

std::optional<int> empirical_finite_index(const GGrammar& g, const std::string& X,
                                          int k_max, int len_bound) {
  std::set<Word> ref = enumerate_words(g, X, len_bound + 2, len_bound);
  for (int k = 1; k <= k_max; ++k)
    if (enumerate_words(g, X, k, len_bound) == ref) return k;
  return std::nullopt;
}

bool empirical_bounded_control_check(const GGrammar& g, const std::string& X,
                                     int k, const BoundedExpression& b_gamma,
                                     int len_bound) {
  std::set<Word> lhs;
  long long budget = 1000000;
  std::vector<std::string> gamma;
  std::function<void(size_t)> rec = [&](size_t i) {
    if (budget < 0) return;
    if (i == b_gamma.words.size()) {
      --budget;
      if (gamma.empty()) return;
      int index = 0;
      auto w = depth_first_derive(g, X, gamma, &index);
      if (w && index <= k && (int)w->size() <= len_bound) lhs.insert(*w);
      return;
    }
    rec(i + 1);  // zero repetitions
    std::vector<std::string> piece;
    for (auto& sym : b_gamma.words[i]) piece.push_back(sym.t);
    size_t base = gamma.size();
    while ((int)(gamma.size() + piece.size()) <= len_bound) {
      gamma.insert(gamma.end(), piece.begin(), piece.end());
      rec(i + 1);
    }
    gamma.resize(base);
  };
  rec(0);
  if (budget < 0) throw Error("ResourceExceeded", "control enumeration budget");
  return lhs == enumerate_words(g, X, k, len_bound);
}

BoundedExpression propose_control_bexpr(const GGrammar& g, const std::string& X,
                                        int k) {
  DfNfa nfa = szilard_df_nfa(g, X, k);
  std::map<std::string, int> order;
  for (size_t i = 0; i < nfa.states.size(); ++i) order[nfa.states[i]] = (int)i;
  BoundedExpression out;
  const size_t max_cycles = 64;
  const size_t max_len = 12;
  // Simple cycles through each state, never revisiting earlier-discovered
  // states (each cycle is reported once, at its earliest state).
  for (auto& root : nfa.states) {
    if (out.words.size() >= max_cycles) break;
    std::vector<std::string> labels;
    std::set<std::string> on_path{root};
    std::function<void(const std::string&)> dfs = [&](const std::string& u) {
      if (out.words.size() >= max_cycles || labels.size() >= max_len) return;
      auto it = nfa.edges.find(u);
      if (it == nfa.edges.end()) return;
      for (auto& [prod, v] : it->second) {
        if (order.at(v) < order.at(root)) continue;
        labels.push_back(prod);
        if (v == root) {
          Word w;
          for (auto& id : labels) w.push_back(Sym{id, Tag::Plain});
          if (std::find(out.words.begin(), out.words.end(), w) == out.words.end())
            out.words.push_back(w);
        } else if (!on_path.count(v)) {
          on_path.insert(v);
          dfs(v);
          on_path.erase(v);
        }
        labels.pop_back();
      }
    };
    dfs(root);
  }
  return out;
}

}  // namespace ksum
