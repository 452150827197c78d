#include "ksum/vpg.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace ksum {

// ---------------------------------------------------------------------------
// Symbols and words
// ---------------------------------------------------------------------------

std::string sym_str(const Sym& s) {
  switch (s.tag) {
    case Tag::Plain: return s.t;
    case Tag::Open: return "<" + s.t;
    case Tag::Close: return s.t + ">";
  }
  return s.t;
}

Sym parse_sym(const std::string& s) {
  if (s.empty()) throw Error("SyntaxError", "empty symbol");
  if (s.front() == '<') return Sym{s.substr(1), Tag::Open};
  if (s.back() == '>') return Sym{s.substr(0, s.size() - 1), Tag::Close};
  return Sym{s, Tag::Plain};
}

std::string word_str(const Word& w) {
  std::string r;
  for (size_t i = 0; i < w.size(); ++i) {
    if (i) r += " ";
    r += sym_str(w[i]);
  }
  return r;
}

Word parse_word(const std::string& s) {
  Word w;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) w.push_back(parse_sym(tok));
  return w;
}

// ---------------------------------------------------------------------------
// Grammar
// ---------------------------------------------------------------------------

const Production* Grammar::find(const std::string& id) const {
  for (auto& p : productions)
    if (p.id == id) return &p;
  return nullptr;
}

std::vector<const Production*> Grammar::of_head(const std::string& head) const {
  std::vector<const Production*> r;
  for (auto& p : productions)
    if (p.head == head) r.push_back(&p);
  return r;
}

Grammar build_vpg(const Program& p) {
  Grammar g;
  g.nonterminals = p.state_order;
  for (auto& pr : p.procedures) {
    for (auto& t : pr.transitions) {
      Production pd;
      // p<i> for transition t<i>.
      pd.id = "p" + t.id.substr(1);
      pd.head = t.src;
      pd.tau = t.id;
      if (t.is_call()) {
        const Procedure* callee = p.find_proc(t.callee);
        if (!callee) throw Error("UnknownCallee", t.callee);
        if (pr.is_final(t.dst))
          throw Error("UnsupportedShape", "call transition into a final state");
        pd.kind = 'c';
        pd.Y = callee->initial;
        pd.Z = t.dst;
        if (pd.Y == pd.Z)
          throw Error("UnsupportedShape", "call production with repeated nonterminal");
      } else if (pr.is_final(t.dst)) {
        pd.kind = 'a';
      } else {
        pd.kind = 'b';
        pd.Y = t.dst;
      }
      g.productions.push_back(std::move(pd));
    }
  }
  return g;
}

std::string grammar_to_json(const Grammar& g) {
  nlohmann::json j;
  j["nonterminals"] = g.nonterminals;
  std::set<std::string> alpha;
  j["productions"] = nlohmann::json::array();
  for (auto& p : g.productions) {
    nlohmann::json jp;
    jp["id"] = p.id;
    jp["head"] = p.head;
    jp["kind"] = std::string(1, p.kind);
    std::vector<std::string> tail;
    switch (p.kind) {
      case 'a':
        tail = {p.tau};
        alpha.insert(p.tau);
        break;
      case 'b':
        tail = {p.tau, p.Y};
        alpha.insert(p.tau);
        break;
      case 'c':
        tail = {"<" + p.tau, p.Y, p.tau + ">", p.Z};
        alpha.insert("<" + p.tau);
        alpha.insert(p.tau + ">");
        break;
    }
    jp["tail"] = tail;
    j["productions"].push_back(jp);
  }
  j["alphabet"] = alpha;
  return j.dump(2);
}

GGrammar to_generic(const Grammar& g) {
  GGrammar gg;
  gg.nts = g.nonterminals;
  for (auto& p : g.productions) {
    GProd q;
    q.id = p.id;
    q.head = p.head;
    switch (p.kind) {
      case 'a':
        q.items = {GItem::T({p.tau, Tag::Plain})};
        break;
      case 'b':
        q.items = {GItem::T({p.tau, Tag::Plain}), GItem::N(p.Y)};
        break;
      case 'c':
        q.items = {GItem::T({p.tau, Tag::Open}), GItem::N(p.Y),
                   GItem::T({p.tau, Tag::Close}), GItem::N(p.Z)};
        break;
    }
    gg.prods.push_back(std::move(q));
  }
  return gg;
}

std::vector<const GProd*> GGrammar::of_head(const std::string& head) const {
  std::vector<const GProd*> r;
  for (auto& p : prods)
    if (p.head == head) r.push_back(&p);
  return r;
}

// ---------------------------------------------------------------------------
// Word enumeration with sentential-form dedup
// ---------------------------------------------------------------------------

namespace {

using Form = std::vector<GItem>;

std::string form_key(const Form& f) {
  std::string k;
  for (auto& it : f) {
    k += it.is_nt ? "N" + it.nt : "T" + sym_str(it.sym);
    k += "|";
  }
  return k;
}

int nt_count(const Form& f) {
  int c = 0;
  for (auto& it : f) c += it.is_nt;
  return c;
}

constexpr long long INF = 1LL << 40;

std::map<std::string, long long> min_yields(const GGrammar& g) {
  std::map<std::string, long long> my;
  for (auto& n : g.nts) my[n] = INF;
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& p : g.prods) {
      long long s = 0;
      for (auto& it : p.items) {
        if (it.is_nt) {
          auto f = my.find(it.nt);
          s += f == my.end() ? INF : f->second;
        } else {
          s += 1;
        }
        if (s >= INF) { s = INF; break; }
      }
      auto& cur = my[p.head];
      if (s < cur) { cur = s; changed = true; }
    }
  }
  return my;
}

long long min_final_len(const Form& f, const std::map<std::string, long long>& my) {
  long long s = 0;
  for (auto& it : f) {
    if (it.is_nt) {
      auto m = my.find(it.nt);
      s += m == my.end() ? INF : m->second;
    } else {
      s += 1;
    }
    if (s >= INF) return INF;
  }
  return s;
}

Word form_word(const Form& f) {
  Word w;
  for (auto& it : f) w.push_back(it.sym);
  return w;
}

}  // namespace

std::set<Word> enumerate_words(const GGrammar& g, const std::string& X, int k,
                               int max_len, bool* pruned) {
  if (pruned) *pruned = false;
  auto my = min_yields(g);
  std::set<Word> out;
  std::deque<Form> queue;
  std::unordered_set<std::string> seen;
  Form start{GItem::N(X)};
  queue.push_back(start);
  seen.insert(form_key(start));
  while (!queue.empty()) {
    Form f = std::move(queue.front());
    queue.pop_front();
    if (nt_count(f) == 0) {
      if ((int)f.size() <= max_len) out.insert(form_word(f));
      continue;
    }
    for (size_t pos = 0; pos < f.size(); ++pos) {
      if (!f[pos].is_nt) continue;
      for (const GProd* p : g.of_head(f[pos].nt)) {
        Form nf;
        nf.reserve(f.size() + p->items.size());
        nf.insert(nf.end(), f.begin(), f.begin() + pos);
        nf.insert(nf.end(), p->items.begin(), p->items.end());
        nf.insert(nf.end(), f.begin() + pos + 1, f.end());
        if (nt_count(nf) > k) continue;
        long long ml = min_final_len(nf, my);
        if (ml >= INF) continue;  // unproductive; no word lost
        if (ml > max_len) {
          if (pruned) *pruned = true;
          continue;
        }
        std::string key = form_key(nf);
        if (seen.insert(key).second) queue.push_back(std::move(nf));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full derivation enumeration
// ---------------------------------------------------------------------------

int DerivationTrace::index() const {
  int m = 0;
  for (auto& s : steps) m = std::max(m, nt_count(s.before));
  m = std::max(m, nt_count(final_form));
  return m;
}

std::vector<Derivation> enumerate_derivations(const GGrammar& g, const std::string& X,
                                              int k, const EnumBudget& budget,
                                              bool* truncated) {
  if (truncated) *truncated = false;
  auto my = min_yields(g);
  struct Item {
    Form form;
    std::vector<std::string> control;
    std::vector<Step> steps;
  };
  std::vector<Derivation> out;
  std::deque<Item> queue;
  queue.push_back({Form{GItem::N(X)}, {}, {}});
  std::set<std::pair<std::string, std::string>> emitted;  // (word, control)
  size_t explored = 0;
  while (!queue.empty()) {
    Item it = std::move(queue.front());
    queue.pop_front();
    if (nt_count(it.form) == 0) {
      Word w = form_word(it.form);
      if ((int)w.size() <= budget.max_len) {
        std::string ck;
        for (auto& c : it.control) ck += c + ",";
        if (emitted.emplace(word_str(w), ck).second) {
          DerivationTrace tr;
          tr.start = X;
          tr.steps = it.steps;
          tr.final_form = it.form;
          out.push_back({std::move(w), it.control, std::move(tr)});
        }
      }
      continue;
    }
    if ((int)it.control.size() >= budget.max_steps) {
      if (truncated) *truncated = true;
      continue;
    }
    // Successors ordered by production (grammar order) then position.
    for (auto& p : g.prods) {
      for (size_t pos = 0; pos < it.form.size(); ++pos) {
        if (!it.form[pos].is_nt || it.form[pos].nt != p.head) continue;
        Form nf;
        nf.reserve(it.form.size() + p.items.size());
        nf.insert(nf.end(), it.form.begin(), it.form.begin() + pos);
        nf.insert(nf.end(), p.items.begin(), p.items.end());
        nf.insert(nf.end(), it.form.begin() + pos + 1, it.form.end());
        if (nt_count(nf) > k) continue;
        long long ml = min_final_len(nf, my);
        if (ml >= INF) continue;
        if (ml > budget.max_len) {
          if (truncated) *truncated = true;
          continue;
        }
        if (++explored > budget.max_derivations) {
          if (truncated) *truncated = true;
          return out;
        }
        Item ni;
        ni.form = std::move(nf);
        ni.control = it.control;
        ni.control.push_back(p.id);
        ni.steps = it.steps;
        ni.steps.push_back(Step{it.form, p.id, (int)pos});
        queue.push_back(std::move(ni));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Depth-first machinery
// ---------------------------------------------------------------------------

namespace {

const GProd* find_prod(const GGrammar& g, const std::string& id) {
  for (auto& p : g.prods)
    if (p.id == id) return &p;
  return nullptr;
}

}  // namespace

bool is_depth_first(const GGrammar& g, const DerivationTrace& tr) {
  // births[i] = birth step of the i-th nonterminal occurrence of the form.
  std::vector<int> births;
  Form cur{GItem::N(tr.start)};
  births.push_back(0);
  for (size_t s = 0; s < tr.steps.size(); ++s) {
    const Step& st = tr.steps[s];
    if (!(st.before == cur)) return false;  // not a legal replay
    int pos = st.pos;
    if (pos < 0 || pos >= (int)cur.size() || !cur[pos].is_nt) return false;
    const GProd* p = find_prod(g, st.prod);
    if (!p || p->head != cur[pos].nt) return false;
    // Index of this occurrence among nonterminals.
    int occ = 0;
    for (int i = 0; i < pos; ++i) occ += cur[i].is_nt;
    for (int b : births)
      if (b > births[occ]) return false;  // an older-born occurrence is newer
    // Apply.
    Form nf;
    std::vector<int> nb;
    int oi = 0;
    for (int i = 0; i < (int)cur.size(); ++i) {
      if (cur[i].is_nt) {
        if (i == pos) {
          for (auto& item : p->items) {
            nf.push_back(item);
            if (item.is_nt) nb.push_back((int)s + 1);
          }
        } else {
          nf.push_back(cur[i]);
          nb.push_back(births[oi]);
        }
        ++oi;
      } else {
        nf.push_back(cur[i]);
      }
    }
    cur = std::move(nf);
    births = std::move(nb);
  }
  return tr.final_form == cur;
}

std::optional<Word> depth_first_derive(const GGrammar& g, const std::string& X,
                                       const std::vector<std::string>& gamma,
                                       int* index_out) {
  Form cur{GItem::N(X)};
  std::vector<int> births{0};
  int max_nts = 1;
  for (size_t s = 0; s < gamma.size(); ++s) {
    const GProd* p = find_prod(g, gamma[s]);
    if (!p) return std::nullopt;
    int maxb = births.empty() ? -1 : *std::max_element(births.begin(), births.end());
    // The unique max-birth occurrence whose nonterminal matches the head.
    int occ = -1, pos = -1, oi = 0;
    for (int i = 0; i < (int)cur.size(); ++i) {
      if (!cur[i].is_nt) continue;
      if (births[oi] == maxb && cur[i].nt == p->head) {
        occ = oi;
        pos = i;
        break;
      }
      ++oi;
    }
    if (occ < 0) return std::nullopt;
    Form nf;
    std::vector<int> nb;
    oi = 0;
    for (int i = 0; i < (int)cur.size(); ++i) {
      if (cur[i].is_nt) {
        if (i == pos) {
          for (auto& item : p->items) {
            nf.push_back(item);
            if (item.is_nt) nb.push_back((int)s + 1);
          }
        } else {
          nf.push_back(cur[i]);
          nb.push_back(births[oi]);
        }
        ++oi;
      } else {
        nf.push_back(cur[i]);
      }
    }
    cur = std::move(nf);
    births = std::move(nb);
    max_nts = std::max(max_nts, nt_count(cur));
  }
  if (nt_count(cur) != 0) return std::nullopt;
  if (index_out) *index_out = max_nts;
  return form_word(cur);
}

// ---------------------------------------------------------------------------
// Szilard automaton of depth-first k-index derivations
// ---------------------------------------------------------------------------

namespace {

using Skel = std::vector<std::pair<std::string, int>>;  // (NT, birth rank)

Skel compress(Skel s) {
  std::set<int> ranks;
  for (auto& [n, r] : s) ranks.insert(r);
  std::map<int, int> rn;
  int i = 0;
  for (int r : ranks) rn[r] = i++;
  for (auto& [n, r] : s) r = rn[r];
  return s;
}

std::string skel_key(const Skel& s) {
  std::string k;
  for (auto& [n, r] : s) k += n + "@" + std::to_string(r) + ",";
  return k;
}

}  // namespace

DfNfa szilard_df_nfa(const GGrammar& g, const std::string& X, int k) {
  DfNfa nfa;
  Skel init{{X, 0}};
  nfa.initial = skel_key(init);
  nfa.accept = skel_key({});
  std::map<std::string, Skel> by_key{{nfa.initial, init}, {nfa.accept, {}}};
  std::deque<std::string> queue{nfa.initial};
  std::set<std::string> seen{nfa.initial};
  nfa.states.push_back(nfa.initial);
  while (!queue.empty()) {
    std::string key = queue.front();
    queue.pop_front();
    Skel cur = by_key[key];
    if (cur.empty()) continue;
    int maxb = 0;
    for (auto& [n, r] : cur) maxb = std::max(maxb, r);
    for (auto& p : g.prods) {
      // Applicable at the unique max-birth occurrence with matching head.
      int pos = -1;
      for (int i = 0; i < (int)cur.size(); ++i)
        if (cur[i].second == maxb && cur[i].first == p.head) { pos = i; break; }
      if (pos < 0) continue;
      Skel next;
      for (int i = 0; i < (int)cur.size(); ++i) {
        if (i == pos) {
          for (auto& item : p.items)
            if (item.is_nt) next.emplace_back(item.nt, maxb + 1);
        } else {
          next.push_back(cur[i]);
        }
      }
      if ((int)next.size() > k) continue;
      next = compress(next);
      std::string nk = skel_key(next);
      nfa.edges[key].emplace_back(p.id, nk);
      if (seen.insert(nk).second) {
        by_key[nk] = next;
        nfa.states.push_back(nk);
        queue.push_back(nk);
      }
    }
  }
  if (!seen.count(nfa.accept)) nfa.states.push_back(nfa.accept);
  return nfa;
}

bool DfNfa::accepts(const std::vector<std::string>& gamma) const {
  std::string cur = initial;
  for (auto& p : gamma) {
    auto it = edges.find(cur);
    if (it == edges.end()) return false;
    bool moved = false;
    for (auto& [pid, nxt] : it->second) {
      if (pid == p) {
        cur = nxt;
        moved = true;
        break;
      }
    }
    if (!moved) return false;
  }
  return cur == accept;
}

// ---------------------------------------------------------------------------
// Nested words
// ---------------------------------------------------------------------------

NestedWord word_to_nested_word(const Word& w) {
  NestedWord nw;
  std::vector<int> stack;
  for (size_t i = 0; i < w.size(); ++i) {
    nw.letters.push_back(w[i].t);
    if (w[i].tag == Tag::Open) {
      stack.push_back((int)i + 1);
    } else if (w[i].tag == Tag::Close) {
      if (stack.empty()) throw Error("UnmatchedTag", "close without open at " + std::to_string(i + 1));
      nw.edges.emplace_back(stack.back(), (int)i + 1);
      stack.pop_back();
    }
  }
  if (!stack.empty()) throw Error("UnmatchedTag", "unclosed open tag");
  std::sort(nw.edges.begin(), nw.edges.end());
  return nw;
}

Relation call_entry_relation(const Program& p, const Transition& call) {
  const Procedure* caller = p.owner_of_state(call.src);
  const Procedure* callee = p.find_proc(call.callee);
  if (!caller || !callee) throw Error("UnknownCallee", call.id);
  std::vector<F> ks;
  for (size_t i = 0; i < callee->inputs.size(); ++i)
    ks.push_back(eq(Term::var(primed(callee->inputs[i])), call.args[i]));
  return Relation{caller->locals, callee->locals, land(std::move(ks))};
}

Relation call_return_relation(const Program& p, const Transition& call) {
  const Procedure* caller = p.owner_of_state(call.src);
  const Procedure* callee = p.find_proc(call.callee);
  if (!caller || !callee) throw Error("UnknownCallee", call.id);
  std::vector<F> ks;
  for (size_t i = 0; i < call.rets.size(); ++i)
    ks.push_back(eq(Term::var(primed(call.rets[i])), Term::var(callee->outputs[i])));
  return Relation{callee->locals, caller->locals, land(std::move(ks))};
}

Relation call_frame_relation(const Program& p, const Transition& call) {
  const Procedure* caller = p.owner_of_state(call.src);
  if (!caller) throw Error("UnknownCallee", call.id);
  return frame_relation(caller->locals, call.rets);
}

namespace {

Relation seg_sem(const NestedWord& nw, const Program& p,
                 const std::map<int, int>& match, int i, int j) {
  if (i > j) throw Error("MalformedNesting", "empty segment");
  const Transition* t = p.find_transition(nw.letters[i - 1]);
  if (!t) throw Error("MalformedNesting", "unknown symbol " + nw.letters[i - 1]);
  Relation r;
  int next;
  auto m = match.find(i);
  if (m != match.end()) {
    int close = m->second;
    if (close > j || i + 1 > close - 1)
      throw Error("MalformedNesting", "bad call segment");
    if (!t->is_call()) throw Error("MalformedNesting", "tagged non-call symbol");
    Relation inner = seg_sem(nw, p, match, i + 1, close - 1);
    Relation through = compose(compose(call_entry_relation(p, *t), inner),
                               call_return_relation(p, *t));
    r = rel_and(through, call_frame_relation(p, *t));
    next = close + 1;
  } else {
    if (t->is_call()) throw Error("MalformedNesting", "untagged call symbol");
    r = t->rel;
    next = i + 1;
  }
  if (next > j) return r;
  return compose(r, seg_sem(nw, p, match, next, j));
}

}  // namespace

Relation nested_word_semantics(const NestedWord& nw, const Program& p) {
  std::map<int, int> match;
  for (auto& [a, b] : nw.edges) {
    if (a >= b || a < 1 || b > (int)nw.letters.size())
      throw Error("MalformedNesting", "bad edge");
    match[a] = b;
  }
  if (nw.letters.empty()) throw Error("MalformedNesting", "empty word");
  return seg_sem(nw, p, match, 1, (int)nw.letters.size());
}

Relation word_semantics(const Word& w, const Program& p) {
  return nested_word_semantics(word_to_nested_word(w), p);
}

Relation io_restrict(const Relation& r, const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs) {
  std::vector<std::string> drop;
  for (auto& v : r.in)
    if (std::find(inputs.begin(), inputs.end(), v) == inputs.end()) drop.push_back(v);
  for (auto& v : r.out)
    if (std::find(outputs.begin(), outputs.end(), v) == outputs.end())
      drop.push_back(primed(v));
  return Relation{inputs, outputs, project(r.body, drop)};
}

// ---------------------------------------------------------------------------
// Bounded expressions
// ---------------------------------------------------------------------------

BoundedExpression parse_bounded_expression(const std::string& text) {
  BoundedExpression b;
  size_t i = 0;
  auto skip = [&] { while (i < text.size() && std::isspace((unsigned char)text[i])) ++i; };
  while (true) {
    skip();
    if (i >= text.size()) break;
    std::string group;
    if (text[i] == '(') {
      size_t j = text.find(')', i);
      if (j == std::string::npos) throw Error("SyntaxError", "unclosed ( in bounded expression");
      group = text.substr(i + 1, j - i - 1);
      i = j + 1;
    } else {
      size_t j = i;
      while (j < text.size() && !std::isspace((unsigned char)text[j]) && text[j] != '*') ++j;
      group = text.substr(i, j - i);
      i = j;
    }
    skip();
    if (i >= text.size() || text[i] != '*')
      throw Error("SyntaxError", "bounded expression group must be starred");
    ++i;
    Word w = parse_word(group);
    if (w.empty()) throw Error("SyntaxError", "empty word in bounded expression");
    b.words.push_back(std::move(w));
  }
  return b;
}

std::string bexpr_str(const BoundedExpression& b) {
  std::string r;
  for (size_t i = 0; i < b.words.size(); ++i) {
    if (i) r += " ";
    r += "(" + word_str(b.words[i]) + ")*";
  }
  return r;
}

bool in_bounded_language(const Word& w, const BoundedExpression& b) {
  size_t n = w.size(), d = b.words.size();
  // reach[s] = set of positions coverable using segments 0..s-1 plus stars of s.
  std::vector<std::vector<bool>> reach(d + 1, std::vector<bool>(n + 1, false));
  reach[0][0] = true;
  for (size_t s = 0; s < d; ++s) {
    // Carry over, then close under one more repetition of b.words[s].
    for (size_t pos = 0; pos <= n; ++pos)
      if (reach[s][pos]) reach[s + 1][pos] = true;
    const Word& seg = b.words[s];
    for (size_t pos = 0; pos + seg.size() <= n; ++pos) {
      if (!reach[s + 1][pos]) continue;
      bool ok = true;
      for (size_t t = 0; t < seg.size(); ++t)
        if (!(w[pos + t] == seg[t])) { ok = false; break; }
      if (ok) reach[s + 1][pos + seg.size()] = true;
    }
  }
  // Positions are only ever extended monotonically; redo passes until stable
  // to close multiple repetitions.
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t s = 0; s < d; ++s) {
      const Word& seg = b.words[s];
      for (size_t pos = 0; pos <= n; ++pos)
        if (reach[s][pos] && !reach[s + 1][pos]) { reach[s + 1][pos] = true; changed = true; }
      for (size_t pos = 0; pos + seg.size() <= n; ++pos) {
        if (!reach[s + 1][pos]) continue;
        bool ok = true;
        for (size_t t = 0; t < seg.size(); ++t)
          if (!(w[pos + t] == seg[t])) { ok = false; break; }
        if (ok && !reach[s + 1][pos + seg.size()]) {
          reach[s + 1][pos + seg.size()] = true;
          changed = true;
        }
      }
    }
  }
  return reach[d][n];
}

BoundedCheck check_bounded_subset(const GGrammar& g, const std::string& X,
                                  const BoundedExpression& b, int len_bound) {
  // Unrestricted index: any word of length <= L has a derivation of index
  // <= L + 1, so a large k makes the k-index language coincide up to L.
  std::set<Word> words = enumerate_words(g, X, len_bound + 2, len_bound);
  for (auto& w : words) {
    if (!in_bounded_language(w, b)) return BoundedCheck{false, w};
  }
  return BoundedCheck{true, std::nullopt};
}

}  // namespace ksum
