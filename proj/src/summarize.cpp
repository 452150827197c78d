#include "ksum/summarize.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <functional>
#include <limits>
#include <sstream>

#include "ksum/vpg.hpp"

namespace ksum {

namespace {

const Int TOP = std::numeric_limits<Int>::min();  // unconstrained component

std::vector<std::string> union_locals(const Program& p) {
  std::vector<std::string> out;
  for (auto& pr : p.procedures)
    for (auto& v : pr.locals) out.push_back(v);
  return out;
}

// ---------------------------------------------------------------------------
// Symbolic engine: per-procedure backward fixpoint with cycle acceleration,
// bottom-up over the (acyclic) call graph.
// ---------------------------------------------------------------------------

struct ProcResult {
  std::map<std::string, Relation> s;  // per non-final state: relation to final
  bool converged = false;
};

struct Engine {
  const Program& h;
  const Bounds& bd;
  bool preset_mode;  // final value = top (reachability sets) instead of identity

  std::map<std::string, ProcResult> results;
  std::map<std::string, F> preset_io;  // proc -> precondition over its inputs
  bool all_converged = true;

  Engine(const Program& h_, const Bounds& bd_, bool preset)
      : h(h_), bd(bd_), preset_mode(preset) {}

  Relation call_meta(const Procedure& caller, const Transition& t) {
    const Procedure* callee = h.find_proc(t.callee);
    if (!callee) throw Error("UnknownCallee", t.id);
    if (preset_mode && callee->outputs.empty() && t.rets.empty()) {
      // The call completes iff the callee precondition holds of the
      // arguments; nothing flows back.
      F f = preset_io.at(callee->name);
      for (size_t i = 0; i < callee->inputs.size(); ++i)
        f = subst(f, callee->inputs[i], t.args[i]);
      return rel_and(Relation{caller.locals, caller.locals, f},
                     frame_relation(caller.locals, {}));
    }
    const ProcResult& cr = results.at(callee->name);
    auto it = cr.s.find(callee->initial);
    Relation S = it != cr.s.end() ? it->second : Relation::bottom(callee->locals);
    return rel_and(compose(compose(call_entry_relation(h, t), S),
                           call_return_relation(h, t)),
                   call_frame_relation(h, t));
  }

  std::map<std::string, std::optional<F>> star_cache;
  std::map<std::string, bool> chain_cache;

  // Rename the frame to positional names so structurally equal relations from
  // renamed copies of a procedure share cache entries.
  F canonical_body(const Relation& d, std::map<std::string, std::string>* back) {
    std::map<std::string, std::string> fwd;
    for (size_t i = 0; i < d.in.size(); ++i) {
      std::string c = "#c" + std::to_string(i);
      fwd[d.in[i]] = c;
      fwd[primed(d.in[i])] = primed(c);
      if (back) {
        (*back)[c] = d.in[i];
        (*back)[primed(c)] = primed(d.in[i]);
      }
    }
    return rename_vars(d.body, fwd);
  }

  // Components pinned to a single value by the conjunct's own literals.
  static void pinned(const F& f, std::map<std::string, std::pair<Int, Int>>& bd) {
    switch (f->kind) {
      case FK::And:
        for (auto& k : f->kids) pinned(k, bd);
        break;
      case FK::Le0:
        if (f->t.c.size() == 1) {
          auto& [v, a] = *f->t.c.begin();
          // a*v + k <= 0
          if (a == 1) {
            auto& b = bd.try_emplace(v, INT64_MIN / 4, INT64_MAX / 4).first->second;
            b.second = std::min(b.second, -f->t.k);
          } else if (a == -1) {
            auto& b = bd.try_emplace(v, INT64_MIN / 4, INT64_MAX / 4).first->second;
            b.first = std::max(b.first, f->t.k);
          }
        }
        break;
      default: break;
    }
  }

  // Cheap incompatibility screen: a component fixed to different constants on
  // the output side of a and the input side of b cannot chain.
  static bool may_chain(const Relation& a, const Relation& b) {
    std::map<std::string, std::pair<Int, Int>> ba, bb;
    pinned(a.body, ba);
    pinned(b.body, bb);
    for (auto& v : a.in) {
      auto ia = ba.find(primed(v));
      auto ib = bb.find(v);
      if (ia == ba.end() || ib == bb.end()) continue;
      if (ia->second.first == ia->second.second &&
          ib->second.first == ib->second.second &&
          ia->second.first != ib->second.first)
        return false;
    }
    return true;
  }

  bool chains(const Relation& a, const Relation& b) {
    if (!may_chain(a, b)) return false;
    std::string key = to_string(canonical_body(a, nullptr)) + "|" +
                      to_string(canonical_body(b, nullptr));
    auto it = chain_cache.find(key);
    if (it != chain_cache.end()) return it->second;
    bool r = is_sat(compose(a, b));
    chain_cache[key] = r;
    return r;
  }

  // Star of a single relation, if we can get it exactly.
  std::optional<Relation> star_of(const Relation& d) {
    std::map<std::string, std::string> back;
    std::string key = to_string(canonical_body(d, &back));
    if (auto it = star_cache.find(key); it != star_cache.end()) {
      if (!it->second) return std::nullopt;
      return Relation{d.in, d.out, rename_vars(*it->second, back)};
    }
    auto res = star_uncached(d);
    star_cache[key] = res ? std::optional<F>(canonical_body(*res, nullptr))
                          : std::nullopt;
    return res;
  }

  std::optional<Relation> star_uncached(const Relation& d) {
    if (!is_sat(compose(d, d)))
      return rel_or(Relation::identity(d.in), d);
    if (auto cf = try_accelerate_guarded_translation(d)) {
      Relation st = cf->star();
      st.body = simplify(st.body);
      return st;
    }
    auto mr = recognize_finite_monoid_affine(d, bd.power_bound);
    if (mr.verdict == MonoidVerdict::Yes && mr.data) {
      Relation st = closed_form_finite_monoid(d, *mr.data).star();
      st.body = simplify(st.body);
      return st;
    }
    return star_by_induction(d);
  }

  void solve_proc(const Procedure& pr) {
    const std::string FIN = "#final";
    std::vector<std::string> nf = pr.nonfinal_states();
    std::map<std::string, std::vector<std::pair<std::string, Relation>>> edges;
    for (auto& t : pr.transitions) {
      Relation r = t.is_call() ? call_meta(pr, t) : t.rel;
      std::string dst = pr.is_final(t.dst) ? FIN : t.dst;
      edges[t.src].push_back({dst, r});
    }

    bool dbg = getenv("KSUM_DEBUG") != nullptr;
    auto now = [] {
      return std::chrono::duration<double>(
                 std::chrono::steady_clock::now().time_since_epoch())
          .count();
    };
    double t0 = now();
    if (dbg) fprintf(stderr, "[%s] edges built\n", pr.name.c_str());
    std::map<std::string, int> comp = scc_of(nf, edges);
    std::map<int, std::set<std::string>> members;
    for (auto& [q, c] : comp) members[c].insert(q);

    // Keep the initial state, one hub per cyclic component, and the final
    // node; everything else is eliminated by edge composition, which leaves
    // a tiny graph whose only self-loops sit on hubs.
    std::set<std::string> keep{pr.initial};
    for (auto& [cid, scc] : members) {
      bool cyclic = scc.size() > 1;
      if (!cyclic)
        for (auto& [v, r] : edges[*scc.begin()])
          if (v == *scc.begin()) cyclic = true;
      if (!cyclic) continue;
      std::string hub = pick_hub(scc, edges);
      if (hub.empty())
        keep.insert(scc.begin(), scc.end());  // no single cut point: keep all
      else
        keep.insert(hub);
    }

    // Elimination graph with parallel non-self edges merged.
    auto elim_edges = edges;
    std::vector<std::string> drop;
    for (auto& q : nf)
      if (!keep.count(q)) drop.push_back(q);
    // Reverse topological among dropped states (graph minus hubs is acyclic).
    drop = topo_order(drop, elim_edges);
    for (auto& x : drop) {
      std::vector<std::pair<std::string, Relation>> outs;
      if (auto it = elim_edges.find(x); it != elim_edges.end())
        outs = std::move(it->second);
      elim_edges.erase(x);
      for (auto& [u, es] : elim_edges) {
        std::vector<std::pair<std::string, Relation>> nes;
        for (auto& [v, r] : es) {
          if (v != x) {
            nes.push_back({v, r});
            continue;
          }
          for (auto& [w, r2] : outs) nes.push_back({w, compose(r, r2)});
        }
        es = std::move(nes);
      }
      // Also rewrite outs' own targets already handled by ordering.
    }
    // Merge parallel edges except hub self-loops (kept separate as cycle
    // blocks for acceleration).
    for (auto& [u, es] : elim_edges) {
      std::vector<std::pair<std::string, Relation>> merged;
      std::map<std::string, size_t> at;
      for (auto& [v, r] : es) {
        if (v == u) {
          merged.push_back({v, r});
          continue;
        }
        auto it = at.find(v);
        if (it == at.end()) {
          at[v] = merged.size();
          merged.push_back({v, r});
        } else {
          merged[it->second].second = rel_or(merged[it->second].second, r);
        }
      }
      es = std::move(merged);
    }

    if (dbg) fprintf(stderr, "[%s] eliminated %zu states (%.2fs)\n", pr.name.c_str(), drop.size(), now() - t0);
    t0 = now();
    // Accelerate each hub's self-loop blocks.
    for (auto& h : keep) {
      std::vector<Relation> blocks;
      std::vector<std::pair<std::string, Relation>> rest;
      for (auto& e : elim_edges[h]) {
        if (e.first == h) {
          // Split into disjuncts so the closed-form recognizers see one
          // deterministic branch at a time.
          for (auto& d : disjuncts(e.second.body))
            blocks.push_back(Relation{e.second.in, e.second.out, d});
        } else {
          rest.push_back(e);
        }
      }
      if (blocks.empty()) continue;
      if (dbg) fprintf(stderr, "[%s] blocks split (%.2fs)\n", pr.name.c_str(), now() - t0);
      t0 = now();
      if (dbg && getenv("KSUM_DEBUG3"))
        for (auto& b : blocks)
          fprintf(stderr, "[%s] hub %s block: %s\n", pr.name.c_str(), h.c_str(),
                  to_string(b.body).c_str());
      elim_edges[h] = std::move(rest);
      for (auto& b : blocks) elim_edges[h].push_back({h, b});
      accelerate_blocks(h, blocks, elim_edges);
    }

    // Gauss-Seidel over the kept states.
    std::map<std::string, Relation> s;
    Relation fin = preset_mode ? Relation::top(pr.locals)
                               : Relation::identity(pr.locals);
    for (auto& q : keep) s[q] = Relation::bottom(pr.locals);
    auto value = [&](const std::string& x) -> const Relation& {
      return x == FIN ? fin : s.at(x);
    };
    std::vector<std::string> order(keep.begin(), keep.end());
    std::stable_sort(order.begin(), order.end(),
                     [&](const std::string& a, const std::string& b) {
                       return comp.at(a) > comp.at(b);
                     });
    if (dbg) fprintf(stderr, "[%s] accelerated (%.2fs)\n", pr.name.c_str(), now() - t0);
    t0 = now();
    int cap = bd.unroll + (int)keep.size() + 4;
    bool converged = false;
    for (int round = 0; round < cap && !converged; ++round) {
      bool changed = false;
      for (auto& q : order) {
        std::vector<F> parts;
        for (auto& [v, r] : elim_edges[q])
          parts.push_back(compose(r, value(v)).body);
        Relation acc{pr.locals, pr.locals, simplify(lor(std::move(parts)))};
        if (dbg) fprintf(stderr, "[%s] round %d state %s size %zu\n", pr.name.c_str(), round, q.c_str(), to_string(acc.body).size());
        bool grown;
        try {
          grown = !subsumes(s.at(q), acc);
        } catch (const Error&) {
          grown = true;  // too hard to decide: keep iterating
        }
        if (grown) {
          s[q] = acc;
          changed = true;
        }
      }
      converged = !changed;
    }

    ProcResult res;
    if (!preset_mode) {
      // Back-fill eliminated states over the original edges; the eliminated
      // subgraph is acyclic, so one pass in reverse topological order of the
      // dropped states (computed above) is exact.
      for (auto& x : drop) {
        std::vector<F> parts;
        for (auto& [v, r] : edges[x]) parts.push_back(compose(r, value(v)).body);
        s[x] = Relation{pr.locals, pr.locals, lor(std::move(parts))};
      }
    }
    if (dbg) fprintf(stderr, "[%s] fixpoint (%.2fs)\n", pr.name.c_str(), now() - t0);
    res.s = std::move(s);
    res.converged = converged;
    if (!converged) all_converged = false;
    finish_proc(pr, std::move(res));
  }

  // Order `nodes` so that successors (within `nodes`) come before the node.
  static std::vector<std::string> topo_order(
      const std::vector<std::string>& nodes,
      const std::map<std::string, std::vector<std::pair<std::string, Relation>>>& edges) {
    std::set<std::string> in(nodes.begin(), nodes.end());
    std::map<std::string, int> state;
    std::vector<std::string> out;
    std::function<void(const std::string&)> dfs = [&](const std::string& u) {
      state[u] = 1;
      auto it = edges.find(u);
      if (it != edges.end())
        for (auto& [v, r] : it->second)
          if (in.count(v) && state[v] == 0) dfs(v);
      state[u] = 2;
      out.push_back(u);
    };
    for (auto& q : nodes)
      if (state[q] == 0) dfs(q);
    return out;
  }

  void accelerate_blocks(const std::string& hub, const std::vector<Relation>& blocks,
                         std::map<std::string, std::vector<std::pair<std::string, Relation>>>& edges) {
    int m = (int)blocks.size();
    if (m == 0) return;
    // Composability digraph over blocks.
    std::vector<std::vector<bool>> can(m, std::vector<bool>(m, false));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) can[i][j] = chains(blocks[i], blocks[j]);
    int added = 0;
    // Simple cycles (canonical start = smallest index), then every rotation.
    std::vector<int> cyc;
    std::function<void(int, int)> dfs = [&](int start, int u) {
      if (added >= bd.max_cycles) return;
      for (int v = start; v < m; ++v) {
        if (!can[u][v]) continue;
        if (v == start) {
          emit_cycle(cyc, blocks, hub, edges, added);
          continue;
        }
        if (std::find(cyc.begin(), cyc.end(), v) != cyc.end()) continue;
        if ((int)cyc.size() >= bd.cycle_len) continue;
        cyc.push_back(v);
        dfs(start, v);
        cyc.pop_back();
      }
    };
    for (int sidx = 0; sidx < m; ++sidx) {
      cyc = {sidx};
      dfs(sidx, sidx);
    }
  }

  void emit_cycle(const std::vector<int>& cyc, const std::vector<Relation>& blocks,
                  const std::string& hub,
                  std::map<std::string, std::vector<std::pair<std::string, Relation>>>& edges,
                  int& added) {
    int r = (int)cyc.size();
    bool dbg = getenv("KSUM_DEBUG") != nullptr;
    for (int rot = 0; rot < r; ++rot) {
      if (added >= bd.max_cycles) return;
      Relation d = blocks[cyc[rot]];
      for (int i = 1; i < r; ++i) d = compose(d, blocks[cyc[(rot + i) % r]]);
      d.body = simplify(d.body);
      if (!is_sat(d)) continue;
      auto st = star_of(d);
      if (dbg) {
        std::string ids;
        for (int i = 0; i < r; ++i) ids += std::to_string(cyc[(rot + i) % r]) + " ";
        fprintf(stderr, "  cycle [%s] star %s\n", ids.c_str(), st ? "ok" : "FAIL");
      }
      if (st) {
        edges[hub].push_back({hub, *st});
        ++added;
      }
    }
  }

  static std::map<std::string, int> scc_of(
      const std::vector<std::string>& nodes,
      const std::map<std::string, std::vector<std::pair<std::string, Relation>>>& edges) {
    // Tarjan (recursive; control graphs are small).
    std::map<std::string, int> index, low, comp;
    std::vector<std::string> stk;
    std::set<std::string> on;
    int idx = 0, cid = 0;
    std::set<std::string> nodeset(nodes.begin(), nodes.end());
    std::function<void(const std::string&)> go = [&](const std::string& u) {
      index[u] = low[u] = idx++;
      stk.push_back(u);
      on.insert(u);
      auto it = edges.find(u);
      if (it != edges.end())
        for (auto& [v, r] : it->second) {
          if (!nodeset.count(v)) continue;
          if (!index.count(v)) {
            go(v);
            low[u] = std::min(low[u], low[v]);
          } else if (on.count(v)) {
            low[u] = std::min(low[u], index[v]);
          }
        }
      if (low[u] == index[u]) {
        for (;;) {
          std::string w = stk.back();
          stk.pop_back();
          on.erase(w);
          comp[w] = cid;
          if (w == u) break;
        }
        ++cid;
      }
    };
    for (auto& q : nodes)
      if (!index.count(q)) go(q);
    return comp;
  }

  static std::string pick_hub(
      const std::set<std::string>& scc,
      const std::map<std::string, std::vector<std::pair<std::string, Relation>>>& edges) {
    for (auto& cand : scc) {
      // Acyclic when cand removed?
      std::map<std::string, int> state;
      bool cyc = false;
      std::function<void(const std::string&)> dfs = [&](const std::string& u) {
        state[u] = 1;
        auto it = edges.find(u);
        if (it != edges.end())
          for (auto& [v, r] : it->second) {
            if (!scc.count(v) || v == cand) continue;
            if (state[v] == 1) cyc = true;
            else if (state[v] == 0) dfs(v);
            if (cyc) return;
          }
        state[u] = 2;
      };
      for (auto& q : scc) {
        if (q == cand || state[q]) continue;
        dfs(q);
        if (cyc) break;
      }
      if (!cyc) return cand;
    }
    return {};
  }

  void finish_proc(const Procedure& pr, ProcResult&& res) {
    if (preset_mode) {
      F f;
      auto it = res.s.find(pr.initial);
      if (it == res.s.end()) {
        f = fls();
      } else {
        f = it->second.body;
        std::set<std::string> keep(pr.inputs.begin(), pr.inputs.end());
        std::vector<std::string> elim;
        for (auto& v : free_vars(f))
          if (!keep.count(v)) elim.push_back(v);
        f = project(f, elim);
      }
      preset_io[pr.name] = f;
    }
    results[pr.name] = std::move(res);
  }

  void run() {
    // Reverse topological order over the call graph (callees first).
    auto cg = call_graph(h);
    std::map<std::string, int> pending;
    std::map<std::string, std::vector<std::string>> callers;
    for (auto& pr : h.procedures) pending[pr.name] = 0;
    for (auto& [c, outs] : cg) {
      pending[c] = (int)outs.size();
      for (auto& o : outs) callers[o].push_back(c);
    }
    std::deque<std::string> ready;
    for (auto& pr : h.procedures)
      if (pending[pr.name] == 0) ready.push_back(pr.name);
    size_t done = 0;
    while (!ready.empty()) {
      std::string name = ready.front();
      ready.pop_front();
      const Procedure* pr = h.find_proc(name);
      try {
        solve_proc(*pr);
      } catch (const Error& e) {
        if (getenv("KSUM_DEBUG")) fprintf(stderr, "proc %s failed: %s\n", name.c_str(), e.what());
        ProcResult res;
        for (auto& q : pr->nonfinal_states())
          res.s[q] = Relation::bottom(pr->locals);
        res.converged = false;
        all_converged = false;
        finish_proc(*pr, std::move(res));
      }
      ++done;
      for (auto& c : callers[name])
        if (--pending[c] == 0) ready.push_back(c);
    }
    if (done != h.procedures.size())
      throw Error("RecursiveProgram", "call graph has a cycle");
  }
};

Summary symbolic_summary(const Program& p, int k, const Bounds& bd) {
  QueryProgram qp = generate_query_program(p, k);
  Engine eng(qp.program, bd, /*preset=*/true);
  eng.run();

  std::vector<std::string> uvars = union_locals(p);
  size_t n = uvars.size();
  Summary out;
  out.k = k;
  out.backend = Backend::Symbolic;
  out.status = eng.all_converged ? SummaryStatus::ExactUncertified
                                 : SummaryStatus::Truncated;
  for (auto& q : p.state_order) {
    const Procedure* owner = p.owner_of_state(q);
    const Procedure* ph = qp.program.find_proc(qp.proc_name(q, k));
    const ProcResult& r = eng.results.at(ph->name);
    F f = r.s.count(ph->initial) ? r.s.at(ph->initial).body : fls();
    std::map<std::string, std::string> ren;
    std::set<std::string> keep;
    for (auto& v : owner->locals) {
      size_t idx = std::find(uvars.begin(), uvars.end(), v) - uvars.begin();
      const std::string& In = ph->inputs[idx];
      const std::string& On = ph->inputs[n + idx];
      keep.insert(In);
      keep.insert(On);
      ren[In] = v;
      ren[On] = primed(v);
    }
    std::vector<std::string> elim;
    for (auto& v : free_vars(f))
      if (!keep.count(v)) elim.push_back(v);
    f = project(f, elim);
    f = rename_vars(f, ren);
    out.rel[q] = Relation{owner->locals, owner->locals, f};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Enumerate backend
// ---------------------------------------------------------------------------

Summary enumerate_summary(const Program& p, int k, const Bounds& bd) {
  Grammar g = build_vpg(p);
  GGrammar gg = to_generic(g);
  Summary out;
  out.k = k;
  out.backend = Backend::Enumerate;
  bool pruned_any = false;
  for (auto& q : p.state_order) {
    const Procedure* owner = p.owner_of_state(q);
    bool pruned = false;
    std::set<Word> ws = enumerate_words(gg, q, k, bd.max_len, &pruned);
    pruned_any |= pruned;
    std::vector<F> parts;
    for (auto& w : ws) parts.push_back(word_semantics(w, p).body);
    out.rel[q] = Relation{owner->locals, owner->locals, lor(std::move(parts))};
  }
  out.status = pruned_any ? SummaryStatus::Truncated : SummaryStatus::ExactUncertified;
  return out;
}

// ---------------------------------------------------------------------------
// Concrete backend: memoized forward evaluation with unknown (lazy) values.
// ---------------------------------------------------------------------------

struct Concrete {
  const Program& p;
  const Bounds& bd;
  int kmax;
  bool truncated = false;
  long long budget;

  using Val = std::vector<Int>;
  using Key = std::tuple<std::string, int, Val>;  // state, index, entry valuation
  std::map<Key, std::set<Val>> memo;
  std::map<Key, std::set<Key>> dependents;
  std::deque<Key> queue;
  std::set<Key> inq;

  Concrete(const Program& p_, const Bounds& bd_, int k)
      : p(p_), bd(bd_), kmax(k) {
    budget = (long long)bd.max_depth * 100000;
  }

  const Procedure& owner(const std::string& q) const {
    const Procedure* pr = p.owner_of_state(q);
    if (!pr) throw Error("BadState", q);
    return *pr;
  }

  void enqueue(const Key& k) {
    if (inq.insert(k).second) queue.push_back(k);
  }

  void touch(const Key& k) {
    if (memo.emplace(k, std::set<Val>{}).second) enqueue(k);
  }

  const std::set<Val>& read(const Key& dep, const Key& reader) {
    touch(dep);
    dependents[dep].insert(reader);
    return memo.at(dep);
  }

  int var_index(const Procedure& pr, const std::string& v) const {
    return (int)(std::find(pr.locals.begin(), pr.locals.end(), v) -
                 pr.locals.begin());
  }

  // Branch every TOP component listed in `need` over the box.
  void branched(const Procedure& pr, const Val& val,
                const std::set<std::string>& need, std::vector<Val>& out) {
    std::vector<int> idxs;
    for (auto& v : need) {
      int i = var_index(pr, v);
      if (i < (int)pr.locals.size() && val[i] == TOP) idxs.push_back(i);
    }
    double count = 1;
    for (size_t i = 0; i < idxs.size(); ++i) count *= (double)(bd.box_hi - bd.box_lo + 1);
    if (count > 200000) {
      truncated = true;
      return;
    }
    out.push_back(val);
    for (int i : idxs) {
      std::vector<Val> next;
      for (auto& v : out)
        for (Int x = bd.box_lo; x <= bd.box_hi; ++x) {
          Val w = v;
          w[i] = x;
          next.push_back(std::move(w));
        }
      out = std::move(next);
    }
  }

  Valuation to_valuation(const Procedure& pr, const Val& val) const {
    Valuation m;
    for (size_t i = 0; i < pr.locals.size(); ++i)
      if (val[i] != TOP) m[pr.locals[i]] = val[i];
    return m;
  }

  bool capped(Int x) {
    if (x != TOP && (x > bd.value_cap || x < -bd.value_cap)) {
      truncated = true;
      return true;
    }
    return false;
  }

  std::set<std::string> term_vars(const std::vector<Term>& ts) const {
    std::set<std::string> s;
    for (auto& t : ts)
      for (auto& [v, c] : t.c) s.insert(v);
    return s;
  }

  // Continue execution at (state, index) with valuation v; results into out.
  void continue_at(const Procedure& pr, const std::string& dst, int k,
                   const Val& v, const Key& self, std::set<Val>& out) {
    if (pr.is_final(dst)) {
      out.insert(v);
      return;
    }
    auto& sub = read(Key{dst, k, v}, self);
    out.insert(sub.begin(), sub.end());
  }

  std::set<Val> expand(const Key& key) {
    const auto& [q, k, val] = key;
    const Procedure& pr = owner(q);
    std::set<Val> out;
    for (auto& t : pr.transitions) {
      if (t.src != q) continue;
      switch (t.stmt) {
        case StmtKind::Identity:
          continue_at(pr, t.dst, k, val, key, out);
          break;
        case StmtKind::Assume: {
          std::vector<Val> vs;
          branched(pr, val, free_vars(t.guard), vs);
          for (auto& v : vs)
            if (eval(t.guard, to_valuation(pr, v)))
              continue_at(pr, t.dst, k, v, key, out);
          break;
        }
        case StmtKind::Assign: {
          std::vector<Val> vs;
          branched(pr, val, term_vars(t.rhs), vs);
          for (auto& v : vs) {
            Valuation m = to_valuation(pr, v);
            Val w = v;
            bool bad = false;
            for (size_t i = 0; i < t.lhs.size(); ++i) {
              Int x = t.rhs[i].eval(m);
              if (capped(x)) bad = true;
              w[var_index(pr, t.lhs[i])] = x;
            }
            if (!bad) continue_at(pr, t.dst, k, w, key, out);
          }
          break;
        }
        case StmtKind::Havoc: {
          Val w = val;
          for (auto& v : t.lhs) w[var_index(pr, v)] = TOP;
          continue_at(pr, t.dst, k, w, key, out);
          break;
        }
        case StmtKind::Return: {
          std::vector<Val> vs;
          branched(pr, val, term_vars(t.rhs), vs);
          for (auto& v : vs) {
            Valuation m = to_valuation(pr, v);
            Val w = v;
            bool bad = false;
            for (size_t i = 0; i < pr.outputs.size(); ++i) {
              Int x = t.rhs[i].eval(m);
              if (capped(x)) bad = true;
              w[var_index(pr, pr.outputs[i])] = x;
            }
            for (auto& hv : t.lhs) w[var_index(pr, hv)] = TOP;
            if (!bad) out.insert(w);
          }
          break;
        }
        case StmtKind::Call: {
          const Procedure* callee = p.find_proc(t.callee);
          std::vector<Val> vs;
          branched(pr, val, term_vars(t.args), vs);
          for (auto& v : vs) {
            Valuation m = to_valuation(pr, v);
            Val entry(callee->locals.size(), TOP);
            bool bad = false;
            for (size_t i = 0; i < callee->inputs.size(); ++i) {
              Int x = t.args[i].eval(m);
              if (capped(x)) bad = true;
              entry[var_index(*callee, callee->inputs[i])] = x;
            }
            if (bad) continue;
            for (auto [ki, kr] : {std::pair<int, int>{k - 1, k}, {k, k - 1}}) {
              if (ki < 1 || kr < 1) continue;
              for (auto& fv : read(Key{callee->initial, ki, entry}, key)) {
                Val w = v;
                for (size_t i = 0; i < t.rets.size(); ++i)
                  w[var_index(pr, t.rets[i])] =
                      fv[var_index(*callee, callee->outputs[i])];
                continue_at(pr, t.dst, kr, w, key, out);
              }
              if (ki == kr) break;
            }
          }
          break;
        }
      }
    }
    return out;
  }

  void run() {
    while (!queue.empty()) {
      if (--budget < 0) {
        truncated = true;
        return;
      }
      Key key = queue.front();
      queue.pop_front();
      inq.erase(key);
      std::set<Val> nw = expand(key);
      auto& cur = memo.at(key);
      size_t before = cur.size();
      cur.insert(nw.begin(), nw.end());
      if (cur.size() != before)
        for (auto& d : dependents[key]) enqueue(d);
    }
  }
};

// Expand TOP components of v over the box.
void expand_tops(const std::vector<Int>& v, Int lo, Int hi,
                 std::vector<std::vector<Int>>& out) {
  out.clear();
  out.push_back(v);
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i] != TOP) continue;
    std::vector<std::vector<Int>> next;
    for (auto& w : out)
      for (Int x = lo; x <= hi; ++x) {
        auto u = w;
        u[i] = x;
        next.push_back(std::move(u));
      }
    out = std::move(next);
  }
}

}  // namespace

std::map<std::string, std::set<IOPair>> concrete_pairs(const Program& p, int k,
                                                       const Bounds& bd,
                                                       bool* truncated) {
  Concrete c(p, bd, k);
  // Seed every non-final state with every concrete box valuation.
  for (auto& q : p.state_order) {
    const Procedure& pr = c.owner(q);
    std::vector<Int> v(pr.locals.size(), TOP);
    std::vector<std::vector<Int>> seeds;
    expand_tops(v, bd.box_lo, bd.box_hi, seeds);
    for (auto& s : seeds) c.touch({q, k, s});
  }
  c.run();
  std::map<std::string, std::set<IOPair>> out;
  for (auto& q : p.state_order) {
    const Procedure& pr = c.owner(q);
    std::vector<Int> v(pr.locals.size(), TOP);
    std::vector<std::vector<Int>> seeds;
    expand_tops(v, bd.box_lo, bd.box_hi, seeds);
    auto& dst = out[q];
    for (auto& s : seeds) {
      auto it = c.memo.find({q, k, s});
      if (it == c.memo.end()) continue;
      for (auto& fv : it->second) {
        // Post components outside the box are dropped: pair sets are
        // box-restricted on both sides.
        std::vector<std::vector<Int>> posts;
        expand_tops(fv, bd.box_lo, bd.box_hi, posts);
        for (auto& pv : posts) {
          bool inbox = true;
          for (Int x : pv)
            if (x < bd.box_lo || x > bd.box_hi) inbox = false;
          if (inbox) dst.insert({s, pv});
        }
      }
    }
  }
  if (truncated) *truncated = c.truncated;
  return out;
}

Summary k_index_summary(const Program& p, int k, Backend backend,
                        const Bounds& b) {
  if (k < 1) throw Error("BadInput", "k must be >= 1");
  switch (backend) {
    case Backend::Symbolic:
      return symbolic_summary(p, k, b);
    case Backend::Enumerate:
      return enumerate_summary(p, k, b);
    case Backend::Concrete: {
      bool tr = false;
      auto pairs = concrete_pairs(p, k, b, &tr);
      Summary out;
      out.k = k;
      out.backend = Backend::Concrete;
      out.box_relative = true;
      out.status = SummaryStatus::Truncated;
      for (auto& q : p.state_order) {
        const Procedure* owner = p.owner_of_state(q);
        std::vector<F> parts;
        for (auto& [pre, post] : pairs[q]) {
          std::vector<F> eqs;
          for (size_t i = 0; i < owner->locals.size(); ++i) {
            eqs.push_back(eq(Term::var(owner->locals[i]), Term::cst(pre[i])));
            eqs.push_back(eq(Term::var(primed(owner->locals[i])), Term::cst(post[i])));
          }
          parts.push_back(land(std::move(eqs)));
        }
        out.rel[q] = Relation{owner->locals, owner->locals, lor(std::move(parts))};
      }
      return out;
    }
  }
  throw Error("BadInput", "unknown backend");
}

Summary summarize_nonrecursive(const Program& h, const Bounds& b) {
  if (is_recursive(h)) throw Error("RecursiveProgram", "expected a call dag");
  Engine eng(h, b, /*preset=*/false);
  eng.run();
  Summary out;
  out.k = 0;
  out.backend = Backend::Symbolic;
  for (auto& q : h.state_order) {
    const Procedure* owner = h.owner_of_state(q);
    const ProcResult& r = eng.results.at(owner->name);
    out.rel[q] = r.s.count(q) ? r.s.at(q) : Relation::bottom(owner->locals);
  }
  out.status = eng.all_converged ? SummaryStatus::ExactUncertified
                                 : SummaryStatus::Truncated;
  if (eng.all_converged && check_inductive(h, out))
    out.status = SummaryStatus::ExactCertified;
  return out;
}

bool check_inductive(const Program& p, const Summary& s) {
  for (auto& pr : p.procedures) {
    for (auto& q : pr.nonfinal_states())
      if (!s.rel.count(q))
        throw Error("FrameMismatch", "no relation for state " + q);
    for (auto& t : pr.transitions) {
      const Relation& sq = s.rel.at(t.src);
      Relation step;
      if (t.is_call()) {
        const Procedure* callee = p.find_proc(t.callee);
        step = rel_and(compose(compose(call_entry_relation(p, t),
                                       s.rel.at(callee->initial)),
                               call_return_relation(p, t)),
                       call_frame_relation(p, t));
      } else {
        step = t.rel;
      }
      Relation unf = pr.is_final(t.dst) ? step : compose(step, s.rel.at(t.dst));
      if (!subsumes(sq, unf)) return false;
    }
  }
  return true;
}

std::set<IOPair> box_pairs(const Relation& r, const std::vector<std::string>& vars,
                           Int lo, Int hi) {
  std::set<IOPair> out;
  size_t n = vars.size();
  std::vector<Int> pre(n), post(n);
  std::function<void(const F&, size_t)> rec = [&](const F& f, size_t i) {
    if (is_false(f)) return;
    if (i == 2 * n) {
      if (eval(f, {})) out.insert({pre, post});
      return;
    }
    const std::string v = i < n ? vars[i] : primed(vars[i - n]);
    for (Int x = lo; x <= hi; ++x) {
      (i < n ? pre[i] : post[i - n]) = x;
      rec(subst(f, v, Term::cst(x)), i + 1);
    }
  };
  rec(r.body, 0);
  return out;
}

StabResult check_stabilization(const Program& p, int k, Backend backend,
                               const Bounds& b) {
  StabResult res;
  if (backend == Backend::Concrete) {
    bool tr1 = false, tr2 = false;
    auto a = concrete_pairs(p, k, b, &tr1);
    auto c = concrete_pairs(p, k + 1, b, &tr2);
    if (tr1 || tr2) {
      res.verdict = StabVerdict::Inconclusive;
      res.note = "concrete evaluation budget exceeded";
      return res;
    }
    res.box_relative = true;
    for (auto& q : p.state_order) {
      if (a[q] != c[q]) {
        res.verdict = StabVerdict::NotStable;
        res.witness_state = q;
        for (auto& pr : c[q])
          if (!a[q].count(pr)) {
            res.witness_pair = pr;
            break;
          }
        return res;
      }
    }
    res.verdict = StabVerdict::Stable;
    res.note = "box-relative";
    return res;
  }
  Summary s1, s2;
  try {
    s1 = k_index_summary(p, k, backend, b);
    s2 = k_index_summary(p, k + 1, backend, b);
  } catch (const Error& e) {
        (void)e;
    res.verdict = StabVerdict::Inconclusive;
    res.note = "resource limit";
    return res;
  }
  if (s1.status == SummaryStatus::Truncated ||
      s2.status == SummaryStatus::Truncated) {
    res.verdict = StabVerdict::Inconclusive;
    res.note = "summary truncated";
    return res;
  }
  for (auto& q : p.state_order) {
    if (!equivalent(s1.rel.at(q), s2.rel.at(q))) {
      res.verdict = StabVerdict::NotStable;
      res.witness_state = q;
      const Procedure* owner = p.owner_of_state(q);
      if (owner->locals.size() <= 3) {
        auto a = box_pairs(s1.rel.at(q), owner->locals, b.box_lo,
                           std::min<Int>(b.box_hi, b.box_lo + 12));
        auto c = box_pairs(s2.rel.at(q), owner->locals, b.box_lo,
                           std::min<Int>(b.box_hi, b.box_lo + 12));
        for (auto& pr : c)
          if (!a.count(pr)) {
            res.witness_pair = pr;
            break;
          }
      }
      return res;
    }
  }
  res.verdict = StabVerdict::Stable;
  if (check_inductive(p, s1)) res.certified = true;
  return res;
}

std::optional<int> find_stable_k(const Program& p, Backend backend,
                                 const Bounds& b, int k_max) {
  for (int k = 1; k <= k_max; ++k) {
    StabResult r = check_stabilization(p, k, backend, b);
    if (r.verdict == StabVerdict::Stable) return k;
  }
  return std::nullopt;
}

std::string summary_json(const Summary& s) {
  std::ostringstream os;
  const char* st = s.status == SummaryStatus::ExactCertified  ? "exact_certified"
                   : s.status == SummaryStatus::ExactUncertified
                       ? "exact_uncertified"
                       : "truncated";
  os << "{\n  \"k\": " << s.k << ",\n  \"status\": \"" << st
     << "\",\n  \"box_relative\": " << (s.box_relative ? "true" : "false")
     << ",\n  \"states\": [";
  bool first = true;
  for (auto& [q, r] : s.rel) {
    if (!first) os << ",";
    first = false;
    std::string txt = to_string(r.body);
    std::string esc;
    for (char c : txt) {
      if (c == '"' || c == '\\') esc += '\\';
      esc += c;
    }
    os << "\n    {\"state\": \"" << q << "\", \"relation\": \"" << esc << "\"}";
  }
  os << "\n  ]\n}\n";
  return os.str();
}

}  // namespace ksum
