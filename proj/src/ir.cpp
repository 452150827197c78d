#include "ksum/ir.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ksum {

bool Procedure::is_final(const std::string& s) const {
  return std::find(finals.begin(), finals.end(), s) != finals.end();
}

std::vector<std::string> Procedure::nonfinal_states() const {
  std::vector<std::string> r;
  for (auto& s : states)
    if (!is_final(s)) r.push_back(s);
  return r;
}

const Procedure* Program::find_proc(const std::string& name) const {
  for (auto& p : procedures)
    if (p.name == name) return &p;
  return nullptr;
}

const Procedure* Program::owner_of_state(const std::string& state) const {
  for (auto& p : procedures)
    for (auto& s : p.states)
      if (s == state) return &p;
  return nullptr;
}

const Transition* Program::find_transition(const std::string& id) const {
  for (auto& p : procedures)
    for (auto& t : p.transitions)
      if (t.id == id) return &t;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Surface-syntax parsing
// ---------------------------------------------------------------------------

namespace {

struct RipLexer {
  std::string s;
  size_t i = 0;
  int line = 1, col = 1;

  explicit RipLexer(std::string src) : s(std::move(src)) {}

  void advance(size_t n) {
    for (size_t j = 0; j < n && i < s.size(); ++j, ++i) {
      if (s[i] == '\n') { ++line; col = 1; } else ++col;
    }
  }
  void skip() {
    for (;;) {
      while (i < s.size() && std::isspace((unsigned char)s[i])) advance(1);
      if (i + 1 < s.size() && s[i] == '/' && s[i + 1] == '/') {
        while (i < s.size() && s[i] != '\n') advance(1);
        continue;
      }
      return;
    }
  }
  bool eof() { skip(); return i >= s.size(); }
  [[noreturn]] void fail(const std::string& what) {
    std::ostringstream os;
    os << what << " (line " << line << ", col " << col << ")";
    throw Error("SyntaxError", os.str());
  }
  bool peek_punct(const std::string& p) {
    skip();
    return s.compare(i, p.size(), p) == 0;
  }
  bool eat_punct(const std::string& p) {
    if (!peek_punct(p)) return false;
    advance(p.size());
    return true;
  }
  void expect_punct(const std::string& p) {
    if (!eat_punct(p)) fail("expected '" + p + "'");
  }
  std::string peek_ident() {
    skip();
    size_t j = i;
    if (j < s.size() && (std::isalpha((unsigned char)s[j]) || s[j] == '_')) {
      while (j < s.size() && (std::isalnum((unsigned char)s[j]) || s[j] == '_')) ++j;
      return s.substr(i, j - i);
    }
    return "";
  }
  bool eat_kw(const std::string& kw) {
    if (peek_ident() == kw) { advance(kw.size()); return true; }
    return false;
  }
  std::string ident() {
    std::string id = peek_ident();
    if (id.empty()) fail("expected identifier");
    advance(id.size());
    return id;
  }
  // Raw text until the next ';' (used for formulas and term lists).
  std::string until_semi() {
    skip();
    size_t j = s.find(';', i);
    if (j == std::string::npos) fail("expected ';'");
    std::string r = s.substr(i, j - i);
    advance(j - i + 1);
    return r;
  }
  // Like until_semi, but also stops (without consuming) at the keyword 'end';
  // allows the final statement of a body to omit its semicolon.
  std::string until_semi_or_end() {
    skip();
    size_t semi = s.find(';', i);
    size_t endkw = std::string::npos;
    for (size_t j = i; (j = s.find("end", j)) != std::string::npos; j += 3) {
      bool pre = j == 0 || !(std::isalnum((unsigned char)s[j - 1]) || s[j - 1] == '_');
      bool post = j + 3 >= s.size() || !(std::isalnum((unsigned char)s[j + 3]) || s[j + 3] == '_');
      if (pre && post) { endkw = j; break; }
    }
    if (semi != std::string::npos && (endkw == std::string::npos || semi < endkw)) {
      std::string r = s.substr(i, semi - i);
      advance(semi - i + 1);
      return r;
    }
    if (endkw == std::string::npos) fail("expected ';'");
    std::string r = s.substr(i, endkw - i);
    advance(endkw - i);
    return r;
  }
};

bool is_keyword(const std::string& id) {
  static const std::set<std::string> kws{"proc",   "returns", "begin", "var",
                                         "end",    "assume",  "havoc", "call",
                                         "return", "goto",    "or"};
  return kws.count(id) > 0;
}

std::vector<std::string> split_top_commas(const std::string& s) {
  std::vector<std::string> parts;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty() || !parts.empty()) parts.push_back(cur);
  // Trim
  for (auto& p : parts) {
    size_t a = p.find_first_not_of(" \t\r\n");
    size_t b = p.find_last_not_of(" \t\r\n");
    p = a == std::string::npos ? "" : p.substr(a, b - a + 1);
  }
  return parts;
}

struct RawStmt {
  enum Kind { Assume, Assign, Havoc, Goto, Return, Call } kind;
  std::vector<std::string> labels;
  F guard;                           // Assume
  std::vector<std::string> lhs;      // Assign targets / Havoc vars / Return havoc
  std::vector<Term> rhs;             // Assign / Return / Call args
  std::vector<std::string> targets;  // Goto labels
  std::string callee;                // Call
  std::vector<std::string> rets;     // Call return targets
  int line = 0;
};

struct RawProc {
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  bool has_returns_clause = false;
  std::vector<std::string> vars;
  std::vector<RawStmt> stmts;
  int line = 0;
};

std::vector<std::string> parse_id_list(RipLexer& lx) {
  std::vector<std::string> ids;
  if (lx.peek_ident().empty()) return ids;
  ids.push_back(lx.ident());
  while (lx.eat_punct(",")) ids.push_back(lx.ident());
  return ids;
}

std::vector<Term> parse_term_list(const std::string& raw, RipLexer& lx) {
  std::vector<Term> ts;
  for (auto& part : split_top_commas(raw)) {
    if (part.empty()) lx.fail("empty term");
    try {
      ts.push_back(parse_term(part));
    } catch (const Error& e) {
      lx.fail(std::string(e.what()));
    }
  }
  return ts;
}

RawProc parse_raw_proc(RipLexer& lx) {
  RawProc rp;
  rp.line = lx.line;
  if (!lx.eat_kw("proc")) lx.fail("expected 'proc'");
  rp.name = lx.ident();
  lx.expect_punct("(");
  if (!lx.eat_punct(")")) {
    rp.inputs = parse_id_list(lx);
    lx.expect_punct(")");
  }
  if (lx.eat_kw("returns")) {
    rp.has_returns_clause = true;
    lx.expect_punct("(");
    if (!lx.eat_punct(")")) {
      rp.outputs = parse_id_list(lx);
      lx.expect_punct(")");
    }
  }
  if (!lx.eat_kw("begin")) lx.fail("expected 'begin'");
  if (lx.eat_kw("var")) {
    rp.vars = parse_id_list(lx);
    lx.expect_punct(";");
  }
  std::vector<std::string> pending_labels;
  for (;;) {
    if (lx.eat_kw("end")) break;
    if (lx.eof()) lx.fail("missing 'end'");
    RawStmt st;
    st.line = lx.line;
    st.labels = std::move(pending_labels);
    pending_labels.clear();
    std::string id = lx.peek_ident();
    if (id == "assume") {
      lx.eat_kw("assume");
      std::string raw = lx.until_semi();
      st.kind = RawStmt::Assume;
      try {
        st.guard = parse_formula(raw);
      } catch (const Error& e) {
        lx.fail(std::string(e.what()));
      }
    } else if (id == "havoc") {
      lx.eat_kw("havoc");
      st.kind = RawStmt::Havoc;
      st.lhs = parse_id_list(lx);
      lx.expect_punct(";");
    } else if (id == "goto") {
      lx.eat_kw("goto");
      st.kind = RawStmt::Goto;
      st.targets.push_back(lx.ident());
      while (lx.eat_kw("or")) st.targets.push_back(lx.ident());
      lx.expect_punct(";");
    } else if (id == "return") {
      lx.eat_kw("return");
      st.kind = RawStmt::Return;
      std::string raw = lx.until_semi_or_end();
      // Optional trailing "havoc x, y".
      size_t h = raw.rfind("havoc");
      bool has_havoc = false;
      if (h != std::string::npos) {
        // keyword boundary check
        bool pre_ok = h == 0 || !(std::isalnum((unsigned char)raw[h - 1]) || raw[h - 1] == '_');
        size_t e = h + 5;
        bool post_ok = e >= raw.size() || !(std::isalnum((unsigned char)raw[e]) || raw[e] == '_');
        if (pre_ok && post_ok) has_havoc = true;
      }
      std::string exprs = has_havoc ? raw.substr(0, h) : raw;
      if (has_havoc) {
        for (auto& v : split_top_commas(raw.substr(h + 5)))
          if (!v.empty()) st.lhs.push_back(v);
      }
      // Trim exprs; may be empty (bare return).
      size_t a = exprs.find_first_not_of(" \t\r\n");
      if (a != std::string::npos) st.rhs = parse_term_list(exprs, lx);
    } else if (id == "call") {
      lx.eat_kw("call");
      st.kind = RawStmt::Call;
      st.callee = lx.ident();
      lx.expect_punct("(");
      if (!lx.eat_punct(")")) {
        std::string raw;
        int depth = 0;
        lx.skip();
        while (lx.i < lx.s.size()) {
          char c = lx.s[lx.i];
          if (c == '(') ++depth;
          if (c == ')') {
            if (depth == 0) break;
            --depth;
          }
          raw += c;
          lx.advance(1);
        }
        lx.expect_punct(")");
        st.rhs = parse_term_list(raw, lx);
      }
      lx.expect_punct(";");
    } else if (!id.empty() && !is_keyword(id)) {
      // Either a label or an assignment / valued call.
      size_t save_i = lx.i;
      int save_line = lx.line, save_col = lx.col;
      std::vector<std::string> ids = parse_id_list(lx);
      if (ids.size() == 1 && lx.eat_punct(":")) {
        pending_labels = std::move(st.labels);
        pending_labels.push_back(ids[0]);
        continue;
      }
      if (!lx.eat_punct("<-")) {
        lx.i = save_i; lx.line = save_line; lx.col = save_col;
        lx.fail("expected ':' or '<-' after identifier list");
      }
      if (lx.eat_kw("call")) {
        st.kind = RawStmt::Call;
        st.rets = std::move(ids);
        st.callee = lx.ident();
        lx.expect_punct("(");
        if (!lx.eat_punct(")")) {
          std::string raw;
          int depth = 0;
          lx.skip();
          while (lx.i < lx.s.size()) {
            char c = lx.s[lx.i];
            if (c == '(') ++depth;
            if (c == ')') {
              if (depth == 0) break;
              --depth;
            }
            raw += c;
            lx.advance(1);
          }
          lx.expect_punct(")");
          st.rhs = parse_term_list(raw, lx);
        }
        lx.expect_punct(";");
      } else {
        st.kind = RawStmt::Assign;
        st.lhs = std::move(ids);
        st.rhs = parse_term_list(lx.until_semi(), lx);
        if (st.rhs.size() != st.lhs.size())
          lx.fail("assignment arity mismatch");
        std::set<std::string> seen(st.lhs.begin(), st.lhs.end());
        if (seen.size() != st.lhs.size())
          lx.fail("duplicate assignment target");
      }
    } else {
      lx.fail("expected statement");
    }
    rp.stmts.push_back(std::move(st));
  }
  if (!pending_labels.empty()) {
    // Labels at the very end of the body bind to the fall-off point.
    RawStmt st;
    st.kind = RawStmt::Goto;  // sentinel; targets empty => pure label carrier
    st.labels = std::move(pending_labels);
    st.line = lx.line;
    rp.stmts.push_back(std::move(st));
  }
  return rp;
}

struct UF {
  std::vector<int> p;
  explicit UF(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
  void join(int a, int b) { p[find(a)] = find(b); }
};

void check_declared(const std::set<std::string>& vars, const std::set<std::string>& locals,
                    const std::string& where, int line) {
  for (auto& v : vars) {
    if (!locals.count(v)) {
      std::ostringstream os;
      os << "variable '" << v << "' not declared (" << where << ", line " << line << ")";
      throw Error("UndeclaredVariable", os.str());
    }
  }
}

Procedure build_procedure(const RawProc& rp, int& tid) {
  Procedure pr;
  pr.name = rp.name;
  pr.inputs = rp.inputs;
  pr.locals = rp.inputs;
  for (auto& v : rp.vars) pr.locals.push_back(v);
  {
    std::set<std::string> seen(pr.locals.begin(), pr.locals.end());
    if (seen.size() != pr.locals.size())
      throw Error("DuplicateVariable", "duplicate local in procedure " + rp.name);
  }
  std::set<std::string> localset(pr.locals.begin(), pr.locals.end());

  // Output variables: from the returns clause, or inferred from uniform
  // plain-variable return statements.
  if (rp.has_returns_clause) {
    pr.outputs = rp.outputs;
  } else {
    bool have = false;
    for (auto& st : rp.stmts) {
      if (st.kind != RawStmt::Return) continue;
      std::vector<std::string> vars;
      for (auto& t : st.rhs) {
        if (t.k != 0 || t.c.size() != 1 || t.c.begin()->second != 1)
          throw Error("SyntaxError",
                      "cannot infer output variables of " + rp.name +
                          "; add a returns (...) clause");
        vars.push_back(t.c.begin()->first);
      }
      if (!have) { pr.outputs = vars; have = true; }
      else if (pr.outputs != vars)
        throw Error("SyntaxError",
                    "return statements of " + rp.name +
                        " disagree; add a returns (...) clause");
    }
  }
  for (auto& v : pr.outputs)
    check_declared({v}, localset, "returns clause of " + rp.name, rp.line);
  for (auto& v : pr.inputs)
    check_declared({v}, localset, "inputs of " + rp.name, rp.line);

  // Control points: one per statement plus the fall-off point.
  int n = (int)rp.stmts.size();
  UF uf(n + 1);
  std::map<std::string, int> labelpt;
  for (int i = 0; i < n; ++i) {
    int pt = rp.stmts[i].kind == RawStmt::Goto && rp.stmts[i].targets.empty() ? n : i;
    for (auto& l : rp.stmts[i].labels) {
      auto [it, fresh] = labelpt.emplace(l, pt);
      if (!fresh) uf.join(pt, it->second);
    }
  }
  // Single-target gotos are wires: they merge their entry with the target.
  for (int i = 0; i < n; ++i) {
    auto& st = rp.stmts[i];
    if (st.kind == RawStmt::Goto && st.targets.size() == 1) {
      auto it = labelpt.find(st.targets[0]);
      if (it == labelpt.end())
        throw Error("UndefinedLabel", "label '" + st.targets[0] + "' in " + rp.name);
      uf.join(i, it->second);
    }
  }

  // Generate transitions; states named later by first appearance.
  struct PState { int rep; };
  auto point_name = [&](int pt) { return "#" + std::to_string(uf.find(pt)); };
  int final_count = 0;
  std::vector<std::string> order;  // first-appearance order of placeholder names
  auto touch = [&](const std::string& s) {
    if (std::find(order.begin(), order.end(), s) == order.end()) order.push_back(s);
  };
  touch(point_name(0));
  std::set<std::string> final_names;

  auto frame_on = [&](const std::vector<std::string>& touched) {
    std::vector<F> ks;
    for (auto& v : pr.locals) {
      if (std::find(touched.begin(), touched.end(), v) == touched.end())
        ks.push_back(eq(Term::var(primed(v)), Term::var(v)));
    }
    return land(std::move(ks));
  };

  for (int i = 0; i < n; ++i) {
    const auto& st = rp.stmts[i];
    if (st.kind == RawStmt::Goto && st.targets.size() <= 1) continue;
    Transition t;
    t.src = point_name(i);
    touch(t.src);
    switch (st.kind) {
      case RawStmt::Assume: {
        check_declared(free_vars(st.guard), localset, "assume in " + rp.name, st.line);
        t.stmt = StmtKind::Assume;
        t.guard = st.guard;
        t.rel = Relation{pr.locals, pr.locals, land(st.guard, frame_on({}))};
        t.dst = point_name(i + 1);
        break;
      }
      case RawStmt::Assign: {
        std::set<std::string> used;
        for (auto& tm : st.rhs)
          for (auto& [v, c] : tm.c) used.insert(v);
        for (auto& v : st.lhs) used.insert(v);
        check_declared(used, localset, "assignment in " + rp.name, st.line);
        t.stmt = StmtKind::Assign;
        t.lhs = st.lhs;
        t.rhs = st.rhs;
        std::vector<F> ks;
        for (size_t j = 0; j < st.lhs.size(); ++j)
          ks.push_back(eq(Term::var(primed(st.lhs[j])), st.rhs[j]));
        ks.push_back(frame_on(st.lhs));
        t.rel = Relation{pr.locals, pr.locals, land(std::move(ks))};
        t.dst = point_name(i + 1);
        break;
      }
      case RawStmt::Havoc: {
        check_declared(std::set<std::string>(st.lhs.begin(), st.lhs.end()), localset,
                       "havoc in " + rp.name, st.line);
        t.stmt = StmtKind::Havoc;
        t.lhs = st.lhs;
        t.rel = Relation{pr.locals, pr.locals, frame_on(st.lhs)};
        t.dst = point_name(i + 1);
        break;
      }
      case RawStmt::Return: {
        if (st.rhs.size() != pr.outputs.size())
          throw Error("ArityMismatch",
                      "return arity in " + rp.name + " (line " +
                          std::to_string(st.line) + ")");
        std::set<std::string> used(st.lhs.begin(), st.lhs.end());
        for (auto& tm : st.rhs)
          for (auto& [v, c] : tm.c) used.insert(v);
        check_declared(used, localset, "return in " + rp.name, st.line);
        t.stmt = StmtKind::Return;
        t.lhs = st.lhs;  // havoc'd at return
        t.rhs = st.rhs;
        std::vector<F> ks;
        std::vector<std::string> touched = pr.outputs;
        for (auto& h : st.lhs) touched.push_back(h);
        for (size_t j = 0; j < pr.outputs.size(); ++j)
          ks.push_back(eq(Term::var(primed(pr.outputs[j])), st.rhs[j]));
        ks.push_back(frame_on(touched));
        t.rel = Relation{pr.locals, pr.locals, land(std::move(ks))};
        t.dst = "#f" + std::to_string(final_count++);
        final_names.insert(t.dst);
        break;
      }
      case RawStmt::Call: {
        std::set<std::string> used(st.rets.begin(), st.rets.end());
        for (auto& tm : st.rhs)
          for (auto& [v, c] : tm.c) used.insert(v);
        check_declared(used, localset, "call in " + rp.name, st.line);
        {
          std::set<std::string> rseen(st.rets.begin(), st.rets.end());
          if (rseen.size() != st.rets.size())
            throw Error("DuplicateVariable", "duplicate call return target in " + rp.name);
        }
        t.stmt = StmtKind::Call;
        t.callee = st.callee;
        t.args = st.rhs;
        t.rets = st.rets;
        t.dst = point_name(i + 1);
        break;
      }
      case RawStmt::Goto: {
        // n >= 2 targets: identity transitions.
        for (auto& tgt : st.targets) {
          auto it = labelpt.find(tgt);
          if (it == labelpt.end())
            throw Error("UndefinedLabel", "label '" + tgt + "' in " + rp.name);
          Transition g = t;
          g.stmt = StmtKind::Identity;
          g.rel = Relation{pr.locals, pr.locals, frame_on({})};
          g.dst = point_name(it->second);
          g.id = "t" + std::to_string(++tid);
          touch(g.dst);
          pr.transitions.push_back(std::move(g));
        }
        continue;
      }
    }
    t.id = "t" + std::to_string(++tid);
    touch(t.dst);
    pr.transitions.push_back(std::move(t));
  }

  // Rename states: non-finals q1.. in first-appearance order, finals qf1.. in
  // creation order.
  std::map<std::string, std::string> rn;
  int q = 0, qf = 0;
  for (auto& ph : order) {
    if (final_names.count(ph))
      rn[ph] = pr.name + "_qf" + std::to_string(++qf);
    else
      rn[ph] = pr.name + "_q" + std::to_string(++q);
  }
  for (auto& ph : order) {
    pr.states.push_back(rn[ph]);
    if (final_names.count(ph)) pr.finals.push_back(rn[ph]);
  }
  pr.initial = rn[point_name(0)];
  for (auto& t : pr.transitions) {
    t.src = rn[t.src];
    t.dst = rn[t.dst];
  }
  return pr;
}

}  // namespace

Program parse_program(const std::string& source_text) {
  RipLexer lx(source_text);
  Program p;
  int tid = 0;
  while (!lx.eof()) {
    RawProc rp = parse_raw_proc(lx);
    for (auto& ex : p.procedures)
      if (ex.name == rp.name)
        throw Error("DuplicateProcedure", "procedure " + rp.name + " defined twice");
    p.procedures.push_back(build_procedure(rp, tid));
  }
  if (p.procedures.empty()) throw Error("SyntaxError", "no procedures");
  // Cross-procedure checks: callees exist, call arities match.
  for (auto& pr : p.procedures) {
    for (auto& t : pr.transitions) {
      if (!t.is_call()) continue;
      const Procedure* callee = p.find_proc(t.callee);
      if (!callee)
        throw Error("UnknownCallee", pr.name + " calls undefined procedure " + t.callee);
      if (t.args.size() != callee->inputs.size() || t.rets.size() != callee->outputs.size())
        throw Error("ArityMismatch",
                    "call " + t.id + " in " + pr.name + " to " + t.callee);
    }
  }
  for (auto& pr : p.procedures)
    for (auto& s : pr.states)
      if (!pr.is_final(s)) p.state_order.push_back(s);
  return p;
}

Program parse_program_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("IOError", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_program(ss.str());
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::vector<Diagnostic> validate_program(const Program& p) {
  std::vector<Diagnostic> ds;
  auto diag = [&](const std::string& code, const std::string& msg, const std::string& loc) {
    ds.push_back({code, msg, loc});
  };
  std::set<std::string> all_locals, all_states, all_tids, proc_names;
  for (auto& pr : p.procedures) {
    if (!proc_names.insert(pr.name).second)
      diag("DuplicateProcedure", "procedure defined twice", pr.name);
    for (auto& v : pr.locals)
      if (!all_locals.insert(v).second)
        diag("LocalsOverlap", "local '" + v + "' shared across procedures", pr.name);
    for (auto& s : pr.states)
      if (!all_states.insert(s).second)
        diag("StateSetsOverlap", "state '" + s + "' shared across procedures", pr.name);
    std::set<std::string> localset(pr.locals.begin(), pr.locals.end());
    std::set<std::string> stateset(pr.states.begin(), pr.states.end());
    for (auto& v : pr.inputs)
      if (!localset.count(v)) diag("UndeclaredVariable", "input '" + v + "'", pr.name);
    for (auto& v : pr.outputs)
      if (!localset.count(v)) diag("UndeclaredVariable", "output '" + v + "'", pr.name);
    if (!stateset.count(pr.initial))
      diag("BadState", "initial state missing", pr.name);
    for (auto& s : pr.finals)
      if (!stateset.count(s)) diag("BadState", "final state '" + s + "' missing", pr.name);
    std::set<std::string> primedset;
    for (auto& v : pr.locals) primedset.insert(primed(v));
    for (auto& t : pr.transitions) {
      if (!all_tids.insert(t.id).second)
        diag("DuplicateTransitionId", "transition id reused", t.id);
      if (!stateset.count(t.src) || !stateset.count(t.dst))
        diag("BadEndpoint", "transition endpoint outside procedure states", t.id);
      if (t.is_call()) {
        const Procedure* callee = p.find_proc(t.callee);
        if (!callee) {
          diag("UnknownCallee", "call to undefined procedure " + t.callee, t.id);
        } else if (t.args.size() != callee->inputs.size() ||
                   t.rets.size() != callee->outputs.size()) {
          diag("ArityMismatch", "call arity differs from callee signature", t.id);
        }
        for (auto& a : t.args)
          for (auto& [v, c] : a.c)
            if (!localset.count(v))
              diag("UndeclaredVariable", "call argument variable '" + v + "'", t.id);
        for (auto& v : t.rets)
          if (!localset.count(v))
            diag("UndeclaredVariable", "call return variable '" + v + "'", t.id);
      } else {
        for (auto& v : free_vars(t.rel.body))
          if (!localset.count(v) && !primedset.count(v))
            diag("UndeclaredVariable", "relation variable '" + v + "'", t.id);
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Pretty printing
// ---------------------------------------------------------------------------

static std::string term_src(const Term& t) { return t.str(); }

std::string pretty_print(const Program& p) {
  std::ostringstream os;
  for (auto& pr : p.procedures) {
    os << "proc " << pr.name << "(";
    for (size_t i = 0; i < pr.inputs.size(); ++i)
      os << (i ? ", " : "") << pr.inputs[i];
    os << ") returns (";
    for (size_t i = 0; i < pr.outputs.size(); ++i)
      os << (i ? ", " : "") << pr.outputs[i];
    os << ")\nbegin\n  var";
    bool first = true;
    for (auto& v : pr.locals) {
      if (std::find(pr.inputs.begin(), pr.inputs.end(), v) != pr.inputs.end()) continue;
      os << (first ? " " : ", ") << v;
      first = false;
    }
    os << ";\n";
    std::set<std::string> has_out;
    for (auto& t : pr.transitions) has_out.insert(t.src);
    for (size_t i = 0; i < pr.transitions.size(); ++i) {
      const Transition& t = pr.transitions[i];
      if (t.stmt == StmtKind::Identity) {
        // Emit the whole goto group at once.
        os << "  " << t.src << ": goto " << t.dst;
        size_t j = i + 1;
        while (j < pr.transitions.size() && pr.transitions[j].stmt == StmtKind::Identity &&
               pr.transitions[j].src == t.src)
          os << " or " << pr.transitions[j++].dst;
        os << ";\n";
        i = j - 1;
        continue;
      }
      os << "  " << t.src << ": ";
      switch (t.stmt) {
        case StmtKind::Assume:
          os << "assume " << to_string(t.guard) << "; goto " << t.dst << ";\n";
          break;
        case StmtKind::Assign: {
          for (size_t j = 0; j < t.lhs.size(); ++j) os << (j ? ", " : "") << t.lhs[j];
          os << " <- ";
          for (size_t j = 0; j < t.rhs.size(); ++j) os << (j ? ", " : "") << term_src(t.rhs[j]);
          os << "; goto " << t.dst << ";\n";
          break;
        }
        case StmtKind::Havoc: {
          os << "havoc";
          for (size_t j = 0; j < t.lhs.size(); ++j) os << (j ? "," : "") << " " << t.lhs[j];
          os << "; goto " << t.dst << ";\n";
          break;
        }
        case StmtKind::Return: {
          os << "return";
          for (size_t j = 0; j < t.rhs.size(); ++j)
            os << (j ? ", " : " ") << term_src(t.rhs[j]);
          if (!t.lhs.empty()) {
            os << " havoc";
            for (size_t j = 0; j < t.lhs.size(); ++j) os << (j ? "," : "") << " " << t.lhs[j];
          }
          os << ";\n";
          break;
        }
        case StmtKind::Call: {
          if (!t.rets.empty()) {
            for (size_t j = 0; j < t.rets.size(); ++j) os << (j ? ", " : "") << t.rets[j];
            os << " <- ";
          }
          os << "call " << t.callee << "(";
          for (size_t j = 0; j < t.args.size(); ++j)
            os << (j ? ", " : "") << term_src(t.args[j]);
          os << "); goto " << t.dst << ";\n";
          break;
        }
        case StmtKind::Identity:
          break;  // handled above
      }
    }
    // Dead non-final states (no outgoing transitions) become trailing labels.
    for (auto& s : pr.states) {
      if (pr.is_final(s) || has_out.count(s) || (s == pr.initial && pr.transitions.empty()))
        continue;
      bool is_dst = false;
      for (auto& t : pr.transitions) is_dst |= t.dst == s;
      if (is_dst || s == pr.initial) os << "  " << s << ":\n";
    }
    os << "end\n\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// JSON dump
// ---------------------------------------------------------------------------

std::string to_json(const Program& p) {
  nlohmann::json j;
  j["procedures"] = nlohmann::json::array();
  for (auto& pr : p.procedures) {
    nlohmann::json jp;
    jp["name"] = pr.name;
    jp["locals"] = pr.locals;
    jp["inputs"] = pr.inputs;
    jp["outputs"] = pr.outputs;
    jp["states"] = pr.states;
    jp["initial"] = pr.initial;
    jp["finals"] = pr.finals;
    jp["transitions"] = nlohmann::json::array();
    for (auto& t : pr.transitions) {
      nlohmann::json jt;
      jt["id"] = t.id;
      jt["src"] = t.src;
      jt["dst"] = t.dst;
      if (t.is_call()) {
        jt["kind"] = "call";
        nlohmann::json jc;
        jc["callee"] = t.callee;
        std::vector<std::string> args;
        for (auto& a : t.args) args.push_back(a.str());
        jc["args"] = args;
        jc["returns"] = t.rets;
        jt["call"] = jc;
      } else {
        jt["kind"] = "internal";
        jt["rel"] = to_string(t.rel.body);
      }
      jp["transitions"].push_back(jt);
    }
    j["procedures"].push_back(jp);
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Structural equality
// ---------------------------------------------------------------------------

static bool term_eq(const Term& a, const Term& b) { return a == b; }

bool program_equal(const Program& a, const Program& b) {
  if (a.procedures.size() != b.procedures.size()) return false;
  if (a.state_order != b.state_order) return false;
  for (size_t i = 0; i < a.procedures.size(); ++i) {
    const Procedure &x = a.procedures[i], &y = b.procedures[i];
    if (x.name != y.name || x.locals != y.locals || x.inputs != y.inputs ||
        x.outputs != y.outputs || x.states != y.states || x.initial != y.initial ||
        x.finals != y.finals || x.transitions.size() != y.transitions.size())
      return false;
    for (size_t t = 0; t < x.transitions.size(); ++t) {
      const Transition &u = x.transitions[t], &v = y.transitions[t];
      if (u.id != v.id || u.src != v.src || u.dst != v.dst || u.stmt != v.stmt ||
          u.lhs != v.lhs || u.callee != v.callee || u.rets != v.rets)
        return false;
      if (u.rhs.size() != v.rhs.size() || u.args.size() != v.args.size()) return false;
      for (size_t k = 0; k < u.rhs.size(); ++k)
        if (!term_eq(u.rhs[k], v.rhs[k])) return false;
      for (size_t k = 0; k < u.args.size(); ++k)
        if (!term_eq(u.args[k], v.args[k])) return false;
      if (!u.is_call()) {
        if (!fm_equal(u.rel.body, v.rel.body)) return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Call graph
// ---------------------------------------------------------------------------

std::map<std::string, std::set<std::string>> call_graph(const Program& p) {
  std::map<std::string, std::set<std::string>> g;
  for (auto& pr : p.procedures) {
    g[pr.name];
    for (auto& t : pr.transitions)
      if (t.is_call()) g[pr.name].insert(t.callee);
  }
  return g;
}

bool is_recursive(const Program& p) {
  auto g = call_graph(p);
  std::map<std::string, int> color;  // 0 = white, 1 = grey, 2 = black
  std::function<bool(const std::string&)> dfs = [&](const std::string& u) -> bool {
    color[u] = 1;
    for (auto& v : g[u]) {
      if (color[v] == 1) return true;
      if (color[v] == 0 && dfs(v)) return true;
    }
    color[u] = 2;
    return false;
  };
  for (auto& [u, _] : g)
    if (color[u] == 0 && dfs(u)) return true;
  return false;
}

}  // namespace ksum
