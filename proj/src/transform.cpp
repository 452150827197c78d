#include "ksum/transform.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace ksum {

namespace {

std::string join(const std::vector<std::string>& xs, const std::string& sep = ", ") {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += xs[i];
  }
  return out;
}

// Emits the query program for `p` at index bound K, either in the dispatch
// (PC + goto start) form or the tail-call form.
struct Gen {
  const Program& p;
  int K;
  bool tail;

  Grammar g;
  std::vector<std::string> uvars;    // union of all locals, program order
  std::map<std::string, int> num;    // non-final state -> PC value
  bool has_call = false;
  std::map<std::string, std::string> label_map;
  std::ostringstream os;

  Gen(const Program& p_, int K_, bool tail_) : p(p_), K(K_), tail(tail_) {
    g = build_vpg(p);
    for (auto& pr : p.procedures)
      for (auto& v : pr.locals) uvars.push_back(v);
    for (size_t i = 0; i < p.state_order.size(); ++i)
      num[p.state_order[i]] = (int)i + 1;
    for (auto& pd : g.productions)
      if (pd.kind == 'c') has_call = true;
  }

  std::string proc_name(const std::string& q, int k) const {
    return "query_k" + std::to_string(k) + "_" + q;
  }

  // Frame variable names for the procedure of (q, k).
  std::vector<std::string> frame(const std::string& pfx, const std::string& fr) const {
    std::vector<std::string> out;
    for (auto& v : uvars) out.push_back(pfx + fr + "_" + v);
    return out;
  }

  // Renaming of a relation body over the owner's locals into two frames.
  std::string rel_text(const Relation& r, const Procedure& owner,
                       const std::string& pfx, const std::string& pre,
                       const std::string& post) const {
    std::map<std::string, std::string> m;
    for (auto& v : owner.locals) {
      m[v] = pfx + pre + "_" + v;
      m[primed(v)] = pfx + post + "_" + v;
    }
    return to_string(rename_vars(r.body, m));
  }

  const Procedure& owner_of(const Transition& t) const {
    for (auto& pr : p.procedures)
      for (auto& u : pr.transitions)
        if (u.id == t.id) return pr;
    throw Error("InternalError", "transition owner not found");
  }

  void emit_proc(const std::string& q, int k) {
    std::string pfx = "k" + std::to_string(k) + "q" + std::to_string(num.at(q)) + "_";
    auto I = frame(pfx, "I"), O = frame(pfx, "O");
    auto J = frame(pfx, "J"), Kf = frame(pfx, "K"), L = frame(pfx, "L");
    std::string pc = pfx + "PC";

    os << "proc " << proc_name(q, k) << "(" << join(I) << ", " << join(O)
       << ") returns ()\nbegin\n";
    if (k == 0) {
      os << "  assume false;\nend\n\n";
      return;
    }
    std::vector<std::string> decls;
    decls.push_back(pc);
    decls.insert(decls.end(), J.begin(), J.end());
    if (has_call) {
      decls.insert(decls.end(), Kf.begin(), Kf.end());
      decls.insert(decls.end(), L.begin(), L.end());
    }
    os << "  var " << join(decls) << ";\n";
    os << "  " << pc << " <- " << num.at(q) << ";\n";

    std::vector<std::string> labels;
    for (auto& pd : g.productions)
      labels.push_back("q" + std::to_string(num.at(q)) + "_k" + std::to_string(k) +
                       "_" + pd.id);
    os << "  start: goto " << join(labels, " or ") << ";\n";

    for (size_t i = 0; i < g.productions.size(); ++i) {
      const Production& pd = g.productions[i];
      const std::string& lbl = labels[i];
      label_map[lbl] = pd.id;
      const Transition& t = *p.find_transition(pd.tau);
      const Procedure& owner = owner_of(t);

      os << "  " << lbl << ": assume " << pc << " = " << num.at(pd.head) << ";\n";
      if (pd.kind == 'a') {
        os << "  assume " << rel_text(t.rel, owner, pfx, "I", "O") << ";\n";
        os << "  return;\n";
      } else if (pd.kind == 'b') {
        os << "  havoc " << join(J) << ";\n";
        os << "  assume " << rel_text(t.rel, owner, pfx, "I", "J") << ";\n";
        os << "  " << join(I) << " <- " << join(J) << ";\n";
        emit_continue(pd.Y, k, pc, I, O);
      } else {
        const Procedure& callee = *p.find_proc(t.callee);
        os << "  havoc " << join(J) << ", " << join(Kf) << ", " << join(L) << ";\n";
        // Entry binding: callee inputs in frame J from arguments over frame I.
        std::map<std::string, std::string> toI;
        for (auto& v : owner.locals) toI[v] = pfx + "I_" + v;
        std::vector<F> entry;
        for (size_t m = 0; m < callee.inputs.size(); ++m)
          entry.push_back(eq(Term::var(pfx + "J_" + callee.inputs[m]),
                             t.args[m].rename(toI)));
        os << "  assume " << to_string(land(entry)) << ";\n";
        // Return binding: caller return targets in frame L from callee
        // outputs in frame K.
        std::vector<F> ret;
        for (size_t i2 = 0; i2 < t.rets.size(); ++i2)
          ret.push_back(eq(Term::var(pfx + "L_" + t.rets[i2]),
                           Term::var(pfx + "K_" + callee.outputs[i2])));
        os << "  assume " << to_string(land(ret)) << ";\n";
        // Frame: caller locals not written by the call survive.
        std::vector<F> fr;
        for (auto& v : owner.locals)
          if (std::find(t.rets.begin(), t.rets.end(), v) == t.rets.end())
            fr.push_back(eq(Term::var(pfx + "L_" + v), Term::var(pfx + "I_" + v)));
        os << "  assume " << to_string(land(fr)) << ";\n";
        os << "  goto " << lbl << "_ord or " << lbl << "_rod;\n";

        os << "  " << lbl << "_ord: call " << proc_name(pd.Y, k - 1) << "("
           << join(J) << ", " << join(Kf) << ");\n";
        os << "  " << join(I) << " <- " << join(L) << ";\n";
        emit_continue(pd.Z, k, pc, I, O);

        os << "  " << lbl << "_rod: call " << proc_name(pd.Z, k - 1) << "("
           << join(L) << ", " << join(O) << ");\n";
        os << "  " << join(I) << " <- " << join(J) << ";\n";
        os << "  " << join(O) << " <- " << join(Kf) << ";\n";
        emit_continue(pd.Y, k, pc, I, O);
      }
    }
    os << "end\n\n";
  }

  void emit_continue(const std::string& next, int k, const std::string& pc,
                     const std::vector<std::string>& I,
                     const std::vector<std::string>& O) {
    if (tail) {
      os << "  call " << proc_name(next, k) << "(" << join(I) << ", " << join(O)
         << ");\n";
      os << "  return;\n";
    } else {
      os << "  " << pc << " <- " << num.at(next) << ";\n";
      os << "  goto start;\n";
    }
  }

  QueryProgram run() {
    os << "// Index-bounded feasibility queries, bound K = " << K << ".\n";
    for (int k = K; k >= 0; --k)
      for (auto& q : p.state_order) emit_proc(q, k);
    QueryProgram qp;
    qp.K = K;
    qp.tail_variant = tail;
    qp.origin = p;
    qp.source = os.str();
    qp.program = parse_program(qp.source);
    qp.state_numbering = num;
    qp.label_map = label_map;
    return qp;
  }
};

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string QueryProgram::proc_name(const std::string& q, int k) const {
  return "query_k" + std::to_string(k) + "_" + q;
}

QueryProgram generate_query_program(const Program& p, int K) {
  if (K < 1) throw Error("BadInput", "K must be >= 1");
  return Gen(p, K, false).run();
}

QueryProgram tail_recursive_variant(const QueryProgram& qp) {
  return Gen(qp.origin, qp.K, true).run();
}

std::string emit_source(const QueryProgram& qp) { return qp.source; }

std::string manifest_json(const QueryProgram& qp) {
  std::ostringstream os;
  os << "{\n  \"K\": " << qp.K << ",\n  \"state_numbering\": {";
  bool first = true;
  std::vector<std::pair<std::string, int>> sn(qp.state_numbering.begin(),
                                              qp.state_numbering.end());
  std::sort(sn.begin(), sn.end(),
            [](auto& a, auto& b) { return a.second < b.second; });
  for (auto& [q, n] : sn) {
    if (!first) os << ",";
    first = false;
    os << "\n    \"" << json_escape(q) << "\": " << n;
  }
  os << "\n  },\n  \"label_map\": {";
  first = true;
  for (auto& [l, pid] : qp.label_map) {
    if (!first) os << ",";
    first = false;
    os << "\n    \"" << json_escape(l) << "\": \"" << json_escape(pid) << "\"";
  }
  os << "\n  }\n}\n";
  return os.str();
}

int statement_count(const QueryProgram& qp) {
  int n = 0;
  for (auto& pr : qp.program.procedures) n += (int)pr.transitions.size();
  return n;
}

}  // namespace ksum
