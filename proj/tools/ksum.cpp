// Command-line front end: grammar extraction, recursion removal, index-bounded
// summaries, stabilization reports, and the bounded-expression checks.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ksum/bounded.hpp"
#include "ksum/summarize.hpp"

using namespace ksum;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNotStable = 2;
constexpr int kInconclusive = 3;

Program load(const std::string& path) { return parse_program_file(path); }

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::Symbolic: return "symbolic";
    case Backend::Enumerate: return "enumerate";
    case Backend::Concrete: return "concrete";
  }
  return "?";
}

int cmd_grammar(const std::string& path, bool as_json) {
  Program p = load(path);
  Grammar g = build_vpg(p);
  if (as_json) {
    std::cout << grammar_to_json(g) << "\n";
    return kOk;
  }
  for (auto& pr : g.productions) {
    std::cout << pr.id << ": " << pr.head << " -> ";
    switch (pr.kind) {
      case 'a': std::cout << pr.tau; break;
      case 'b': std::cout << pr.tau << " " << pr.Y; break;
      case 'c': std::cout << "<" << pr.tau << " " << pr.Y << " " << pr.tau
                          << "> " << pr.Z; break;
    }
    std::cout << "\n";
  }
  return kOk;
}

int cmd_transform(const std::string& path, int K, bool as_json) {
  Program p = load(path);
  QueryProgram qp = generate_query_program(p, K);
  if (as_json) {
    json out;
    out["manifest"] = json::parse(manifest_json(qp));
    out["source"] = qp.source;
    out["statements"] = statement_count(qp);
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << qp.source;
  }
  return kOk;
}

int cmd_summarize(const std::string& path, int k, Backend backend,
                  const Bounds& bd, bool as_json) {
  Program p = load(path);
  Summary s = k_index_summary(p, k, backend, bd);
  if (as_json) {
    std::cout << summary_json(s) << "\n";
  } else {
    for (auto& [q, r] : s.rel)
      std::cout << q << ": " << to_string(r.body) << "\n";
    std::cout << "status: "
              << (s.status == SummaryStatus::ExactCertified     ? "exact-certified"
                  : s.status == SummaryStatus::ExactUncertified ? "exact"
                                                                : "truncated")
              << (s.box_relative ? " (box-relative)" : "") << "\n";
  }
  return kOk;
}

int cmd_fixpoint(const std::string& path, std::optional<int> k, int k_max,
                 Backend backend, const Bounds& bd, bool as_json) {
  Program p = load(path);
  json out;
  out["backend"] = backend_name(backend);
  int code = kOk;
  if (k) {
    StabResult r = check_stabilization(p, *k, backend, bd);
    out["k"] = *k;
    out["box_relative"] = r.box_relative;
    switch (r.verdict) {
      case StabVerdict::Stable:
        out["verdict"] = "stable";
        break;
      case StabVerdict::NotStable:
        out["verdict"] = "not-stable";
        out["witness_state"] = r.witness_state;
        code = kNotStable;
        break;
      case StabVerdict::Inconclusive:
        out["verdict"] = "inconclusive";
        code = kInconclusive;
        break;
    }
    if (!r.note.empty()) out["note"] = r.note;
  } else {
    auto ks = find_stable_k(p, backend, bd, k_max);
    if (ks) {
      out["k_star"] = *ks;
      out["verdict"] = "stable";
      out["box_relative"] = backend == Backend::Concrete;
    } else {
      out["verdict"] = "not-stable";
      out["k_max"] = k_max;
      code = kNotStable;
    }
  }
  if (as_json) {
    std::cout << out.dump(2) << "\n";
  } else {
    if (out.count("k_star"))
      std::cout << "stabilizes at k = " << out["k_star"].get<int>();
    else
      std::cout << "verdict: " << out["verdict"].get<std::string>();
    if (out.value("box_relative", false)) std::cout << " (box-relative)";
    std::cout << "\n";
  }
  return code;
}

int cmd_check_appendix(const std::string& path, int k, int max_len,
                       const std::string& bexpr, const std::string& control,
                       bool as_json) {
  Program p = load(path);
  GGrammar g = to_generic(build_vpg(p));
  const std::string X0 = p.procedures[0].initial;
  BoundedExpression b = parse_bounded_expression(bexpr);

  json out;
  out["fixture"] = path;
  out["k"] = k;
  out["len_bound"] = max_len;
  out["bexpr"] = bexpr_str(b);

  BoundedCheck sub = check_bounded_subset(g, X0, b, max_len);
  out["language_in_bexpr"] = sub.holds;

  ProductGrammar pg = build_product_grammar(g, X0, b);
  bool prod_eq =
      enumerate_words(g, X0, k, max_len) == enumerate_words(pg.g, pg.start, k, max_len);
  out["product_language_equal"] = prod_eq;

  LetterGrammar lg = build_letter_grammar(pg, b);
  std::set<Word> img;
  for (auto& w : enumerate_words(lg.g, lg.start, k, max_len)) {
    Word hw = lg.apply_h(w);
    if ((int)hw.size() <= max_len) img.insert(hw);
  }
  bool letter_eq = img == enumerate_words(pg.g, pg.start, k, max_len);
  out["letter_image_equal"] = letter_eq;

  BoundedExpression bg =
      control.empty() ? propose_control_bexpr(g, X0, k)
                      : parse_bounded_expression(control);
  out["control_bexpr"] = bexpr_str(bg);
  out["control_bexpr_source"] = control.empty() ? "proposed" : "given";
  bool ctl = empirical_bounded_control_check(g, X0, k, bg, std::min(max_len, 20));
  out["control_check"] = ctl;

  if (as_json) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "language within bexpr (len <= " << max_len
              << "): " << (sub.holds ? "yes" : "no") << "\n"
              << "product grammar language equal: " << (prod_eq ? "yes" : "no")
              << "\n"
              << "letter grammar image equal: " << (letter_eq ? "yes" : "no")
              << "\n"
              << "control-set check (" << out["control_bexpr_source"].get<std::string>()
              << " " << bexpr_str(bg) << "): " << (ctl ? "yes" : "no") << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"index-bounded summaries for recursive integer programs"};
  app.require_subcommand(1);

  std::string path;
  int k = 1, K = 1, k_max = 5;
  bool as_json = false;
  std::string backend_s = "symbolic";
  std::vector<long long> box;
  Bounds bd;
  std::string bexpr =
      "(t1 t2 <t3)* t1* t5* t6* t7* (t3> t4)*";
  std::string control;

  auto add_common = [&](CLI::App* c, bool needs_backend) {
    c->add_option("input", path, "program file (.rip)")->required();
    c->add_flag("--json", as_json, "JSON output");
    if (needs_backend) {
      c->add_option("--backend", backend_s, "symbolic | enumerate | concrete");
      c->add_option("--box", box, "box bounds LO HI")->expected(2);
      c->add_option("--max-len", bd.max_len, "word-length budget (enumerate)");
      c->add_option("--max-depth", bd.max_depth, "evaluation budget (concrete)");
      c->add_option("--unroll", bd.unroll, "extra fixpoint rounds (symbolic)");
      c->add_option("--power-bound", bd.power_bound, "monoid period search bound");
    }
  };

  CLI::App* cg = app.add_subcommand("grammar", "print the program grammar");
  add_common(cg, false);

  CLI::App* ct = app.add_subcommand("transform", "emit the query program");
  add_common(ct, false);
  ct->add_option("-K", K, "query index bound (>= 1)")
      ->check(CLI::PositiveNumber);

  CLI::App* cs = app.add_subcommand("summarize", "index-bounded summary");
  add_common(cs, true);
  cs->add_option("-k", k, "index (>= 1)")->check(CLI::PositiveNumber);

  CLI::App* cf = app.add_subcommand("fixpoint", "stabilization report");
  add_common(cf, true);
  cf->add_option("-k", k, "check one index instead of searching")
      ->check(CLI::PositiveNumber);
  cf->add_option("-K", k_max, "search bound for k*")->check(CLI::PositiveNumber);

  CLI::App* ca = app.add_subcommand("check-appendix",
                                    "bounded-expression construction checks");
  add_common(ca, false);
  ca->add_option("-k", k, "index (>= 1)")->check(CLI::PositiveNumber);
  ca->add_option("--max-len", bd.max_len, "word-length bound");
  ca->add_option("--bexpr", bexpr, "bounded expression over the word alphabet");
  ca->add_option("--control", control,
                 "bounded expression over production ids (default: proposed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int c = app.exit(e);
    return c == 0 ? kOk : kInputError;
  }

  Backend backend = Backend::Symbolic;
  if (backend_s == "enumerate") backend = Backend::Enumerate;
  else if (backend_s == "concrete") backend = Backend::Concrete;
  else if (backend_s != "symbolic") {
    std::cerr << "unknown backend: " << backend_s << "\n";
    return kInputError;
  }
  if (box.size() == 2) {
    bd.box_lo = box[0];
    bd.box_hi = box[1];
    if (bd.box_lo > bd.box_hi) {
      std::cerr << "box: LO must be <= HI\n";
      return kInputError;
    }
  }

  try {
    if (cg->parsed()) return cmd_grammar(path, as_json);
    if (ct->parsed()) return cmd_transform(path, K, as_json);
    if (cs->parsed()) return cmd_summarize(path, k, backend, bd, as_json);
    if (cf->parsed())
      return cmd_fixpoint(path,
                          cf->count("-k") ? std::optional<int>(k) : std::nullopt,
                          k_max, backend, bd, as_json);
    if (ca->parsed())
      return cmd_check_appendix(path, k, bd.max_len, bexpr, control, as_json);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.code == "ResourceExceeded" ? kInconclusive : kInputError;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
