#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "ksum/transform.hpp"
#include "json.hpp"

using namespace ksum;

namespace {

Program load(const std::string& name) {
  return parse_program_file(std::string(KSUM_FIXTURES) + "/" + name);
}

int count_occurrences(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + 1))
    ++n;
  return n;
}

Valuation val(Int x, Int z) { return Valuation{{"x", x}, {"z", z}}; }

}  // namespace

TEST_CASE("query program structure for the doubling procedure") {
  Program p = load("fig1.rip");
  QueryProgram qp = generate_query_program(p, 2);

  CHECK(p.state_order.size() == 6);
  // One procedure per (non-final state, k) with k in [0, 2].
  CHECK(qp.program.procedures.size() == 18);
  CHECK(qp.program.find_proc("query_k2_P_q1") != nullptr);
  CHECK(qp.program.find_proc("query_k0_P_q6") != nullptr);
  CHECK(validate_program(qp.program).empty());

  // Each k >= 1 procedure carries one labelled alternative per production.
  for (const char* lbl : {"q1_k2_p1", "q1_k2_p2", "q1_k2_p3", "q1_k2_p4",
                          "q1_k2_p5", "q1_k2_p6", "q1_k2_p7"})
    CHECK(qp.label_map.at(lbl) == std::string("p") + (lbl + strlen(lbl) - 1));
  CHECK(qp.label_map.size() == 7 * 6 * 2);  // 7 productions, 6 states, k in {1,2}

  // Transition budget per procedure: PC init (1) + dispatch (7) +
  // 2 return alternatives (3 each) + 4 step alternatives (5 each) +
  // 1 call alternative (14).
  for (auto& pr : qp.program.procedures) {
    if (pr.name.rfind("query_k0_", 0) == 0) {
      REQUIRE(pr.transitions.size() == 1);
      CHECK(pr.transitions[0].stmt == StmtKind::Assume);
      CHECK(is_false(pr.transitions[0].guard));
      CHECK(pr.finals.empty());
    } else {
      CHECK(pr.transitions.size() == 48);
    }
  }
  CHECK(count_occurrences(qp.source, "assume false;") == 6);

  // Inputs are the two full frames over the union of locals; no outputs.
  const Procedure* entry = qp.program.find_proc("query_k2_P_q1");
  REQUIRE(entry != nullptr);
  CHECK(entry->inputs == std::vector<std::string>{"k2q1_I_x", "k2q1_I_z",
                                                  "k2q1_O_x", "k2q1_O_z"});
  CHECK(entry->outputs.empty());
}

TEST_CASE("generated source parses back to the same program") {
  for (const char* fx : {"fig1.rip", "timestwo.rip", "plus.rip", "identity.rip"}) {
    Program p = load(fx);
    for (int K : {1, 2}) {
      QueryProgram qp = generate_query_program(p, K);
      Program again = parse_program(emit_source(qp));
      CHECK(program_equal(qp.program, again));
      CHECK(program_equal(parse_program(pretty_print(qp.program)), qp.program));
      CHECK(validate_program(qp.program).empty());
    }
  }
}

TEST_CASE("query program is non-recursive, tail variant is not") {
  Program p = load("fig1.rip");
  CHECK(is_recursive(p));
  for (int K : {1, 2, 3}) {
    QueryProgram qp = generate_query_program(p, K);
    CHECK(!is_recursive(qp.program));
    // k-level procedures only ever call (k-1)-level ones.
    auto cg = call_graph(qp.program);
    for (auto& [caller, callees] : cg) {
      int kc = caller[7] - '0';
      for (auto& c : callees) CHECK(c[7] - '0' == kc - 1);
    }
  }

  QueryProgram tv = tail_recursive_variant(generate_query_program(p, 2));
  CHECK(tv.tail_variant);
  CHECK(is_recursive(tv.program));
  CHECK(validate_program(tv.program).empty());
  CHECK(program_equal(parse_program(emit_source(tv)), tv.program));
  // The dispatch value is set once per procedure; continuations call instead
  // of reassigning it.
  CHECK(count_occurrences(tv.source, "PC <- ") == 6 * 2);
}

TEST_CASE("statement count is exactly affine in K") {
  for (const char* fx : {"fig1.rip", "mccarthy_f2.rip", "leq.rip"}) {
    Program p = load(fx);
    std::vector<long long> counts;
    for (int K = 1; K <= 5; ++K)
      counts.push_back(statement_count(generate_query_program(p, K)));
    long long slope = counts[1] - counts[0];
    CHECK(slope > 0);
    for (int i = 0; i < 5; ++i) CHECK(counts[i] == counts[0] + slope * i);
  }
}

TEST_CASE("manifest records K, state numbering and label map") {
  Program p = load("fig1.rip");
  QueryProgram qp = generate_query_program(p, 2);
  auto j = nlohmann::json::parse(manifest_json(qp));
  CHECK(j["K"] == 2);
  CHECK(j["state_numbering"].size() == 6);
  CHECK(j["state_numbering"]["P_q1"] == 1);
  std::set<int> nums;
  for (auto& [k, v] : j["state_numbering"].items()) nums.insert(v.get<int>());
  CHECK(nums.size() == 6);
  CHECK(*nums.begin() == 1);
  CHECK(*nums.rbegin() == 6);
  CHECK(j["label_map"].size() == 84);
  CHECK(j["label_map"]["q1_k2_p3"] == "p3");
  CHECK(j["label_map"]["q4_k1_p7"] == "p7");
}

TEST_CASE("call-site relations support the worked rod-branch run") {
  // For input frame (x=1, z=0) and output frame (x=1, z=2), the call
  // alternative of the initial-state query can take the rod branch with
  // havoced frames J=(0,0), K=(42,0), L=(1,0).
  Program p = load("fig1.rip");
  const Transition* t3 = p.find_transition("t3");
  REQUIRE(t3 != nullptr);
  REQUIRE(t3->is_call());

  // Entry: callee input x is bound to the argument x - 1.
  Relation entry = call_entry_relation(p, *t3);
  CHECK(entry.eval_pair(val(1, 0), val(0, 0)));
  CHECK(entry.eval_pair(val(1, 0), val(0, 99)));   // callee z unconstrained
  CHECK(!entry.eval_pair(val(1, 0), val(1, 0)));

  // Return: the caller's z receives the callee output; caller x is the
  // frame's business, not the return binding's.
  Relation ret = call_return_relation(p, *t3);
  CHECK(ret.eval_pair(val(42, 0), val(1, 0)));
  CHECK(!ret.eval_pair(val(42, 0), val(1, 5)));

  // Frame: caller locals outside the return targets survive the call.
  Relation fr = call_frame_relation(p, *t3);
  CHECK(fr.eval_pair(val(1, 0), val(1, 7)));
  CHECK(!fr.eval_pair(val(1, 0), val(2, 0)));

  // After the rod call the pending obligation is the return alternative at
  // the state before t4, which relates L to the output frame.
  const Transition* t4 = p.find_transition("t4");
  REQUIRE(t4 != nullptr);
  CHECK(t4->rel.eval_pair(val(1, 0), val(1, 2)));

  // The residual run from J must reach a final state producing K; t7 leaves
  // the caller's x unconstrained, so (0,0) -> (42,0) is feasible.
  Grammar g = build_vpg(p);
  Word base{{"t1", Tag::Plain}, {"t5", Tag::Plain}, {"t6", Tag::Plain},
            {"t7", Tag::Plain}};
  Relation residual = word_semantics(base, p);
  CHECK(residual.eval_pair(val(0, 0), val(42, 0)));
}

TEST_CASE("tail variant keeps the continuation targets of both branches") {
  Program p = load("fig1.rip");
  QueryProgram tv = tail_recursive_variant(generate_query_program(p, 1));
  // rod continuation re-enters the callee's initial state at the same level.
  CHECK(tv.source.find("q1_k1_p3_rod: call query_k0_P_q4(") != std::string::npos);
  CHECK(tv.source.find("call query_k1_P_q1(k1q1_I_x, k1q1_I_z, k1q1_O_x, k1q1_O_z);") !=
        std::string::npos);
  // ord continuation calls the inner query one level down.
  CHECK(tv.source.find("q1_k1_p3_ord: call query_k0_P_q1(") != std::string::npos);
}

TEST_CASE("programs without calls transform too") {
  Program p = load("identity.rip");
  QueryProgram qp = generate_query_program(p, 1);
  CHECK(qp.program.procedures.size() == 2);
  CHECK(!is_recursive(qp.program));
  const Procedure* pr = qp.program.find_proc("query_k1_Id_q1");
  REQUIRE(pr != nullptr);
  // PC init + single return alternative (dispatch collapses to a wire).
  CHECK(pr->transitions.size() == 4);
}
