#pragma once
// Integer-program IR: procedures with control states and internal / call
// transitions, parsed from the `.rip` surface syntax.

#include <map>
#include <string>
#include <vector>

#include "ksum/presburger.hpp"

namespace ksum {

// Statement the transition was generated from; kept so that the concrete
// interpreter and the pretty printer can reconstruct the source form.
enum class StmtKind { Assume, Assign, Havoc, Return, Identity, Call };

struct Transition {
  std::string id;   // program-wide unique symbol (t1, t2, ...)
  std::string src;
  std::string dst;
  StmtKind stmt = StmtKind::Assume;

  // Internal transitions: relation over the owning procedure's locals.
  Relation rel;

  // Statement payload.
  F guard;                        // Assume
  std::vector<std::string> lhs;   // Assign targets / Havoc list / Return havoc
  std::vector<Term> rhs;          // Assign right-hand sides / Return values

  // Call transitions.
  std::string callee;
  std::vector<Term> args;
  std::vector<std::string> rets;

  bool is_call() const { return stmt == StmtKind::Call; }
};

struct Procedure {
  std::string name;
  std::vector<std::string> locals;   // inputs ++ declared vars
  std::vector<std::string> inputs;   // ordered
  std::vector<std::string> outputs;  // ordered
  std::vector<std::string> states;   // creation order; initial first
  std::string initial;
  std::vector<std::string> finals;   // subset of states
  std::vector<Transition> transitions;

  bool is_final(const std::string& s) const;
  std::vector<std::string> nonfinal_states() const;
};

struct Program {
  std::vector<Procedure> procedures;
  // All non-final states, procedure order then creation order.
  std::vector<std::string> state_order;

  const Procedure* find_proc(const std::string& name) const;
  const Procedure* owner_of_state(const std::string& state) const;
  const Transition* find_transition(const std::string& id) const;
};

struct Diagnostic {
  std::string code;      // e.g. ArityMismatch, StateSetsOverlap
  std::string message;
  std::string location;  // procedure or transition name
};

Program parse_program(const std::string& source_text);
Program parse_program_file(const std::string& path);

std::vector<Diagnostic> validate_program(const Program& p);

// Deterministic surface form; parse(pretty_print(parse(s))) is structurally
// equal to parse(s).
std::string pretty_print(const Program& p);

std::string to_json(const Program& p);  // IR dump

// Structural equality (used by round-trip tests).
bool program_equal(const Program& a, const Program& b);

// Caller -> set of callees; recursive iff the graph has a cycle.
std::map<std::string, std::set<std::string>> call_graph(const Program& p);
bool is_recursive(const Program& p);

}  // namespace ksum
