#pragma once
// Recursion removal: generation of the non-recursive query program H^K whose
// query_k procedures check feasibility of k-index input/output pairs, plus the
// tail-recursive variant of the same construction.

#include <map>
#include <string>

#include "ksum/ir.hpp"
#include "ksum/vpg.hpp"

namespace ksum {

struct QueryProgram {
  int K = 1;
  bool tail_variant = false;
  Program origin;    // the analyzed program
  Program program;   // the generated one (parsed back from `source`)
  std::string source;
  std::map<std::string, int> state_numbering;          // non-final state -> PC value
  std::map<std::string, std::string> label_map;        // label -> production id

  // Name of the generated procedure for (state q, index k).
  std::string proc_name(const std::string& q, int k) const;
};

// H^K in goto form: one procedure query_k{k}_{q} per k in [0, K] and non-final
// state q; query_0 bodies are a single `assume false`.
QueryProgram generate_query_program(const Program& p, int K);

// Every `PC <- X; goto start` pair becomes `call query_k{k}_X(I, O); return`;
// the result may be recursive.
QueryProgram tail_recursive_variant(const QueryProgram& qp);

std::string emit_source(const QueryProgram& qp);
std::string manifest_json(const QueryProgram& qp);  // {K, state_numbering, label_map}

// Total statement count of the generated program (one per transition).
int statement_count(const QueryProgram& qp);

}  // namespace ksum
