#pragma once
// Index-bounded procedure summaries computed three ways (symbolic solve of the
// generated query program, word enumeration, concrete execution), plus the
// inductiveness certificate and stabilization detection.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ksum/transform.hpp"

namespace ksum {

enum class Backend { Symbolic, Enumerate, Concrete };
enum class SummaryStatus { ExactCertified, ExactUncertified, Truncated };

struct Bounds {
  Int box_lo = -10;
  Int box_hi = 10;
  int max_len = 40;        // enumerate: word-length budget
  int max_depth = 400;     // concrete: evaluation budget scale
  Int value_cap = 100000;  // concrete: magnitude cap on intermediate values
  int unroll = 8;          // symbolic: extra fixpoint rounds beyond |states|
  int power_bound = 64;
  int cycle_len = 8;       // symbolic: max blocks per accelerated cycle
  int max_cycles = 64;     // symbolic: accelerated-cycle budget per procedure
};

struct Summary {
  int k = 1;
  Backend backend = Backend::Symbolic;
  SummaryStatus status = SummaryStatus::Truncated;
  bool box_relative = false;
  // Per non-final state: relation over the owning procedure's locals.
  std::map<std::string, Relation> rel;
};

// Summary of every non-final state of p at index k.
Summary k_index_summary(const Program& p, int k, Backend backend, const Bounds& b);

// Direct summarization of a non-recursive program (call-graph dag), one
// relation per non-final state, bottom-up over the call graph with cycle
// acceleration inside each procedure.
Summary summarize_nonrecursive(const Program& h, const Bounds& b);

// True iff s is inductive for p: every transition's one-step unfolding is
// subsumed by s at its source state.
bool check_inductive(const Program& p, const Summary& s);

enum class StabVerdict { Stable, NotStable, Inconclusive };

struct StabResult {
  StabVerdict verdict = StabVerdict::Inconclusive;
  bool box_relative = false;
  bool certified = false;     // stable + inductiveness certificate
  std::string witness_state;  // differing state when NotStable
  std::optional<std::pair<std::vector<Int>, std::vector<Int>>> witness_pair;
  std::string note;
};

StabResult check_stabilization(const Program& p, int k, Backend backend,
                               const Bounds& b);

// Smallest k in [1, k_max] at which the summary stabilizes, if any.
std::optional<int> find_stable_k(const Program& p, Backend backend,
                                 const Bounds& b, int k_max);

// Concrete i/o pairs: valuations of the owning procedure's locals in
// declaration order, entry values drawn from the box.
using IOPair = std::pair<std::vector<Int>, std::vector<Int>>;
std::map<std::string, std::set<IOPair>> concrete_pairs(const Program& p, int k,
                                                       const Bounds& b,
                                                       bool* truncated = nullptr);

// All (pre, post) integer points of r with every component in [lo, hi].
std::set<IOPair> box_pairs(const Relation& r, const std::vector<std::string>& vars,
                           Int lo, Int hi);

std::string summary_json(const Summary& s);

}  // namespace ksum
