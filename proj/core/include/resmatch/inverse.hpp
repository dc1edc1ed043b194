#pragma once

#include <utility>
#include <vector>

#include "resmatch/matching.hpp"

namespace resmatch {

/// Retrospective record of one pool under the historical policy: where every
/// refugee was placed and whether they found employment there.
struct RetroRecord {
  std::vector<int> default_location;  // length n, values in [0, k)
  std::vector<int> employed;          // length n, 0/1
  Capacities capacities;

  int size() const { return static_cast<int>(default_location.size()); }
};

/// Throws std::invalid_argument if lengths disagree, outcomes are not 0/1,
/// or the default placement violates the capacities.
void validate_record(const RetroRecord& record);

/// Indices with employed == 1, ascending. The complement is the set the
/// completion policy re-optimizes.
std::vector<int> employed_set(const RetroRecord& record);

/// Capacity left per location after the employed keep their default slots.
/// Rejects records whose employed counts exceed a capacity.
Capacities reduced_capacities(const RetroRecord& record);

/// The harmless completion: employed refugees keep their default location,
/// the rest are matched optimally under the reduced capacities.
Assignment harmless_completion(const Matrix& predictions, const RetroRecord& record);

/// Prediction matrix minimally edited so that maximizing it reproduces the
/// harmless completion; `mask` lists the one edited entry per refugee.
struct ModifiedPredictions {
  Matrix values;  // same shape as the input predictions
  double epsilon = 0.0;
  std::vector<std::pair<int, int>> mask;  // (refugee, location), refugee-ordered
};

/// Raises exactly the completion's entries to refugee_price + location_price
/// + epsilon, where the prices come from the optimal dual of the assignment
/// under the unmodified predictions. Everything else is left untouched.
ModifiedPredictions modify_probabilities(const Matrix& predictions, const RetroRecord& record,
                                         double epsilon);

/// True iff the assignment is capacity-feasible and every employed refugee
/// keeps their default location.
bool is_harmless(const Assignment& assignment, const RetroRecord& record);

}  // namespace resmatch
