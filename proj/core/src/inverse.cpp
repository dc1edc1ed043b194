#include "resmatch/inverse.hpp"

#include <stdexcept>
#include <string>

namespace resmatch {

void validate_record(const RetroRecord& record) {
  const int n = record.size();
  if (static_cast<int>(record.employed.size()) != n) {
    throw std::invalid_argument("record: outcome vector length differs from placements");
  }
  const int k = static_cast<int>(record.capacities.size());
  std::vector<int> load(k, 0);
  for (int i = 0; i < n; ++i) {
    int l = record.default_location[i];
    if (l < 0 || l >= k) {
      throw std::invalid_argument("record: default location out of range for refugee " +
                                  std::to_string(i));
    }
    if (record.employed[i] != 0 && record.employed[i] != 1) {
      throw std::invalid_argument("record: outcomes must be 0/1");
    }
    if (++load[l] > record.capacities[l]) {
      throw std::invalid_argument("record: default placement exceeds capacity of location " +
                                  std::to_string(l));
    }
  }
}

std::vector<int> employed_set(const RetroRecord& record) {
  validate_record(record);
  std::vector<int> out;
  for (int i = 0; i < record.size(); ++i) {
    if (record.employed[i]) out.push_back(i);
  }
  return out;
}

Capacities reduced_capacities(const RetroRecord& record) {
  validate_record(record);
  Capacities reduced = record.capacities;
  for (int i = 0; i < record.size(); ++i) {
    if (!record.employed[i]) continue;
    int l = record.default_location[i];
    if (--reduced[l] < 0) {
      throw std::invalid_argument("record: employed refugees exceed capacity of location " +
                                  std::to_string(l));
    }
  }
  return reduced;
}

namespace {

void check_consistent(const Matrix& predictions, const RetroRecord& record) {
  validate_instance(predictions, record.capacities);
  if (predictions.rows() != record.size()) {
    throw std::invalid_argument("record covers " + std::to_string(record.size()) +
                                " refugees but predictions have " +
                                std::to_string(predictions.rows()) + " rows");
  }
}

}  // namespace

Assignment harmless_completion(const Matrix& predictions, const RetroRecord& record) {
  check_consistent(predictions, record);
  const int n = record.size();
  Capacities reduced = reduced_capacities(record);

  std::vector<int> rest;  // refugees the completion is free to place
  for (int i = 0; i < n; ++i) {
    if (!record.employed[i]) rest.push_back(i);
  }

  Matrix sub(static_cast<int>(rest.size()), predictions.cols());
  for (size_t r = 0; r < rest.size(); ++r) {
    for (int l = 0; l < predictions.cols(); ++l) sub(static_cast<int>(r), l) = predictions(rest[r], l);
  }
  Assignment partial = solve_assignment(sub, reduced);

  Assignment out;
  out.location.assign(n, kUnassigned);
  for (int i = 0; i < n; ++i) {
    if (record.employed[i]) out.location[i] = record.default_location[i];
  }
  for (size_t r = 0; r < rest.size(); ++r) {
    // A consistent record leaves at least |rest| reduced slots, so the
    // sub-solve never strands anyone.
    out.location[rest[r]] = partial.location[r];
  }
  out.objective = assignment_objective(predictions, out.location);
  return out;
}

ModifiedPredictions modify_probabilities(const Matrix& predictions, const RetroRecord& record,
                                         double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("modify_probabilities: epsilon must be > 0");
  check_consistent(predictions, record);

  DualSolution dual = solve_dual(predictions, record.capacities);
  Assignment completion = harmless_completion(predictions, record);

  ModifiedPredictions out;
  out.values = predictions;
  out.epsilon = epsilon;
  out.mask.reserve(record.size());
  for (int i = 0; i < record.size(); ++i) {
    int l = completion.location[i];
    out.values(i, l) = dual.refugee_price[i] + dual.location_price[l] + epsilon;
    out.mask.emplace_back(i, l);
  }

  // The guarantee is checked, not assumed. It can only fail on records whose
  // capacities strictly exceed the pool size with a price profile that pins
  // value on the slack; those never arise from the experiment protocol.
  Assignment induced = solve_assignment(out.values, record.capacities);
  if (!is_harmless(induced, record)) {
    throw std::runtime_error(
        "modify_probabilities: modified predictions do not reproduce a harmless optimum "
        "(capacities exceed the pool size in an unsupported way)");
  }
  return out;
}

bool is_harmless(const Assignment& assignment, const RetroRecord& record) {
  validate_record(record);
  if (static_cast<int>(assignment.location.size()) != record.size()) return false;
  std::vector<int> load(record.capacities.size(), 0);
  for (int i = 0; i < record.size(); ++i) {
    int l = assignment.location[i];
    if (record.employed[i] && l != record.default_location[i]) return false;
    if (l == kUnassigned) continue;
    if (l < 0 || l >= static_cast<int>(record.capacities.size())) return false;
    if (++load[l] > record.capacities[l]) return false;
  }
  return true;
}

}  // namespace resmatch
