#pragma once

#include <string>
#include <vector>

#include "resmatch/matrix.hpp"

namespace resmatch {

/// Standardized category domains shared by the aggregate tables and the pool
/// generator. Labels are matched case-insensitively on load.
namespace domains {
inline const std::vector<std::string> kAges = {"20-24", "25-34", "35-44", "45-64", "65-100"};
inline const std::vector<std::string> kRegions = {"Africa", "Asia", "Europe",
                                                  "Latin America", "Northern America", "Oceania"};
inline const std::vector<std::string> kEducations = {"Primary or less", "Secondary", "Tertiary"};
inline const std::vector<std::string> kSexes = {"Female", "Male"};
}  // namespace domains

/// Aggregate proportion tables the pool generator runs on. Flat arrays with
/// explicit strides; `w1` marks statistics of the employed population, `fb`
/// statistics of the foreign-born population.
struct MarginalStats {
  std::vector<std::string> locations;

  std::vector<double> origin_sex;          // [region][sex], joint, sums to 1
  std::vector<double> age_given_origin;    // [region][age], rows sum to 1
  std::vector<double> edu_given_origin;    // [region][edu], rows sum to 1
  std::vector<double> census_counts;       // [loc][age][edu][sex], nonnegative counts
  std::vector<double> age_given_loc_w1;    // [loc][age], rows sum to 1
  std::vector<double> sex_given_loc_w1;    // [loc][sex], rows sum to 1
  std::vector<double> employment_fb;       // [loc], proportion employed among foreign-born
  std::vector<double> origin_given_loc_fb; // [loc][region], rows sum to 1
  std::vector<double> origin_given_loc_w1_fb;
  std::vector<double> edu_given_loc_fb;    // [loc][edu]
  std::vector<double> edu_given_loc_w1_fb;
  std::vector<double> sex_given_loc_fb;    // [loc][sex]
  std::vector<double> location_share;      // [loc], optional refugee allocation share

  int location_count() const { return static_cast<int>(locations.size()); }
  bool has_location_share() const { return !location_share.empty(); }

  // Census-derived joint proportions, normalized per location.
  double census_total(int loc) const;
  double joint_aes(int loc, int age, int edu, int sex) const;  // tau(a,e,s | l)
  double joint_es(int loc, int edu, int sex) const;
  double joint_as(int loc, int age, int sex) const;
  double joint_ae(int loc, int age, int edu) const;
  double marginal_age(int loc, int age) const;  // tau(a | l)
};

/// Loads the tables named by a manifest JSON ({"table": "file.csv", ...});
/// relative file names resolve against the manifest's directory. Every
/// distribution is validated (sums to 1 within 1e-6, entries in [0,1]), and
/// errors name the offending table and row.
MarginalStats load_marginal_tables(const std::string& manifest_path);

}  // namespace resmatch
