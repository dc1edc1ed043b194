#include "resmatch/stats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace resmatch {

namespace {

using nlohmann::json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

enum class Dim { kLocation, kAge, kRegion, kEducation, kSex };

const char* dim_name(Dim d) {
  switch (d) {
    case Dim::kLocation: return "location";
    case Dim::kAge: return "age";
    case Dim::kRegion: return "region";
    case Dim::kEducation: return "education";
    case Dim::kSex: return "sex";
  }
  return "?";
}

bool header_matches(Dim d, const std::string& name) {
  std::string n = lower(name);
  switch (d) {
    case Dim::kLocation: return n == "location" || n == "state";
    case Dim::kAge: return n == "age" || n == "age_group";
    case Dim::kRegion: return n == "region" || n == "origin" || n == "country";
    case Dim::kEducation: return n == "education";
    case Dim::kSex: return n == "sex";
  }
  return false;
}

enum class Check {
  kJointSumsToOne,   // the whole table is one distribution
  kRowsSumToOne,     // groups over all-but-last dim each sum to 1
  kProportion,       // every entry in [0, 1], no sum constraint
  kNonnegative,      // counts
};

struct TableSpec {
  std::string key;
  std::vector<Dim> dims;
  Check check;
  std::vector<double> MarginalStats::* target;
  bool optional = false;
};

const std::vector<TableSpec> kTables = {
    {"tau_c_s", {Dim::kRegion, Dim::kSex}, Check::kJointSumsToOne, &MarginalStats::origin_sex},
    {"tau_a_given_c", {Dim::kRegion, Dim::kAge}, Check::kRowsSumToOne,
     &MarginalStats::age_given_origin},
    {"tau_e_given_c", {Dim::kRegion, Dim::kEducation}, Check::kRowsSumToOne,
     &MarginalStats::edu_given_origin},
    {"n_a_e_s_given_l", {Dim::kLocation, Dim::kAge, Dim::kEducation, Dim::kSex},
     Check::kNonnegative, &MarginalStats::census_counts},
    {"tau_a_given_l_w1", {Dim::kLocation, Dim::kAge}, Check::kRowsSumToOne,
     &MarginalStats::age_given_loc_w1},
    {"tau_s_given_l_w1", {Dim::kLocation, Dim::kSex}, Check::kRowsSumToOne,
     &MarginalStats::sex_given_loc_w1},
    {"tau_w1_given_l_f1", {Dim::kLocation}, Check::kProportion, &MarginalStats::employment_fb},
    {"tau_c_given_l_f1", {Dim::kLocation, Dim::kRegion}, Check::kRowsSumToOne,
     &MarginalStats::origin_given_loc_fb},
    {"tau_c_given_l_w1_f1", {Dim::kLocation, Dim::kRegion}, Check::kRowsSumToOne,
     &MarginalStats::origin_given_loc_w1_fb},
    {"tau_e_given_l_f1", {Dim::kLocation, Dim::kEducation}, Check::kRowsSumToOne,
     &MarginalStats::edu_given_loc_fb},
    {"tau_e_given_l_w1_f1", {Dim::kLocation, Dim::kEducation}, Check::kRowsSumToOne,
     &MarginalStats::edu_given_loc_w1_fb},
    {"tau_s_given_l_f1", {Dim::kLocation, Dim::kSex}, Check::kRowsSumToOne,
     &MarginalStats::sex_given_loc_fb},
    {"location_share", {Dim::kLocation}, Check::kJointSumsToOne,
     &MarginalStats::location_share, /*optional=*/true},
};

class Loader {
 public:
  explicit Loader(const std::string& manifest_path) : manifest_path_(manifest_path) {}

  MarginalStats run() {
    std::ifstream in(manifest_path_);
    if (!in) throw std::runtime_error("stats: cannot open manifest " + manifest_path_);
    json manifest;
    in >> manifest;

    if (!manifest.contains("locations") || !manifest["locations"].is_array()) {
      throw std::runtime_error("stats: manifest lacks a \"locations\" array");
    }
    for (const auto& l : manifest["locations"]) stats_.locations.push_back(l.get<std::string>());
    if (stats_.locations.empty()) throw std::runtime_error("stats: empty location list");

    const json& tables = manifest.contains("tables") ? manifest["tables"] : manifest;
    for (const TableSpec& spec : kTables) {
      if (!tables.contains(spec.key)) {
        if (spec.optional) continue;
        throw std::runtime_error("stats: manifest is missing table \"" + spec.key + "\"");
      }
      std::filesystem::path file =
          std::filesystem::path(manifest_path_).parent_path() / tables[spec.key].get<std::string>();
      load_table(spec, file.string());
    }
    return std::move(stats_);
  }

 private:
  const std::vector<std::string>& domain_of(Dim d) const {
    switch (d) {
      case Dim::kLocation: return stats_.locations;
      case Dim::kAge: return domains::kAges;
      case Dim::kRegion: return domains::kRegions;
      case Dim::kEducation: return domains::kEducations;
      case Dim::kSex: return domains::kSexes;
    }
    throw std::logic_error("unreachable");
  }

  int label_index(Dim d, const std::string& label, const std::string& table) const {
    const auto& domain = domain_of(d);
    std::string want = lower(label);
    for (size_t i = 0; i < domain.size(); ++i) {
      if (lower(domain[i]) == want) return static_cast<int>(i);
    }
    throw std::runtime_error("stats: table " + table + ": unknown " + dim_name(d) +
                             " category \"" + label + "\"");
  }

  void load_table(const TableSpec& spec, const std::string& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("stats: table " + spec.key + ": cannot open " + file);

    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error("stats: table " + spec.key + ": empty file " + file);
    }
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() != spec.dims.size() + 1) {
      throw std::runtime_error("stats: table " + spec.key + ": expected " +
                               std::to_string(spec.dims.size() + 1) + " columns");
    }
    // Columns may come in any order; map them onto the declared dimensions.
    std::vector<int> column_of(spec.dims.size(), -1);
    int value_column = -1;
    for (size_t c = 0; c < header.size(); ++c) {
      if (lower(header[c]) == "value") {
        value_column = static_cast<int>(c);
        continue;
      }
      bool matched = false;
      for (size_t d = 0; d < spec.dims.size(); ++d) {
        if (column_of[d] < 0 && header_matches(spec.dims[d], header[c])) {
          column_of[d] = static_cast<int>(c);
          matched = true;
          break;
        }
      }
      if (!matched) {
        throw std::runtime_error("stats: table " + spec.key + ": unexpected column \"" +
                                 header[c] + "\"");
      }
    }
    if (value_column < 0) {
      throw std::runtime_error("stats: table " + spec.key + ": missing value column");
    }

    std::vector<size_t> stride(spec.dims.size(), 1);
    size_t cells = 1;
    for (int d = static_cast<int>(spec.dims.size()) - 1; d >= 0; --d) {
      stride[d] = cells;
      cells *= domain_of(spec.dims[d]).size();
    }

    constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> data(cells, kMissing);
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      std::vector<std::string> fields = split_csv_line(line);
      if (fields.size() != header.size()) {
        throw std::runtime_error("stats: table " + spec.key + ": line " +
                                 std::to_string(line_no) + " has wrong field count");
      }
      size_t index = 0;
      for (size_t d = 0; d < spec.dims.size(); ++d) {
        index += stride[d] * label_index(spec.dims[d], fields[column_of[d]], spec.key);
      }
      double value;
      try {
        value = std::stod(fields[value_column]);
      } catch (const std::exception&) {
        throw std::runtime_error("stats: table " + spec.key + ": line " +
                                 std::to_string(line_no) + ": bad value");
      }
      if (!std::isnan(data[index])) {
        throw std::runtime_error("stats: table " + spec.key + ": line " +
                                 std::to_string(line_no) + ": duplicate cell");
      }
      data[index] = value;
    }

    for (size_t i = 0; i < cells; ++i) {
      if (std::isnan(data[i])) {
        throw std::runtime_error("stats: table " + spec.key + ": missing cell " +
                                 cell_label(spec, stride, i));
      }
    }
    validate(spec, stride, data);
    stats_.*spec.target = std::move(data);
  }

  std::string cell_label(const TableSpec& spec, const std::vector<size_t>& stride,
                         size_t index) const {
    std::string out;
    for (size_t d = 0; d < spec.dims.size(); ++d) {
      size_t i = (index / stride[d]) % domain_of(spec.dims[d]).size();
      if (!out.empty()) out += ", ";
      out += std::string(dim_name(spec.dims[d])) + "=" + domain_of(spec.dims[d])[i];
    }
    return out;
  }

  void validate(const TableSpec& spec, const std::vector<size_t>& stride,
                const std::vector<double>& data) const {
    constexpr double kSumTol = 1e-6;
    for (size_t i = 0; i < data.size(); ++i) {
      double v = data[i];
      if (!std::isfinite(v) || v < 0.0) {
        throw std::runtime_error("stats: table " + spec.key + ": negative or non-finite value at " +
                                 cell_label(spec, stride, i));
      }
      if (spec.check != Check::kNonnegative && v > 1.0 + kSumTol) {
        throw std::runtime_error("stats: table " + spec.key + ": proportion above 1 at " +
                                 cell_label(spec, stride, i));
      }
    }
    if (spec.check == Check::kJointSumsToOne) {
      double total = 0.0;
      for (double v : data) total += v;
      if (std::abs(total - 1.0) > kSumTol) {
        throw std::runtime_error("stats: table " + spec.key + ": sums to " +
                                 std::to_string(total) + ", expected 1");
      }
    } else if (spec.check == Check::kRowsSumToOne) {
      size_t support = domain_of(spec.dims.back()).size();
      size_t groups = data.size() / support;
      for (size_t g = 0; g < groups; ++g) {
        double total = 0.0;
        for (size_t j = 0; j < support; ++j) total += data[g * support + j];
        if (std::abs(total - 1.0) > kSumTol) {
          throw std::runtime_error("stats: table " + spec.key + ": row " +
                                   cell_label(spec, stride, g * support) + " sums to " +
                                   std::to_string(total) + ", expected 1");
        }
      }
    }
  }

  std::string manifest_path_;
  MarginalStats stats_;
};

}  // namespace

double MarginalStats::census_total(int loc) const {
  const int a = static_cast<int>(domains::kAges.size());
  const int e = static_cast<int>(domains::kEducations.size());
  const int s = static_cast<int>(domains::kSexes.size());
  double total = 0.0;
  for (int i = 0; i < a * e * s; ++i) total += census_counts[static_cast<size_t>(loc) * a * e * s + i];
  return total;
}

double MarginalStats::joint_aes(int loc, int age, int edu, int sex) const {
  const int e = static_cast<int>(domains::kEducations.size());
  const int s = static_cast<int>(domains::kSexes.size());
  const int a = static_cast<int>(domains::kAges.size());
  size_t idx = ((static_cast<size_t>(loc) * a + age) * e + edu) * s + sex;
  return census_counts[idx] / census_total(loc);
}

double MarginalStats::joint_es(int loc, int edu, int sex) const {
  double total = 0.0;
  for (size_t age = 0; age < domains::kAges.size(); ++age) {
    total += joint_aes(loc, static_cast<int>(age), edu, sex);
  }
  return total;
}

double MarginalStats::joint_as(int loc, int age, int sex) const {
  double total = 0.0;
  for (size_t edu = 0; edu < domains::kEducations.size(); ++edu) {
    total += joint_aes(loc, age, static_cast<int>(edu), sex);
  }
  return total;
}

double MarginalStats::joint_ae(int loc, int age, int edu) const {
  double total = 0.0;
  for (size_t sex = 0; sex < domains::kSexes.size(); ++sex) {
    total += joint_aes(loc, age, edu, static_cast<int>(sex));
  }
  return total;
}

double MarginalStats::marginal_age(int loc, int age) const {
  double total = 0.0;
  for (size_t edu = 0; edu < domains::kEducations.size(); ++edu) {
    for (size_t sex = 0; sex < domains::kSexes.size(); ++sex) {
      total += joint_aes(loc, age, static_cast<int>(edu), static_cast<int>(sex));
    }
  }
  return total;
}

MarginalStats load_marginal_tables(const std::string& manifest_path) {
  return Loader(manifest_path).run();
}

}  // namespace resmatch
