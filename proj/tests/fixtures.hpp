#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "viewex/viewex.hpp"

namespace viewex::testing {

inline AttributeDef num(std::string name) { return {std::move(name), AttrKind::Numeric, AttrRole::Data}; }
inline AttributeDef cat(std::string name) { return {std::move(name), AttrKind::Categorical, AttrRole::Data}; }

/// Clinical-trial analog: studies <- designs, studies <- facilities_studies -> facilities.
inline DatabaseSchema clinical_schema() {
  return DatabaseSchema(
      {{"studies", {cat("nct_id"), cat("phase"), num("enrollment"), num("outcome")}, {"nct_id"}},
       {"designs", {cat("id"), cat("nct_id"), cat("allocation"), cat("intervention_model"), cat("primary_purpose"),
                    cat("masking")}, {"id"}},
       {"facilities_studies", {cat("id"), cat("nct_id"), cat("facility_id")}, {"id"}},
       {"facilities", {cat("facility_id"), cat("country"), num("capacity")}, {"facility_id"}}},
      {{"designs_studies", "designs", {"nct_id"}, "studies"},
       {"facilities_studies_studies", "facilities_studies", {"nct_id"}, "studies"},
       {"facilities_studies_facilities", "facilities_studies", {"facility_id"}, "facilities"}},
      "studies", Task::BinaryClassification, "outcome");
}

inline Database clinical_db(const DatabaseSchema& s, std::size_t studies = 12) {
  auto db = Database::empty(s);
  const std::vector<std::string> countries{"us", "de", "jp"};
  for (std::size_t i = 0; i < 4; ++i)
    db.append_row(s, "facilities", {"f" + std::to_string(i), countries[i % 3], std::to_string(50 + 10 * i)});
  for (std::size_t i = 0; i < studies; ++i) {
    const auto id = "NCT" + std::to_string(100 + i);
    db.append_row(s, "studies", {id, std::to_string(i % 5), std::to_string(20 + 7 * i), std::to_string(i % 2)});
    db.append_row(s, "designs", {"d" + std::to_string(i), id, std::to_string(i % 2), std::to_string((i / 2) % 3),
                                 i % 3 ? "treatment" : "prevention", std::to_string(i % 4)});
    db.append_row(s, "facilities_studies", {"fs" + std::to_string(2 * i), id, "f" + std::to_string(i % 4)});
    db.append_row(s, "facilities_studies", {"fs" + std::to_string(2 * i + 1), id, "f" + std::to_string((i + 1) % 4)});
  }
  return db;
}

/// R(A key, B, C, F) with F = 2 C; the target relation carries label y.
inline DatabaseSchema abcf_schema() {
  return DatabaseSchema({{"R", {cat("A"), num("B"), num("C"), num("F"), num("y")}, {"A"}}}, {}, "R",
                        Task::BinaryClassification, "y");
}

inline Database abcf_db(const DatabaseSchema& s, std::size_t n = 6) {
  auto db = Database::empty(s);
  for (std::size_t i = 1; i <= n; ++i)
    db.append_row(s, 0, {std::to_string(i), std::to_string((i + 1) % 2), std::to_string(i), std::to_string(2 * i),
                         std::to_string(i % 2)});
  return db;
}

/// Kind of the viewex::Error thrown by `f`, or nullopt if it returns normally.
template <class F>
std::optional<ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline std::filesystem::path source_dir() { return VIEWEX_SOURCE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("viewex_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// designs projected to three attributes, selected on allocation or intervention model.
inline Explanation designs_view(const DatabaseSchema& s) {
  const auto d = s.relation_index("designs");
  const auto& rs = s.relation(d);
  auto e = projection_explanation(
      {{d, rs.index_of("allocation")}, {d, rs.index_of("intervention_model")}, {d, rs.index_of("primary_purpose")}},
      Language::ProjSelect);
  e.selections.push_back({d, {AtomicPredicate::eq(d, rs.index_of("allocation"), "0"),
                              AtomicPredicate::eq(d, rs.index_of("intervention_model"), "0")}});
  return e;
}

/// studies joined through facilities_studies to facilities.
inline Explanation facilities_join(const DatabaseSchema& s) {
  return fkjoin_explanation({s.fk_index("facilities_studies_studies"), s.fk_index("facilities_studies_facilities")});
}

struct PlantedFixture {
  PlantedDataset data;
  TrainResult trained;
};

/// Default planted database and its trained model, built once per process.
inline const PlantedFixture& planted_fixture() {
  static const PlantedFixture f = [] {
    PlantedConfig pc;
    auto d = generate_planted(pc);
    TrainConfig tc;
    auto tr = train(d.schema, d.db, tc);
    return PlantedFixture{std::move(d), std::move(tr)};
  }();
  return f;
}

}  // namespace viewex::testing
