#pragma once

// Schema descriptor (JSON) and CSV directory layout.
//
// Descriptor:
//   {
//     "relations": [
//       {"name": "studies",
//        "attributes": [{"name": "nct_id", "kind": "categorical"},
//                       {"name": "enrollment", "kind": "numeric"}],
//        "key": ["nct_id"]}
//     ],
//     "foreign_keys": [
//       {"id": "designs_nct_id", "source": "designs", "columns": ["nct_id"], "target": "studies"}
//     ],
//     "target": "studies",
//     "task": "binary_classification" | "regression",
//     "label": "outcome"
//   }
//
// Data: <data_dir>/<relation>.csv, headered, one column per declared attribute.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "json.hpp"
#include "viewex/csv.hpp"
#include "viewex/relstore.hpp"

namespace viewex {

using Json = nlohmann::ordered_json;

inline Json schema_to_json(const DatabaseSchema& schema) {
  Json j;
  j["relations"] = Json::array();
  for (const auto& r : schema.relations()) {
    Json rj;
    rj["name"] = r.name;
    rj["attributes"] = Json::array();
    for (const auto& a : r.attributes) rj["attributes"].push_back({{"name", a.name}, {"kind", to_string(a.kind)}});
    rj["key"] = r.key;
    j["relations"].push_back(std::move(rj));
  }
  j["foreign_keys"] = Json::array();
  for (const auto& fk : schema.fks())
    j["foreign_keys"].push_back(
        {{"id", fk.id}, {"source", fk.source_relation}, {"columns", fk.source_attrs}, {"target", fk.target_relation}});
  j["target"] = schema.target_relation_name();
  j["task"] = to_string(schema.task());
  j["label"] = schema.label_attr_name();
  return j;
}

inline Task parse_task(const std::string& s) {
  if (s == "binary_classification" || s == "classification") return Task::BinaryClassification;
  if (s == "regression") return Task::Regression;
  fail(ErrorKind::ParseError, "unknown task '" + s + "'");
}

inline DatabaseSchema schema_from_json(const Json& j) {
  try {
    std::vector<RelationSchema> relations;
    for (const auto& rj : j.at("relations")) {
      RelationSchema r;
      r.name = rj.at("name").get<std::string>();
      for (const auto& aj : rj.at("attributes")) {
        AttributeDef a;
        a.name = aj.at("name").get<std::string>();
        const auto kind = aj.at("kind").get<std::string>();
        if (kind == "numeric")
          a.kind = AttrKind::Numeric;
        else if (kind == "categorical" || kind == "text")
          a.kind = AttrKind::Categorical;
        else
          fail(ErrorKind::ParseError, "unknown attribute kind '" + kind + "'");
        r.attributes.push_back(std::move(a));
      }
      r.key = rj.at("key").get<std::vector<std::string>>();
      relations.push_back(std::move(r));
    }
    std::vector<ForeignKey> fks;
    if (j.contains("foreign_keys")) {
      for (const auto& fj : j.at("foreign_keys")) {
        fks.push_back({fj.at("id").get<std::string>(), fj.at("source").get<std::string>(),
                       fj.at("columns").get<std::vector<std::string>>(), fj.at("target").get<std::string>()});
      }
    }
    return DatabaseSchema(std::move(relations), std::move(fks), j.at("target").get<std::string>(),
                          parse_task(j.at("task").get<std::string>()), j.at("label").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("schema descriptor: ") + e.what());
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::NotFound, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::NotFound, "cannot write " + path.string());
  out << text;
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline DatabaseSchema load_schema(const std::filesystem::path& path) { return schema_from_json(read_json_file(path)); }

inline void save_schema(const std::filesystem::path& path, const DatabaseSchema& schema) {
  write_json_file(path, schema_to_json(schema));
}

/// Reads one headered CSV into relation `rel`. Header order may differ from the schema.
inline void read_relation_csv(const DatabaseSchema& schema, Database& db, std::size_t rel, std::istream& in,
                              const std::string& source_name) {
  const auto& rs = schema.relation(rel);
  std::vector<std::string> header, fields;
  std::size_t line = 1;
  if (!csv::read_record(in, header, line))
    fail(ErrorKind::ParseError, source_name + ": missing header for relation " + rs.name);
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);
  if (header.size() != rs.attributes.size())
    fail(ErrorKind::ParseError, source_name + ": relation " + rs.name + " header has " +
                                    std::to_string(header.size()) + " columns, schema declares " +
                                    std::to_string(rs.attributes.size()));
  std::vector<std::size_t> order(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto idx = rs.find(header[i]);
    if (!idx) fail(ErrorKind::ParseError, source_name + ": relation " + rs.name + " has undeclared column " + header[i]);
    order[i] = *idx;
  }
  std::vector<std::string> cells(rs.attributes.size());
  std::size_t row = 0;
  while (true) {
    const std::size_t record_line = line;
    if (!csv::read_record(in, fields, line)) break;
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    ++row;
    if (fields.size() != header.size())
      fail(ErrorKind::ParseError, source_name + ": relation " + rs.name + " row " + std::to_string(row) + " (line " +
                                      std::to_string(record_line) + ") has " + std::to_string(fields.size()) +
                                      " fields, expected " + std::to_string(header.size()));
    for (std::size_t i = 0; i < fields.size(); ++i) cells[order[i]] = std::move(fields[i]);
    try {
      db.append_row(schema, rel, cells);
    } catch (const Error& e) {
      fail(ErrorKind::ParseError, source_name + ": relation " + rs.name + " row " + std::to_string(row) + ": " + e.what());
    }
  }
}

/// Loads and validates a database; any constraint violation aborts with SchemaViolation.
inline std::pair<DatabaseSchema, Database> load_csv_database(const std::filesystem::path& schema_file,
                                                             const std::filesystem::path& data_dir) {
  auto schema = load_schema(schema_file);
  auto db = Database::empty(schema);
  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    const auto path = data_dir / (schema.relation(r).name + ".csv");
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::ParseError, "missing data file " + path.string());
    read_relation_csv(schema, db, r, in, path.filename().string());
  }
  auto report = validate_database(schema, db);
  if (!report.ok()) fail(ErrorKind::SchemaViolation, report.summary());
  return {std::move(schema), std::move(db)};
}

inline void write_relation_csv(const DatabaseSchema& schema, const Database& db, std::size_t rel, std::ostream& out) {
  const auto& rs = schema.relation(rel);
  const auto& data = db.relation(rel);
  std::vector<std::string> fields;
  for (const auto& a : rs.attributes) fields.push_back(a.name);
  csv::write_record(out, fields);
  for (std::size_t row = 0; row < data.rows(); ++row) {
    for (std::size_t c = 0; c < rs.attributes.size(); ++c) fields[c] = db.render(rel, c, data.at(row, c));
    csv::write_record(out, fields);
  }
}

inline void write_csv_database(const DatabaseSchema& schema, const Database& db, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    std::ofstream out(dir / (schema.relation(r).name + ".csv"), std::ios::binary);
    if (!out) fail(ErrorKind::NotFound, "cannot write " + (dir / (schema.relation(r).name + ".csv")).string());
    write_relation_csv(schema, db, r, out);
  }
}

}  // namespace viewex
