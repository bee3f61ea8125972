#include "capkit/records.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace capkit {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail_at(const std::string& path, std::size_t line_no, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

Vec parse_embedding(const ordered_json& arr, const std::string& path, std::size_t line_no,
                    const char* field) {
  if (!arr.is_array() || arr.empty())
    fail_at(path, line_no, std::string(field) + " must be a nonempty array of numbers");
  Vec v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number())
      fail_at(path, line_no, std::string(field) + " must contain only numbers");
    v(static_cast<Index>(i)) = arr[i].get<Scalar>();
  }
  return v;
}

// Renormalizes near-unit embeddings in place; rejects everything else.
// Norms within roundoff of 1 are left untouched so that reloading a
// saved file is bit-stable.
void repair_norm(Vec& v, const std::string& path, std::size_t line_no, const char* field) {
  const Scalar norm = v.norm();
  if (std::abs(norm - 1.0) > kNormRepairTolerance)
    fail_at(path, line_no,
            std::string("embedding not unit-norm (") + field + " has norm " + std::to_string(norm) + ")");
  if (std::abs(norm - 1.0) > 1e-12) v /= norm;
}

ordered_json embedding_to_json(const Vec& v) {
  ordered_json arr = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

} // namespace

RecordSet load_records(const std::string& path) {
  std::ifstream in = open_for_read(path);
  RecordSet rs;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      fail_at(path, line_no, "malformed record line");
    if (!j.contains("id") || !j["id"].is_string())
      fail_at(path, line_no, "missing string field 'id'");
    if (!j.contains("caption") || !j["caption"].is_string())
      fail_at(path, line_no, "missing string field 'caption'");
    if (!j.contains("image_embedding"))
      fail_at(path, line_no, "missing field 'image_embedding'");

    PairRecord rec;
    rec.id = j["id"].get<std::string>();
    rec.caption = j["caption"].get<std::string>();
    rec.url = j.value("url", std::string{});
    rec.image_embedding = parse_embedding(j["image_embedding"], path, line_no, "image_embedding");
    repair_norm(rec.image_embedding, path, line_no, "image_embedding");
    if (j.contains("text_embedding") && !j["text_embedding"].is_null()) {
      Vec t = parse_embedding(j["text_embedding"], path, line_no, "text_embedding");
      repair_norm(t, path, line_no, "text_embedding");
      rec.text_embedding = std::move(t);
    }
    if (j.contains("similarity") && !j["similarity"].is_null()) {
      if (!j["similarity"].is_number())
        fail_at(path, line_no, "similarity must be a number");
      const Scalar s = j["similarity"].get<Scalar>();
      if (!(s >= -1.0 && s <= 1.0))
        fail_at(path, line_no, "similarity " + std::to_string(s) + " outside [-1, 1]");
      rec.similarity = s;
    }

    if (!seen_ids.insert(rec.id).second)
      fail_at(path, line_no, "duplicate id \"" + rec.id + "\"");

    if (rs.dimension == 0) {
      rs.dimension = rec.image_embedding.size();
    } else if (rec.image_embedding.size() != rs.dimension) {
      fail_at(path, line_no,
              "dimension mismatch: expected " + std::to_string(rs.dimension) + ", got " +
                  std::to_string(rec.image_embedding.size()));
    }
    if (rec.text_embedding && rec.text_embedding->size() != rs.dimension)
      fail_at(path, line_no, "text_embedding dimension mismatch");

    rs.records.push_back(std::move(rec));
  }
  return rs;
}

ordered_json record_to_json(const PairRecord& rec) {
  ordered_json j;
  j["id"] = rec.id;
  j["caption"] = rec.caption;
  j["url"] = rec.url;
  j["image_embedding"] = embedding_to_json(rec.image_embedding);
  if (rec.text_embedding) j["text_embedding"] = embedding_to_json(*rec.text_embedding);
  if (rec.similarity) j["similarity"] = *rec.similarity;
  return j;
}

void save_records(const RecordSet& rs, const std::string& path) {
  std::ofstream out = open_for_write(path);
  for (const PairRecord& rec : rs.records) out << record_to_json(rec).dump() << '\n';
}

ValidationReport validate_records(const RecordSet& rs) {
  ValidationReport report;
  std::set<std::string> seen;
  for (const PairRecord& rec : rs.records) {
    if (!seen.insert(rec.id).second)
      report.push_back("duplicate id \"" + rec.id + "\"");
    if (rec.image_embedding.size() != rs.dimension)
      report.push_back("record \"" + rec.id + "\": image_embedding dimension " +
                       std::to_string(rec.image_embedding.size()) + " != " +
                       std::to_string(rs.dimension));
    if (std::abs(rec.image_embedding.norm() - 1.0) > kNormCheckTolerance)
      report.push_back("record \"" + rec.id + "\": image_embedding not unit-norm");
    if (rec.text_embedding) {
      if (rec.text_embedding->size() != rs.dimension)
        report.push_back("record \"" + rec.id + "\": text_embedding dimension " +
                         std::to_string(rec.text_embedding->size()) + " != " +
                         std::to_string(rs.dimension));
      else if (std::abs(rec.text_embedding->norm() - 1.0) > kNormCheckTolerance)
        report.push_back("record \"" + rec.id + "\": text_embedding not unit-norm");
    }
    if (rec.similarity && !(*rec.similarity >= -1.0 && *rec.similarity <= 1.0))
      report.push_back("record \"" + rec.id + "\": similarity " +
                       std::to_string(*rec.similarity) + " outside [-1, 1]");
  }
  return report;
}

PredictionFile load_predictions(const std::string& path) {
  std::ifstream in = open_for_read(path);
  PredictionFile pf;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      fail_at(path, line_no, "malformed prediction line");
    if (!have_header) {
      if (!j.contains("model_id") || !j["model_id"].is_string())
        fail_at(path, line_no, "first line must carry a string field 'model_id'");
      pf.model_id = j["model_id"].get<std::string>();
      have_header = true;
      continue;
    }
    if (!j.contains("image_id") || !j["image_id"].is_string())
      fail_at(path, line_no, "missing string field 'image_id'");
    if (!j.contains("caption") || !j["caption"].is_string())
      fail_at(path, line_no, "missing string field 'caption'");
    PredictionEntry entry;
    entry.caption = j["caption"].get<std::string>();
    if (j.contains("caption_embedding") && !j["caption_embedding"].is_null())
      entry.caption_embedding = parse_embedding(j["caption_embedding"], path, line_no, "caption_embedding");
    const std::string image_id = j["image_id"].get<std::string>();
    if (!pf.entries.emplace(image_id, std::move(entry)).second)
      fail_at(path, line_no, "duplicate image_id \"" + image_id + "\"");
  }
  if (!have_header) throw std::runtime_error(path + ": empty prediction file (no model_id header)");
  return pf;
}

void save_predictions(const PredictionFile& pf, const std::string& path) {
  std::ofstream out = open_for_write(path);
  ordered_json header;
  header["model_id"] = pf.model_id;
  out << header.dump() << '\n';
  for (const auto& [image_id, entry] : pf.entries) {
    ordered_json j;
    j["image_id"] = image_id;
    j["caption"] = entry.caption;
    if (entry.caption_embedding) j["caption_embedding"] = embedding_to_json(*entry.caption_embedding);
    out << j.dump() << '\n';
  }
}

std::map<std::string, std::vector<std::string>> load_references(const std::string& path) {
  std::ifstream in = open_for_read(path);
  std::map<std::string, std::vector<std::string>> refs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      fail_at(path, line_no, "malformed reference line");
    if (!j.contains("image_id") || !j["image_id"].is_string())
      fail_at(path, line_no, "missing string field 'image_id'");
    if (!j.contains("references") || !j["references"].is_array())
      fail_at(path, line_no, "missing array field 'references'");
    std::vector<std::string> group;
    for (const auto& r : j["references"]) {
      if (!r.is_string()) fail_at(path, line_no, "references must be strings");
      group.push_back(r.get<std::string>());
    }
    if (!refs.emplace(j["image_id"].get<std::string>(), std::move(group)).second)
      fail_at(path, line_no, "duplicate image_id \"" + j["image_id"].get<std::string>() + "\"");
  }
  return refs;
}

} // namespace capkit
