#include <doctest.h>

#include <algorithm>

#include "capkit/retrieval.hpp"

#include "oracles.hpp"
#include "synthetic.hpp"

using namespace capkit;

namespace {

std::vector<std::vector<double>> matrix_rows(const Mat& m) {
  std::vector<std::vector<double>> rows;
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row;
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<double> vector_of(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<std::string> hit_ids(const std::vector<RetrievalHit>& hits) {
  std::vector<std::string> ids;
  for (const RetrievalHit& h : hits) ids.push_back(h.id);
  return ids;
}

} // namespace

TEST_CASE("build_index respects the url substring filter") {
  synthetic::Synth synth(53);
  const RecordSet rs = synth.record_set(100, 8);

  const VectorIndex full = build_index(rs);
  CHECK(full.size() == 100);
  CHECK(full.ids.front() == rs.records.front().id);

  const VectorIndex filtered = build_index(rs, std::optional<std::string>("tscdn"));
  std::size_t expected = 0;
  for (const PairRecord& rec : rs.records)
    if (rec.url.find("tscdn") != std::string::npos) ++expected;
  CHECK(static_cast<std::size_t>(filtered.size()) == expected);
  CHECK(expected > 0);

  CHECK_THROWS_WITH_AS(build_index(rs, std::optional<std::string>("no-such-host")),
                       doctest::Contains("empty index"), std::invalid_argument);
}

TEST_CASE("top_k finds an exact query vector and honors exclusion") {
  synthetic::Synth synth(59);
  const RecordSet rs = synth.record_set(50, 16);
  const VectorIndex index = build_index(rs);

  const Vec query = rs.records[7].image_embedding;
  const std::vector<RetrievalHit> hits = top_k(index, query, 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].id == rs.records[7].id);
  CHECK(hits[0].similarity == doctest::Approx(1.0));
  CHECK(hits[0].caption == rs.records[7].caption);

  const std::vector<RetrievalHit> other = top_k(index, query, 1, rs.records[7].id);
  REQUIRE(other.size() == 1);
  CHECK(other[0].id != rs.records[7].id);
}

TEST_CASE("top_k equals the brute-force full-scan oracle") {
  synthetic::Synth synth(61);
  const RecordSet rs = synth.record_set(1000, 24);
  const VectorIndex index = build_index(rs);
  const auto rows = matrix_rows(index.matrix);

  for (int trial = 0; trial < 10; ++trial) {
    const Vec query = synth.unit_vector(24);
    const auto hits = top_k(index, query, 30);
    CHECK(hit_ids(hits) == oracle::top_k_ids(index.ids, rows, vector_of(query), 30));
  }

  SUBCASE("with exclusion") {
    const Vec query = rs.records[3].image_embedding;
    const auto hits = top_k(index, query, 10, rs.records[3].id);
    CHECK(hit_ids(hits) ==
          oracle::top_k_ids(index.ids, rows, vector_of(query), 10, rs.records[3].id));
  }

  SUBCASE("k larger than the index returns everything, ranked") {
    const Vec query = synth.unit_vector(24);
    const auto hits = top_k(index, query, 5000);
    CHECK(hits.size() == 1000);
    CHECK(hit_ids(hits) == oracle::top_k_ids(index.ids, rows, vector_of(query), 5000));
  }
}

TEST_CASE("top_k breaks exact ties by ascending id") {
  RecordSet rs;
  rs.dimension = 2;
  const auto make = [&](const std::string& id) {
    PairRecord rec;
    rec.id = id;
    rec.caption = "caption " + id;
    rec.image_embedding = Vec::Zero(2);
    rec.image_embedding(0) = 1.0;
    return rec;
  };
  rs.records = {make("b"), make("a"), make("c")};

  Vec query = Vec::Zero(2);
  query(0) = 1.0;
  const auto hits = top_k(build_index(rs), query, 3);
  CHECK(hit_ids(hits) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("top_k similarities never increase along the hit list") {
  synthetic::Synth synth(67);
  const RecordSet rs = synth.record_set(300, 12);
  const VectorIndex index = build_index(rs);
  for (int trial = 0; trial < 5; ++trial) {
    const auto hits = top_k(index, synth.unit_vector(12), 50);
    for (std::size_t i = 1; i < hits.size(); ++i)
      CHECK(hits[i - 1].similarity >= hits[i].similarity);
  }
}

TEST_CASE("top_k argument validation") {
  synthetic::Synth synth(71);
  const VectorIndex index = build_index(synth.record_set(10, 8));
  CHECK_THROWS_AS(top_k(index, synth.unit_vector(9), 3), std::invalid_argument);
  CHECK_THROWS_AS(top_k(index, synth.unit_vector(8), 0), std::invalid_argument);
}

TEST_CASE("clean_filter applies rules in order") {
  const CleaningRules rules{3, 30, 0.8};
  const auto with_caption = [](const std::string& caption) {
    PairRecord rec;
    rec.id = "x";
    rec.caption = caption;
    rec.image_embedding = Vec::Ones(1);
    return rec;
  };

  CHECK(clean_filter(with_caption("red car"), rules).reason == CleanReason::too_short);

  std::string long_caption = "word";
  for (int i = 0; i < 39; ++i) long_caption += " word";
  CHECK(clean_filter(with_caption(long_caption), rules).reason == CleanReason::too_long);

  CHECK(clean_filter(with_caption("a dog in a park"), rules).keep);
  CHECK(clean_filter(with_caption("a dog in a park"), rules).reason == CleanReason::kept);

  CHECK(clean_filter(with_caption("один два три четыре"), rules).reason ==
        CleanReason::non_english);
  // Too short wins over non-English: rules are checked in order.
  CHECK(clean_filter(with_caption("один два"), rules).reason == CleanReason::too_short);

  CHECK(std::string(to_string(CleanReason::too_short)) == "too_short");
  CHECK(std::string(to_string(CleanReason::too_long)) == "too_long");
  CHECK(std::string(to_string(CleanReason::non_english)) == "non_english");
}

TEST_CASE("filtering retrieved hits keeps at most k and preserves order") {
  synthetic::Synth synth(73);
  const RecordSet rs = synth.record_set(200, 8);
  const VectorIndex index = build_index(rs);
  const CleaningRules rules{4, 9, 0.5};

  const auto hits = top_k(index, synth.unit_vector(8), 25);
  std::vector<std::string> survivors;
  for (const RetrievalHit& hit : hits) {
    PairRecord rec;
    rec.id = hit.id;
    rec.caption = hit.caption;
    rec.image_embedding = Vec::Ones(1);
    if (clean_filter(rec, rules).keep) survivors.push_back(hit.id);
  }
  CHECK(survivors.size() <= 25);

  // Survivors appear in the same relative order as in the hit list.
  std::size_t cursor = 0;
  for (const RetrievalHit& hit : hits) {
    if (cursor < survivors.size() && hit.id == survivors[cursor]) ++cursor;
  }
  CHECK(cursor == survivors.size());
}
