#include <doctest.h>

#include "capkit/prompts.hpp"

#include "synthetic.hpp"

using namespace capkit;

TEST_CASE("render_bucket produces the exact template") {
  CHECK(render_bucket("best match") == "What does the image describe? The best match caption is");
  CHECK(render_bucket("noise") == "What does the image describe? The noise caption is");
  CHECK_THROWS_AS(render_bucket(""), std::invalid_argument);
}

TEST_CASE("render_retrieval joins, truncates and degrades") {
  CHECK(render_retrieval({"a red car on a road"}) ==
        "What does the image describe? a red car on a road, the caption is");
  CHECK(render_retrieval({"a", "b"}, 100) == "What does the image describe? a; b, the caption is");
  CHECK(render_retrieval({}) == "What does the image describe? The caption is");

  SUBCASE("truncation keeps whole captions only") {
    // "first one" fits; adding "; second caption" would not.
    CHECK(render_retrieval({"first one", "second caption"}, 12) ==
          "What does the image describe? first one, the caption is");
  }

  SUBCASE("a single over-budget caption degrades to the empty form") {
    CHECK(render_retrieval({std::string(300, 'x')}, 200) ==
          "What does the image describe? The caption is");
  }
}

TEST_CASE("render_combined composes knowledge before the bucket phrase") {
  CHECK(render_combined("best match", {"a cat"}) ==
        "What does the image describe? a cat, the best match caption is");
  CHECK(render_combined("noise", {}) == render_bucket("noise"));
  CHECK(render_combined("best match", {std::string(500, 'y')}, 200) ==
        render_bucket("best match"));
  CHECK_THROWS_AS(render_combined("", {"a cat"}), std::invalid_argument);
}

TEST_CASE("every rendered prompt starts with the base question") {
  synthetic::Synth synth(79);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> captions;
    const int count = synth.uniform_int(0, 4);
    for (int i = 0; i < count; ++i) captions.push_back(synth.caption(1, 8));
    const std::string label = synth.caption(1, 2);

    for (const std::string& prompt :
         {render_bucket(label), render_retrieval(captions, 60), render_combined(label, captions, 60)}) {
      CHECK(prompt.rfind(kBaseQuestion, 0) == 0);
      const std::string tail = "caption is";
      CHECK(prompt.size() >= tail.size());
      CHECK(prompt.compare(prompt.size() - tail.size(), tail.size(), tail) == 0);
    }
  }
}

TEST_CASE("truncation never splits a caption") {
  synthetic::Synth synth(83);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> captions;
    const int count = synth.uniform_int(1, 6);
    for (int i = 0; i < count; ++i) captions.push_back(synth.caption(2, 10));
    const int budget = synth.uniform_int(5, 80);
    const std::string prompt = render_retrieval(captions, budget);

    // Knowledge is whatever sits between the base question and the tail.
    const std::string head = kBaseQuestion + " ";
    std::string knowledge;
    if (prompt != kBaseQuestion + " The caption is") {
      const std::string tail = ", the caption is";
      knowledge = prompt.substr(head.size(), prompt.size() - head.size() - tail.size());
      CHECK(static_cast<int>(knowledge.size()) <= budget);
    }

    // Each caption appears as a whole "; "-separated piece or not at all.
    std::size_t cursor = 0;
    std::vector<std::string> pieces;
    while (!knowledge.empty()) {
      const std::size_t sep = knowledge.find("; ", cursor);
      if (sep == std::string::npos) {
        pieces.push_back(knowledge.substr(cursor));
        break;
      }
      pieces.push_back(knowledge.substr(cursor, sep - cursor));
      cursor = sep + 2;
    }
    CHECK(pieces.size() <= captions.size());
    for (std::size_t i = 0; i < pieces.size(); ++i) CHECK(pieces[i] == captions[i]);
  }
}
