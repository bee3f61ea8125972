#include "capkit/prompts.hpp"

#include <stdexcept>

namespace capkit {

namespace {

// Joins captions with "; ", keeping only whole captions that fit
// within max_chars. Never splits a caption mid-string.
std::string join_knowledge(const std::vector<std::string>& captions, int max_chars) {
  std::string knowledge;
  for (const std::string& caption : captions) {
    if (caption.empty()) continue;
    const std::size_t grown =
        knowledge.empty() ? caption.size() : knowledge.size() + 2 + caption.size();
    if (grown > static_cast<std::size_t>(max_chars)) break;
    if (!knowledge.empty()) knowledge += "; ";
    knowledge += caption;
  }
  return knowledge;
}

} // namespace

std::string render_bucket(const std::string& label) {
  if (label.empty()) throw std::invalid_argument("render_bucket: empty label");
  return kBaseQuestion + " The " + label + " caption is";
}

std::string render_retrieval(const std::vector<std::string>& captions, int max_chars) {
  const std::string knowledge = join_knowledge(captions, max_chars);
  if (knowledge.empty()) return kBaseQuestion + " The caption is";
  return kBaseQuestion + " " + knowledge + ", the caption is";
}

std::string render_combined(const std::string& label, const std::vector<std::string>& captions,
                            int max_chars) {
  if (label.empty()) throw std::invalid_argument("render_combined: empty label");
  const std::string knowledge = join_knowledge(captions, max_chars);
  if (knowledge.empty()) return render_bucket(label);
  return kBaseQuestion + " " + knowledge + ", the " + label + " caption is";
}

} // namespace capkit
