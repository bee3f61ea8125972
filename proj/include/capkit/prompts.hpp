#ifndef CAPKIT_PROMPTS_HPP_
#define CAPKIT_PROMPTS_HPP_

#include <string>
#include <vector>

// Instruction templates fed to the captioning model. All renderers are
// pure string functions built on the same base question; every output
// ends in "caption is" so the model completes the caption.

namespace capkit {

inline const std::string kBaseQuestion = "What does the image describe?";
inline constexpr int kDefaultMaxKnowledgeChars = 200;

// "What does the image describe? The {label} caption is"
std::string render_bucket(const std::string& label);

// "What does the image describe? {knowledge}, the caption is" where
// knowledge joins the captions with "; ", truncated at the last whole
// caption that keeps the joined string within max_chars. An empty (or
// fully truncated) list degrades to
// "What does the image describe? The caption is".
std::string render_retrieval(const std::vector<std::string>& captions,
                             int max_chars = kDefaultMaxKnowledgeChars);

// "What does the image describe? {knowledge}, the {label} caption is";
// empty knowledge degrades to render_bucket(label).
std::string render_combined(const std::string& label, const std::vector<std::string>& captions,
                            int max_chars = kDefaultMaxKnowledgeChars);

} // namespace capkit

#endif
