#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace streammem {

struct QuestionOption {
    std::string letter;
    std::string text;
};

// One line of a questions file:
//   {"id": "q1", "asked_at_s": 42.0, "question": "...",
//    "options": [{"letter": "A", "text": "..."}], "gold": "A", "category": "ocr"}
// options and category are optional.
struct QuestionItem {
    std::string id;
    double asked_at_s = 0.0;
    std::string question;
    std::vector<QuestionOption> options;
    std::string gold;
    std::optional<std::string> category;
};

// Question text with options appended one per line as "A. text".
std::string question_prompt(const QuestionItem& item);

// Rejects unsorted files, negative ask times, duplicate ids, empty gold and a
// gold that is not one of the option letters.
std::vector<QuestionItem> load_questions(const std::filesystem::path& path);

void validate_questions(const std::vector<QuestionItem>& items);

} // namespace streammem
