#include "streammem/harness/questions.hpp"

#include "streammem/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <set>

namespace streammem {

std::string question_prompt(const QuestionItem& item)
{
    std::string out = item.question;
    for (const auto& o : item.options) {
        out += fmt::format("\n{}. {}", o.letter, o.text);
    }
    return out;
}

void validate_questions(const std::vector<QuestionItem>& items)
{
    std::set<std::string> ids;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& q = items[i];
        if (q.id.empty()) {
            throw FormatError(fmt::format("question {} has an empty id", i + 1));
        }
        if (!ids.insert(q.id).second) {
            throw FormatError(fmt::format("duplicate question id '{}'", q.id));
        }
        if (!(q.asked_at_s >= 0.0)) {
            throw FormatError(fmt::format("question '{}' asked at negative time {}", q.id, q.asked_at_s));
        }
        if (i > 0 && q.asked_at_s < items[i - 1].asked_at_s) {
            throw FormatError(fmt::format("questions are not sorted by asked_at_s: '{}' at {}s follows '{}' at {}s", q.id,
                                          q.asked_at_s, items[i - 1].id, items[i - 1].asked_at_s));
        }
        if (q.gold.empty()) {
            throw FormatError(fmt::format("question '{}' has an empty gold answer", q.id));
        }
        if (!q.options.empty()) {
            bool found = false;
            for (const auto& o : q.options) {
                found = found || o.letter == q.gold;
            }
            if (!found) {
                throw FormatError(fmt::format("question '{}': gold '{}' is not an option letter", q.id, q.gold));
            }
        }
    }
}

std::vector<QuestionItem> load_questions(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError(fmt::format("{}: cannot open questions file", path.string()));
    }
    std::vector<QuestionItem> items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            QuestionItem q;
            q.id = j.at("id").get<std::string>();
            q.asked_at_s = j.at("asked_at_s").get<double>();
            q.question = j.at("question").get<std::string>();
            q.gold = j.at("gold").get<std::string>();
            if (j.contains("options") && !j.at("options").is_null()) {
                for (const auto& o : j.at("options")) {
                    q.options.push_back({o.at("letter").get<std::string>(), o.at("text").get<std::string>()});
                }
            }
            if (j.contains("category") && !j.at("category").is_null()) {
                q.category = j.at("category").get<std::string>();
            }
            items.push_back(std::move(q));
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(fmt::format("{}:{}: {}", path.string(), line_no, ex.what()));
        }
    }
    validate_questions(items);
    return items;
}

} // namespace streammem
