#include "streammem/rl_kernel.hpp"

#include "streammem/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace streammem {

std::string normalize_answer(std::string_view answer)
{
    const auto first = answer.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = answer.find_last_not_of(" \t\r\n");
    std::string out(answer.substr(first, last - first + 1));
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!out.empty() && out.back() == '.') {
        out.pop_back();
    }
    return out;
}

double reward(const std::optional<std::string>& predicted, std::string_view gold)
{
    if (!predicted) {
        return 0.0;
    }
    return normalize_answer(*predicted) == normalize_answer(gold) ? 1.0 : 0.0;
}

std::vector<double> group_advantages(std::span<const double> rewards)
{
    const std::size_t g = rewards.size();
    if (g < 2) {
        throw ArgumentError(fmt::format("group size must be at least 2, got {}", g));
    }
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
    }
    const double sd = std::sqrt(var / static_cast<double>(g));
    std::vector<double> adv(g, 0.0);
    if (sd < kDegenerateStd) {
        return adv;
    }
    for (std::size_t i = 0; i < g; ++i) {
        adv[i] = (rewards[i] - mean) / sd;
    }
    return adv;
}

double clipped_surrogate(const SurrogateInput& input)
{
    if (input.ratios.size() != input.advantages.size()) {
        throw DimensionError(fmt::format("{} ratios vs {} advantages", input.ratios.size(), input.advantages.size()));
    }
    if (input.ratios.empty()) {
        throw ArgumentError("empty group");
    }
    if (!(input.epsilon > 0.0 && input.epsilon < 1.0)) {
        throw ArgumentError(fmt::format("epsilon must lie in (0, 1), got {}", input.epsilon));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < input.ratios.size(); ++i) {
        const double ratio = input.ratios[i];
        if (!(ratio > 0.0) || !std::isfinite(ratio)) {
            throw ArgumentError(fmt::format("ratio {} is not positive", ratio));
        }
        const double a = input.advantages[i];
        const double clipped = std::clamp(ratio, 1.0 - input.epsilon, 1.0 + input.epsilon);
        total += std::min(ratio * a, clipped * a);
    }
    return total / static_cast<double>(input.ratios.size());
}

nlohmann::json process_group(const nlohmann::json& group)
{
    const auto rewards = group.at("rewards").get<std::vector<double>>();
    SurrogateInput in;
    in.advantages = group_advantages(rewards);
    in.ratios = group.contains("ratios") ? group.at("ratios").get<std::vector<double>>()
                                         : std::vector<double>(rewards.size(), 1.0);
    in.epsilon = group.value("epsilon", kDefaultClipEpsilon);
    const double objective = clipped_surrogate(in);
    return {{"advantages", in.advantages}, {"objective", objective}};
}

std::size_t process_groups(std::istream& in, std::ostream& out)
{
    std::string line;
    std::size_t line_no = 0;
    std::size_t written = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json result;
        try {
            result = process_group(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(fmt::format("groups line {}: {}", line_no, ex.what()));
        } catch (const Error& ex) {
            throw FormatError(fmt::format("groups line {}: {}", line_no, ex.what()));
        }
        out << result.dump() << '\n';
        ++written;
    }
    return written;
}

} // namespace streammem
