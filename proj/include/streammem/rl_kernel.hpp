#pragma once

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace streammem {

inline constexpr double kDefaultClipEpsilon = 0.2;
inline constexpr double kDegenerateStd = 1e-8;

// Trim, case-fold, then drop one trailing period.
std::string normalize_answer(std::string_view answer);

// Binary terminal reward. An absent prediction scores 0.
double reward(const std::optional<std::string>& predicted, std::string_view gold);

// (r - mean) / std with population std; all zeros when std < 1e-8.
std::vector<double> group_advantages(std::span<const double> rewards);

struct SurrogateInput {
    std::vector<double> ratios;
    std::vector<double> advantages;
    double epsilon = kDefaultClipEpsilon;
};

// (1/G) sum_i min(ratio_i * A_i, clip(ratio_i, 1-eps, 1+eps) * A_i)
double clipped_surrogate(const SurrogateInput& input);

// One groups.jsonl line {rewards, ratios, epsilon?} to {advantages, objective}.
nlohmann::json process_group(const nlohmann::json& group);

// Streams groups.jsonl; returns the number of groups written. Errors name the
// offending line.
std::size_t process_groups(std::istream& in, std::ostream& out);

} // namespace streammem
