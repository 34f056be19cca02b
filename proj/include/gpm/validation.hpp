#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gpm/context.hpp"

namespace gpm {

class Tolerances {
public:
    static Tolerances load(const std::filesystem::path& path);
    static Tolerances parse(std::string_view text, std::string_view source = "<memory>");

    // Throws ConfigError when the criterion or key is missing.
    double get(int criterion, std::string_view key) const;
    bool has(int criterion) const;
    const nlohmann::json& raw() const { return doc_; }

private:
    nlohmann::json doc_;
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string tolerance;
    std::string worst;    // worst offending row / value
    std::string detail;
};

struct ValidationResult {
    std::vector<CriterionResult> criteria;
    bool pass() const;
};

inline constexpr int kCriterionCount = 15;

std::filesystem::path default_tolerances_path(const std::filesystem::path& data_dir);

// Throws ConfigError for an empty store/catalog or a missing tolerance entry.
ValidationResult validate(const ModelContext& ctx, const Tolerances& tol);
CriterionResult run_criterion(int id, const ModelContext& ctx, const Tolerances& tol);

std::string format_result_line(const CriterionResult& c);

} // namespace gpm
