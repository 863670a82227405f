#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "leviathan/config.hpp"

namespace leviathan {

struct TrainRecord {
    std::size_t step = 0;  // logical step, 1-based
    std::uint64_t tokens_seen = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
};

struct EvalRecord {
    std::size_t step = 0;
    std::uint64_t tokens_seen = 0;
    double loss = 0.0;
    double perplexity = 0.0;
};

/// Per-run metrics, serialized as JSONL: one "run" header line, then "train"
/// and "eval" records in the order they happened.
class MetricLog {
public:
    Json run;  // free-form header: configs, hashes, parameter counts
    std::vector<TrainRecord> train;
    std::vector<EvalRecord> evals;

    void add(const TrainRecord& r);
    void add(const EvalRecord& r);

    std::string to_jsonl() const;
    static MetricLog from_jsonl(const std::string& text);
    void write(const std::filesystem::path& path) const;
    static MetricLog read(const std::filesystem::path& path);

    Json to_json() const;
    static MetricLog from_json(const Json& j);

private:
    // Interleaving of train (false) and eval (true) records.
    std::vector<bool> order_;
};

// Mean of the validation losses whose step lies in the last 10% of
// total_steps, i.e. step > total - ceil(total / 10). Needs >= 10 evals.
double final_validation_loss(const MetricLog& log, std::size_t total_steps);
double final_validation_loss(const std::vector<EvalRecord>& evals, std::size_t total_steps);

}  // namespace leviathan
