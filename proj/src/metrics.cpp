#include "leviathan/metrics.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include "leviathan/errors.hpp"

namespace leviathan {

void MetricLog::add(const TrainRecord& r)
{
    if (!train.empty() && r.tokens_seen < train.back().tokens_seen)
        throw ConsistencyError("tokens_seen must be monotone");
    train.push_back(r);
    order_.push_back(false);
}

void MetricLog::add(const EvalRecord& r)
{
    evals.push_back(r);
    order_.push_back(true);
}

namespace {

Json record_json(const TrainRecord& r)
{
    return Json{{"event", "train"}, {"step", r.step},  {"tokens_seen", r.tokens_seen},
                {"loss", r.loss},   {"lr", r.lr},      {"grad_norm", r.grad_norm}};
}

Json record_json(const EvalRecord& r)
{
    return Json{{"event", "eval"},
                {"step", r.step},
                {"tokens_seen", r.tokens_seen},
                {"val_loss", r.loss},
                {"perplexity", r.perplexity}};
}

double number(const Json& j, const char* key)
{
    const Json& v = j.at(key);
    // Non-finite values are written as null.
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

Json MetricLog::to_json() const
{
    Json records = Json::array();
    std::size_t ti = 0, ei = 0;
    for (bool is_eval : order_)
        records.push_back(is_eval ? record_json(evals[ei++]) : record_json(train[ti++]));
    return Json{{"run", run}, {"records", records}};
}

MetricLog MetricLog::from_json(const Json& j)
{
    MetricLog log;
    log.run = j.at("run");
    for (const Json& r : j.at("records")) {
        const std::string event = r.at("event").get<std::string>();
        if (event == "train")
            log.add(TrainRecord{r.at("step").get<std::size_t>(), r.at("tokens_seen").get<std::uint64_t>(),
                                number(r, "loss"), number(r, "lr"), number(r, "grad_norm")});
        else if (event == "eval")
            log.add(EvalRecord{r.at("step").get<std::size_t>(), r.at("tokens_seen").get<std::uint64_t>(),
                               number(r, "val_loss"), number(r, "perplexity")});
        else
            throw FormatError("unknown metric event '" + event + "'");
    }
    return log;
}

std::string MetricLog::to_jsonl() const
{
    std::ostringstream out;
    Json header = run;
    header["event"] = "run";
    out << header.dump() << '\n';
    const Json j = to_json();
    for (const Json& r : j.at("records"))
        out << r.dump() << '\n';
    return out.str();
}

MetricLog MetricLog::from_jsonl(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    Json records = Json::array();
    Json run = Json::object();
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        Json r;
        try {
            r = Json::parse(line);
        } catch (const Json::exception& e) {
            throw FormatError("metric log line " + std::to_string(lineno) + ": " + e.what());
        }
        if (r.value("event", "") == "run") {
            r.erase("event");
            run = std::move(r);
        } else {
            records.push_back(std::move(r));
        }
    }
    try {
        return from_json(Json{{"run", run}, {"records", records}});
    } catch (const Json::exception& e) {
        throw FormatError(std::string("malformed metric record: ") + e.what());
    }
}

void MetricLog::write(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write metric log " + path.string());
    out << to_jsonl();
}

MetricLog MetricLog::read(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open metric log " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_jsonl(buf.str());
}

double final_validation_loss(const std::vector<EvalRecord>& evals, std::size_t total_steps)
{
    if (evals.size() < 10)
        throw AnalysisError("final validation loss needs at least 10 eval points, got " +
                            std::to_string(evals.size()));
    const std::size_t window = (total_steps + 9) / 10;
    const std::size_t start = total_steps - window;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& e : evals)
        if (e.step > start && e.step <= total_steps) {
            sum += e.loss;
            ++n;
        }
    if (n == 0)
        throw AnalysisError("no eval points fall in the last 10% of " + std::to_string(total_steps) + " steps");
    return sum / static_cast<double>(n);
}

double final_validation_loss(const MetricLog& log, std::size_t total_steps)
{
    return final_validation_loss(log.evals, total_steps);
}

}  // namespace leviathan
