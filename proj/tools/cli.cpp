#include "cli.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "leviathan/approx.hpp"
#include "leviathan/checkpoint.hpp"
#include "leviathan/config.hpp"
#include "leviathan/errors.hpp"
#include "leviathan/scaling.hpp"
#include "leviathan/trainer.hpp"

namespace leviathan::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string precision;
    std::string out;
};

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IngestionError("cannot write " + path.string());
    f << text;
    if (!f)
        throw IngestionError("short write to " + path.string());
}

std::string read_text(const fs::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IngestionError("cannot read " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

Json read_json(const fs::path& path)
{
    try {
        return Json::parse(read_text(path));
    } catch (const Json::exception& e) {
        throw FormatError(path.string() + " is not valid JSON: " + e.what());
    }
}

std::string pretty(const Json& j)
{
    return j.dump(2) + "\n";
}

bool quiet()
{
    const char* level = std::getenv("LEVIATHAN_LOG_LEVEL");
    return level && (std::string(level) == "quiet" || std::string(level) == "error");
}

// Expands a trailing-component wildcard; other paths pass through.
std::vector<fs::path> expand(const std::vector<std::string>& patterns)
{
    std::vector<fs::path> out;
    for (const auto& p : patterns) {
        const fs::path path(p);
        const std::string leaf = path.filename().string();
        if (leaf.find_first_of("*?[") == std::string::npos) {
            out.push_back(path);
            continue;
        }
        const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
        std::vector<fs::path> hits;
        if (fs::is_directory(dir))
            for (const auto& e : fs::directory_iterator(dir))
                if (fnmatch(leaf.c_str(), e.path().filename().c_str(), 0) == 0)
                    hits.push_back(path.has_parent_path() ? dir / e.path().filename() : e.path().filename());
        std::sort(hits.begin(), hits.end());
        out.insert(out.end(), hits.begin(), hits.end());
    }
    if (out.empty())
        throw ConfigError("no inputs matched");
    return out;
}

// ---------------------------------------------------------------- data

fs::path resolve(const fs::path& base, const std::string& p)
{
    if (p.empty())
        return {};
    const fs::path path(p);
    return fs::absolute(path.is_absolute() ? path : base / path).lexically_normal();
}

struct LoadedData {
    std::shared_ptr<const BlockSource> source;
    Vocab vocab;
    std::shared_ptr<std::vector<std::uint32_t>> ids;
};

LoadedData load_data(const ExperimentConfig& c)
{
    LoadedData d;
    if (!c.data.tokens.empty()) {
        TokenFile f = read_token_file(c.data.tokens);
        d.vocab = f.vocab;
        d.ids = std::make_shared<std::vector<std::uint32_t>>(std::move(f.ids));
    } else if (!c.data.corpus.empty()) {
        TokenizedCorpus t = tokenize_corpus(read_text(c.data.corpus), c.data.scheme, c.data.k);
        d.vocab = t.vocab;
        d.ids = std::make_shared<std::vector<std::uint32_t>>(std::move(t.ids));
    } else {
        throw ConfigError("config needs data.corpus or data.tokens");
    }
    if (d.vocab.raw_size != c.model.vocab_raw || d.vocab.padded_size != c.model.vocab)
        throw ConfigError("model vocab (" + std::to_string(c.model.vocab_raw) + " raw, " +
                          std::to_string(c.model.vocab) + " padded) does not match the data (" +
                          std::to_string(d.vocab.raw_size) + ", " + std::to_string(d.vocab.padded_size) + ")");
    d.source = std::make_shared<BlockSource>(d.ids, c.train.seq_len, c.train.validation_fraction);
    return d;
}

// Loads the config, resolves data paths against its directory and applies
// the global overrides.
ExperimentConfig load_config(const std::string& path, const Globals& g)
{
    if (path.empty())
        throw ConfigError("--config is required");
    ExperimentConfig c = load_experiment_config(path);
    const fs::path base = fs::absolute(fs::path(path)).parent_path();
    c.data.corpus = resolve(base, c.data.corpus).string();
    c.data.tokens = resolve(base, c.data.tokens).string();
    if (g.seed)
        c.train.seed = *g.seed;
    if (!g.precision.empty())
        c.train.precision = precision_from_string(g.precision);
    if (!g.out.empty())
        c.out = g.out;
    if (c.model.input_mode == InputMode::generator && !c.model.generator)
        c.model.generator = c.generator ? *c.generator : desk_generator(c.model.vocab_raw, c.data.k, c.model.dim);
    c.model.validate();
    c.train.validate();
    return c;
}

fs::path run_dir(const ExperimentConfig& c, const Json& resolved, const std::string& kind)
{
    if (!c.out.empty())
        return c.out;
    const char* root = std::getenv("LEVIATHAN_OUT");
    const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
    return base / (kind + "-" + hex64(config_hash(resolved)));
}

void write_config(const fs::path& dir, const Json& resolved)
{
    write_text(dir / "config.json", pretty(resolved));
    write_text(dir / "config_hash.txt", hex64(config_hash(resolved)) + "\n");
}

std::optional<double> final_loss(const MetricLog& log)
{
    const std::size_t total = log.run.at("train").at("total_steps").get<std::size_t>();
    // Partial runs (--steps) have no final loss yet.
    if (log.evals.size() < 10 || log.train.empty() || log.train.back().step < total)
        return std::nullopt;
    return final_validation_loss(log, total);
}

Json opt_json(const std::optional<double>& v)
{
    return v ? Json(*v) : Json(nullptr);
}

// ---------------------------------------------------------------- commands

int cmd_tokenize(const std::string& corpus, const std::string& scheme, std::uint32_t k, const Globals& g,
                 std::ostream& out)
{
    if (g.out.empty())
        throw ConfigError("tokenize needs --out <token file>");
    const TokenizedCorpus t = tokenize_corpus(read_text(corpus), token_scheme_from_string(scheme), k);
    write_token_file(g.out, t.ids, t.vocab);
    const Json summary{{"tokens", t.ids.size()},
                       {"scheme", scheme},
                       {"k", k},
                       {"vocab_raw", t.vocab.raw_size},
                       {"vocab_padded", t.vocab.padded_size},
                       {"base", t.vocab.base},
                       {"unigram_entropy_nats", unigram_entropy(t.ids)},
                       {"file", g.out}};
    write_text(fs::path(g.out).string() + ".json", pretty(summary));
    out << "tokenized " << t.ids.size() << " tokens, V_raw " << t.vocab.raw_size << " -> V " << t.vocab.padded_size
        << " (b " << t.vocab.base << ", k " << k << ")\n";
    return exit_ok;
}

int cmd_train(const std::string& config_path, std::optional<std::size_t> steps, const std::string& resume_path,
              const Globals& g, std::ostream& out)
{
    const ExperimentConfig c = load_config(config_path, g);
    const LoadedData data = load_data(c);
    const Json resolved = to_json(c);
    const fs::path dir = run_dir(c, resolved, "train");
    write_config(dir, resolved);
    fs::create_directories(dir / "checkpoints");

    Trainer trainer = resume_path.empty() ? Trainer(c.model, c.train, data.source)
                                          : Trainer::resume(read_checkpoint(resume_path), data.source);
    trainer.set_failure_checkpoint(dir / "checkpoints" / "failed.lvck");
    const bool talk = !quiet();
    std::size_t evals_seen = trainer.log().evals.size();
    auto observer = [&](const Trainer& t) {
        if (c.train.checkpoint_every && t.step() % c.train.checkpoint_every == 0)
            t.save(dir / "checkpoints" / ("step_" + std::to_string(t.step()) + ".lvck"));
        if (talk && t.log().evals.size() > evals_seen) {
            const EvalRecord& e = t.log().evals.back();
            out << "step " << e.step << " val_loss " << e.loss << " ppl " << e.perplexity << '\n';
            evals_seen = t.log().evals.size();
        }
    };
    trainer.run(steps ? *steps : SIZE_MAX, observer);
    trainer.save(dir / "checkpoints" / "final.lvck");
    trainer.log().write(dir / "metrics.jsonl");

    const auto fin = final_loss(trainer.log());
    const Json summary{{"config_hash", hex64(config_hash(resolved))},
                       {"input_mode", to_string(c.model.input_mode)},
                       {"params", trainer.param_count()},
                       {"steps", trainer.step()},
                       {"tokens_seen", trainer.log().train.empty() ? 0 : trainer.log().train.back().tokens_seen},
                       {"stream_hash", hex64(trainer.stream().hash())},
                       {"last_val_loss", trainer.log().evals.empty() ? Json(nullptr) : Json(trainer.log().evals.back().loss)},
                       {"final_val_loss", opt_json(fin)}};
    write_text(dir / "summary.json", pretty(summary));
    out << "run " << dir.string() << ": " << trainer.param_count() << " params, " << trainer.step() << " steps";
    if (fin)
        out << ", final val loss " << *fin;
    out << '\n';
    return exit_ok;
}

int cmd_pair(const std::string& config_path, const std::string& regime_name, bool concurrent, const Globals& g,
             std::ostream& out)
{
    ExperimentConfig c = load_config(config_path, g);
    if (!regime_name.empty())
        c.regime = regime_from_string(regime_name);
    const Regime regime = c.regime.value_or(Regime::iso_body);
    c.regime = regime;
    const GeneratorConfig gen = c.generator ? *c.generator : desk_generator(c.model.vocab_raw, c.data.k, c.model.dim);
    c.generator = gen;
    const LoadedData data = load_data(c);
    const Json resolved = to_json(c);
    const fs::path dir = run_dir(c, resolved, "pair");
    write_config(dir, resolved);

    const PairPlan plan = plan_pair(c.model, regime, gen);
    const PairResult r = run_pair(plan, c.train, data.source, concurrent);
    fs::create_directories(dir / "dense");
    fs::create_directories(dir / "leviathan");
    r.dense.write(dir / "dense" / "metrics.jsonl");
    r.leviathan.write(dir / "leviathan" / "metrics.jsonl");
    std::ostringstream csv;
    csv << std::setprecision(17) << "step,tokens_seen,dense_loss,leviathan_loss,reduction_pct\n";
    for (const auto& p : r.curve)
        csv << p.step << ',' << p.tokens_seen << ',' << p.dense_loss << ',' << p.leviathan_loss << ',' << p.reduction
            << '\n';
    write_text(dir / "curve.csv", csv.str());
    Json summary = r.summary();
    summary["config_hash"] = hex64(config_hash(resolved));
    write_text(dir / "summary.json", pretty(summary));

    out << "pair " << dir.string() << " (" << to_string(regime) << "): dense " << plan.dense_params
        << " params, leviathan " << plan.leviathan_params << " params (L " << plan.leviathan.layers << ")\n";
    out << "streams " << (r.streams_match() ? "match" : "DIFFER") << ", " << r.curve.size() << " eval points\n";
    if (r.final_reduction)
        out << "final reduction " << *r.final_reduction << "% (" << (*r.final_reduction >= 0 ? "leviathan" : "dense")
            << " lower)\n";
    return exit_ok;
}

int cmd_eval(const std::string& run, const std::string& checkpoint, std::ostream& out)
{
    if (run.empty())
        throw ConfigError("eval needs --run <run dir>");
    const fs::path dir(run);
    ExperimentConfig c = experiment_config_from_json(read_json(dir / "config.json"));
    const LoadedData data = load_data(c);
    const fs::path ckpt = checkpoint.empty() ? dir / "checkpoints" / "final.lvck" : fs::path(checkpoint);
    const Trainer t = Trainer::resume(read_checkpoint(ckpt), data.source);
    const double loss = t.validation_loss();
    const Json result{{"checkpoint", ckpt.string()}, {"step", t.step()}, {"val_loss", loss}, {"perplexity", std::exp(loss)}};
    write_text(dir / "eval.json", pretty(result));
    out << "step " << t.step() << " val_loss " << loss << " ppl " << std::exp(loss) << '\n';
    return exit_ok;
}

// A run directory holds metrics.jsonl; a pair directory holds dense/ and
// leviathan/ runs.
std::vector<fs::path> metric_files(const fs::path& p)
{
    if (fs::is_regular_file(p))
        return {p};
    if (fs::is_regular_file(p / "metrics.jsonl"))
        return {p / "metrics.jsonl"};
    if (fs::is_regular_file(p / "dense" / "metrics.jsonl"))
        return {p / "dense" / "metrics.jsonl", p / "leviathan" / "metrics.jsonl"};
    throw IngestionError("no metrics found under " + p.string());
}

std::string family_of(const MetricLog& log)
{
    return log.run.at("model").at("input_mode").get<std::string>() == "generator" ? "leviathan" : "dense";
}

double loss_of(const MetricLog& log)
{
    if (auto f = final_loss(log))
        return *f;
    if (log.evals.empty())
        throw AnalysisError("run has no validation evaluations");
    return log.evals.back().loss;
}

std::uint64_t tokens_of(const MetricLog& log)
{
    return log.train.empty() ? 0 : log.train.back().tokens_seen;
}

int cmd_fit(const std::string& family, const std::string& axis_name, const std::vector<std::string>& logs,
            const std::string& fixture, const std::string& regime, double b, bool free_b, const Globals& g,
            std::ostream& out)
{
    Json result;
    if (!fixture.empty()) {
        if (fixture != "published")
            throw ConfigError("unknown fit fixture '" + fixture + "' (expected published)");
        result = Json::array();
        for (const auto& law : published_laws()) {
            if (!regime.empty() && law.regime != regime)
                continue;
            if (!family.empty() && law.family != family)
                continue;
            std::vector<ScalingPoint> pts;
            for (double x : {1e7, 1e8, 1e9, 1e10})
                pts.push_back({x, eval_law(law.fit, x)});
            const PowerLawFit f = fit_power_law(pts, law.fit.b_fixed, law.fit.axis);
            Json row = f.to_json();
            row["regime"] = law.regime;
            row["family"] = law.family;
            result.push_back(row);
            out << std::setprecision(12) << law.regime << ' ' << law.family << ' ' << to_string(law.fit.axis)
                << ": A " << f.A << " alpha " << f.alpha << '\n';
        }
    } else {
        if (family != "dense" && family != "leviathan")
            throw ConfigError("--family must be dense or leviathan");
        const ScalingAxis axis = scaling_axis_from_string(axis_name);
        std::vector<ScalingPoint> pts;
        for (const auto& p : expand(logs))
            for (const auto& file : metric_files(p)) {
                const MetricLog log = MetricLog::read(file);
                if (family_of(log) != family)
                    continue;
                const double x = axis == ScalingAxis::parameters ? log.run.at("params").get<double>()
                                                                 : static_cast<double>(tokens_of(log));
                pts.push_back({x, loss_of(log)});
            }
        std::sort(pts.begin(), pts.end(), [](const auto& l, const auto& r) { return l.x < r.x; });
        const PowerLawFit f = free_b ? fit_power_law_free_b(pts, 0.0, std::nullopt, axis)
                                     : fit_power_law(pts, b, axis);
        result = f.to_json();
        result["family"] = family;
        result["points"] = pts.size();
        out << std::setprecision(12) << family << ' ' << to_string(axis) << ": L = " << f.A << " x^-" << f.alpha
            << " + " << f.b_fixed << " (rms " << f.residual << ", " << pts.size() << " points)\n";
    }
    if (!g.out.empty())
        write_text(g.out, pretty(result));
    return exit_ok;
}

int cmd_report(const std::vector<std::string>& pairs, const std::vector<std::string>& runs, const std::string& law,
               const Globals& g, std::ostream& out)
{
    struct Entry {
        std::string run;
        MetricLog log;
        std::optional<double> reduction;
    };
    std::vector<Entry> entries;
    if (!pairs.empty())
        for (const auto& p : expand(pairs)) {
            const Json s = read_json(p / "summary.json");
            MetricLog dense = MetricLog::read(p / "dense" / "metrics.jsonl");
            MetricLog lev = MetricLog::read(p / "leviathan" / "metrics.jsonl");
            const double dl = loss_of(dense), ll = loss_of(lev);
            if (s.at("dense_stream_hash") != s.at("leviathan_stream_hash"))
                throw ConsistencyError("pair " + p.string() + " consumed different token streams");
            entries.push_back({(p / "dense").generic_string(), std::move(dense), std::nullopt});
            entries.push_back({(p / "leviathan").generic_string(), std::move(lev), perplexity_reduction(dl, ll)});
        }
    if (!runs.empty())
        for (const auto& p : expand(runs))
            entries.push_back({p.generic_string(), MetricLog::read(metric_files(p).front()), std::nullopt});

    std::optional<PowerLawFit> dense_fit;
    if (!law.empty()) {
        dense_fit = published_law(law, "dense", ScalingAxis::parameters);
    } else {
        std::vector<ScalingPoint> pts;
        for (const auto& e : entries)
            if (family_of(e.log) == "dense")
                pts.push_back({e.log.run.at("params").get<double>(), loss_of(e.log)});
        std::sort(pts.begin(), pts.end(), [](const auto& l, const auto& r) { return l.x < r.x; });
        const bool distinct = pts.size() >= 2 && pts.front().x != pts.back().x;
        if (distinct) {
            try {
                dense_fit = fit_power_law(pts);
            } catch (const NumericDomainError&) {
            }
        }
    }

    std::vector<FrontierRow> rows;
    for (const auto& e : entries) {
        FrontierRow r;
        r.run = e.run;
        r.family = family_of(e.log);
        r.params = e.log.run.at("params").get<std::uint64_t>();
        r.tokens = tokens_of(e.log);
        r.loss = loss_of(e.log);
        r.perplexity = std::exp(r.loss);
        if (dense_fit && r.loss > dense_fit->b_fixed)
            r.effective_params = effective_size(r.loss, *dense_fit);
        r.reduction = e.reduction;
        rows.push_back(r);
    }
    const std::string csv = frontier_csv(rows);
    if (!g.out.empty())
        write_text(g.out, csv);
    out << csv;
    return exit_ok;
}

int cmd_count(const std::string& preset, std::uint64_t V, std::uint64_t V_raw, std::size_t D, std::size_t L,
              std::size_t H, const std::string& tie, const GeneratorConfig& knobs, bool knobs_set, bool json,
              std::ostream& out)
{
    ModelConfig m;
    std::uint64_t reported = 0;
    std::string label;
    if (!preset.empty()) {
        const Preset& p = find_preset(preset);
        m = p.model;
        reported = p.reported_params;
        label = p.name;
    } else {
        if (!V || !D || !L || !H)
            throw ConfigError("count-params needs --preset or all of --V --D --L --H");
        m.vocab = V;
        m.vocab_raw = V_raw ? V_raw : V;
        m.dim = D;
        m.layers = L;
        m.heads = H;
        m.input_mode = input_mode_from_string(tie == "tied" ? "dense_tied" : tie == "untied" ? "dense_untied" : tie);
        if (m.input_mode == InputMode::generator) {
            GeneratorConfig gc = GeneratorConfig::for_vocab(m.vocab_raw, knobs.k, D);
            if (knobs_set) {
                gc.d_seed = knobs.d_seed;
                gc.segments = knobs.segments;
                gc.degree = knobs.degree;
                gc.modes = knobs.modes;
                gc.mode_channels = knobs.mode_channels;
            }
            m.generator = gc;
        }
        label = "custom";
    }
    m.validate();
    const ParamCount count = model_param_count(m);
    if (json) {
        Json parts = Json::object();
        for (const auto& [name, n] : count.parts)
            parts[name] = n;
        Json j{{"model", label}, {"total", count.total()}, {"parts", parts}};
        if (reported)
            j["reported"] = reported;
        out << pretty(j);
        return exit_ok;
    }
    for (const auto& [name, n] : count.parts)
        out << std::left << std::setw(14) << name << n << '\n';
    out << std::left << std::setw(14) << "total" << count.total() << '\n';
    if (reported) {
        const double dev = 100.0 * (static_cast<double>(count.total()) - static_cast<double>(reported)) /
                           static_cast<double>(reported);
        out << std::left << std::setw(14) << "reported" << reported << " (" << std::showpos << std::fixed
            << std::setprecision(2) << dev << std::noshowpos << "%)\n";
    }
    return exit_ok;
}

int cmd_approx(const std::string& fixture, ApproxConfig cfg, const Globals& g, std::ostream& out)
{
    if (g.seed)
        cfg.seed = *g.seed;
    const ApproxResult r = fit_surface(surface_fixture(fixture), cfg);
    const Json j = r.to_json();
    if (!g.out.empty())
        write_text(g.out, pretty(j));
    out << fixture << " M " << cfg.modes << " G " << cfg.segments << ": sup error " << r.sup_error << " after "
        << r.steps_run << " steps" << (r.diverged ? " (diverged)" : "") << '\n';
    return r.diverged ? exit_runtime : exit_ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Leviathan embedding-generator experiments", "leviathan"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Top-level seed (overrides the config)");
    app.add_option("--precision", g.precision, "single|double")->check(CLI::IsMember({"single", "double"}));
    app.add_option("--out", g.out, "Output directory or file");

    std::string corpus, scheme = "byte";
    std::uint32_t k = 3;
    auto* tokenize = app.add_subcommand("tokenize", "Tokenize a UTF-8 corpus into a token file");
    tokenize->add_option("--corpus", corpus)->required();
    tokenize->add_option("--scheme", scheme)->check(CLI::IsMember({"byte", "word"}));
    tokenize->add_option("--k", k);

    std::string config, resume;
    std::optional<std::size_t> steps;
    auto* train = app.add_subcommand("train", "Train one model from a config");
    train->add_option("--config", config)->required();
    train->add_option("--steps", steps, "Stop after this many logical steps");
    train->add_option("--resume", resume, "Continue from a checkpoint");

    std::string regime;
    bool concurrent = false;
    auto* pair = app.add_subcommand("pair", "Train a Dense/Leviathan pair on one token stream");
    pair->add_option("--config", config)->required();
    pair->add_option("--regime", regime)->check(CLI::IsMember({"iso_body", "iso-body", "isoparam", "isoparametric"}));
    pair->add_flag("--concurrent", concurrent);

    std::string run_path, checkpoint;
    auto* eval = app.add_subcommand("eval", "Validation loss of a checkpoint");
    eval->add_option("--run", run_path)->required();
    eval->add_option("--checkpoint", checkpoint);

    std::string family, axis = "params", fixture;
    std::vector<std::string> logs;
    double b = irreducible_loss;
    bool free_b = false;
    auto* fit = app.add_subcommand("fit", "Fit L = A x^-alpha + b to run logs");
    fit->add_option("--family", family)->check(CLI::IsMember({"dense", "leviathan"}));
    fit->add_option("--axis", axis)->check(CLI::IsMember({"params", "tokens"}));
    fit->add_option("--logs", logs);
    fit->add_option("--fixture", fixture, "published: refit the bundled fitted laws");
    fit->add_option("--regime", regime);
    fit->add_option("--b", b, "Irreducible loss");
    fit->add_flag("--free-b", free_b);

    std::vector<std::string> pairs, runs;
    std::string law;
    auto* report = app.add_subcommand("report", "Frontier CSV over runs and pairs");
    report->add_option("--pairs", pairs);
    report->add_option("--runs", runs);
    report->add_option("--law", law, "Use a published dense law for effective size (iso_body|isoparam)");

    std::string preset, tie = "tied";
    std::uint64_t V = 0, V_raw = 0;
    std::size_t D = 0, L = 0, H = 0;
    GeneratorConfig knobs;
    bool json = false;
    auto* count = app.add_subcommand("count-params", "Closed-form parameter count");
    count->add_option("--preset", preset);
    count->add_option("--V", V);
    count->add_option("--V-raw", V_raw);
    count->add_option("--D", D);
    count->add_option("--L", L);
    count->add_option("--H", H);
    count->add_option("--tie", tie)->check(CLI::IsMember({"tied", "untied", "generator"}));
    count->add_option("--k", knobs.k);
    const std::vector<CLI::Option*> knob_opts = {count->add_option("--d-seed", knobs.d_seed), count->add_option("--segments", knobs.segments),
                       count->add_option("--degree", knobs.degree), count->add_option("--modes", knobs.modes),
                       count->add_option("--channels", knobs.mode_channels)};
    count->add_flag("--json", json);

    ApproxConfig acfg;
    std::string afixture;
    auto* approx = app.add_subcommand("approx", "Fit a separable spline surface to a fixture");
    approx->add_option("--fixture", afixture)->required();
    approx->add_option("--modes", acfg.modes);
    approx->add_option("--segments", acfg.segments);
    approx->add_option("--degree", acfg.degree);
    approx->add_option("--steps", acfg.steps);
    approx->add_option("--lr", acfg.lr);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        if (app.get_subcommands().empty())
            err << app.help();
        return exit_usage;
    }

    try {
        if (*tokenize)
            return cmd_tokenize(corpus, scheme, k, g, out);
        if (*train)
            return cmd_train(config, steps, resume, g, out);
        if (*pair)
            return cmd_pair(config, regime, concurrent, g, out);
        if (*eval)
            return cmd_eval(run_path, checkpoint, out);
        if (*fit) {
            if (fixture.empty() && logs.empty())
                throw ConfigError("fit needs --logs or --fixture");
            return cmd_fit(family, axis, logs, fixture, regime, b, free_b, g, out);
        }
        if (*report) {
            if (pairs.empty() && runs.empty())
                throw ConfigError("report needs --pairs or --runs");
            return cmd_report(pairs, runs, law, g, out);
        }
        if (*count) {
            bool knobs_set = false;
            for (auto* o : knob_opts)
                knobs_set = knobs_set || o->count() > 0;
            return cmd_count(preset, V, V_raw, D, L, H, tie, knobs, knobs_set, json, out);
        }
        if (*approx)
            return cmd_approx(afixture, acfg, g, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_usage;
}

}  // namespace leviathan::cli
