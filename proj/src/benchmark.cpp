#include "instancegen/benchmark.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace instancegen::bench {

using nlohmann::json;
namespace fs = std::filesystem;

std::string tier_name(Tier t) {
    switch (t) {
        case Tier::A: return "A";
        case Tier::B: return "B";
        case Tier::C: return "C";
    }
    return "?";
}

Tier tier_from_name(const std::string& name) {
    if (name == "A") return Tier::A;
    if (name == "B") return Tier::B;
    if (name == "C") return Tier::C;
    throw ValidationError("unknown tier: " + name);
}

std::string band_name(CountBand b) {
    switch (b) {
        case CountBand::Low: return "low";
        case CountBand::Mid: return "mid";
        case CountBand::High: return "high";
    }
    return "?";
}

CountBand band_from_name(const std::string& name) {
    if (name == "low") return CountBand::Low;
    if (name == "mid") return CountBand::Mid;
    if (name == "high") return CountBand::High;
    throw ValidationError("unknown count band: " + name);
}

std::string BenchmarkPrompt::key() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%03d_%s_%s", family_id, tier_name(tier).c_str(),
                  band_name(band).c_str());
    return buf;
}

// ---------------------------------------------------------------------------
// Suite loading
// ---------------------------------------------------------------------------

namespace {
int expected_questions(Tier t) { return t == Tier::A ? 1 : t == Tier::B ? 2 : 3; }
}  // namespace

std::vector<BenchmarkPrompt> load_suite(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open suite file: " + path);

    std::vector<BenchmarkPrompt> suite;
    std::set<std::string> seen_prompts;
    std::map<int, int> family_counts;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("suite line " + std::to_string(line_no) + ": " + e.what());
        }
        BenchmarkPrompt p;
        p.family_id = doc.at("family_id").get<int>();
        p.tier = tier_from_name(doc.at("tier").get<std::string>());
        p.band = band_from_name(doc.at("band").get<std::string>());
        p.prompt = doc.at("prompt").get<std::string>();
        p.provenance = doc.value("provenance", "authored");
        for (const auto& q : doc.at("questions")) p.questions.push_back(q.get<std::string>());

        if (p.family_id < 1 || p.family_id > 60)
            throw ValidationError("suite line " + std::to_string(line_no) + ": family_id " +
                                  std::to_string(p.family_id) + " outside 1..60");
        if (int(p.questions.size()) != expected_questions(p.tier))
            throw ValidationError("suite line " + std::to_string(line_no) + ": tier " +
                                  tier_name(p.tier) + " requires " +
                                  std::to_string(expected_questions(p.tier)) + " questions, got " +
                                  std::to_string(p.questions.size()));
        if (!seen_prompts.insert(p.prompt).second)
            throw ValidationError("suite line " + std::to_string(line_no) + ": duplicate prompt '" +
                                  p.prompt + "'");
        if (++family_counts[p.family_id] > 9)
            throw ValidationError("suite: family " + std::to_string(p.family_id) +
                                  " has more than 9 variants");
        suite.push_back(std::move(p));
    }

    if (suite.size() != 540)
        throw ValidationError("suite must contain exactly 540 prompts, got " +
                              std::to_string(suite.size()));
    for (const auto& [family, count] : family_counts)
        if (count != 9)
            throw ValidationError("suite: family " + std::to_string(family) + " has " +
                                  std::to_string(count) + " variants, expected 9");
    return suite;
}

std::string suite_to_jsonl(const std::vector<BenchmarkPrompt>& suite) {
    std::string out;
    for (const auto& p : suite) {
        nlohmann::ordered_json doc;
        doc["family_id"] = p.family_id;
        doc["tier"] = tier_name(p.tier);
        doc["band"] = band_name(p.band);
        doc["prompt"] = p.prompt;
        doc["questions"] = p.questions;
        doc["provenance"] = p.provenance;
        out += doc.dump();
        out += "\n";
    }
    return out;
}

int score_vqa_accuracy(const std::vector<bool>& answers) {
    if (answers.empty()) throw ValidationError("score_vqa_accuracy: no answers");
    return std::all_of(answers.begin(), answers.end(), [](bool b) { return b; }) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalResult evaluate(const std::string& results_dir, const std::vector<BenchmarkPrompt>& suite,
                    JudgeBackend& judge, SimilarityBackend& similarity) {
    EvalResult out;
    std::map<std::string, std::pair<double, int>> tier_acc, band_acc;
    double sim_sum = 0.0;

    for (const auto& prompt : suite) {
        PromptResult res;
        res.prompt = prompt;
        fs::path image = fs::path(results_dir) / prompt.key() / "output.png";
        res.image_path = image.string();
        if (!fs::exists(image)) {
            ++out.missing_count;
            out.per_prompt.push_back(std::move(res));
            continue;
        }
        res.evaluated = true;
        for (const auto& q : prompt.questions)
            res.answers.push_back(judge_yes_no(judge, res.image_path, q));
        res.vqa_acc = score_vqa_accuracy(res.answers);
        res.vqa_sim = similarity_score(similarity, res.image_path, prompt.prompt);

        auto& ta = tier_acc[tier_name(prompt.tier)];
        ta.first += res.vqa_acc;
        ta.second += 1;
        auto& ba = band_acc[band_name(prompt.band)];
        ba.first += res.vqa_acc;
        ba.second += 1;
        sim_sum += res.vqa_sim;
        ++out.evaluated_count;
        out.per_prompt.push_back(std::move(res));
    }

    for (const auto& [tier, acc] : tier_acc) out.acc_by_tier[tier] = acc.first / acc.second;
    for (const auto& [band, acc] : band_acc) out.acc_by_band[band] = acc.first / acc.second;
    if (out.evaluated_count > 0) {
        double acc_sum = 0;
        for (const auto& r : out.per_prompt) acc_sum += r.evaluated ? r.vqa_acc : 0;
        out.overall_acc = acc_sum / out.evaluated_count;
        out.mean_sim = sim_sum / out.evaluated_count;
    }
    return out;
}

void report(const EvalResult& result, const std::string& out_dir) {
    fs::create_directories(out_dir);

    std::ostringstream csv;
    csv << "family_id,tier,band,prompt,answers,vqa_acc,vqa_sim,image_path\n";
    for (const auto& r : result.per_prompt) {
        std::string answers;
        for (bool b : r.answers) answers += b ? 'y' : 'n';
        std::string prompt = r.prompt.prompt;
        std::string escaped;
        for (char c : prompt) {
            if (c == '"') escaped += "\"\"";
            else escaped += c;
        }
        csv << r.prompt.family_id << ',' << tier_name(r.prompt.tier) << ','
            << band_name(r.prompt.band) << ",\"" << escaped << "\"," << answers << ','
            << (r.evaluated ? std::to_string(r.vqa_acc) : std::string()) << ','
            << (r.evaluated ? format_fixed(r.vqa_sim, 4) : std::string()) << ',' << r.image_path
            << "\n";
    }
    write_text_file((fs::path(out_dir) / "results.csv").string(), csv.str());

    nlohmann::ordered_json summary;
    summary["evaluated"] = result.evaluated_count;
    summary["missing"] = result.missing_count;
    summary["vqa_acc"] = {{"overall", result.overall_acc}};
    for (const auto& [tier, acc] : result.acc_by_tier) summary["vqa_acc"][tier] = acc;
    summary["vqa_acc_by_band"] = result.acc_by_band;
    summary["vqa_sim"] = result.mean_sim;
    write_text_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2));

    std::vector<std::string> tiers = {"A", "B", "C"};
    std::vector<double> tier_vals;
    for (const auto& t : tiers)
        tier_vals.push_back(result.acc_by_tier.count(t) ? result.acc_by_tier.at(t) : 0.0);
    write_png((fs::path(out_dir) / "summary_by_tier.png").string(),
              render_bar_chart(tiers, tier_vals, "VQA ACC BY TIER"));

    std::vector<std::string> bands = {"low", "mid", "high"};
    std::vector<double> band_vals;
    for (const auto& b : bands)
        band_vals.push_back(result.acc_by_band.count(b) ? result.acc_by_band.at(b) : 0.0);
    write_png((fs::path(out_dir) / "summary_by_band.png").string(),
              render_bar_chart(bands, band_vals, "VQA ACC BY BAND"));
}

// ---------------------------------------------------------------------------
// Suite generation runs
// ---------------------------------------------------------------------------

BenchRunStats bench_run(const std::vector<BenchmarkPrompt>& suite, const RunConfig& base_config,
                        const std::string& out_dir, int jobs) {
    fs::create_directories(out_dir);
    BenchRunStats stats;
    stats.total = int(suite.size());
    jobs = std::max(1, jobs);

    std::atomic<std::size_t> next{0};
    std::atomic<int> succeeded{0}, failed{0};

    auto worker = [&] {
        // isolated backends per worker; synthetic backends are pure
        BackendSuite backends = make_backend_suite(base_config.backends);
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= suite.size()) return;
            const auto& prompt = suite[i];
            RunConfig cfg = base_config;
            cfg.prompt = prompt.prompt;
            cfg.output_dir = (fs::path(out_dir) / prompt.key()).string();
            RunRecord record = run_pipeline(cfg, backends);
            if (record.success)
                succeeded.fetch_add(1);
            else
                failed.fetch_add(1);
        }
    };

    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    stats.succeeded = succeeded.load();
    stats.failed = failed.load();
    return stats;
}

}  // namespace instancegen::bench
