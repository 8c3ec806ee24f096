#include <fstream>
#include <numeric>
#include <sstream>

#include "vaeiw/harness.hpp"

namespace vaeiw::harness {

using nlohmann::json;

double mean_score(const std::vector<EpisodeRecord>& runs) {
    if (runs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : runs) sum += r.score;
    return sum / static_cast<double>(runs.size());
}

double normalize_score(double score, double random_score, double human_score) {
    if (human_score == random_score) throw std::invalid_argument("normalize_score: human and random scores coincide");
    return 100.0 * (score - random_score) / (human_score - random_score);
}

json episode_to_json(const EpisodeRecord& rec) {
    return {{"env", rec.env},
            {"backend", rec.backend},
            {"seed", rec.seed},
            {"score", rec.score},
            {"actions", rec.actions},
            {"mean_expanded", rec.mean_expanded()},
            {"mean_depth", rec.mean_depth()},
            {"expanded", rec.expanded},
            {"depth", rec.depth},
            {"wall_seconds", rec.wall_seconds}};
}

EpisodeRecord episode_from_json(const json& j) {
    EpisodeRecord rec;
    rec.env = j.at("env").get<std::string>();
    rec.backend = j.at("backend").get<std::string>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.score = j.at("score").get<double>();
    rec.actions = j.at("actions").get<std::int64_t>();
    rec.expanded = j.value("expanded", std::vector<std::int64_t>{});
    rec.depth = j.value("depth", std::vector<int>{});
    rec.wall_seconds = j.value("wall_seconds", 0.0);
    return rec;
}

json report_to_json(const ScoreReport& report) {
    json entries = json::array();
    for (const EnvScore& s : report.entries) {
        json runs = json::array();
        for (const EpisodeRecord& r : s.runs) runs.push_back(episode_to_json(r));
        json e{{"env", s.env}, {"backend", s.backend}, {"mean_score", s.mean_score}, {"runs", runs}};
        if (s.normalized) e["normalized"] = *s.normalized;
        entries.push_back(std::move(e));
    }
    return {{"entries", entries}};
}

ScoreReport report_from_json(const json& j) {
    ScoreReport report;
    for (const json& e : j.at("entries")) {
        EnvScore s;
        s.env = e.at("env").get<std::string>();
        s.backend = e.at("backend").get<std::string>();
        s.mean_score = e.at("mean_score").get<double>();
        for (const json& r : e.at("runs")) s.runs.push_back(episode_from_json(r));
        if (e.contains("normalized")) s.normalized = e.at("normalized").get<double>();
        report.entries.push_back(std::move(s));
    }
    return report;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string report_to_csv(const ScoreReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "env,backend,seed,score,actions,mean_expanded,mean_depth\n";
    for (const EnvScore& s : report.entries)
        for (const EpisodeRecord& r : s.runs)
            out << csv_field(s.env) << ',' << csv_field(s.backend) << ',' << r.seed << ',' << r.score << ','
                << r.actions << ',' << r.mean_expanded() << ',' << r.mean_depth() << '\n';
    return out.str();
}

void write_report(const ScoreReport& report, const std::filesystem::path& prefix) {
    if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
    std::ofstream csv(prefix.string() + ".csv");
    std::ofstream js(prefix.string() + ".json");
    if (!csv || !js) throw std::runtime_error("cannot write report at " + prefix.string());
    csv << report_to_csv(report);
    js << report_to_json(report).dump(2) << '\n';
}

}  // namespace vaeiw::harness
