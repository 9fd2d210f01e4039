#include "replay.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace curling::cli {

namespace {

constexpr double kScale = 24.0;  // pixels per field unit
constexpr double kStrip = 48.0;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

std::string frame_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%02zu.svg", i + 1);
    return buf;
}

}  // namespace

std::string render_frame(const MatchTrace& trace, std::size_t throw_index, const SimConfig& c) {
    const ThrowRecord& r = trace.throws.at(throw_index);
    const double w = c.field_width * kScale;
    const double h = c.field_length * kScale;
    // Field y grows away from the thrower; the far end is drawn at the top.
    auto px = [&](double x) { return num(x * kScale); };
    auto py = [&](double y) { return num(kStrip + (c.field_length - y) * kScale); };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h + kStrip) +
                    "\" viewBox=\"0 0 " + num(w) + " " + num(h + kStrip) + "\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + num(w) + "\" height=\"" + num(kStrip) + "\" fill=\"#222\"/>\n";
    s += "<text x=\"8\" y=\"20\" font-family=\"monospace\" font-size=\"14\" fill=\"#fff\">game " +
         std::to_string(r.game) + " throw " + std::to_string(r.index + 1) + " team " + team_name(r.team) + "</text>\n";
    s += "<text x=\"8\" y=\"40\" font-family=\"monospace\" font-size=\"14\" fill=\"#fff\">score A " +
         std::to_string(r.score_after[0]) + " - B " + std::to_string(r.score_after[1]) + "</text>\n";
    s += "<rect x=\"0\" y=\"" + num(kStrip) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" fill=\"#eef4fa\" stroke=\"#555\"/>\n";
    s += "<line x1=\"0\" y1=\"" + py(c.red_line_y) + "\" x2=\"" + num(w) + "\" y2=\"" + py(c.red_line_y) +
         "\" stroke=\"#c33\" stroke-width=\"2\"/>\n";
    double house = c.house_radius.value_or(3.0);
    for (double frac : {1.0, 2.0 / 3.0, 1.0 / 3.0})
        s += "<circle cx=\"" + px(c.center_target.x) + "\" cy=\"" + py(c.center_target.y) + "\" r=\"" +
             num(house * frac * kScale) + "\" fill=\"none\" stroke=\"#36c\" stroke-width=\"2\"/>\n";
    for (const auto& st : r.stones_after)
        s += "<circle cx=\"" + px(st.x) + "\" cy=\"" + py(st.y) + "\" r=\"" + num(c.stone_radius * kScale) +
             "\" fill=\"" + (st.team == Team::A ? "#d33" : "#ec2") + "\" stroke=\"#000\"/>\n";
    s += "</svg>\n";
    return s;
}

ReplayResult render_replay(const MatchTrace& trace, const SimConfig& config, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    ReplayResult res;
    res.expected_throws = 4 * kThrowsPerTeam;
    res.truncated = static_cast<int>(trace.throws.size()) < res.expected_throws;
    std::string index = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>match seed " +
                        std::to_string(trace.seed) + "</title></head><body>\n<h1>match seed " +
                        std::to_string(trace.seed) + ": A " + std::to_string(trace.total[0]) + " - B " +
                        std::to_string(trace.total[1]) + "</h1>\n<ol>\n";
    for (std::size_t i = 0; i < trace.throws.size(); ++i) {
        std::string name = frame_name(i);
        write_file(fs::path(out_dir) / name, render_frame(trace, i, config));
        const auto& r = trace.throws[i];
        index += "<li><a href=\"" + name + "\">game " + std::to_string(r.game) + " throw " +
                 std::to_string(r.index + 1) + " (" + team_name(r.team) + ")</a></li>\n";
        res.frames.push_back(name);
    }
    index += "</ol>\n";
    if (res.truncated)
        index += "<p>trace truncated after " + std::to_string(trace.throws.size()) + " throws</p>\n";
    index += "</body></html>\n";
    write_file(fs::path(out_dir) / "index.html", index);
    return res;
}

}  // namespace curling::cli
