#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace jkoflow {

// Scientific notation, 6 significant digits: the CSV number format.
inline std::string fmt_sci(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.5e", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

inline std::string csv_table(const std::string& header,
                             const std::vector<std::vector<double>>& rows) {
    std::string s = header + "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) s += ",";
            s += fmt_sci(row[i]);
        }
        s += "\n";
    }
    return s;
}

// Echo block embedded in every summary report, for provenance.
inline std::string config_echo(const std::string& experiment,
                               const std::map<std::string, std::string>& kv) {
    std::string s = "# config\n# experiment = " + experiment + "\n";
    for (const auto& [k, v] : kv) s += "# " + k + " = " + v + "\n";
    return s;
}

}  // namespace jkoflow
