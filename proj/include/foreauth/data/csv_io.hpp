#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <system_error>
#include <vector>

#include "foreauth/common/error.hpp"
#include "foreauth/data/session.hpp"

namespace foreauth::data {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kSessionHeader = "t,x,y,z,trigger";
inline constexpr const char* kManifestName = "manifest.txt";

namespace detail {

inline double parse_number(std::string_view cell, const std::string& file, int row, const char* column) {
    double v = 0.0;
    const auto* first = cell.data();
    const auto* last = cell.data() + cell.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last)
        throw DataError(file + ": row " + std::to_string(row) + ": non-numeric " + column + " value '" + std::string(cell) + "'");
    if (!std::isfinite(v)) throw DataError(file + ": row " + std::to_string(row) + ": non-finite " + column + " value");
    return v;
}

/// Shortest decimal representation that round-trips the double exactly.
inline std::string format_number(double v) {
    std::array<char, 64> buf{};
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), p);
}

inline std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

} // namespace detail

/// Parses one session CSV (`t,x,y,z,trigger`). expected_rows > 0 enforces the
/// canonical trial length; 0 accepts any positive row count.
inline TimeMatrix load_session_file(const fs::path& path, int expected_rows = kSessionLength) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open session file " + path.string());
    const std::string name = path.string();
    std::string line;
    if (!std::getline(in, line)) throw DataError(name + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kSessionHeader)
        throw DataError(name + ": row 1: expected header '" + std::string(kSessionHeader) + "', got '" + line + "'");

    std::vector<double> rows;
    int row = 1; // header consumed
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_line(line);
        if (cells.size() != 5)
            throw DataError(name + ": row " + std::to_string(row) + ": expected 5 columns, got " + std::to_string(cells.size()));
        const double t = detail::parse_number(cells[0], name, row, "t");
        const int expected_t = row - 2;
        if (t != static_cast<double>(expected_t))
            throw DataError(name + ": row " + std::to_string(row) + ": timestamp index " + detail::format_number(t) +
                            " out of order (expected " + std::to_string(expected_t) + ")");
        const double x = detail::parse_number(cells[1], name, row, "x");
        const double y = detail::parse_number(cells[2], name, row, "y");
        const double z = detail::parse_number(cells[3], name, row, "z");
        const double trig = detail::parse_number(cells[4], name, row, "trigger");
        if (trig < 0.0 || trig > 1.0)
            throw DataError(name + ": row " + std::to_string(row) + ": trigger " + detail::format_number(trig) + " outside [0,1]");
        rows.insert(rows.end(), {x, y, z, trig});
    }
    const int n = static_cast<int>(rows.size()) / kChannels;
    if (n == 0) throw DataError(name + ": no data rows");
    if (expected_rows > 0 && n != expected_rows)
        throw DataError(name + ": has " + std::to_string(n) + " data rows, expected " + std::to_string(expected_rows));
    TimeMatrix m(n, kChannels);
    m.values = std::move(rows);
    return m;
}

inline void save_session_file(const fs::path& path, const TimeMatrix& samples) {
    if (samples.cols != kChannels) throw ShapeError("save_session_file: expected " + std::to_string(kChannels) + " columns");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write session file " + path.string());
    out << kSessionHeader << "\n";
    for (int t = 0; t < samples.rows; ++t) {
        out << t;
        for (int c = 0; c < kChannels; ++c) out << ',' << detail::format_number(samples.at(t, c));
        out << "\n";
    }
    if (!out) throw DataError("write failure on " + path.string());
}

/// Key-value manifest describing a session corpus directory.
struct CorpusManifest {
    int schema_version = kSchemaVersion;
    std::vector<std::string> users;
    int sessions_per_day = 0;
    int timestamps = kSessionLength;
};

inline void save_manifest(const fs::path& root, const CorpusManifest& m) {
    std::ofstream out(root / kManifestName);
    if (!out) throw DataError("cannot write manifest under " + root.string());
    out << "schema_version=" << m.schema_version << "\n";
    out << "root=" << root.string() << "\n";
    out << "users=";
    for (std::size_t i = 0; i < m.users.size(); ++i) out << (i ? "," : "") << m.users[i];
    out << "\n";
    out << "sessions_per_day=" << m.sessions_per_day << "\n";
    out << "timestamps=" << m.timestamps << "\n";
}

inline CorpusManifest load_manifest(const fs::path& root) {
    std::ifstream in(root / kManifestName);
    if (!in) throw DataError("missing manifest " + (root / kManifestName).string());
    CorpusManifest m;
    m.timestamps = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "schema_version")
            m.schema_version = std::stoi(val);
        else if (key == "sessions_per_day")
            m.sessions_per_day = std::stoi(val);
        else if (key == "timestamps")
            m.timestamps = std::stoi(val);
        else if (key == "users") {
            for (const auto& cell : detail::split_line(val))
                if (!cell.empty()) m.users.emplace_back(cell);
        }
    }
    if (m.schema_version != kSchemaVersion)
        throw DataError("manifest schema version " + std::to_string(m.schema_version) + " unsupported (expected " +
                        std::to_string(kSchemaVersion) + ")");
    return m;
}

/// All sessions of a corpus, indexed by (user, day).
struct Corpus {
    std::vector<Session> sessions;

    std::vector<std::string> users() const {
        std::set<std::string> s;
        for (const auto& ses : sessions) s.insert(ses.user_id);
        return {s.begin(), s.end()};
    }

    /// Sessions of one user on one day, ordered by session_index.
    std::vector<const Session*> sessions_of(const std::string& user, int day) const {
        std::vector<const Session*> out;
        for (const auto& s : sessions)
            if (s.user_id == user && s.day == day) out.push_back(&s);
        std::sort(out.begin(), out.end(), [](const Session* a, const Session* b) { return a->session_index < b->session_index; });
        return out;
    }

    const Session* find(const std::string& user, int day, int session_index) const {
        for (const auto& s : sessions)
            if (s.user_id == user && s.day == day && s.session_index == session_index) return &s;
        return nullptr;
    }
};

/// Loads a corpus from `<root>/<user>/day<1|2>/session<k>.csv`. The manifest
/// is consulted when present; its user list must then match the directories.
inline Corpus load_sessions(const fs::path& root, int expected_rows = kSessionLength) {
    if (!fs::is_directory(root)) throw DataError("corpus root " + root.string() + " is not a directory");

    std::vector<std::string> manifest_users;
    if (fs::exists(root / kManifestName)) manifest_users = load_manifest(root).users;

    Corpus corpus;
    std::vector<std::string> dir_users;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) dir_users.push_back(entry.path().filename().string());
    std::sort(dir_users.begin(), dir_users.end());
    if (dir_users.empty()) throw DataError("corpus root " + root.string() + " contains no user directories");
    if (!manifest_users.empty()) {
        auto sorted = manifest_users;
        std::sort(sorted.begin(), sorted.end());
        if (sorted != dir_users)
            throw DataError("manifest user list does not match directories under " + root.string());
    }

    for (const auto& user : dir_users) {
        for (int day = 1; day <= 2; ++day) {
            const fs::path day_dir = root / user / ("day" + std::to_string(day));
            if (!fs::is_directory(day_dir)) continue;
            std::vector<fs::path> files;
            for (const auto& f : fs::directory_iterator(day_dir))
                if (f.path().extension() == ".csv") files.push_back(f.path());
            std::sort(files.begin(), files.end());
            for (const auto& file : files) {
                const std::string stem = file.stem().string(); // session<k>
                if (stem.rfind("session", 0) != 0)
                    throw DataError("unexpected file name " + file.string() + " (expected session<k>.csv)");
                int idx = 0;
                const std::string digits = stem.substr(7);
                auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
                if (ec != std::errc() || p != digits.data() + digits.size())
                    throw DataError("unexpected file name " + file.string() + " (expected session<k>.csv)");
                Session s;
                s.user_id = user;
                s.day = day;
                s.session_index = idx;
                s.samples = load_session_file(file, expected_rows);
                corpus.sessions.push_back(std::move(s));
            }
        }
    }
    if (corpus.sessions.empty()) throw DataError("no session files found under " + root.string());
    return corpus;
}

/// Writes a full corpus in the canonical layout, plus its manifest.
inline void save_sessions(const fs::path& root, const Corpus& corpus) {
    fs::create_directories(root);
    int max_index = 0;
    for (const auto& s : corpus.sessions) {
        const fs::path dir = root / s.user_id / ("day" + std::to_string(s.day));
        fs::create_directories(dir);
        std::string idx = std::to_string(s.session_index);
        if (idx.size() < 2) idx.insert(idx.begin(), '0');
        save_session_file(dir / ("session" + idx + ".csv"), s.samples);
        max_index = std::max(max_index, s.session_index + 1);
    }
    CorpusManifest m;
    m.users = corpus.users();
    m.sessions_per_day = max_index;
    m.timestamps = corpus.sessions.empty() ? 0 : corpus.sessions.front().length();
    save_manifest(root, m);
}

/// One classifier score attached to its window identity; the contract
/// between the authenticator and the evaluation stage.
struct ScoreRecord {
    std::string user;
    int window_id = 0;
    int label = 1;
    double genuine_probability = 0.0;
};

inline constexpr const char* kScoresHeader = "user,window_id,label,genuine_probability";

inline void save_scores(const fs::path& path, const std::vector<ScoreRecord>& scores) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write scores file " + path.string());
    out << kScoresHeader << "\n";
    for (const auto& s : scores)
        out << s.user << ',' << s.window_id << ',' << s.label << ',' << detail::format_number(s.genuine_probability) << "\n";
}

inline std::vector<ScoreRecord> load_scores(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scores file " + path.string());
    const std::string name = path.string();
    std::string line;
    if (!std::getline(in, line) || (line != kScoresHeader && line != std::string(kScoresHeader) + "\r"))
        throw DataError(name + ": bad scores header");
    std::vector<ScoreRecord> out;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_line(line);
        if (cells.size() != 4) throw DataError(name + ": row " + std::to_string(row) + ": expected 4 columns");
        ScoreRecord r;
        r.user = std::string(cells[0]);
        r.window_id = static_cast<int>(detail::parse_number(cells[1], name, row, "window_id"));
        r.label = static_cast<int>(detail::parse_number(cells[2], name, row, "label"));
        if (r.label != 0 && r.label != 1) throw DataError(name + ": row " + std::to_string(row) + ": label must be 0 or 1");
        r.genuine_probability = detail::parse_number(cells[3], name, row, "genuine_probability");
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace foreauth::data
