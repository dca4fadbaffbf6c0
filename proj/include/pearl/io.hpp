#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>

#include "pearl/engine.hpp"

namespace pearl {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal representation that round-trips.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string trajectory_csv_header(std::size_t players) {
  std::string h = "round,iteration,communications,rel_error,rel_error_std";
  for (std::size_t i = 1; i <= players; ++i) h += ",f_" + std::to_string(i);
  h += ",elapsed_ms";
  return h;
}

inline std::string trajectory_csv(const Trajectory& traj) {
  const std::size_t players =
      traj.records.empty() ? 0 : traj.records.front().objectives.size();
  std::ostringstream out;
  out << trajectory_csv_header(players) << '\n';
  for (const auto& r : traj.records) {
    out << r.round << ',' << r.iteration << ',' << r.communications << ','
        << format_double(r.rel_error) << ',' << format_double(r.rel_error_std);
    for (double f : r.objectives) out << ',' << format_double(f);
    out << ',' << format_double(r.elapsed_ms) << '\n';
  }
  return out.str();
}

inline std::string heatmap_csv(const Heatmap& h) {
  std::ostringstream out;
  out << "gamma";
  for (std::size_t t : h.taus) out << ",tau_" << t;
  out << '\n';
  for (std::size_t g = 0; g < h.gammas.size(); ++g) {
    out << format_double(h.gammas[g]);
    for (double v : h.log10_error[g]) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

// Writes via a temporary file in the same directory and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f << content;
    f.flush();
    if (!f) throw IoError("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline json to_json(const CommunicationStats& c) {
  return json{{"exchanges", c.exchanges},
              {"final_collects", c.final_collects},
              {"uplink_coordinates", c.uplink_coordinates},
              {"downlink_coordinates", c.downlink_coordinates}};
}

inline json trajectory_summary(const Trajectory& t) {
  return json{{"status", to_string(t.status)},
              {"rounds_recorded", t.records.empty() ? 0 : t.records.size() - 1},
              {"final_rel_error", format_double(t.final_rel_error())},
              {"final_rel_error_std", format_double(t.final_record().rel_error_std)},
              {"replicates", t.replicates},
              {"communication", to_json(t.comms)}};
}

}  // namespace pearl
