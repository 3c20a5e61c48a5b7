#include "pudm/cloud_io.h"

#include <cstdio>
#include <sstream>
#include <vector>

#include "pudm/errors.h"
#include "pudm/io_util.h"

namespace pudm {

namespace {

std::string extension(const std::string& path) {
  const size_t dot = path.rfind('.');
  if (dot == std::string::npos) return "";
  return path.substr(dot);
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

// Parses exactly three floats from a data line; extra or missing fields
// are reported with the 1-based line number.
void parse_point(const std::string& line, int line_no, double out[3]) {
  std::istringstream ss(line);
  for (int i = 0; i < 3; ++i)
    if (!(ss >> out[i]))
      throw IoError("line " + std::to_string(line_no) + ": expected 3 coordinates");
  std::string extra;
  if (ss >> extra)
    throw IoError("line " + std::to_string(line_no) + ": trailing content after 3 coordinates");
}

}  // namespace

PointCloud parse_xyz(const std::string& text) {
  std::istringstream lines(text);
  std::string line;
  std::vector<double> coords;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (blank(line)) continue;
    double p[3];
    parse_point(line, line_no, p);
    coords.insert(coords.end(), p, p + 3);
  }
  if (coords.empty()) throw IoError("cloud file contains no points");
  PointCloud out(static_cast<int>(coords.size() / 3), 3);
  out.d = std::move(coords);
  return out;
}

PointCloud parse_ply(const std::string& text) {
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;

  auto next_line = [&]() -> bool {
    while (std::getline(lines, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    return false;
  };

  if (!next_line() || line != "ply") throw IoError("line 1: not a ply file (missing 'ply')");
  long vertex_count = -1;
  bool in_vertex_element = false;
  int xyz_props = 0;
  bool saw_format = false;
  while (true) {
    if (!next_line()) throw IoError("ply header: missing end_header");
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "comment" || blank(line)) continue;
    if (word == "format") {
      std::string kind;
      ss >> kind;
      if (kind != "ascii")
        throw IoError("line " + std::to_string(line_no) + ": only ascii ply is supported");
      saw_format = true;
    } else if (word == "element") {
      std::string name;
      long count = 0;
      ss >> name >> count;
      if (name != "vertex")
        throw IoError("line " + std::to_string(line_no) + ": unsupported element '" + name + "'");
      if (vertex_count >= 0)
        throw IoError("line " + std::to_string(line_no) + ": duplicate vertex element");
      vertex_count = count;
      in_vertex_element = true;
    } else if (word == "property") {
      if (!in_vertex_element)
        throw IoError("line " + std::to_string(line_no) + ": property outside an element");
      std::string type, name;
      ss >> type >> name;
      const char expected[3][2] = {"x", "y", "z"};
      if (xyz_props >= 3 || name != expected[xyz_props])
        throw IoError("line " + std::to_string(line_no) +
                      ": vertex properties must be exactly x, y, z");
      ++xyz_props;
    } else {
      throw IoError("line " + std::to_string(line_no) + ": unsupported header entry '" + word +
                    "'");
    }
  }
  if (!saw_format) throw IoError("ply header: missing format line");
  if (vertex_count < 1) throw IoError("ply header: missing or empty vertex element");
  if (xyz_props != 3) throw IoError("ply header: vertex element must declare x, y, z");

  PointCloud out(static_cast<int>(vertex_count), 3);
  for (long i = 0; i < vertex_count; ++i) {
    do {
      if (!next_line())
        throw IoError("ply body: expected " + std::to_string(vertex_count) + " vertices, found " +
                      std::to_string(i));
    } while (blank(line));
    double p[3];
    parse_point(line, line_no, p);
    for (int c = 0; c < 3; ++c) out.at(static_cast<int>(i), c) = p[c];
  }
  while (next_line())
    if (!blank(line))
      throw IoError("line " + std::to_string(line_no) + ": content after the declared vertices");
  return out;
}

std::string format_xyz(const PointCloud& cloud) {
  std::string out;
  char buf[96];
  for (int i = 0; i < cloud.rows; ++i) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", cloud.at(i, 0), cloud.at(i, 1),
                  cloud.at(i, 2));
    out += buf;
  }
  return out;
}

std::string format_ply(const PointCloud& cloud) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.rows) +
                    "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  out += format_xyz(cloud);
  return out;
}

PointCloud read_cloud(const std::string& path) {
  const std::string ext = extension(path);
  const std::string text = read_text(path);
  if (ext == ".xyz") return parse_xyz(text);
  if (ext == ".ply") return parse_ply(text);
  throw ValidationError("unsupported cloud format '" + ext + "' (use .xyz or .ply)");
}

void write_cloud(const PointCloud& cloud, const std::string& path) {
  if (cloud.rows < 1 || cloud.cols != 3)
    throw ValidationError("write_cloud: cloud must be n x 3, n >= 1");
  const std::string ext = extension(path);
  if (ext == ".xyz") {
    write_text_atomic(path, format_xyz(cloud));
  } else if (ext == ".ply") {
    write_text_atomic(path, format_ply(cloud));
  } else {
    throw ValidationError("unsupported cloud format '" + ext + "' (use .xyz or .ply)");
  }
}

}  // namespace pudm
