#include "magcath/csv.hpp"

#include <fstream>
#include <sstream>

#include "magcath/errors.hpp"

namespace magcath {

void write_points_csv(const std::string& path,
                      const std::vector<Eigen::Vector3d>& points) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write points file: " + path);
  out << "index,px,py,pz\n";
  out.precision(17);
  for (std::size_t i = 0; i < points.size(); ++i)
    out << i << ',' << points[i].x() << ',' << points[i].y() << ','
        << points[i].z() << '\n';
  if (!out) throw InputError("failed writing points file: " + path);
}

std::vector<Eigen::Vector3d> read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open points file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "index,px,py,pz")
    throw InputError("points file must start with index,px,py,pz: " + path);
  std::vector<Eigen::Vector3d> points;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4)
      throw InputError("points line " + std::to_string(line_no) +
                       " has wrong column count");
    Eigen::Vector3d p;
    try {
      for (int i = 0; i < 3; ++i) p(i) = std::stod(cells[i + 1]);
    } catch (const std::exception&) {
      throw InputError("points line " + std::to_string(line_no) +
                       " has a malformed number");
    }
    points.push_back(p);
  }
  return points;
}

void write_trace_csv(const std::string& path,
                     const std::vector<RodState>& trace) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write trace file: " + path);
  out << "s,px,py,pz,ux,uy,uz,r11,r12,r13,r21,r22,r23,r31,r32,r33\n";
  out.precision(17);
  for (const auto& st : trace) {
    out << st.s;
    for (int i = 0; i < 3; ++i) out << ',' << st.p(i);
    for (int i = 0; i < 3; ++i) out << ',' << st.u(i);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out << ',' << st.R(r, c);
    out << '\n';
  }
  if (!out) throw InputError("failed writing trace file: " + path);
}

}  // namespace magcath
