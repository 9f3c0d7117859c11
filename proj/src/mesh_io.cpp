// Copyright 2026 The disent3d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "disent/mesh_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>
#include <string>

#include "disent/error.hpp"

namespace disent {

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const bool with_normals = mesh.normals.size() == mesh.vertices.size() && !mesh.normals.empty();
  std::string buf;
  for (const Vec3& v : mesh.vertices) {
    buf += fmt::format("v {:.17g} {:.17g} {:.17g}\n", v.x(), v.y(), v.z());
  }
  if (with_normals) {
    for (const Vec3& n : mesh.normals) {
      buf += fmt::format("vn {:.9g} {:.9g} {:.9g}\n", n.x(), n.y(), n.z());
    }
  }
  for (const auto& f : mesh.faces) {
    if (with_normals) {
      buf += fmt::format("f {0}//{0} {1}//{1} {2}//{2}\n", f[0] + 1, f[1] + 1, f[2] + 1);
    } else {
      buf += fmt::format("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1);
    }
  }
  out << buf;
  if (!out) throw IoError("failed writing " + path.string());
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x() >> v.y() >> v.z();
      if (!ss) throw IoError(fmt::format("{}:{}: bad vertex", path.string(), line_no));
      mesh.vertices.push_back(v);
    } else if (tag == "vn") {
      Vec3 n;
      ss >> n.x() >> n.y() >> n.z();
      if (!ss) throw IoError(fmt::format("{}:{}: bad normal", path.string(), line_no));
      mesh.normals.push_back(n);
    } else if (tag == "f") {
      Face f{};
      std::string tok;
      int k = 0;
      while (ss >> tok) {
        if (k == 3) {
          throw IoError(fmt::format("{}:{}: only triangles are supported", path.string(), line_no));
        }
        f[k++] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      if (k != 3) throw IoError(fmt::format("{}:{}: bad face", path.string(), line_no));
      mesh.faces.push_back(f);
    }
  }
  if (!mesh.normals.empty() && mesh.normals.size() != mesh.vertices.size()) {
    mesh.normals.clear();
  }
  return mesh;
}

}  // namespace disent
